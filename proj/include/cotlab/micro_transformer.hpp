#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cotlab/parity_task.hpp"
#include "cotlab/rng.hpp"

namespace cotlab {

using Vec = std::vector<double>;

/// phi(t) = a0 + a2 t^2 + a4 t^4, applied elementwise.
struct FfnPoly {
  double a0 = 1.0;
  double a2 = -2.0;
  double a4 = 2.0;

  /// (1, -c, c): phi(t) = 1 - c t^2 + c t^4.
  static FfnPoly standard(double c = 2.0) { return {1.0, -c, c}; }
  /// (-1, 2 + c, -c): phi(0) = -1, phi(+-1) = 1.
  static FfnPoly parity_exact(double c = 2.0) { return {-1.0, 2.0 + c, -c}; }
  static FfnPoly from_name(const std::string& name, double c);

  double eval(double t) const {
    const double t2 = t * t;
    return a0 + t2 * (a2 + a4 * t2);
  }
  double deriv(double t) const {
    const double t2 = t * t;
    return t * (2.0 * a2 + 4.0 * a4 * t2);
  }
  /// Interaction coefficient phi^(r)(0) / (r-1)!: 2 a2 for r=2, 4 a4 for r=4, else 0.
  double gamma(int r) const;
};

struct EmbeddingBasis {
  Vec v;  // input base, fixed
  Vec u;  // output base; the head is (u, -u)

  int d_model() const { return static_cast<int>(v.size()); }
};

/// Free position logits w_{j,m} for 1 <= j < m <= max_positions, stored row by
/// row (m = 2, 3, ...), each row holding j = 1..m-1.
struct AttentionLogits {
  int max_positions = 0;
  Vec w;

  explicit AttentionLogits(int positions = 0);
  static std::size_t row_offset(int m) { return static_cast<std::size_t>(m - 1) * static_cast<std::size_t>(m - 2) / 2; }
  double& at(int j, int m) { return w[row_offset(m) + static_cast<std::size_t>(j - 1)]; }
  double at(int j, int m) const { return w[row_offset(m) + static_cast<std::size_t>(j - 1)]; }
  std::span<const double> row(int m) const { return {w.data() + row_offset(m), static_cast<std::size_t>(m - 1)}; }
  std::span<double> row(int m) { return {w.data() + row_offset(m), static_cast<std::size_t>(m - 1)}; }
};

enum class LatentMode { None, StaticParam, DynamicHidden };

/// What a latent slot exposes to later positions. Injected: the injected
/// vector itself. Processed: the slot's own hidden phi(z_slot + c). Token:
/// the expected step embedding under the slot's own prediction,
/// tanh(u . phi(z_slot + c)) v.
enum class LatentReadout { Injected, Processed, Token };

const char* to_string(LatentMode mode);
const char* to_string(LatentReadout readout);
LatentMode latent_mode_from_string(const std::string& name);
LatentReadout latent_readout_from_string(const std::string& name);

struct LatentToken {
  LatentMode mode = LatentMode::None;
  std::vector<Vec> slots;  // StaticParam values, one per latent slot ordinal
};

struct ModelParams {
  EmbeddingBasis basis;
  FfnPoly poly;
  AttentionLogits logits;
  LatentToken latent;
  LatentReadout readout = LatentReadout::Processed;

  int d_model() const { return basis.d_model(); }
};

struct InitConfig {
  int d_model = 64;
  int max_positions = 32;
  FfnPoly poly = FfnPoly::standard();
  LatentMode latent = LatentMode::None;
  int latent_slots = 0;
  LatentReadout readout = LatentReadout::Processed;
  double u_scale = 1.0;       // u ~ U(-u_scale, u_scale)
  double latent_scale = 1.0;  // static latents ~ U(-latent_scale, latent_scale)
};

/// v ~ U(-1, 1), u and static latents uniform at their scales; logits all zero.
ModelParams init_params(const InitConfig& cfg, Rng& rng);

Vec embed(int token, const EmbeddingBasis& basis);
Vec softmax(std::span<const double> logits);
/// z_m = sum_{j<m} sigma_j(w_m) e_j; `prefix` holds e_1..e_{m-1}.
Vec attention_forward(const AttentionLogits& logits, std::span<const Vec> prefix, int m);
Vec ffn(std::span<const double> z, const FfnPoly& poly);
/// (p(+1), p(-1)) = softmax(u.h, -u.h).
std::pair<double, double> output_probs(std::span<const double> h, const EmbeddingBasis& basis);

constexpr double kProbFloor = 1e-12;

/// -log p(y); the probability is clamped at `floor` and `clamped` set when it bites.
double ce_loss(std::pair<double, double> y_hat, int y, double floor = kProbFloor, bool* clamped = nullptr);

enum class Feed { TeacherForced, FreeRunning };

/// Materialized per-position state. Index 0 is position 1.
struct ForwardState {
  std::vector<Vec> z_hat;                        // zero vector where no keys exist
  std::vector<Vec> h;                            // phi of the pre-activation
  std::vector<std::pair<double, double>> y_hat;  // every position >= 2
  std::vector<Vec> keys;                         // what later positions attend to
  std::vector<Vec> injected;                     // per latent slot ordinal
  std::vector<double> p_t;                       // per supervised position
  double loss = 0.0;                             // summed CE over supervised positions
  bool clamped = false;
};

/// Straightforward vector-by-vector pass. Free-running mode feeds h_m
/// downstream in place of generated step embeddings.
ForwardState forward_sequence(const ModelParams& params, const SequenceEncoding& enc,
                              Feed feed = Feed::TeacherForced);

/// Vector placed at latent slot `slot` (ordinal) of `enc`, given the state of
/// the positions before it.
Vec latent_inject(const ModelParams& params, const SequenceEncoding& enc, const ForwardState& state, int slot);

struct ModelGrad {
  Vec w;
  Vec u;
  std::vector<Vec> latent;

  static ModelGrad zeros_like(const ModelParams& params);
  void add(const ModelGrad& other, double scale = 1.0);
};

/// Extra loss on the latent slot states. Receives the states, returns the
/// loss and, when `d_states` is non-null, writes dLoss/dstate into it
/// (pre-sized, zeroed).
using LatentObjective =
    std::function<double(const std::vector<Vec>& states, std::vector<Vec>* d_states)>;

/// Which slot state an objective sees. Key: the vector later positions
/// attend to. Hidden: phi of the slot's pre-activation.
enum class SlotView { Key, Hidden };

struct SampleResult {
  double task_loss = 0.0;
  double latent_loss = 0.0;
  int supervised = 0;
  int correct = 0;
  bool clamped = false;
  std::vector<Vec> slot_states;  // in the view passed to run()
};

/// Fast teacher-forced pass with reverse-mode gradients. Attention rows are
/// shared across samples, so callers precompute them once per batch.
class SequenceEngine {
 public:
  explicit SequenceEngine(const ModelParams& params);

  /// Gradient of scale * task_loss, plus scale times whatever the objective
  /// writes into d_states, is accumulated into `grad` when non-null.
  /// Gradients through a dynamic latent stop after one unroll.
  SampleResult run(const SequenceEncoding& enc, double scale, ModelGrad* grad,
                   const LatentObjective* objective = nullptr, SlotView view = SlotView::Key);

  /// Converts accumulated d/dsigma into d/dw. Call once after all samples.
  void finish(ModelGrad& grad) const;

 private:
  const ModelParams& p_;
  std::vector<Vec> sigma_;  // sigma_[m] = softmax(row m), m >= 2
  Vec g_sigma_;             // same layout as the logits
  double U0_ = 0.0, M2_ = 0.0, M4_ = 0.0;
  double G0_ = 0.0, G2_ = 0.0, G4_ = 0.0;  // u-gradient moments from the scalar path
};

/// Mean task loss over encodings (teacher-forced).
double batch_loss(const ModelParams& params, std::span<const SequenceEncoding> batch);

// Single-prediction setting used by the gradient analysis: n contexts of
// m-1 signed tokens, each predicting a label at position m.
struct ContextBatch {
  int m = 0;
  std::vector<std::vector<int>> tokens;  // n x (m-1), entries +-1
  std::vector<int> labels;               // n labels +-1

  int n() const { return static_cast<int>(labels.size()); }
};

/// Contexts are x_1..x_{m-1}; the label is the product over `support`.
ContextBatch sample_context_batch(int m, std::span<const int> support, int n, Rng& rng);

double context_loss(const ModelParams& params, const ContextBatch& batch);

/// dL/dw_{j,m} for j = 1..m-1 from the closed form
/// -2(1-p_t) sigma_j [g2 <c,z,e_j> - g2 <c,z,z> + g4 <c,z^3,e_j> - g4 <c,z^3,z>],
/// c = y u, g2 = 2 a2, g4 = 4 a4, averaged over the batch.
Vec analytic_grad_attention(const ModelParams& params, const ContextBatch& batch);

struct FdResult {
  Vec grad;
  std::vector<std::size_t> nonfinite;  // entries whose perturbed loss was not finite
};

/// Central differences (f(x+e) - f(x-e)) / 2e per coordinate.
FdResult fd_gradient(const std::function<double(std::span<const double>)>& f, Vec x, double epsilon);

/// fd oracle for the attention row m of a ContextBatch loss.
FdResult fd_grad(const ModelParams& params, const ContextBatch& batch, double epsilon);

/// max |a - f| / max(max |f|, floor).
double relative_error(std::span<const double> analytic, std::span<const double> reference, double floor = 1e-12);

enum ParamGroup : unsigned { kLogits = 1u, kOutputBase = 2u, kLatent = 4u, kAllParams = 7u };

Vec flatten(const ModelParams& params, unsigned groups);
void unflatten(ModelParams& params, unsigned groups, std::span<const double> flat);
Vec flatten(const ModelGrad& grad, unsigned groups);

std::string params_to_json(const ModelParams& params);
ModelParams params_from_json(const std::string& text);

}  // namespace cotlab
