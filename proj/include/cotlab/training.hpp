#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "cotlab/micro_transformer.hpp"
#include "cotlab/parity_task.hpp"

namespace cotlab {

enum class TrainMode { Explicit, ImpBase1, ImpBase2, AlicotClassifier, AlicotCosine };

const char* to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

enum class HeadKind { Factored, Joint };

const char* to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::Explicit;
  int d = 16;
  int k = 8;
  std::vector<int> support;  // empty: default_support(d, k)
  int s = 1;                 // concealed steps; 0 reduces every mode to Explicit
  LatentLayout layout = LatentLayout::PerNode;  // ImpBase2 always uses Single
  LatentReadout readout = LatentReadout::Token;
  HeadKind head = HeadKind::Factored;
  int d_model = 64;
  std::string ffn = "standard";
  double ffn_c = 2.0;
  double lr_logits = 0.5;
  double lr_output = 0.005;
  double lr_latent = 0.05;
  double lr_head = 0.005;
  int batch = 32;
  long max_steps = 500000;
  int eval_interval = 100;
  int eval_batch = 512;
  double lambda = 1.0;
  double latent_init = 0.1;  // static latents ~ U(-latent_init, latent_init)
  std::uint64_t seed = 1;
  int gradcheck_points = 0;  // spot checks against finite differences during training
};

std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);

/// Mode actually trained: s = 0 collapses everything to Explicit.
TrainMode effective_mode(const TrainConfig& cfg);

/// Auxiliary classifier g over latent states. Factored: tau binary logistic
/// heads, head i reading slot i (or slot 0 under the single layout). Joint:
/// one 2^tau-way softmax over the concatenated slot states (tau <= 8).
struct AlignHead {
  HeadKind kind = HeadKind::Factored;
  int tau = 0;
  int slots = 0;
  int d_model = 0;
  std::vector<Vec> weight;  // factored: tau x d_model; joint: 2^tau x (slots * d_model)
  Vec bias;

  /// Zero weights: every class starts equally likely.
  static AlignHead create(HeadKind kind, int tau, int slots, int d_model);
  int classes() const { return kind == HeadKind::Factored ? 2 : (1 << tau); }
  Vec flatten() const;
  void unflatten(std::span<const double> flat);
};

/// Rows that read a key alpha * v back as logit alpha, so alignment starts
/// out agreeing with the token the key stands for.
void decode_basis(AlignHead& head, std::span<const double> v);

struct HeadGrad {
  std::vector<Vec> weight;
  Vec bias;
  static HeadGrad zeros_like(const AlignHead& head);
};

/// -sum_i log P(z_i | g(states)) for one sample. Gradients (scaled by
/// `scale`) go to d_states and head_grad when non-null.
double loss_align_classifier(const std::vector<Vec>& states, std::span<const int> targets, const AlignHead& head,
                             double scale = 1.0, std::vector<Vec>* d_states = nullptr, HeadGrad* head_grad = nullptr);

struct CosineResult {
  double value = 1.0;
  bool degenerate = false;  // a zero-norm vector; value fixed at 1
};

/// 1 - cos(c, t). The target is a constant: no gradient is returned for it.
CosineResult loss_align_cosine(std::span<const double> c, std::span<const double> t, double scale = 1.0,
                               Vec* d_c = nullptr);

/// Mean over the batch of summed per-step CE (teacher-forced).
double loss_explicit(const ModelParams& params, std::span<const SequenceEncoding> batch);
/// Same over implicit encodings; only positions after <eot> carry loss.
double loss_implicit(const ModelParams& params, std::span<const SequenceEncoding> batch);

struct CurveRow {
  long step = 0;
  double train_loss = 0.0;
  double align_loss = 0.0;
  double eval_acc = 0.0;
};

struct ConvergenceRecord {
  TrainMode mode = TrainMode::Explicit;
  int s = 0;
  std::uint64_t seed = 0;
  long steps_to_full = -1;  // -1: never reached 100% (infinity)
  bool diverged = false;
  std::vector<CurveRow> curve;
  double final_task_loss = 0.0;
  double final_align_loss = 0.0;
  double final_eval_acc = 0.0;
  double max_gradcheck_error = 0.0;
  int gradchecks = 0;
  double seconds = 0.0;

  bool converged() const { return steps_to_full >= 0; }
};

struct TrainResult {
  ConvergenceRecord record;
  ModelParams params;
  AlignHead head;
};

/// Everything a training step needs about one mode: encodings, model and head.
struct TrainSetup {
  TrainConfig cfg;
  TrainMode mode = TrainMode::Explicit;
  std::vector<int> support;
  int positions = 0;
  int tau = 0;
  int slots = 0;
  // ALiCoT-cosine: frozen explicit model whose node hiddens are the targets.
  std::shared_ptr<const ModelParams> teacher;
};

TrainSetup make_setup(const TrainConfig& cfg);

/// Encoding used for training and evaluation under this setup.
SequenceEncoding encode_for(const TrainSetup& setup, const ParityInstance& inst);

ModelParams init_model(const TrainSetup& setup);

/// Hidden state phi(z) at each concealed node's position in a teacher-forced
/// explicit pass of `model`.
std::vector<Vec> explicit_node_hiddens(const ModelParams& model, const ParityInstance& inst,
                                       std::span<const CotNode> nodes);

/// Total objective (task + lambda * align) over a batch; fills gradients when
/// the pointers are non-null. Returns {task, align}.
std::pair<double, double> objective(const TrainSetup& setup, const ModelParams& params, const AlignHead& head,
                                    std::span<const ParityInstance> batch, ModelGrad* grad, HeadGrad* head_grad);

/// Fraction of instances with every supervised position predicted correctly.
double evaluate_accuracy(const TrainSetup& setup, const ModelParams& params, std::span<const ParityInstance> batch);

TrainResult train(const TrainConfig& cfg);

struct SweepReport {
  std::vector<ConvergenceRecord> records;
  bool alicot_not_slower = true;  // ALiCoT <= ImpBase1 at every s >= 2 where both converge
  bool impbase1_monotone = true;  // ImpBase1 steps non-decreasing in s (infinity largest)
  std::vector<std::string> notes;
};

SweepReport sweep_concealed_steps(const TrainConfig& base, std::span<const int> s_range,
                                  std::span<const TrainMode> modes);

/// ALiCoT no slower than ImpBase1, ImpBase1 non-decreasing in s; per seed.
void check_sweep_orderings(SweepReport& report, TrainMode alicot_mode);

/// config.json, curve.csv, record.json under dir.
void write_train_artifacts(const std::filesystem::path& dir, const TrainConfig& cfg, const ConvergenceRecord& rec);

std::string record_to_json(const ConvergenceRecord& rec);

}  // namespace cotlab
