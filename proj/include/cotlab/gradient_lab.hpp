#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotlab/micro_transformer.hpp"

namespace cotlab {

/// sum_i prod_k z_{k,i}, accumulated in long double.
double contraction(std::span<const Vec> vectors);

enum class Membership { Relevant, Irrelevant };

const char* to_string(Membership m);

/// Relevant iff every support index occurs an odd number of times in J and
/// every other index an even number of times, i.e. y * prod x_J == 1.
Membership classify_tuple(std::span<const int> J, std::span<const int> support);

/// Same decision by evaluating y * prod x_J over all 2^d inputs (d <= 20).
Membership classify_tuple_bruteforce(std::span<const int> J, std::span<const int> support, int d);

/// u (.) v^(.)r.
Vec parity_invariant_vector(std::span<const double> u, std::span<const double> v, int r);

/// Exhaustive check over the 2^r sign patterns with y forced to their
/// product: (y u) (.) (x_1 v) (.) ... (.) (x_r v) must equal u (.) v^r bit for bit.
bool check_parity_invariance(std::span<const double> u, std::span<const double> v, int r);

/// gamma_1..gamma_max_r (index r-1).
std::vector<double> taylor_coeffs(const FfnPoly& poly, int max_r = 4);

/// kappa = C sqrt((2/n) ln(2 |I| / p)).
double hoeffding_kappa(double n, double set_size, double p, double C);

// Contexts with at most 64 keys packed one sample per machine word. A set
// bit means x = -1.
struct PackedSampler {
  int keys = 0;
  std::uint64_t key_mask = 0;
  std::uint64_t support_mask = 0;

  PackedSampler(int keys, std::span<const int> support);
  std::uint64_t draw(Rng& rng) const { return rng() & key_mask; }
  int label(std::uint64_t bits) const { return (std::popcount(bits & support_mask) & 1) ? -1 : 1; }
  int sum(std::uint64_t bits) const { return keys - 2 * std::popcount(bits); }
  static int bit(std::uint64_t bits, int index) { return ((bits >> (index - 1)) & 1u) ? -1 : 1; }
};

struct SignalEntry {
  int m = 0;  // context length; keys are positions 1..m-1
  int r = 0;
  int j = 0;
  long n = 0;
  Membership membership = Membership::Irrelevant;
  double c_signal = 0.0;  // <u, v, ..., v> with r copies of v
  double estimate = 0.0;  // (1/n) sum over samples and completions of <y u, x_j v, x_j2 v, ...>
  double expected = 0.0;  // c_signal * relevant completions
  long relevant_completions = 0;
  long irrelevant_completions = 0;
  double kappa = 0.0;  // per-completion Hoeffding floor
  double bound = 0.0;  // irrelevant_completions * kappa
  bool within_bound = false;
};

/// Completions (j_2..j_r) over keys 1..m-1 of a tuple starting with j.
std::pair<long, long> count_completions(int keys, int r, int j, std::span<const int> support);

SignalEntry estimate_signal(const ContextBatch& batch, int r, int j, std::span<const int> support,
                            const EmbeddingBasis& basis, double p = 0.05);

struct ConcentrationConfig {
  int trials = 500;
  long n = 2000;
  int m = 12;  // keys 1..m-1
  int r = 2;
  double p = 0.05;
  std::uint64_t seed = 1;
};

struct ConcentrationReport {
  int trials = 0;
  long irrelevant_tuples = 0;  // ordered tuples
  double c_signal = 0.0;
  double kappa = 0.0;
  int violations = 0;
  double violation_rate = 0.0;
  double mean_max = 0.0;  // mean over trials of the max irrelevant |average|
};

/// Fraction of trials in which some irrelevant ordered r-tuple has an
/// n-sample average contraction exceeding kappa.
ConcentrationReport empirical_concentration(const ConcentrationConfig& cfg, const EmbeddingBasis& basis);

struct ScalingPoint {
  int m = 0;
  long n = 0;
  double magnitude = 0.0;  // mean over seeds of |signal|
  double predicted = 0.0;  // |gamma_r C_r| * completions * m^-r
  double kappa = 0.0;      // noise floor summed over irrelevant completions
  double bias = 0.0;       // mean |<c, z^(r-1), z>| term, reported only
  bool undersampled = false;
};

struct ScalingFit {
  int r = 0;
  std::vector<ScalingPoint> points;
  std::vector<double> seed_slopes;
  double slope = 0.0;  // mean of per-seed slopes
  double slope_lo = 0.0;
  double slope_hi = 0.0;
  double n_constant = 0.0;  // c in n(m) = c m^{2(r-1)} ln(m/p)
};

struct ScalingConfig {
  int r = 2;
  std::vector<int> m_grid;  // number of attended keys, sigma_j = 1/m
  int seeds = 20;
  double p = 0.05;
  double n_constant = 0.0;  // 0: smallest constant meeting the kappa condition
  std::uint64_t seed = 1;
  FfnPoly poly = FfnPoly::standard();
  int d_model = 64;
};

/// Samples needed by the sample-complexity law: m^{2(r-1)} ln(m/p).
double reference_sample_size(int m, int r, double p);

/// Least-squares slope of log y against log x.
std::pair<double, double> loglog_fit(std::span<const double> x, std::span<const double> y);

/// Order-r signal gamma_r sigma_j <c_t, z^{r-1}, e_j> for the first support
/// index under uniform attention over m keys, support {2,4,..,2r} (or 1..r).
ScalingFit scaling_experiment(const ScalingConfig& cfg);

struct ComplexityConfig {
  int r = 2;
  int m = 16;  // keys
  double p = 0.05;
  int seeds = 20;
  long max_n = 1L << 26;
  std::uint64_t seed = 1;
};

struct ComplexityReport {
  int r = 0;
  int m = 0;
  double p = 0.0;
  long n_star = 0;  // -1 when max_n was not enough
  double reference = 0.0;
  double ratio = 0.0;  // n_star / reference
  int required_seeds = 0;
  bool vacuous = false;  // no irrelevant index exists
};

/// Smallest n on a geometric grid at which every relevant index has a larger
/// |signal| than every irrelevant one in at least ceil((1-p) seeds) seeds.
/// Seeds reuse one sample stream across n.
ComplexityReport sample_complexity_probe(const ComplexityConfig& cfg);

struct StaticLatentConfig {
  int keys = 12;
  int r = 2;   // inputs in the contraction besides the latent
  long n = 1000;
  int trials = 200;
  double p = 0.05;
  std::uint64_t seed = 1;
};

struct StaticLatentReport {
  double c_c = 0.0;  // <u, v^{r-1} ... > with the latent, the per-sample magnitude
  double single_sample = 0.0;
  double mean = 0.0;  // mean over trials of the n-average
  double std = 0.0;   // std over trials of the n-average
  double predicted_std = 0.0;  // |C_c| / sqrt(n)
  double kappa_s = 0.0;
  long tuples = 0;
  double coverage = 0.0;  // fraction of trials with max |avg| <= kappa_s
};

/// Contractions <y u, x_j1 v, ..., x_j(r-1) v, c_s> with a fixed latent c_s.
StaticLatentReport static_latent_probe(const StaticLatentConfig& cfg, const EmbeddingBasis& basis,
                                       std::span<const double> c_s);

struct DynamicLatentConfig {
  int keys = 8;
  std::vector<int> support;  // label support
  std::vector<int> R;        // probed input set
  long n = 2000;
  int trials = 100;
  std::uint64_t seed = 1;
  FfnPoly poly = FfnPoly::standard();
};

struct TaylorTerm {
  int ell = 0;
  double coefficient = 0.0;  // a_ell
  double mean = 0.0;
  double variance = 0.0;  // per-sample variance of the term
};

struct DynamicLatentReport {
  std::vector<TaylorTerm> terms;  // ell = 0, 2, 4
  bool any_stable_constant = false;
  double dynamic_variance = 0.0;  // mean over trials
  double static_variance = 0.0;
  int trials = 0;
  int dynamic_wins = 0;  // trials with sample variance dyn > static
  Vec static_latent;      // E[h_m], the matched static latent
};

/// Psi_R = <x_j1 v, ..., x_jr v, h_m, y u> with h_m = phi(z_m) under uniform
/// attention, against the same contraction with h_m replaced by E[h_m].
DynamicLatentReport dynamic_latent_probe(const DynamicLatentConfig& cfg, const EmbeddingBasis& basis);

}  // namespace cotlab
