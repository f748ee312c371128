#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cotlab/natbool.hpp"

namespace cotlab {

/// Bag-of-tokens corpus with a binary target. Each sample keeps its distinct
/// token ids sorted; positions are not modelled.
struct TokenizedCorpus {
  std::vector<std::string> vocab;
  std::vector<std::vector<int>> samples;
  std::vector<int> y;
  std::unordered_map<std::string, int> index;  // token -> position in vocab

  int intern(const std::string& token);
  void add(const std::vector<std::string>& tokens, int label);
  std::vector<int> ids(const std::vector<std::string>& tokens) const;  // throws InputError on unknown tokens
  std::size_t size() const { return samples.size(); }
};

/// JSONL records {"tokens": [...], "y": 0|1}.
TokenizedCorpus load_corpus_jsonl(const std::filesystem::path& path);
void save_corpus_jsonl(const TokenizedCorpus& corpus, const std::filesystem::path& path);

struct ProbeConfig {
  double gamma = 0.05;
  int max_order = 4;
  long budget = 400;  // subsets drawn per sample at order 2; halves with each order
  double smoothing = 0.5;
  long min_joint = 5;
  bool normalized = false;
  std::uint64_t seed = 0;

  long budget_for(int order) const;
};

/// Presence bitsets per token, frozen at construction.
class CountTable {
 public:
  explicit CountTable(const TokenizedCorpus& corpus);

  long n() const { return n_; }
  long label_count(int y) const { return y ? ones_ : n_ - ones_; }
  long count(const std::vector<int>& subset) const;
  long joint(const std::vector<int>& subset, int y) const;

 private:
  long n_ = 0;
  long ones_ = 0;
  std::size_t words_ = 0;
  std::vector<std::vector<std::uint64_t>> bits_;
  std::vector<std::uint64_t> label_;
};

/// PMI(S; y) and synergy on one corpus, memoised per (subset, y).
/// Undefined values (joint count below min_joint) come back as nullopt.
class InteractionProbe {
 public:
  InteractionProbe(const TokenizedCorpus& corpus, ProbeConfig cfg);

  std::optional<double> pmi(std::vector<int> subset, int y);
  /// sigma = PMI(S) - max over (k-1)-subsets; needs |S| >= 2.
  std::optional<double> synergy(std::vector<int> subset, int y);

  const CountTable& table() const { return table_; }
  const ProbeConfig& config() const { return cfg_; }

 private:
  std::vector<int> canonical(std::vector<int> subset) const;

  const TokenizedCorpus& corpus_;
  ProbeConfig cfg_;
  CountTable table_;
  std::unordered_map<std::string, std::optional<double>> cache_;
};

struct OrderStats {
  int order = 0;
  double rho = 0.0;           // scaled valid subsets per sample
  std::optional<double> phi;  // weighted mean sigma over valid subsets
  long valid_count = 0;       // valid subsets among those evaluated
  long sampled_count = 0;     // subsets evaluated
  double subset_total = 0.0;  // subsets that exist, summed over samples
};

OrderStats density_quality(const TokenizedCorpus& corpus, int order, const ProbeConfig& cfg);
double density_rho(const TokenizedCorpus& corpus, int order, const ProbeConfig& cfg);
std::optional<double> quality_phi(const TokenizedCorpus& corpus, int order, const ProbeConfig& cfg);

struct LandscapeRow {
  std::string variant;
  OrderStats stats;
};

/// Orders 2..cfg.max_order for every named corpus variant.
std::vector<LandscapeRow> interaction_landscape(
    const std::vector<std::pair<std::string, TokenizedCorpus>>& variants, const ProbeConfig& cfg);

/// order,variant,rho,phi,valid_count,sampled_count (phi empty when absent).
std::string landscape_to_csv(const std::vector<LandscapeRow>& rows);

/// Tokens of one NatBool sample. Required derived nodes are numbered t
/// counting back from the target (t = 0), leaves i in display order:
///   g{t}:{GATE}, in{t}.{j}={l{i}|n{u}}, l{i}={T|F}
/// and with the CoT also n{t}={T|F} for every non-target node.
std::vector<std::string> natbool_tokens(const NatBoolSample& sample, bool with_cot);
TokenizedCorpus natbool_corpus(const std::vector<NatBoolSample>& samples, bool with_cot);

}  // namespace cotlab
