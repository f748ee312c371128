#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cotlab/rng.hpp"

namespace cotlab {

enum class GateKind { And, Or, Xor, Not, Nand };

const char* to_string(GateKind gate);
GateKind gate_from_string(const std::string& name);
int arity(GateKind gate);
bool apply_gate(GateKind gate, bool a, bool b = false);

struct LeafNode {
  std::string id;
  std::string name;
  bool value = false;
};

struct DerivedNode {
  std::string id;
  std::string name;
  GateKind gate = GateKind::And;
  std::vector<std::string> inputs;  // one for NOT, two otherwise; may repeat
};

struct LogicDag {
  std::vector<LeafNode> leaves;
  std::vector<DerivedNode> nodes;  // creation order is a topological order
  std::string target;
  int hops = 0;  // derived nodes on the longest leaf -> target path

  int total_nodes() const { return static_cast<int>(leaves.size() + nodes.size()); }
  int depth() const { return hops + 1; }  // same path counted in nodes, leaf included
};

struct DagConfig {
  double duplicate_prob = 0.2;
  std::vector<GateKind> gates{GateKind::And, GateKind::Or, GateKind::Xor, GateKind::Not, GateKind::Nand};
  int node_budget = 0;  // total nodes incl. leaves; 0 draws one
};

/// Random DAG whose target sits exactly `hops` derived nodes above the leaves.
/// Leaf values are drawn uniformly.
LogicDag generate_dag(int hops, Rng& rng, const DagConfig& cfg = {});

/// Derived-node ids in dependency order. Throws StructuralError on a cycle or
/// a dangling input.
std::vector<std::string> topological_order(const LogicDag& dag);

/// Longest leaf -> target path counted in derived nodes.
int compute_hops(const LogicDag& dag);

/// Derived nodes the target depends on, in dependency order.
std::vector<std::string> required_nodes(const LogicDag& dag);

struct Evaluation {
  std::map<std::string, bool> values;  // every leaf and derived node
  bool answer = false;
};

Evaluation evaluate_dag(const LogicDag& dag);

/// Leaf checks for the leaves the target uses, one Analyzing block per
/// required node, then "Final Answer: ...".
std::string derive_cot(const LogicDag& dag, const Evaluation& values);

/// Text pools and phrasings for one scenario.
struct Theme {
  std::string name;
  std::string title;       // scenario header, e.g. "Medical Diagnosis"
  std::string source_tag;  // e.g. "[Lab Report]"
  std::string true_phrase;
  std::string false_phrase;
  std::vector<std::string> prefixes;
  std::vector<std::string> bases;
  std::vector<std::string> suffixes;
  std::vector<std::string> outcomes;  // target names
  std::map<GateKind, std::string> rules;  // {T}, {A}, {B} placeholders
};

const std::vector<Theme>& builtin_themes();
const Theme& theme_by_name(const std::string& name);

struct Rendering {
  LogicDag dag;  // copy with entity names filled in
  std::string instruction;
  std::string context;
};

/// Names every node from the theme pools (no collisions) and renders the
/// OBSERVED DATA and SYSTEM RULES blocks in shuffled order. The returned
/// dag lists its leaves in display order.
Rendering render_natural_language(const LogicDag& dag, const Theme& theme, Rng& rng);

struct NatBoolSample {
  std::string id;
  std::string theme;
  int hops = 0;
  int depth = 0;
  int steps = 0;  // Analyzing blocks in the CoT
  int total_nodes = 0;
  std::string instruction;
  std::string context;
  std::string cot;
  bool answer = false;
  LogicDag dag;
};

/// Full sample. When `answer` is set, leaf values are redrawn (and the
/// topology regenerated if needed) until the target takes that value.
NatBoolSample make_sample(int hops, const Theme& theme, Rng& rng, const DagConfig& cfg = {},
                          std::optional<bool> answer = std::nullopt, std::string id = {});

std::string sample_to_json(const NatBoolSample& sample);
NatBoolSample sample_from_json(const std::string& line);

enum class VerifyFailure {
  Structural,
  AnswerMismatch,
  CotMismatch,
  HopMismatch,
  StepMismatch,
  NodeCountMismatch,
  UnknownEntity,
  ContextMismatch,  // an OBSERVED DATA line disagrees with its leaf value
};

const char* to_string(VerifyFailure failure);

struct Verdict {
  std::vector<VerifyFailure> failures;
  std::vector<std::string> details;

  bool ok() const { return failures.empty(); }
};

Verdict verify_sample(const NatBoolSample& sample);

struct SplitRow {
  int hops = 0;
  long train = 0;
  long val = 0;
  long test = 0;
};

struct SplitSpec {
  std::vector<SplitRow> rows;
};

SplitSpec split_spec_from_json(const std::string& text);
SplitSpec load_split_spec(const std::filesystem::path& path);
std::string split_spec_to_json(const SplitSpec& spec);

/// Samples of one split, stratum by stratum. Each sample has its own seed
/// derived from (seed, split, hops, index), answers alternate within a stratum,
/// themes cycle through `themes`.
std::vector<NatBoolSample> generate_split(const SplitSpec& spec, const std::string& split,
                                          const std::vector<std::string>& themes, std::uint64_t seed,
                                          const DagConfig& cfg = {});

struct DatasetSummary {
  std::map<std::string, std::map<int, long>> counts;       // split -> hops -> samples
  std::map<std::string, std::map<int, double>> true_rate;  // split -> hops -> P(answer)
};

/// Writes train.jsonl, val.jsonl, test.jsonl under `out`.
DatasetSummary build_dataset(const SplitSpec& spec, const std::vector<std::string>& themes, std::uint64_t seed,
                             const std::filesystem::path& out, const DagConfig& cfg = {});

struct ShortcutRow {
  int hops = 0;
  long samples = 0;
  double base_rate = 0.0;  // P(answer = True)
  double max_gap = 0.0;    // max over leaf slots and values of |P(True | leaf) - base|
  std::string worst;       // e.g. "l0=T"
};

/// Single-leaf conditional marginals per hop stratum. A leaf slot is its
/// position in the OBSERVED DATA block, the only handle a reader has on it.
/// Slots seen fewer than `min_support` times per value are skipped.
std::vector<ShortcutRow> shortcut_marginals(const std::vector<NatBoolSample>& samples, long min_support = 1000);

}  // namespace cotlab
