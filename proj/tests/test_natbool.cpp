#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cotlab/errors.hpp"
#include "cotlab/natbool.hpp"
#include "doctest.h"

using namespace cotlab;

namespace {

// A published medical worked example, wired by hand.
LogicDag worked_dag() {
  LogicDag d;
  d.leaves = {{"L0", "Blood Test A Type-2", false},      {"L1", "Critical Genetic Marker", true},
              {"L2", "Suppressed Blood Test A", true},    {"L3", "Routine Previous History", false},
              {"L4", "MRI Scan Variant-X", false},        {"L5", "Previous History", false},
              {"L6", "Elevated Patient Fever", false}};
  d.nodes = {{"N0", "Secondary Viral Load", GateKind::And, {"L1", "L5"}},
             {"N1", "Neural Activity", GateKind::Nand, {"N0", "N0"}},
             {"N2", "Abnormal Cell Regeneration", GateKind::Nand, {"N0", "N0"}},
             {"N3", "Immune Response Type-1", GateKind::Xor, {"N1", "N2"}},
             {"N4", "Cell Regeneration Type-2", GateKind::And, {"N3", "N3"}},
             {"N5", "Viral Load Type-1", GateKind::Xor, {"N4", "N4"}},
             {"N6", "Critical Enzyme Level", GateKind::Xor, {"N4", "N4"}},
             {"N7", "Urgent Surgery Needed", GateKind::Or, {"N5", "N6"}}};
  d.target = "N7";
  d.hops = 6;
  return d;
}

std::string strip_names(LogicDag d) {
  std::ostringstream out;
  for (auto& l : d.leaves) out << l.id << (l.value ? "T" : "F") << ";";
  std::sort(d.leaves.begin(), d.leaves.end(), [](auto& a, auto& b) { return a.id < b.id; });
  out << "|";
  for (auto& n : d.nodes) {
    out << n.id << to_string(n.gate);
    for (auto& i : n.inputs) out << "," << i;
    out << ";";
  }
  return out.str() + d.target;
}

}  // namespace

TEST_CASE("gate truth tables") {
  const bool F = false, T = true;
  CHECK(apply_gate(GateKind::And, T, T) == T);
  CHECK(apply_gate(GateKind::And, T, F) == F);
  CHECK(apply_gate(GateKind::And, F, T) == F);
  CHECK(apply_gate(GateKind::And, F, F) == F);
  CHECK(apply_gate(GateKind::Or, T, T) == T);
  CHECK(apply_gate(GateKind::Or, T, F) == T);
  CHECK(apply_gate(GateKind::Or, F, T) == T);
  CHECK(apply_gate(GateKind::Or, F, F) == F);
  CHECK(apply_gate(GateKind::Xor, T, T) == F);
  CHECK(apply_gate(GateKind::Xor, T, F) == T);
  CHECK(apply_gate(GateKind::Xor, F, T) == T);
  CHECK(apply_gate(GateKind::Xor, F, F) == F);
  CHECK(apply_gate(GateKind::Nand, T, T) == F);
  CHECK(apply_gate(GateKind::Nand, T, F) == T);
  CHECK(apply_gate(GateKind::Nand, F, T) == T);
  CHECK(apply_gate(GateKind::Nand, F, F) == T);
  CHECK(apply_gate(GateKind::Not, T) == F);
  CHECK(apply_gate(GateKind::Not, F) == T);
  for (const bool x : {F, T}) CHECK(apply_gate(GateKind::Not, apply_gate(GateKind::Not, x)) == x);
  CHECK(arity(GateKind::Not) == 1);
  CHECK(arity(GateKind::Nand) == 2);
}

TEST_CASE("worked medical instance evaluates and derives as printed") {
  const auto d = worked_dag();
  const auto ev = evaluate_dag(d);
  CHECK_FALSE(ev.answer);
  CHECK(compute_hops(d) == 6);
  CHECK(d.depth() == 7);
  CHECK(ev.values.at("N0") == false);
  CHECK(ev.values.at("N1") == true);
  CHECK(ev.values.at("N2") == true);
  CHECK(ev.values.at("N3") == false);
  CHECK(ev.values.at("N4") == false);
  CHECK(ev.values.at("N5") == false);
  CHECK(ev.values.at("N6") == false);
  const auto cot = derive_cot(d, ev);
  CHECK(cot.find("1. Check status of 'Critical Genetic Marker': The logs indicate it is True.") == 0);
  CHECK(cot.find("  - Requires: Secondary Viral Load (False) NAND Secondary Viral Load (False)") != std::string::npos);
  CHECK(cot.find("  - Logic: NAND logic evaluates to True. -> 'Neural Activity' is True.") != std::string::npos);
  CHECK(cot.find("Analyzing 'Urgent Surgery Needed' (Target):") != std::string::npos);
  CHECK(cot.substr(cot.rfind('\n') + 1) == "Final Answer: False");
  // the printed derivation order
  CHECK(required_nodes(d) == std::vector<std::string>{"N0", "N1", "N2", "N3", "N4", "N5", "N6", "N7"});
}

TEST_CASE("generated dags hit the requested depth") {
  Rng rng{1};
  for (int i = 0; i < 1000; ++i) {
    const auto d = generate_dag(5, rng);
    CHECK_NOTHROW(topological_order(d));
    CHECK(compute_hops(d) == 5);
  }
  DagConfig one;
  one.gates = {GateKind::Not};
  one.node_budget = 2;
  const auto tiny = generate_dag(1, rng, one);
  CHECK(tiny.total_nodes() == 2);
  CHECK(tiny.nodes.size() == 1);
  CHECK(derive_cot(tiny, evaluate_dag(tiny)).find("Analyzing") == derive_cot(tiny, evaluate_dag(tiny)).rfind("Analyzing"));
  // depth 7 (6 hops) in 13 nodes
  DagConfig shape;
  shape.node_budget = 13;
  const auto s = generate_dag(6, rng, shape);
  CHECK(s.total_nodes() == 13);
  CHECK(s.depth() == 7);
  shape.node_budget = 5;
  CHECK_THROWS_AS(generate_dag(6, rng, shape), InputError);
  CHECK_THROWS_AS(generate_dag(0, rng), InputError);
  CHECK_THROWS_AS(generate_dag(33, rng), InputError);
}

TEST_CASE("cycles and dangling inputs are structural errors") {
  auto d = worked_dag();
  d.nodes[0].inputs[0] = "N3";
  CHECK_THROWS_AS(evaluate_dag(d), StructuralError);
  auto e = worked_dag();
  e.nodes[1].inputs[0] = "N99";
  CHECK_THROWS_AS(evaluate_dag(e), StructuralError);
}

TEST_CASE("rendering follows the theme") {
  Rng rng{4};
  const auto d = generate_dag(4, rng);
  const auto& medical = theme_by_name("medical");
  const auto r = render_natural_language(d, medical, rng);
  for (const auto& l : r.dag.leaves) {
    const auto line = "[Lab Report] '" + l.name + "': " + (l.value ? "DETECTED/HIGH." : "NOT DETECTED/NORMAL.");
    CHECK(r.context.find(line) != std::string::npos);
  }
  CHECK(r.context.find("=== SCENARIO: Medical Diagnosis ===") == 0);
  // same structure, different names
  Rng other{99};
  const auto r2 = render_natural_language(d, medical, other);
  auto a = r.dag, b = r2.dag;
  std::sort(a.leaves.begin(), a.leaves.end(), [](auto& x, auto& y) { return x.id < y.id; });
  std::sort(b.leaves.begin(), b.leaves.end(), [](auto& x, auto& y) { return x.id < y.id; });
  CHECK(strip_names(a) == strip_names(b));
  std::set<std::string> n1, n2;
  for (auto& n : a.nodes) n1.insert(n.name);
  for (auto& n : b.nodes) n2.insert(n.name);
  CHECK(n1 != n2);

  DagConfig xor_only;
  xor_only.gates = {GateKind::Xor};
  xor_only.duplicate_prob = 0.0;
  const auto x = render_natural_language(generate_dag(2, rng, xor_only), medical, rng);
  CHECK(x.context.find("contradicts") != std::string::npos);

  Theme broken = medical;
  broken.rules.erase(GateKind::Nand);
  CHECK_THROWS_AS(render_natural_language(d, broken, rng), ConfigError);
}

TEST_CASE("theme name pools are disjoint") {
  std::vector<std::set<std::string>> words;
  for (const auto& t : builtin_themes()) {
    std::set<std::string> w(t.bases.begin(), t.bases.end());
    w.insert(t.outcomes.begin(), t.outcomes.end());
    words.push_back(w);
  }
  REQUIRE(words.size() >= 3);
  for (std::size_t i = 0; i < words.size(); ++i) {
    for (std::size_t j = i + 1; j < words.size(); ++j) {
      for (const auto& w : words[i]) CHECK(words[j].count(w) == 0);
    }
  }
}

TEST_CASE("verification catches tampering") {
  Rng rng{12};
  const auto s = make_sample(5, theme_by_name("logistics"), rng, {}, true, "x");
  CHECK(s.answer);
  CHECK(verify_sample(s).ok());
  CHECK(verify_sample(sample_from_json(sample_to_json(s))).ok());

  auto flipped = s;
  flipped.answer = !flipped.answer;
  const auto v = verify_sample(flipped);
  REQUIRE_FALSE(v.ok());
  CHECK(v.failures.front() == VerifyFailure::AnswerMismatch);

  auto hops = s;
  hops.hops += 1;
  CHECK(verify_sample(hops).failures.front() == VerifyFailure::HopMismatch);

  auto named = s;
  named.context += "\n- Note: 'Phantom Node' is irrelevant.";
  CHECK(verify_sample(named).failures.front() == VerifyFailure::UnknownEntity);

  auto leaf = s;
  leaf.dag.leaves.front().value = !leaf.dag.leaves.front().value;
  CHECK_FALSE(verify_sample(leaf).ok());

  auto cyc = s;
  cyc.dag.nodes.front().inputs.front() = cyc.dag.target;
  CHECK(verify_sample(cyc).failures.front() == VerifyFailure::Structural);
}

TEST_CASE("step count equals Analyzing blocks") {
  Rng rng{7};
  for (int i = 0; i < 100; ++i) {
    const auto s = make_sample(3 + i % 8, builtin_themes()[i % 3], rng);
    int blocks = 0;
    for (std::size_t p = s.cot.find("Analyzing '"); p != std::string::npos; p = s.cot.find("Analyzing '", p + 1)) ++blocks;
    CHECK(blocks == s.steps);
    CHECK(s.depth == s.hops + 1);
  }
}

TEST_CASE("split spec and dataset files") {
  const auto spec = load_split_spec(std::filesystem::path(COTLAB_SOURCE_DIR) / "data" / "table1.json");
  REQUIRE(spec.rows.size() == 8);
  CHECK(spec.rows.front().hops == 3);
  CHECK(spec.rows.front().train == 469);
  CHECK(spec.rows.front().val == 187);
  CHECK(spec.rows.front().test == 220);
  CHECK(spec.rows.back().hops == 10);
  CHECK(spec.rows.back().train == 1886);
  CHECK(spec.rows.back().val == 227);
  CHECK(spec.rows.back().test == 177);
  CHECK(split_spec_from_json(split_spec_to_json(spec)).rows.size() == 8);

  const auto dir = std::filesystem::temp_directory_path() / "cotlab-natbool-test";
  std::filesystem::remove_all(dir);
  SplitSpec small;
  small.rows = {{3, 11, 4, 5}, {6, 7, 2, 3}};
  const auto sum = build_dataset(small, {"medical", "access-control"}, 9, dir / "a");
  build_dataset(small, {"medical", "access-control"}, 9, dir / "b");
  CHECK(sum.counts.at("train").at(3) == 11);
  CHECK(sum.counts.at("test").at(6) == 3);
  for (const auto* f : {"train.jsonl", "val.jsonl", "test.jsonl"}) {
    std::ifstream a(dir / "a" / f), b(dir / "b" / f);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
  }
  SplitSpec empty;
  build_dataset(empty, {"medical"}, 1, dir / "empty");
  CHECK(std::filesystem::file_size(dir / "empty" / "train.jsonl") == 0);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(split_spec_from_json("{\"rows\": [{\"hops\": 3}]}"), InputError);
}
