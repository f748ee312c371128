#include "cotlab/natbool.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_map>

#include "cotlab/errors.hpp"
#include "json.hpp"

namespace cotlab {

const char* to_string(GateKind gate) {
  switch (gate) {
    case GateKind::And: return "AND";
    case GateKind::Or: return "OR";
    case GateKind::Xor: return "XOR";
    case GateKind::Not: return "NOT";
    case GateKind::Nand: return "NAND";
  }
  return "?";
}

GateKind gate_from_string(const std::string& name) {
  for (const auto g : {GateKind::And, GateKind::Or, GateKind::Xor, GateKind::Not, GateKind::Nand}) {
    if (name == to_string(g)) return g;
  }
  throw InputError("unknown gate '" + name + "'");
}

int arity(GateKind gate) { return gate == GateKind::Not ? 1 : 2; }

bool apply_gate(GateKind gate, bool a, bool b) {
  switch (gate) {
    case GateKind::And: return a && b;
    case GateKind::Or: return a || b;
    case GateKind::Xor: return a != b;
    case GateKind::Not: return !a;
    case GateKind::Nand: return !(a && b);
  }
  return false;
}

namespace {

struct Builder {
  LogicDag dag;
  std::unordered_map<std::string, int> depth;
  Rng& rng;
  const DagConfig& cfg;
  int leaves_left = 0;
  int side_left = 0;

  Builder(Rng& r, const DagConfig& c) : rng(r), cfg(c) {}

  std::string new_leaf() {
    LeafNode leaf;
    leaf.id = "L" + std::to_string(dag.leaves.size());
    leaf.value = bernoulli(rng, 0.5);
    depth[leaf.id] = 0;
    dag.leaves.push_back(leaf);
    return leaf.id;
  }

  std::string new_node(GateKind gate, std::vector<std::string> inputs) {
    DerivedNode n;
    n.id = "N" + std::to_string(dag.nodes.size());
    n.gate = gate;
    int d = 0;
    for (const auto& in : inputs) d = std::max(d, depth.at(in));
    n.inputs = std::move(inputs);
    depth[n.id] = d + 1;
    dag.nodes.push_back(n);
    return n.id;
  }

  GateKind pick_gate() { return cfg.gates[uniform_below(rng, cfg.gates.size())]; }

  std::vector<std::string> existing(int max_depth, const std::string& exclude) const {
    std::vector<std::string> out;
    for (const auto& l : dag.leaves) {
      if (l.id != exclude) out.push_back(l.id);
    }
    for (const auto& n : dag.nodes) {
      if (n.id != exclude && depth.at(n.id) <= max_depth) out.push_back(n.id);
    }
    return out;
  }

  // Operand of depth <= max_depth; may spend the leaf or side-node budget.
  std::string operand(int max_depth, const std::string& exclude) {
    const auto pool = existing(max_depth, exclude);
    const double r = uniform01(rng);
    if (leaves_left > 0 && (r < 0.5 || pool.empty())) {
      --leaves_left;
      return new_leaf();
    }
    if (side_left > 0 && max_depth >= 1 && r < 0.8) {
      --side_left;
      return side_node(max_depth);
    }
    if (!pool.empty()) return pool[uniform_below(rng, pool.size())];
    return exclude;
  }

  std::string side_node(int max_depth) {
    const auto gate = pick_gate();
    std::vector<std::string> in{operand(max_depth - 1, "")};
    if (arity(gate) == 2) {
      in.push_back(bernoulli(rng, cfg.duplicate_prob) ? in[0] : operand(max_depth - 1, in[0]));
    }
    return new_node(gate, std::move(in));
  }
};

}  // namespace

LogicDag generate_dag(int hops, Rng& rng, const DagConfig& cfg) {
  if (hops < 1 || hops > 32) throw InputError("hops must be in [1, 32]");
  if (cfg.gates.empty()) throw ConfigError("gate mix is empty");
  if (cfg.duplicate_prob < 0.0 || cfg.duplicate_prob > 1.0) throw ConfigError("duplicate_prob outside [0, 1]");

  int budget = cfg.node_budget;
  int side = 0;
  int extra_leaves = 0;
  if (budget == 0) {
    side = static_cast<int>(uniform_below(rng, hops / 2 + 1));
    extra_leaves = 1 + static_cast<int>(uniform_below(rng, 3));
    const int distractors = 1 + static_cast<int>(uniform_below(rng, 5));
    budget = hops + 1 + side + extra_leaves + distractors;
  } else {
    const int extra = budget - hops - 1;
    if (extra < 0) {
      throw InputError("node budget " + std::to_string(budget) + " too small for " + std::to_string(hops) + " hops");
    }
    side = static_cast<int>(uniform_below(rng, std::min(extra, hops / 2) + 1));
    extra_leaves = static_cast<int>(uniform_below(rng, extra - side + 1));
  }

  Builder b(rng, cfg);
  b.side_left = side;
  b.leaves_left = extra_leaves;
  std::string prev = b.new_leaf();
  for (int i = 1; i <= hops; ++i) {
    const auto gate = b.pick_gate();
    std::vector<std::string> in{prev};
    if (arity(gate) == 2) {
      in.push_back(bernoulli(rng, cfg.duplicate_prob) ? prev : b.operand(i - 1, prev));
      if (bernoulli(rng, 0.5)) std::swap(in[0], in[1]);
    }
    prev = b.new_node(gate, std::move(in));
  }
  b.dag.target = prev;
  while (b.dag.total_nodes() < budget) b.new_leaf();  // distractors
  b.dag.hops = hops;
  return b.dag;
}

std::vector<std::string> topological_order(const LogicDag& dag) {
  std::set<std::string> leaf_ids;
  for (const auto& l : dag.leaves) {
    if (!leaf_ids.insert(l.id).second) throw StructuralError("duplicate node id '" + l.id + "'");
  }
  std::unordered_map<std::string, const DerivedNode*> by_id;
  for (const auto& n : dag.nodes) {
    if (leaf_ids.count(n.id) || !by_id.emplace(n.id, &n).second) {
      throw StructuralError("duplicate node id '" + n.id + "'");
    }
    if (static_cast<int>(n.inputs.size()) != arity(n.gate)) {
      throw StructuralError("node '" + n.id + "' has " + std::to_string(n.inputs.size()) + " inputs for " +
                            to_string(n.gate));
    }
  }
  for (const auto& n : dag.nodes) {
    for (const auto& in : n.inputs) {
      if (!leaf_ids.count(in) && !by_id.count(in)) {
        throw StructuralError("node '" + n.id + "' reads unknown '" + in + "'");
      }
    }
  }
  if (!by_id.count(dag.target)) throw StructuralError("target '" + dag.target + "' is not a derived node");

  // Kahn over derived nodes, ties broken by creation order.
  std::unordered_map<std::string, int> pending;
  std::unordered_map<std::string, std::vector<std::string>> users;
  for (const auto& n : dag.nodes) {
    std::set<std::string> deps;
    for (const auto& in : n.inputs) {
      if (by_id.count(in)) deps.insert(in);
    }
    pending[n.id] = static_cast<int>(deps.size());
    for (const auto& d : deps) users[d].push_back(n.id);
  }
  std::vector<std::string> order;
  std::vector<std::string> ready;
  for (auto it = dag.nodes.rbegin(); it != dag.nodes.rend(); ++it) {
    if (pending[it->id] == 0) ready.push_back(it->id);
  }
  while (!ready.empty()) {
    const auto id = ready.back();
    ready.pop_back();
    order.push_back(id);
    for (const auto& u : users[id]) {
      if (--pending[u] == 0) ready.push_back(u);
    }
  }
  if (order.size() != dag.nodes.size()) throw StructuralError("dag contains a cycle");
  return order;
}

namespace {

const DerivedNode& node_of(const LogicDag& dag, const std::string& id) {
  for (const auto& n : dag.nodes) {
    if (n.id == id) return n;
  }
  throw StructuralError("unknown node '" + id + "'");
}

std::string display(const LogicDag& dag, const std::string& id) {
  for (const auto& l : dag.leaves) {
    if (l.id == id) return l.name.empty() ? id : l.name;
  }
  const auto& n = node_of(dag, id);
  return n.name.empty() ? id : n.name;
}

const char* tf(bool v) { return v ? "True" : "False"; }

}  // namespace

int compute_hops(const LogicDag& dag) {
  std::unordered_map<std::string, int> depth;
  for (const auto& l : dag.leaves) depth[l.id] = 0;
  for (const auto& id : topological_order(dag)) {
    int d = 0;
    for (const auto& in : node_of(dag, id).inputs) d = std::max(d, depth.at(in));
    depth[id] = d + 1;
  }
  return depth.at(dag.target);
}

std::vector<std::string> required_nodes(const LogicDag& dag) {
  topological_order(dag);  // validates, so the walk below terminates
  std::set<std::string> leaf_ids;
  for (const auto& l : dag.leaves) leaf_ids.insert(l.id);
  std::vector<std::string> order;
  std::set<std::string> seen;
  std::function<void(const std::string&)> visit = [&](const std::string& id) {
    if (leaf_ids.count(id) || !seen.insert(id).second) return;
    for (const auto& in : node_of(dag, id).inputs) visit(in);
    order.push_back(id);
  };
  visit(dag.target);
  return order;
}

Evaluation evaluate_dag(const LogicDag& dag) {
  Evaluation ev;
  for (const auto& l : dag.leaves) ev.values[l.id] = l.value;
  for (const auto& id : topological_order(dag)) {
    const auto& n = node_of(dag, id);
    const bool a = ev.values.at(n.inputs[0]);
    const bool b = n.inputs.size() > 1 ? ev.values.at(n.inputs[1]) : false;
    ev.values[id] = apply_gate(n.gate, a, b);
  }
  ev.answer = ev.values.at(dag.target);
  return ev;
}

std::string derive_cot(const LogicDag& dag, const Evaluation& values) {
  const auto nodes = required_nodes(dag);
  std::set<std::string> leaf_ids;
  for (const auto& l : dag.leaves) leaf_ids.insert(l.id);

  std::ostringstream out;
  std::set<std::string> checked;
  int step = 1;
  for (const auto& id : nodes) {
    for (const auto& in : node_of(dag, id).inputs) {
      if (leaf_ids.count(in) && checked.insert(in).second) {
        out << step++ << ". Check status of '" << display(dag, in) << "': The logs indicate it is "
            << tf(values.values.at(in)) << ".\n";
      }
    }
  }
  for (const auto& id : nodes) {
    const auto& n = node_of(dag, id);
    const auto name = display(dag, id);
    out << "Analyzing '" << name << "'" << (id == dag.target ? " (Target)" : "") << ":\n";
    out << "  - Requires: ";
    const auto operand = [&](const std::string& in) {
      return display(dag, in) + " (" + tf(values.values.at(in)) + ")";
    };
    if (n.gate == GateKind::Not) {
      out << "NOT " << operand(n.inputs[0]);
    } else {
      out << operand(n.inputs[0]) << " " << to_string(n.gate) << " " << operand(n.inputs[1]);
    }
    const bool v = values.values.at(id);
    out << "\n  - Logic: " << to_string(n.gate) << " logic evaluates to " << tf(v) << ". -> '" << name << "' is "
        << tf(v) << ".\n";
  }
  out << "Final Answer: " << tf(values.values.at(dag.target));
  return out.str();
}

const std::vector<Theme>& builtin_themes() {
  static const std::vector<Theme> themes = [] {
    std::vector<Theme> t;
    t.push_back(Theme{
        "medical",
        "Medical Diagnosis",
        "[Lab Report]",
        "DETECTED/HIGH",
        "NOT DETECTED/NORMAL",
        {"Elevated", "Suppressed", "Routine", "Secondary", "Abnormal", "Critical", "Chronic", "Acute"},
        {"Blood Test A", "Previous History", "MRI Scan", "Patient Fever", "Genetic Marker", "Viral Load",
         "Cell Regeneration", "Immune Response", "Enzyme Level", "Neural Activity", "Liver Panel", "Heart Rhythm",
         "Platelet Count", "Glucose Level", "Antibody Titer", "Bone Density", "Lung Capacity", "Kidney Function",
         "Hormone Level", "Protein Marker"},
        {"Type-1", "Type-2", "Variant-X", "Variant-Y", "Stage-II"},
        {"Urgent Surgery Needed", "Immediate Admission", "Intensive Care Required", "Specialist Referral",
         "Emergency Transfusion", "Extended Observation"},
        {{GateKind::Or, "Symptom Check: Suspect '{T}' if patient shows '{A}' OR '{B}'."},
         {GateKind::Xor, "Differential: '{T}' is indicated if '{A}' contradicts '{B}'."},
         {GateKind::And, "Protocol: Confirm '{T}' only if '{A}' AND '{B}' are present."},
         {GateKind::Nand, "Exclusion: '{T}' is ruled out (False) only if both '{A}' and '{B}' are True."},
         {GateKind::Not, "Counter-indication: '{T}' holds only if '{A}' is absent."}},
    });
    t.push_back(Theme{
        "logistics",
        "Logistics Control",
        "[Sensor Log]",
        "ACTIVE/ONLINE",
        "INACTIVE/OFFLINE",
        {"Delayed", "Priority", "Backup", "Regional", "Outbound", "Inbound", "Overnight", "Express"},
        {"Cargo Scan", "Dock Sensor", "Fleet Tracker", "Route Plan", "Customs Clearance", "Fuel Reserve",
         "Cold Chain", "Pallet Count", "Warehouse Gate", "Driver Shift", "Weather Alert", "Port Signal",
         "Loading Crane", "Rail Link", "Parcel Hub", "Manifest Check", "Weight Station", "Freight Lock",
         "Convoy Status", "Depot Beacon"},
        {"Unit-A", "Unit-B", "Zone-3", "Zone-7", "Mk-II"},
        {"Shipment Dispatch Approved", "Route Diversion Required", "Warehouse Lockdown", "Same-Day Delivery Cleared",
         "Fleet Recall Ordered", "Cargo Hold Released"},
        {{GateKind::Or, "Routing Rule: Trigger '{T}' if '{A}' OR '{B}' reports."},
         {GateKind::Xor, "Conflict Rule: '{T}' is flagged if '{A}' disagrees with '{B}'."},
         {GateKind::And, "Dispatch Rule: Approve '{T}' only if '{A}' AND '{B}' are active."},
         {GateKind::Nand, "Hold Rule: '{T}' is blocked (False) only if both '{A}' and '{B}' are True."},
         {GateKind::Not, "Fallback Rule: '{T}' engages only if '{A}' is inactive."}},
    });
    t.push_back(Theme{
        "access-control",
        "Access Control",
        "[Audit Log]",
        "GRANTED/VALID",
        "DENIED/INVALID",
        {"Revoked", "Temporary", "Escalated", "Guest", "Legacy", "Federated", "Primary", "Shadow"},
        {"Badge Reader", "Admin Token", "Password Check", "Biometric Scan", "Vault Door", "Session Key",
         "Firewall Rule", "VPN Tunnel", "Audit Trail", "Role Binding", "License Seat", "Device Cert", "Door Keypad",
         "SSO Ticket", "API Quota", "Backup Code", "Root Shell", "Service Account", "Camera Feed", "Alarm Panel"},
        {"Tier-1", "Tier-2", "Node-A", "Node-B", "Rev-3"},
        {"Server Room Access", "Data Export Permitted", "Account Lockout", "Privilege Escalation Approved",
         "Emergency Override", "Remote Login Allowed"},
        {{GateKind::Or, "Alert: Raise '{T}' if '{A}' OR '{B}' fires."},
         {GateKind::Xor, "Mismatch: '{T}' is set if '{A}' contradicts '{B}'."},
         {GateKind::And, "Policy: Grant '{T}' only if '{A}' AND '{B}' are valid."},
         {GateKind::Nand, "Lockout: '{T}' is denied (False) only if both '{A}' and '{B}' are True."},
         {GateKind::Not, "Override: '{T}' holds only if '{A}' is revoked."}},
    });
    return t;
  }();
  return themes;
}

const Theme& theme_by_name(const std::string& name) {
  for (const auto& t : builtin_themes()) {
    if (t.name == name) return t;
  }
  throw InputError("unknown theme '" + name + "'");
}

namespace {

std::string fill(std::string text, const std::string& key, const std::string& value) {
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
  return text;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[uniform_below(rng, v.size())];
}

std::string instruction_for(const std::string& target) {
  return "Based on the observed data and system rules, determine the status of '" + target +
         "'. Is it True or False?";
}

std::string leaf_line(const Theme& theme, const LeafNode& leaf) {
  return theme.source_tag + " '" + leaf.name + "': " + (leaf.value ? theme.true_phrase : theme.false_phrase) + ".";
}

}  // namespace

Rendering render_natural_language(const LogicDag& dag, const Theme& theme, Rng& rng) {
  for (const auto g : {GateKind::And, GateKind::Or, GateKind::Xor, GateKind::Not, GateKind::Nand}) {
    if (!theme.rules.count(g)) throw ConfigError("theme '" + theme.name + "' has no template for " + to_string(g));
  }
  topological_order(dag);

  Rendering r;
  r.dag = dag;
  std::set<std::string> used;
  const auto fresh_name = [&] {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      std::string name;
      const auto form = uniform_below(rng, 4);
      if (form == 0 || form == 2) name += pick(theme.prefixes, rng) + " ";
      name += pick(theme.bases, rng);
      if (form == 1 || form == 2) name += " " + pick(theme.suffixes, rng);
      if (used.insert(name).second) return name;
    }
    throw ConfigError("theme '" + theme.name + "' ran out of entity names");
  };
  for (auto& n : r.dag.nodes) {
    if (n.id == dag.target) {
      n.name = pick(theme.outcomes, rng);
      used.insert(n.name);
    }
  }
  for (auto& l : r.dag.leaves) l.name = fresh_name();
  for (auto& n : r.dag.nodes) {
    if (n.id != dag.target) n.name = fresh_name();
  }
  shuffle(std::span<LeafNode>(r.dag.leaves), rng);

  std::vector<std::string> rules;
  for (const auto& n : r.dag.nodes) {
    auto text = fill(theme.rules.at(n.gate), "{T}", n.name);
    text = fill(text, "{A}", display(r.dag, n.inputs[0]));
    if (n.inputs.size() > 1) text = fill(text, "{B}", display(r.dag, n.inputs[1]));
    rules.push_back("- " + text);
  }
  shuffle(std::span<std::string>(rules), rng);

  std::ostringstream ctx;
  ctx << "=== SCENARIO: " << theme.title << " ===\n\n--- OBSERVED DATA ---\n";
  for (const auto& l : r.dag.leaves) ctx << leaf_line(theme, l) << "\n";
  ctx << "\n--- SYSTEM RULES ---\n";
  for (std::size_t i = 0; i < rules.size(); ++i) ctx << rules[i] << (i + 1 < rules.size() ? "\n" : "");
  r.context = ctx.str();
  r.instruction = instruction_for(display(r.dag, dag.target));
  return r;
}

NatBoolSample make_sample(int hops, const Theme& theme, Rng& rng, const DagConfig& cfg, std::optional<bool> answer,
                          std::string id) {
  LogicDag dag;
  bool found = false;
  for (int topo = 0; topo < 1000 && !found; ++topo) {
    dag = generate_dag(hops, rng, cfg);
    if (!answer) {
      found = true;
      break;
    }
    // Rejection on uniform leaf draws keeps the leaves uniform given the answer.
    for (int draw = 0; draw < 64; ++draw) {
      if (draw > 0) {
        for (auto& l : dag.leaves) l.value = bernoulli(rng, 0.5);
      }
      if (evaluate_dag(dag).answer == *answer) {
        found = true;
        break;
      }
    }
  }
  if (!found) throw ConfigError("could not reach the requested answer with this gate mix");

  auto r = render_natural_language(dag, theme, rng);
  const auto ev = evaluate_dag(r.dag);
  NatBoolSample s;
  s.id = std::move(id);
  s.theme = theme.name;
  s.hops = compute_hops(r.dag);
  s.depth = s.hops + 1;
  s.steps = static_cast<int>(required_nodes(r.dag).size());
  s.total_nodes = r.dag.total_nodes();
  s.instruction = std::move(r.instruction);
  s.context = std::move(r.context);
  s.cot = derive_cot(r.dag, ev);
  s.answer = ev.answer;
  s.dag = std::move(r.dag);
  return s;
}

std::string sample_to_json(const NatBoolSample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["theme"] = s.theme;
  j["hops"] = s.hops;
  j["depth"] = s.depth;
  j["steps"] = s.steps;
  j["total_nodes"] = s.total_nodes;
  j["instruction"] = s.instruction;
  j["context"] = s.context;
  j["cot"] = s.cot;
  j["answer"] = s.answer;
  auto leaves = nlohmann::ordered_json::array();
  for (const auto& l : s.dag.leaves) {
    leaves.push_back({{"id", l.id}, {"name", l.name}, {"value", l.value}});
  }
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& n : s.dag.nodes) {
    nodes.push_back({{"id", n.id}, {"name", n.name}, {"gate", to_string(n.gate)}, {"inputs", n.inputs}});
  }
  j["dag"] = {{"leaves", leaves}, {"nodes", nodes}, {"target", s.dag.target}};
  return j.dump();
}

NatBoolSample sample_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    NatBoolSample s;
    s.id = j.at("id").get<std::string>();
    s.theme = j.at("theme").get<std::string>();
    s.hops = j.at("hops").get<int>();
    s.depth = j.value("depth", s.hops + 1);
    s.steps = j.at("steps").get<int>();
    s.total_nodes = j.at("total_nodes").get<int>();
    s.instruction = j.at("instruction").get<std::string>();
    s.context = j.at("context").get<std::string>();
    s.cot = j.at("cot").get<std::string>();
    s.answer = j.at("answer").get<bool>();
    const auto& d = j.at("dag");
    for (const auto& l : d.at("leaves")) {
      s.dag.leaves.push_back({l.at("id").get<std::string>(), l.at("name").get<std::string>(), l.at("value").get<bool>()});
    }
    for (const auto& n : d.at("nodes")) {
      s.dag.nodes.push_back({n.at("id").get<std::string>(), n.at("name").get<std::string>(),
                             gate_from_string(n.at("gate").get<std::string>()),
                             n.at("inputs").get<std::vector<std::string>>()});
    }
    s.dag.target = d.at("target").get<std::string>();
    s.dag.hops = s.hops;
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed natbool sample: ") + e.what());
  }
}

const char* to_string(VerifyFailure failure) {
  switch (failure) {
    case VerifyFailure::Structural: return "structural";
    case VerifyFailure::AnswerMismatch: return "answer-mismatch";
    case VerifyFailure::CotMismatch: return "cot-mismatch";
    case VerifyFailure::HopMismatch: return "hop-mismatch";
    case VerifyFailure::StepMismatch: return "step-mismatch";
    case VerifyFailure::NodeCountMismatch: return "node-count-mismatch";
    case VerifyFailure::UnknownEntity: return "unknown-entity";
    case VerifyFailure::ContextMismatch: return "context-mismatch";
  }
  return "?";
}

Verdict verify_sample(const NatBoolSample& s) {
  Verdict v;
  const auto fail = [&](VerifyFailure f, std::string detail) {
    v.failures.push_back(f);
    v.details.push_back(std::move(detail));
  };
  Evaluation ev;
  try {
    ev = evaluate_dag(s.dag);
  } catch (const StructuralError& e) {
    fail(VerifyFailure::Structural, e.what());
    return v;
  }
  if (ev.answer != s.answer) fail(VerifyFailure::AnswerMismatch, std::string("dag evaluates to ") + tf(ev.answer));
  if (derive_cot(s.dag, ev) != s.cot) fail(VerifyFailure::CotMismatch, "cot differs from the derivation");
  const int hops = compute_hops(s.dag);
  if (hops != s.hops) fail(VerifyFailure::HopMismatch, "dag has " + std::to_string(hops) + " hops");
  const int steps = static_cast<int>(required_nodes(s.dag).size());
  if (steps != s.steps) fail(VerifyFailure::StepMismatch, "derivation has " + std::to_string(steps) + " steps");
  if (s.dag.total_nodes() != s.total_nodes) {
    fail(VerifyFailure::NodeCountMismatch, "dag has " + std::to_string(s.dag.total_nodes()) + " nodes");
  }

  std::set<std::string> names;
  for (const auto& l : s.dag.leaves) names.insert(l.name);
  for (const auto& n : s.dag.nodes) names.insert(n.name);
  if (names.size() != static_cast<std::size_t>(s.dag.total_nodes()) || names.count("")) {
    fail(VerifyFailure::UnknownEntity, "entity names are missing or repeated");
  }
  for (const auto* text : {&s.instruction, &s.context, &s.cot}) {
    for (std::size_t a = text->find('\''); a != std::string::npos; a = text->find('\'', a + 1)) {
      const auto b = text->find('\'', a + 1);
      if (b == std::string::npos) {
        fail(VerifyFailure::UnknownEntity, "unbalanced quote");
        break;
      }
      const auto name = text->substr(a + 1, b - a - 1);
      if (!names.count(name)) fail(VerifyFailure::UnknownEntity, "'" + name + "' is not in the dag");
      a = b;
    }
  }

  const Theme* theme = nullptr;
  for (const auto& t : builtin_themes()) {
    if (t.name == s.theme) theme = &t;
  }
  if (theme) {
    for (const auto& l : s.dag.leaves) {
      if (s.context.find(leaf_line(*theme, l)) == std::string::npos) {
        fail(VerifyFailure::ContextMismatch, "no observed line for '" + l.name + "' = " + tf(l.value));
      }
    }
  }
  return v;
}

SplitSpec split_spec_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SplitSpec spec;
    for (const auto& r : j.at("rows")) {
      spec.rows.push_back({r.at("hops").get<int>(), r.at("train").get<long>(), r.at("val").get<long>(),
                           r.at("test").get<long>()});
      const auto& row = spec.rows.back();
      if (row.hops < 1 || row.train < 0 || row.val < 0 || row.test < 0) {
        throw InputError("bad split row for hops " + std::to_string(row.hops));
      }
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed split spec: ") + e.what());
  }
}

SplitSpec load_split_spec(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot read " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return split_spec_from_json(buf.str());
}

std::string split_spec_to_json(const SplitSpec& spec) {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : spec.rows) {
    j["rows"].push_back({{"hops", r.hops}, {"train", r.train}, {"val", r.val}, {"test", r.test}});
  }
  return j.dump(2);
}

namespace {

long split_count(const SplitRow& row, const std::string& split) {
  if (split == "train") return row.train;
  if (split == "val") return row.val;
  if (split == "test") return row.test;
  throw InputError("unknown split '" + split + "'");
}

std::string sample_id(std::uint64_t seed, const std::string& split, int hops, long index) {
  const auto h = derive_seed(seed, "natbool-id/" + split, static_cast<std::uint64_t>(hops) * 1000003u + index);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08llx-%04llx-%04llx", static_cast<unsigned long long>(h >> 32),
                static_cast<unsigned long long>((h >> 16) & 0xffff), static_cast<unsigned long long>(h & 0xffff));
  return buf;
}

}  // namespace

std::vector<NatBoolSample> generate_split(const SplitSpec& spec, const std::string& split,
                                          const std::vector<std::string>& themes, std::uint64_t seed,
                                          const DagConfig& cfg) {
  if (themes.empty()) throw InputError("no themes selected");
  std::vector<const Theme*> picked;
  for (const auto& t : themes) picked.push_back(&theme_by_name(t));
  std::vector<NatBoolSample> out;
  for (const auto& row : spec.rows) {
    const long n = split_count(row, split);
    for (long i = 0; i < n; ++i) {
      const auto salt = static_cast<std::uint64_t>(row.hops) * 1000003u + i;
      Rng rng{derive_seed(seed, "natbool/" + split, salt)};
      out.push_back(make_sample(row.hops, *picked[i % picked.size()], rng, cfg, i % 2 == 0,
                                sample_id(seed, split, row.hops, i)));
    }
  }
  return out;
}

DatasetSummary build_dataset(const SplitSpec& spec, const std::vector<std::string>& themes, std::uint64_t seed,
                             const std::filesystem::path& out, const DagConfig& cfg) {
  std::filesystem::create_directories(out);
  DatasetSummary summary;
  std::set<std::string> ids;
  for (const std::string split : {"train", "val", "test"}) {
    const auto samples = generate_split(spec, split, themes, seed, cfg);
    std::ofstream f(out / (split + ".jsonl"));
    if (!f) throw InputError("cannot write " + (out / (split + ".jsonl")).string());
    std::map<int, long> trues;
    for (const auto& s : samples) {
      if (!ids.insert(s.id).second) throw StructuralError("duplicate sample id " + s.id);
      f << sample_to_json(s) << "\n";
      ++summary.counts[split][s.hops];
      trues[s.hops] += s.answer;
    }
    for (const auto& [h, n] : summary.counts[split]) {
      summary.true_rate[split][h] = n ? static_cast<double>(trues[h]) / n : 0.0;
    }
  }
  return summary;
}

std::vector<ShortcutRow> shortcut_marginals(const std::vector<NatBoolSample>& samples, long min_support) {
  struct Tally {
    long n = 0;
    long t = 0;
    std::map<std::pair<std::size_t, bool>, std::pair<long, long>> slot;  // (pos, value) -> (count, true)
  };
  std::map<int, Tally> by_hops;
  for (const auto& s : samples) {
    auto& tally = by_hops[s.hops];
    ++tally.n;
    tally.t += s.answer;
    for (std::size_t i = 0; i < s.dag.leaves.size(); ++i) {
      auto& c = tally.slot[{i, s.dag.leaves[i].value}];
      ++c.first;
      c.second += s.answer;
    }
  }
  std::vector<ShortcutRow> rows;
  for (const auto& [h, tally] : by_hops) {
    ShortcutRow row;
    row.hops = h;
    row.samples = tally.n;
    row.base_rate = static_cast<double>(tally.t) / tally.n;
    for (const auto& [key, c] : tally.slot) {
      if (c.first < min_support) continue;
      const double gap = std::abs(static_cast<double>(c.second) / c.first - row.base_rate);
      if (gap > row.max_gap) {
        row.max_gap = gap;
        row.worst = "l" + std::to_string(key.first) + (key.second ? "=T" : "=F");
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace cotlab
