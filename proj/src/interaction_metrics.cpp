#include "cotlab/interaction_metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cotlab/errors.hpp"
#include "cotlab/rng.hpp"
#include "json.hpp"

namespace cotlab {

int TokenizedCorpus::intern(const std::string& token) {
  const auto [it, fresh] = index.emplace(token, static_cast<int>(vocab.size()));
  if (fresh) vocab.push_back(token);
  return it->second;
}

void TokenizedCorpus::add(const std::vector<std::string>& tokens, int label) {
  if (label != 0 && label != 1) throw InputError("label must be 0 or 1");
  std::vector<int> ids;
  for (const auto& t : tokens) ids.push_back(intern(t));
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  samples.push_back(std::move(ids));
  y.push_back(label);
}

std::vector<int> TokenizedCorpus::ids(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  for (const auto& t : tokens) {
    const auto it = index.find(t);
    if (it == index.end()) throw InputError("token '" + t + "' not in vocabulary");
    out.push_back(it->second);
  }
  return out;
}

TokenizedCorpus load_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot read " + path.string());
  TokenizedCorpus c;
  std::string line;
  long lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      c.add(j.at("tokens").get<std::vector<std::string>>(), j.at("y").get<int>());
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

void save_corpus_jsonl(const TokenizedCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path.string());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    nlohmann::ordered_json j;
    std::vector<std::string> toks;
    for (const int t : corpus.samples[i]) toks.push_back(corpus.vocab[t]);
    j["tokens"] = toks;
    j["y"] = corpus.y[i];
    f << j.dump() << "\n";
  }
}

long ProbeConfig::budget_for(int order) const {
  long b = budget;
  for (int k = 2; k < order; ++k) b /= 2;
  return std::max(1L, b);
}

CountTable::CountTable(const TokenizedCorpus& corpus)
    : n_(static_cast<long>(corpus.size())), words_((corpus.size() + 63) / 64) {
  bits_.assign(corpus.vocab.size(), std::vector<std::uint64_t>(words_, 0));
  label_.assign(words_, 0);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto bit = std::uint64_t{1} << (i % 64);
    for (const int t : corpus.samples[i]) bits_[t][i / 64] |= bit;
    if (corpus.y[i]) {
      label_[i / 64] |= bit;
      ++ones_;
    }
  }
}

long CountTable::count(const std::vector<int>& subset) const {
  long c = 0;
  for (std::size_t w = 0; w < words_; ++w) {
    std::uint64_t x = ~std::uint64_t{0};
    for (const int t : subset) x &= bits_[t][w];
    c += std::popcount(x);
  }
  return c;
}

long CountTable::joint(const std::vector<int>& subset, int y) const {
  long c = 0;
  const auto tail = n_ % 64 ? (std::uint64_t{1} << (n_ % 64)) - 1 : ~std::uint64_t{0};
  for (std::size_t w = 0; w < words_; ++w) {
    std::uint64_t x = y ? label_[w] : ~label_[w];
    if (w + 1 == words_) x &= tail;
    for (const int t : subset) x &= bits_[t][w];
    c += std::popcount(x);
  }
  return c;
}

InteractionProbe::InteractionProbe(const TokenizedCorpus& corpus, ProbeConfig cfg)
    : corpus_(corpus), cfg_(cfg), table_(corpus) {
  if (cfg_.smoothing < 0.0) throw ConfigError("smoothing must be >= 0");
  if (cfg_.budget < 1) throw ConfigError("budget must be >= 1");
}

std::vector<int> InteractionProbe::canonical(std::vector<int> subset) const {
  if (subset.empty()) throw InputError("empty subset");
  std::sort(subset.begin(), subset.end());
  if (std::adjacent_find(subset.begin(), subset.end()) != subset.end()) {
    throw InputError("subset repeats a token");
  }
  for (const int t : subset) {
    if (t < 0 || t >= static_cast<int>(corpus_.vocab.size())) throw InputError("token id out of range");
  }
  return subset;
}

std::optional<double> InteractionProbe::pmi(std::vector<int> subset, int y) {
  subset = canonical(std::move(subset));
  std::string key = y ? "1" : "0";
  for (const int t : subset) key += "," + std::to_string(t);
  if (const auto it = cache_.find(key); it != cache_.end()) return it->second;

  std::optional<double> out;
  const long nsy = table_.joint(subset, y);
  if (nsy >= cfg_.min_joint) {
    const double a = cfg_.smoothing;
    const double total = static_cast<double>(table_.n()) + 4.0 * a;
    const double p_sy = (nsy + a) / total;
    const double p_s = (table_.count(subset) + 2.0 * a) / total;
    const double p_y = (table_.label_count(y) + 2.0 * a) / total;
    double v = std::log(p_sy / (p_s * p_y));
    if (cfg_.normalized) v /= -std::log(p_sy);
    out = v;
  }
  cache_.emplace(std::move(key), out);
  return out;
}

std::optional<double> InteractionProbe::synergy(std::vector<int> subset, int y) {
  subset = canonical(std::move(subset));
  if (subset.size() < 2) throw InputError("synergy needs at least two tokens");
  const auto whole = pmi(subset, y);
  if (!whole) return std::nullopt;
  double best = -INFINITY;
  for (std::size_t drop = 0; drop < subset.size(); ++drop) {
    auto sub = subset;
    sub.erase(sub.begin() + static_cast<std::ptrdiff_t>(drop));
    const auto p = pmi(sub, y);
    if (!p) return std::nullopt;
    best = std::max(best, *p);
  }
  return *whole - best;
}

namespace {

double choose(std::size_t n, int k) {
  if (k < 0 || static_cast<std::size_t>(k) > n) return 0.0;
  double c = 1.0;
  for (int i = 0; i < k; ++i) c = c * static_cast<double>(n - i) / (i + 1);
  return std::round(c);
}

// Every k-combination of [0, n) in lexicographic order.
std::vector<std::vector<std::size_t>> all_combinations(std::size_t n, int k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    out.push_back(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

}  // namespace

OrderStats density_quality(const TokenizedCorpus& corpus, int order, const ProbeConfig& cfg) {
  if (order < 2) throw InputError("interaction order must be >= 2");
  InteractionProbe probe(corpus, cfg);
  OrderStats st;
  st.order = order;
  const long budget = cfg.budget_for(order);
  double weighted_valid = 0.0;
  double weighted_sigma = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& toks = corpus.samples[i];
    const double total = choose(toks.size(), order);
    if (total == 0.0) continue;
    st.subset_total += total;

    std::vector<std::vector<std::size_t>> picks;
    if (total <= static_cast<double>(budget)) {
      picks = all_combinations(toks.size(), order);
    } else {
      Rng rng{derive_seed(cfg.seed, "interaction-subsets", i * 64 + order)};
      std::set<std::vector<std::size_t>> seen;
      while (static_cast<long>(picks.size()) < budget) {
        auto idx = sample_without_replacement(rng, toks.size(), order);
        std::sort(idx.begin(), idx.end());
        if (seen.insert(idx).second) picks.push_back(std::move(idx));
      }
    }
    const double weight = total / static_cast<double>(picks.size());
    for (const auto& idx : picks) {
      std::vector<int> subset;
      for (const auto j : idx) subset.push_back(toks[j]);
      ++st.sampled_count;
      const auto s = probe.synergy(subset, corpus.y[i]);
      if (!s || *s <= 0.0) continue;
      const auto p = probe.pmi(subset, corpus.y[i]);
      if (*p <= cfg.gamma) continue;
      ++st.valid_count;
      weighted_valid += weight;
      weighted_sigma += weight * *s;
    }
  }
  st.rho = corpus.size() ? weighted_valid / static_cast<double>(corpus.size()) : 0.0;
  if (st.valid_count > 0) st.phi = weighted_sigma / weighted_valid;
  return st;
}

double density_rho(const TokenizedCorpus& corpus, int order, const ProbeConfig& cfg) {
  return density_quality(corpus, order, cfg).rho;
}

std::optional<double> quality_phi(const TokenizedCorpus& corpus, int order, const ProbeConfig& cfg) {
  return density_quality(corpus, order, cfg).phi;
}

std::vector<LandscapeRow> interaction_landscape(
    const std::vector<std::pair<std::string, TokenizedCorpus>>& variants, const ProbeConfig& cfg) {
  std::vector<LandscapeRow> rows;
  for (const auto& [name, corpus] : variants) {
    for (int k = 2; k <= cfg.max_order; ++k) rows.push_back({name, density_quality(corpus, k, cfg)});
  }
  return rows;
}

std::string landscape_to_csv(const std::vector<LandscapeRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "order,variant,rho,phi,valid_count,sampled_count\n";
  for (const auto& r : rows) {
    out << r.stats.order << "," << r.variant << "," << r.stats.rho << ",";
    if (r.stats.phi) out << *r.stats.phi;
    out << "," << r.stats.valid_count << "," << r.stats.sampled_count << "\n";
  }
  return out.str();
}

std::vector<std::string> natbool_tokens(const NatBoolSample& sample, bool with_cot) {
  const auto& dag = sample.dag;
  std::map<std::string, std::string> ref;
  for (std::size_t i = 0; i < dag.leaves.size(); ++i) ref[dag.leaves[i].id] = "l" + std::to_string(i);
  const auto order = required_nodes(dag);
  // Counted back from the target so g0 is always the target's gate.
  const auto rank = [&](std::size_t t) { return std::to_string(order.size() - 1 - t); };
  for (std::size_t t = 0; t < order.size(); ++t) ref[order[t]] = "n" + rank(t);

  const auto values = evaluate_dag(dag).values;
  std::vector<std::string> toks;
  for (std::size_t i = 0; i < dag.leaves.size(); ++i) {
    toks.push_back("l" + std::to_string(i) + (dag.leaves[i].value ? "=T" : "=F"));
  }
  for (std::size_t t = 0; t < order.size(); ++t) {
    const auto& node = *std::find_if(dag.nodes.begin(), dag.nodes.end(), [&](const auto& n) { return n.id == order[t]; });
    const auto name = rank(t);
    toks.push_back("g" + name + ":" + to_string(node.gate));
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      toks.push_back("in" + name + "." + std::to_string(j) + "=" + ref.at(node.inputs[j]));
    }
    if (with_cot && order[t] != dag.target) toks.push_back("n" + name + (values.at(order[t]) ? "=T" : "=F"));
  }
  return toks;
}

TokenizedCorpus natbool_corpus(const std::vector<NatBoolSample>& samples, bool with_cot) {
  TokenizedCorpus c;
  for (const auto& s : samples) c.add(natbool_tokens(s, with_cot), s.answer ? 1 : 0);
  return c;
}

}  // namespace cotlab
