#include <algorithm>
#include <cmath>
#include <filesystem>

#include "cotlab/errors.hpp"
#include "cotlab/interaction_metrics.hpp"
#include "doctest.h"

using namespace cotlab;

namespace {

// y = [a present] xor [b present], every cell repeated `rep` times.
TokenizedCorpus xor_corpus(int rep) {
  TokenizedCorpus c;
  c.intern("a");
  c.intern("b");
  for (int r = 0; r < rep; ++r) {
    c.add({}, 0);
    c.add({"a"}, 1);
    c.add({"b"}, 1);
    c.add({"a", "b"}, 0);
  }
  return c;
}

// Plain counting over raw samples, no bitsets.
double oracle_pmi(const TokenizedCorpus& c, std::vector<int> s, int y, double a) {
  std::sort(s.begin(), s.end());
  double nsy = 0, ns = 0, ny = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const bool has = std::includes(c.samples[i].begin(), c.samples[i].end(), s.begin(), s.end());
    ns += has;
    ny += c.y[i] == y;
    nsy += has && c.y[i] == y;
  }
  const double n = static_cast<double>(c.size()) + 4 * a;
  return std::log(((nsy + a) / n) / (((ns + 2 * a) / n) * ((ny + 2 * a) / n)));
}

}  // namespace

TEST_CASE("pmi matches direct counting") {
  Rng rng{3};
  TokenizedCorpus c;
  for (int i = 0; i < 300; ++i) {
    std::vector<std::string> toks;
    for (int t = 0; t < 10; ++t) {
      if (uniform01(rng) < 0.4) toks.push_back("t" + std::to_string(t));
    }
    c.add(toks, uniform01(rng) < 0.5);
  }
  ProbeConfig cfg;
  cfg.min_joint = 1;
  InteractionProbe probe(c, cfg);
  for (int t = 0; t < 9; ++t) {
    for (int y = 0; y < 2; ++y) {
      const std::vector<int> s{c.ids({"t" + std::to_string(t + 1)})[0], c.ids({"t" + std::to_string(t)})[0]};
      const auto p = probe.pmi(s, y);
      REQUIRE(p);
      CHECK(*p == doctest::Approx(oracle_pmi(c, s, y, 0.5)).epsilon(1e-12));
    }
  }
}

TEST_CASE("perfect predictor has pmi ln 2") {
  TokenizedCorpus c;
  for (int i = 0; i < 1000; ++i) c.add(i % 2 ? std::vector<std::string>{"a", "z"} : std::vector<std::string>{"z"}, i % 2);
  ProbeConfig cfg;
  cfg.smoothing = 0.0;
  InteractionProbe probe(c, cfg);
  CHECK(*probe.pmi(c.ids({"a"}), 1) == doctest::Approx(std::log(2.0)));
  CHECK(*probe.pmi(c.ids({"z"}), 1) == doctest::Approx(0.0));
  CHECK_FALSE(probe.pmi(c.ids({"a"}), 0));  // never seen with y = 0
  cfg.smoothing = 0.5;
  InteractionProbe smoothed(c, cfg);
  CHECK(*smoothed.pmi(c.ids({"a"}), 1) < std::log(2.0));
  cfg.normalized = true;
  InteractionProbe norm(c, cfg);
  const double p = *norm.pmi(c.ids({"a"}), 1);
  CHECK(p > 0.0);
  CHECK(p <= 1.0);
}

TEST_CASE("xor pair carries pure synergy") {
  const auto c = xor_corpus(10);
  ProbeConfig cfg;
  cfg.smoothing = 0.0;
  InteractionProbe probe(c, cfg);
  CHECK(*probe.pmi(c.ids({"a"}), 0) == doctest::Approx(0.0));
  CHECK(*probe.pmi(c.ids({"a", "b"}), 0) == doctest::Approx(std::log(2.0)));
  CHECK(*probe.synergy(c.ids({"b", "a"}), 0) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(probe.synergy(c.ids({"a", "a"}), 0), InputError);
  CHECK_THROWS_AS(probe.synergy(c.ids({"a"}), 0), InputError);
  CHECK_THROWS_AS(probe.pmi({}, 0), InputError);
  CHECK_THROWS_AS(c.ids({"nope"}), InputError);

  const auto st = density_quality(c, 2, cfg);
  REQUIRE(st.phi);
  CHECK(*st.phi == doctest::Approx(std::log(2.0)));
  CHECK(st.rho == doctest::Approx(0.25));
  CHECK(st.valid_count == 10);
  CHECK(st.sampled_count == 10);
  CHECK_THROWS_AS(density_quality(c, 1, cfg), InputError);
}

TEST_CASE("no valid interactions leaves phi absent") {
  TokenizedCorpus c;
  for (int i = 0; i < 200; ++i) c.add({"a", "b", "c"}, i % 2);
  const auto st = density_quality(c, 2, {});
  CHECK(st.rho == 0.0);
  CHECK_FALSE(st.phi.has_value());
  CHECK(st.sampled_count == 600);
  CHECK(landscape_to_csv({{"flat", st}}).find("2,flat,0,,0,600") != std::string::npos);
}

TEST_CASE("sampled subsets estimate the exhaustive density") {
  Rng rng{8};
  TokenizedCorpus c;
  for (int i = 0; i < 400; ++i) {
    std::vector<std::string> toks;
    const bool a = uniform01(rng) < 0.5, b = uniform01(rng) < 0.5;
    if (a) toks.push_back("a");
    if (b) toks.push_back("b");
    for (int t = 0; t < 14; ++t) {
      if (uniform01(rng) < 0.6) toks.push_back("t" + std::to_string(t));
    }
    c.add(toks, a != b);
  }
  ProbeConfig full;
  full.budget = 100000;
  const auto exact = density_quality(c, 3, full);
  CHECK(exact.sampled_count == static_cast<long>(exact.subset_total));

  double mean = 0.0;
  const int seeds = 100;
  for (int s = 0; s < seeds; ++s) {
    ProbeConfig small;
    small.budget = 60;  // 30 triples per sample
    small.seed = s;
    const auto est = density_quality(c, 3, small);
    CHECK(est.sampled_count < exact.sampled_count);
    mean += est.rho / seeds;
  }
  CHECK(exact.rho > 0.0);
  CHECK(mean == doctest::Approx(exact.rho).epsilon(0.1));
}

TEST_CASE("reducible chain labels lose quality with order") {
  // x0 -> x1 -> ... -> x5, each copying its parent with probability 0.85,
  // and y = x0: everything is explained pairwise or below.
  Rng rng{6};
  TokenizedCorpus c;
  for (int i = 0; i < 20000; ++i) {
    std::vector<std::string> toks;
    int x = bernoulli(rng, 0.5);
    const int y = x;
    for (int t = 0; t < 6; ++t) {
      if (t > 0 && !bernoulli(rng, 0.85)) x = 1 - x;
      toks.push_back("x" + std::to_string(t) + "=" + std::to_string(x));
    }
    c.add(toks, y);
  }
  ProbeConfig cfg;
  cfg.max_order = 4;
  const auto rows = interaction_landscape({{"chain", c}}, cfg);
  std::vector<double> phi;
  for (const auto& r : rows) phi.push_back(r.stats.phi.value_or(0.0));
  CHECK(phi[0] > phi[1]);
  CHECK(phi[1] > phi[2]);
}

TEST_CASE("planted parity peaks at its own order") {
  Rng rng{5};
  TokenizedCorpus c;
  for (int i = 0; i < 20000; ++i) {
    std::vector<std::string> toks;
    int y = 0;
    for (int t = 0; t < 6; ++t) {
      const int bit = uniform01(rng) < 0.5;
      toks.push_back("x" + std::to_string(t) + "=" + std::to_string(bit));
      if (t < 3) y ^= bit;
    }
    c.add(toks, y);
  }
  ProbeConfig cfg;
  cfg.max_order = 3;
  const auto rows = interaction_landscape({{"p3", c}}, cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].stats.valid_count == 0);
  // every sample holds its planted triple, plus a few noise passes
  CHECK(rows[1].stats.valid_count >= 20000);
  REQUIRE(rows[1].stats.phi);
  CHECK(*rows[1].stats.phi > 0.0);
}

TEST_CASE("corpus jsonl round trip") {
  const auto c = xor_corpus(2);
  const auto path = std::filesystem::temp_directory_path() / "cotlab-corpus-test.jsonl";
  save_corpus_jsonl(c, path);
  const auto back = load_corpus_jsonl(path);
  REQUIRE(back.size() == c.size());
  CHECK(back.y == c.y);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(back.samples[i].size() == c.samples[i].size());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_corpus_jsonl(path), InputError);
}

TEST_CASE("natbool tokens") {
  Rng rng{2};
  const auto s = make_sample(4, builtin_themes()[0], rng);
  const auto plain = natbool_tokens(s, false);
  const auto cot = natbool_tokens(s, true);
  CHECK(cot.size() - plain.size() == required_nodes(s.dag).size() - 1);
  const auto target = std::find_if(s.dag.nodes.begin(), s.dag.nodes.end(), [&](auto& n) { return n.id == s.dag.target; });
  CHECK(std::find(plain.begin(), plain.end(), std::string("g0:") + to_string(target->gate)) != plain.end());
  for (const auto& t : plain) CHECK(t.find("n0=") == std::string::npos);
}
