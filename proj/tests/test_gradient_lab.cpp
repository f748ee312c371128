#include <cmath>

#include "cotlab/errors.hpp"
#include "cotlab/gradient_lab.hpp"
#include "doctest.h"

using namespace cotlab;

TEST_CASE("tuple membership matches brute force") {
  Rng rng{17};
  const int d = 8;
  const std::vector<int> support{2, 5, 7};
  for (int t = 0; t < 300; ++t) {
    const int r = 1 + static_cast<int>(uniform_below(rng, 5));
    std::vector<int> J;
    for (int i = 0; i < r; ++i) J.push_back(1 + static_cast<int>(uniform_below(rng, d)));
    CHECK(classify_tuple(J, support) == classify_tuple_bruteforce(J, support, d));
  }
  CHECK(classify_tuple(std::vector<int>{2, 5, 7}, support) == Membership::Relevant);
  CHECK(classify_tuple(std::vector<int>{2, 5, 7, 1, 1}, support) == Membership::Relevant);
  CHECK(classify_tuple(std::vector<int>{2, 5}, support) == Membership::Irrelevant);
}

TEST_CASE("contraction and invariance") {
  const Vec a{1.0, 2.0, 3.0}, b{4.0, -1.0, 0.5};
  CHECK(contraction(std::vector<Vec>{a, b}) == doctest::Approx(1.0 * 4 - 2 + 1.5));
  Rng rng{8};
  for (int r = 2; r <= 4; ++r) {
    const auto u = uniform_vector(rng, 16, -1, 1);
    const auto v = uniform_vector(rng, 16, -1, 1);
    CHECK(check_parity_invariance(u, v, r));
  }
}

TEST_CASE("taylor coefficients follow the polynomial") {
  const auto g = taylor_coeffs(FfnPoly::standard(2.0), 4);
  REQUIRE(g.size() == 4);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == -4.0);
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 8.0);
}

TEST_CASE("hoeffding kappa formula") {
  CHECK(hoeffding_kappa(100, 10, 0.05, 2.0) == doctest::Approx(2.0 * std::sqrt(2.0 / 100 * std::log(2.0 * 10 / 0.05))));
}

TEST_CASE("log-log fit recovers a power law") {
  const std::vector<double> x{2, 4, 8, 16};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, -2.0));
  const auto [slope, intercept] = loglog_fit(x, y);
  CHECK(slope == doctest::Approx(-2.0));
  CHECK(intercept == doctest::Approx(std::log(3.0)));
}

TEST_CASE("completion counts partition the tuples") {
  const std::vector<int> support{1, 2};
  const auto [rel, irr] = count_completions(6, 2, 1, support);
  CHECK(rel + irr == 6);
  CHECK(rel == 1);
}

TEST_CASE("small static latent probe is consistent") {
  Rng rng{3};
  EmbeddingBasis basis{uniform_vector(rng, 16, -1, 1), uniform_vector(rng, 16, -1, 1)};
  const auto c = uniform_vector(rng, 16, -1, 1);
  StaticLatentConfig cfg;
  cfg.trials = 60;
  cfg.n = 400;
  const auto rep = static_latent_probe(cfg, basis, c);
  CHECK(rep.predicted_std == doctest::Approx(std::abs(rep.c_c) / std::sqrt(400.0)));
  CHECK(rep.std / rep.predicted_std == doctest::Approx(1.0).epsilon(0.35));
  cfg.r = 1;
  CHECK_THROWS_AS(static_latent_probe(cfg, basis, c), InputError);
}
