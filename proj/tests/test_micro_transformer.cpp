#include <cmath>

#include "cotlab/errors.hpp"
#include "cotlab/micro_transformer.hpp"
#include "doctest.h"

using namespace cotlab;

namespace {

ModelParams random_model(Rng& rng, int d_model, int positions, LatentMode latent, int slots, LatentReadout readout) {
  InitConfig ic;
  ic.d_model = d_model;
  ic.max_positions = positions;
  ic.latent = latent;
  ic.latent_slots = slots;
  ic.readout = readout;
  auto p = init_params(ic, rng);
  for (auto& w : p.logits.w) w = uniform_open(rng, -1.0, 1.0);
  return p;
}

std::vector<SequenceEncoding> batch_of(Rng& rng, int n, int s, LatentLayout layout) {
  const auto support = default_support(8, 4);
  std::vector<SequenceEncoding> out;
  for (int i = 0; i < n; ++i) {
    const auto inst = sample_instance(8, support, rng);
    const auto trace = build_cot_trace(inst);
    out.push_back(s == 0 ? encode_explicit(trace, inst) : encode_implicit(trace, inst, s, layout));
  }
  return out;
}

}  // namespace

TEST_CASE("ffn presets") {
  const auto quartic = FfnPoly::standard(2.0);
  CHECK(quartic.eval(0.0) == 1.0);
  CHECK(quartic.eval(1.0) == doctest::Approx(1.0));
  const auto exact = FfnPoly::parity_exact(2.0);
  CHECK(exact.eval(0.0) == -1.0);
  CHECK(exact.eval(1.0) == doctest::Approx(1.0));
  CHECK(exact.eval(-1.0) == doctest::Approx(1.0));
  CHECK(quartic.gamma(2) == -4.0);
  CHECK(quartic.gamma(4) == 8.0);
  CHECK(quartic.gamma(3) == 0.0);
  CHECK_THROWS_AS(FfnPoly::from_name("cubic", 2.0), InputError);
}

TEST_CASE("softmax and output head") {
  const auto s = softmax(std::vector<double>{1.0, 2.0, 3.0});
  CHECK(s[0] + s[1] + s[2] == doctest::Approx(1.0));
  EmbeddingBasis b{{1.0, 0.0}, {0.5, -0.5}};
  const auto [pp, pm] = output_probs(std::vector<double>{1.0, 1.0}, b);
  CHECK(pp + pm == doctest::Approx(1.0));
  CHECK(pp == doctest::Approx(0.5));
  bool clamped = false;
  CHECK(ce_loss({1.0, 0.0}, -1, kProbFloor, &clamped) == doctest::Approx(-std::log(kProbFloor)));
  CHECK(clamped);
}

TEST_CASE("negating every input leaves the forward pass bit-identical") {
  Rng rng{21};
  auto p = random_model(rng, 12, 24, LatentMode::None, 0, LatentReadout::Processed);
  auto enc = batch_of(rng, 1, 0, LatentLayout::Single).front();
  auto neg = enc;
  for (auto& t : neg.tokens) t.value = -t.value;
  const auto a = forward_sequence(p, enc);
  const auto b = forward_sequence(p, neg);
  for (std::size_t i = 0; i < a.h.size(); ++i) CHECK(a.h[i] == b.h[i]);
}

TEST_CASE("fast engine matches the slow oracle and finite differences") {
  struct Case {
    int s;
    LatentLayout layout;
    LatentMode latent;
    LatentReadout readout;
  };
  const Case cases[] = {
      {0, LatentLayout::Single, LatentMode::None, LatentReadout::Processed},
      {1, LatentLayout::Single, LatentMode::StaticParam, LatentReadout::Processed},
      {2, LatentLayout::Single, LatentMode::StaticParam, LatentReadout::Injected},
      {1, LatentLayout::Single, LatentMode::DynamicHidden, LatentReadout::Processed},
      {2, LatentLayout::PerNode, LatentMode::StaticParam, LatentReadout::Token},
      {1, LatentLayout::Single, LatentMode::DynamicHidden, LatentReadout::Token},
  };
  Rng rng{5};
  for (const auto& c : cases) {
    CAPTURE(c.s);
    CAPTURE(static_cast<int>(c.latent));
    CAPTURE(static_cast<int>(c.readout));
    const auto batch = batch_of(rng, 5, c.s, c.layout);
    const auto p = random_model(rng, 6, 16, c.latent, c.s == 0 ? 0 : batch.front().slot_count(), c.readout);
    SequenceEngine eng(p);
    auto g = ModelGrad::zeros_like(p);
    double fast = 0.0;
    for (const auto& e : batch) fast += eng.run(e, 1.0 / batch.size(), &g).task_loss / batch.size();
    eng.finish(g);
    CHECK(fast == doctest::Approx(batch_loss(p, batch)).epsilon(1e-12));
    const auto fd = fd_gradient(
        [&](std::span<const double> x) {
          auto q = p;
          unflatten(q, kAllParams, x);
          return batch_loss(q, batch);
        },
        flatten(p, kAllParams), 1e-5);
    CHECK(relative_error(flatten(g, kAllParams), fd.grad, 1e-8) < 1e-6);
  }
}

TEST_CASE("closed-form attention gradient against finite differences") {
  Rng rng{9};
  for (int t = 0; t < 10; ++t) {
    const int m = 4 + static_cast<int>(uniform_below(rng, 20));
    auto p = random_model(rng, 16, m, LatentMode::None, 0, LatentReadout::Processed);
    const std::vector<int> support{1, 2};
    const auto batch = sample_context_batch(m, support, 16, rng);
    const auto a = analytic_grad_attention(p, batch);
    const auto f = fd_grad(p, batch, 1e-5);
    CHECK(relative_error(a, f.grad, 1e-8) < 1e-6);
  }
}

TEST_CASE("params round-trip through json") {
  Rng rng{4};
  const auto p = random_model(rng, 5, 8, LatentMode::StaticParam, 2, LatentReadout::Token);
  const auto q = params_from_json(params_to_json(p));
  CHECK(flatten(q, kAllParams) == flatten(p, kAllParams));
  CHECK(q.basis.v == p.basis.v);
  CHECK(q.readout == LatentReadout::Token);
}

TEST_CASE("readout names") {
  for (const auto r : {LatentReadout::Injected, LatentReadout::Processed, LatentReadout::Token}) {
    CHECK(latent_readout_from_string(to_string(r)) == r);
  }
  CHECK_THROWS_AS(latent_readout_from_string("echo"), InputError);
}
