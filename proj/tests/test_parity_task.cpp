#include <set>

#include "cotlab/errors.hpp"
#include "cotlab/parity_task.hpp"
#include "doctest.h"

using namespace cotlab;

TEST_CASE("k=8 over 16 bits builds layers 4, 2, 1 indexed 17..23") {
  Rng rng{3};
  const auto support = default_support(16, 8);
  CHECK(support == std::vector<int>{2, 4, 6, 8, 10, 12, 14, 16});
  const auto inst = sample_instance(16, support, rng);
  const auto trace = build_cot_trace(inst);
  REQUIRE(trace.layers.size() == 3);
  CHECK(trace.layers[0].size() == 4);
  CHECK(trace.layers[1].size() == 2);
  CHECK(trace.layers[2].size() == 1);
  CHECK(trace.layers[0].front().index == 17);
  CHECK(trace.layers[0].back().index == 20);
  CHECK(trace.root_index == 23);
  CHECK(trace.node_count() == 7);
  CHECK(trace.tau(1) == 4);
  CHECK(trace.tau(2) == 6);
  CHECK(trace.tau(3) == 7);
  CHECK(trace.frontier_size(1) == 4);
  CHECK(trace.frontier_size(3) == 1);
}

TEST_CASE("odd layers promote their last node unchanged") {
  const auto inst = make_instance({1, -1, 1, 1, -1}, std::vector<int>{1, 2, 3, 4, 5});
  const auto trace = build_cot_trace(inst);
  REQUIRE(trace.layers.size() == 3);
  // 5 -> 2 nodes + 1 promoted -> 1 node + 1 promoted -> root
  CHECK(trace.layers[0].size() == 2);
  CHECK(trace.layers[1].size() == 1);
  CHECK(trace.layers[2].size() == 1);
  CHECK(trace.layers[2][0].right == 5);
  CHECK(trace.root_value == 1);
}

TEST_CASE("root value equals the product over the support") {
  Rng rng{11};
  for (int t = 0; t < 200; ++t) {
    const int d = 2 + static_cast<int>(uniform_below(rng, 15));
    const int k = 1 + static_cast<int>(uniform_below(rng, d));
    auto idx = sample_without_replacement(rng, d, k);
    std::vector<int> support;
    for (auto i : idx) support.push_back(static_cast<int>(i) + 1);
    const auto inst = sample_instance(d, support, rng);
    int prod = 1;
    for (int i : inst.support) prod *= inst.bit(i);
    const auto trace = build_cot_trace(inst);
    CHECK(trace.root_value == prod);
    CHECK(inst.label == prod);
    // every node is the product of its children
    for (const auto& n : trace.nodes()) {
      if (n.left != n.right) CHECK(n.value == trace.value_of(n.left, inst) * trace.value_of(n.right, inst));
    }
  }
}

TEST_CASE("implicit encodings reinflate to the explicit one") {
  Rng rng{5};
  const auto support = default_support(16, 8);
  for (int t = 0; t < 20; ++t) {
    const auto inst = sample_instance(16, support, rng);
    const auto trace = build_cot_trace(inst);
    const auto ex = encode_explicit(trace, inst);
    CHECK(static_cast<int>(ex.supervised.size()) == trace.node_count());
    for (int s = 1; s <= trace.height; ++s) {
      for (const auto layout : {LatentLayout::Single, LatentLayout::PerNode}) {
        const auto im = encode_implicit(trace, inst, s, layout);
        CHECK(im.tau == trace.tau(s));
        CHECK(im.slot_count() == (layout == LatentLayout::Single ? 1 : trace.tau(s)));
        const auto back = reinflate(im, trace, inst);
        REQUIRE(back.length() == ex.length());
        for (int p = 1; p <= ex.length(); ++p) {
          CHECK(back.at(p).kind == ex.at(p).kind);
          CHECK(back.at(p).value == ex.at(p).value);
        }
      }
    }
  }
}

TEST_CASE("concealing every step still supervises the root") {
  Rng rng{2};
  const auto inst = sample_instance(16, default_support(16, 8), rng);
  const auto trace = build_cot_trace(inst);
  const auto im = encode_implicit(trace, inst, trace.height);
  REQUIRE(im.supervised.size() == 1);
  CHECK(im.at(im.supervised.front()).value == inst.label);
}

TEST_CASE("bad arguments are input errors") {
  Rng rng{1};
  CHECK_THROWS_AS(normalize_support(8, std::vector<int>{0, 3}), InputError);
  CHECK_THROWS_AS(normalize_support(8, std::vector<int>{3, 3}), InputError);
  CHECK_THROWS_AS(normalize_support(8, std::vector<int>{9}), InputError);
  const auto inst = sample_instance(8, std::vector<int>{1, 2, 3, 4}, rng);
  const auto trace = build_cot_trace(inst);
  CHECK_THROWS_AS(encode_implicit(trace, inst, 0), InputError);
  CHECK_THROWS_AS(encode_implicit(trace, inst, trace.height + 1), InputError);
  CHECK_THROWS_AS(trace.tau(-1), InputError);
}
