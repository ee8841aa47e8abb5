// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "art/attention.hpp"
#include "art/gradcheck.hpp"
#include "art/rng.hpp"
#include "attention_oracle.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace art;
using namespace art::test;

TEST_SUITE("attention_blocks") {
  TEST_CASE("scaled dot attention hand example") {
    const auto out = scaled_dot_attention(cst(mat(1, 2, {1, 0})), cst(mat(2, 2, {1, 0, 0, 1})),
                                          cst(mat(2, 2, {1, 0, 0, 1})))
                         .value();
    const double e = std::exp(1 / std::sqrt(2.0));
    CHECK(std::abs(out(0, 0) - 0.6698) <= 1e-4);
    CHECK(std::abs(out(0, 1) - 0.3302) <= 1e-4);
    CHECK(std::abs(out(0, 0) - e / (e + 1)) <= 1e-14);
  }

  TEST_CASE("single key returns its value; duplicated keys change nothing") {
    Gen g(41);
    const auto q = g.tensor({3, 4}), k = g.tensor({1, 4}), v = g.tensor({1, 4});
    const auto out = scaled_dot_attention(cst(q), cst(k), cst(v)).value();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(out(i, j) == doctest::Approx(v(0, j)).epsilon(1e-15));

    const auto k2 = g.tensor({5, 4}), v2 = g.tensor({5, 4});
    const auto once = scaled_dot_attention(cst(q), cst(k2), cst(v2)).value();
    const auto twice = scaled_dot_attention(cst(q), concat<double>({cst(k2), cst(k2)}, 0),
                                            concat<double>({cst(v2), cst(v2)}, 0))
                           .value();
    CHECK(max_abs_diff(once, twice) <= 1e-12);
  }

  TEST_CASE("zero width is a contract error") {
    CHECK_THROWS_AS(scaled_dot_attention(cst(Tensor<double>({1, 0})), cst(Tensor<double>({2, 0})),
                                         cst(Tensor<double>({2, 3}))),
                    ContractError);
  }

  TEST_CASE("attention weight rows sum to one") {
    Gen g(42);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t nq = g.pick(1, 5), nk = g.pick(1, 9), heads = g.pick(1, 3);
      const std::size_t d = heads * g.pick(1, 4);
      Tensor<double> w;
      multi_head_attention(cst(g.tensor({nq, d}, 3.0)), cst(g.tensor({nk, d}, 3.0)), cst(g.tensor({nk, d})), heads,
                           static_cast<const Tensor<double>*>(nullptr), &w);
      for (std::size_t i = 0; i < nq; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < nk; ++j) s += w(i, j);
        REQUIRE(std::abs(s - 1) <= 1e-9);
      }
    }
  }

  TEST_CASE("fused multi-head attention equals per-head composition") {
    Gen g(43);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t nq = g.pick(1, 6), nk = g.pick(1, 8), heads = g.pick(1, 4), hd = g.pick(1, 5);
      const std::size_t d = heads * hd;
      const auto q = g.tensor({nq, d}), k = g.tensor({nk, d}), v = g.tensor({nk, d}), w = g.tensor({nq, d});
      Tensor<double> mask({nq, nk});
      for (auto& x : mask.data()) x = g.uniform(-2, 2);

      Graph<double> g1;
      GraphScope<double> s1(g1);
      Var<double> q1 = leaf(q), k1 = leaf(k), v1 = leaf(v);
      const Var<double> fused = multi_head_attention(q1, k1, v1, heads, &mask);
      g1.backward(sum(mul(fused, cst(w))));

      Graph<double> g2;
      GraphScope<double> s2(g2);
      Var<double> q2 = leaf(q), k2 = leaf(k), v2 = leaf(v);
      std::vector<Var<double>> parts;
      for (std::size_t h = 0; h < heads; ++h) {
        // The per-head scale is 1/sqrt(hd), which scaled_dot_attention derives from the slice width.
        parts.push_back(scaled_dot_attention(slice(q2, 1, h * hd, (h + 1) * hd), slice(k2, 1, h * hd, (h + 1) * hd),
                                             slice(v2, 1, h * hd, (h + 1) * hd), &mask));
      }
      const Var<double> composed = concat(parts, 1);
      g2.backward(sum(mul(composed, cst(w))));

      REQUIRE(max_abs_diff(fused.value(), composed.value()) <= 1e-12);
      REQUIRE(max_abs_diff(q1.grad(), q2.grad()) <= 1e-12);
      REQUIRE(max_abs_diff(k1.grad(), k2.grad()) <= 1e-12);
      REQUIRE(max_abs_diff(v1.grad(), v2.grad()) <= 1e-12);
    }
  }

  TEST_CASE("msa layer shape and residual identity") {
    Gen g(44);
    auto rng = substream(1, "init");
    const AttentionDims dims{64, 32, 4, 128};
    ParamStore<double> p;
    init_msa_layer(p, "m", dims, rng);
    const auto x = g.tensor({18, 64});
    const auto y = msa_layer(p.bind(), "m", cst(x), dims).value();
    CHECK(y.dims() == Shape{18, 64});
    CHECK(y.all_finite());

    p.value("m.wo").fill(0);
    p.value("m.w2").fill(0);
    CHECK(bit_equal(msa_layer(p.bind(), "m", cst(x), dims).value(), x));
  }

  TEST_CASE("msa layer is permutation equivariant") {
    Gen g(45);
    auto rng = substream(2, "init");
    const AttentionDims dims{8, 8, 2, 16};
    ParamStore<double> p;
    init_msa_layer(p, "m", dims, rng);
    randomize(p, g);
    for (int trial = 0; trial < 10; ++trial) {
      const auto x = g.tensor({11, 8});
      const auto perm = g.permutation(11);
      const auto y = msa_layer(p.bind(), "m", cst(x), dims).value();
      const auto yp = msa_layer(p.bind(), "m", cst(permute_rows(x, perm)), dims).value();
      REQUIRE(max_abs_diff(permute_rows(y, perm), yp) <= 1e-10);
    }
  }

  TEST_CASE("mca layer residual path and context permutation invariance") {
    Gen g(46);
    auto rng = substream(3, "init");
    const AttentionDims dims{8, 8, 2, 16};
    ParamStore<double> p;
    init_mca_layer(p, "c", dims, rng);
    randomize(p, g);
    const auto q = g.tensor({2, 8}), ctx = g.tensor({16, 8});
    const auto r = mca_layer(p.bind(), "c", cst(q), cst(ctx), dims).value();
    for (int trial = 0; trial < 10; ++trial) {
      const auto rp = mca_layer(p.bind(), "c", cst(q), cst(permute_rows(ctx, g.permutation(16))), dims).value();
      REQUIRE(max_abs_diff(r, rp) <= 1e-10);
    }
    p.value("c.wo").fill(0);
    p.value("c.bo").fill(0);
    CHECK(bit_equal(mca_layer(p.bind(), "c", cst(q), cst(ctx), dims).value(), q));
  }

  TEST_CASE("mca layer matches the loop oracle") {
    Gen g(47);
    for (std::size_t heads : {1, 2}) {
      auto rng = substream(4, "init");
      const AttentionDims dims{8, 8, heads, 16};
      ParamStore<double> p;
      init_mca_layer(p, "c", dims, rng);
      randomize(p, g);
      const auto q = g.tensor({2, 8}), ctx = g.tensor({9, 8});
      Tensor<double> w;
      const auto r = mca_layer(p.bind(), "c", cst(q), cst(ctx), dims, static_cast<const Tensor<double>*>(nullptr), &w).value();
      const oracle::McaWeights ow{to_vec(p.value("c.lnq.g")),  to_vec(p.value("c.lnq.b")), to_vec(p.value("c.lnkv.g")),
                                  to_vec(p.value("c.lnkv.b")), to_vec(p.value("c.bo")),    to_rows(p.value("c.wq")),
                                  to_rows(p.value("c.wk")),     to_rows(p.value("c.wv")),    to_rows(p.value("c.wo"))};
      oracle::Rows ref_w;
      CHECK(max_abs_diff(r, oracle::mca(to_rows(q), to_rows(ctx), ow, heads, &ref_w)) <= 1e-10);
      CHECK(max_abs_diff(w, ref_w) <= 1e-12);
    }
  }

  TEST_CASE("layer errors") {
    Gen g(48);
    auto rng = substream(5, "init");
    const AttentionDims dims{4, 4, 2, 8};
    ParamStore<double> p;
    init_mca_layer(p, "c", dims, rng);
    init_msa_layer(p, "m", dims, rng);
    auto x = g.tensor({3, 4});
    CHECK_THROWS_AS(mca_layer(p.bind(), "c", cst(x), cst(Tensor<double>({0, 4})), dims), ContractError);
    x[1] = std::nan("");
    CHECK_THROWS_AS(msa_layer(p.bind(), "m", cst(x), dims), DegenerateInputError);
    CHECK_THROWS_AS((AttentionDims{4, 6, 4, 8}.validate()), ConfigError);
  }

  TEST_CASE("layer gradients pass finite differences") {
    GradcheckOptions opts;
    Gen g(49);
    const AttentionDims dims{4, 4, 2, 8};
    auto rng = substream(6, "init");
    ParamStore<double> p;
    init_mca_layer(p, "c", dims, rng);
    init_msa_layer(p, "m", dims, rng);
    randomize(p, g);
    const auto w = g.tensor({2, 4}), wm = g.tensor({5, 4});
    const auto mca_case = check_gradient(
        "mca", [&](const std::vector<Var<double>>& in) {
          Bound<double> b = p.bind();
          b.set("c.wq", in[2]);
          return sum(mul(mca_layer(b, "c", in[0], in[1], dims), cst(w)));
        },
        {g.tensor({2, 4}), g.tensor({5, 4}), p.value("c.wq")}, opts);
    CHECK(mca_case.passed);
    const auto msa_case = check_gradient(
        "msa", [&](const std::vector<Var<double>>& in) {
          Bound<double> b = p.bind();
          b.set("m.w1", in[1]);
          return sum(mul(msa_layer(b, "m", in[0], dims), cst(wm)));
        },
        {g.tensor({5, 4}), p.value("m.w1")}, opts);
    CHECK(msa_case.passed);
  }
}
