// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
//
// Tensor arithmetic, autodiff graph, finite-difference oracle, RNG streams.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "core/common.hpp"
#include "core/fdcheck.hpp"
#include "core/graph.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "tests/test_util.hpp"

using namespace segorder;
using segorder::testutil::random_tensor;

namespace {

// Frobenius relative distance between same-shape tensors.
template <class S>
double rel_fro(const Tensor<S>& a, const Tensor<S>& b) {
  double num = 0, den = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    num += d * d;
    den += static_cast<double>(a.data[i]) * static_cast<double>(a.data[i]);
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace

TEST_CASE("tensor construction and accessors") {
  Tensor<double> t = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6);

  Tensor<double> v = Tensor<double>::from({4}, {1, 2, 3, 4});
  CHECK(v.rows() == 1);  // rank-1 acts as a single row
  CHECK(v.cols() == 4);

  CHECK_THROWS_AS(Tensor<double>::from({2, 2}, {1, 2, 3}), DataError);
}

TEST_CASE("matmul identity and hand case") {
  Tensor<double> id3 = Tensor<double>::zeros({3, 3});
  for (int i = 0; i < 3; ++i) id3.at(i, i) = 1;
  std::mt19937 rng(1);
  Tensor<double> m = random_tensor<double>({3, 5}, rng);
  Tensor<double> out = matmul(id3, m);
  CHECK(out.data == m.data);

  Tensor<double> a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  Tensor<double> b = Tensor<double>::from({2, 1}, {0, 1});
  Tensor<double> c = matmul(a, b);
  CHECK(c.at(0, 0) == doctest::Approx(2));
  CHECK(c.at(1, 0) == doctest::Approx(4));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor<double> a = Tensor<double>::zeros({2, 3});
  Tensor<double> b = Tensor<double>::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("matmul associativity on random triples") {
  std::mt19937 rng(7);
  for (int it = 0; it < 10; ++it) {
    Tensor<double> a = random_tensor<double>({4, 6}, rng);
    Tensor<double> b = random_tensor<double>({6, 5}, rng);
    Tensor<double> c = random_tensor<double>({5, 3}, rng);
    Tensor<double> left = matmul(matmul(a, b), c);
    Tensor<double> right = matmul(a, matmul(b, c));
    CHECK(rel_fro(left, right) < 1e-5);
  }
}

TEST_CASE("softmax rows: symmetry, stability, stochasticity") {
  Tensor<double> two = softmax_rows_value(Tensor<double>::from({1, 2}, {0, 0}));
  CHECK(two.at(0, 0) == doctest::Approx(0.5));
  CHECK(two.at(0, 1) == doctest::Approx(0.5));

  Tensor<double> big = softmax_rows_value(Tensor<double>::from({1, 3}, {1000, 1000, 1000}));
  for (int j = 0; j < 3; ++j) CHECK(big.at(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-9));
  CHECK(big.all_finite());

  std::mt19937 rng(3);
  Tensor<double> m = random_tensor<double>({4, 4}, rng, 5.0);
  Tensor<double> p = softmax_rows_value(m);
  for (int i = 0; i < 4; ++i) {
    double s = 0;
    for (int j = 0; j < 4; ++j) {
      CHECK(p.at(i, j) > 0);
      s += p.at(i, j);
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("log softmax agrees with softmax") {
  std::mt19937 rng(4);
  Tensor<double> m = random_tensor<double>({3, 5}, rng, 3.0);
  Tensor<double> p = softmax_rows_value(m);
  Tensor<double> lp = log_softmax_rows_value(m);
  for (size_t i = 0; i < p.data.size(); ++i)
    CHECK(std::exp(lp.data[i]) == doctest::Approx(p.data[i]).epsilon(1e-12));
}

TEST_CASE("nll from probs: one-hot, uniform, scalar oracle") {
  Tensor<double> onehot = Tensor<double>::from({2, 3}, {1, 0, 0, 0, 0, 1});
  std::vector<int32_t> t1 = {0, 2};
  CHECK(nll_from_probs(onehot, t1) == doctest::Approx(0.0).epsilon(1e-12));

  Tensor<double> uni = Tensor<double>::full({4, 4}, 0.25);
  std::vector<int32_t> t2 = {0, 1, 2, 3};
  CHECK(nll_from_probs(uni, t2) == doctest::Approx(4 * std::log(4.0)).epsilon(1e-9));

  // Random stochastic rows against a direct scalar recomputation.
  std::mt19937 rng(5);
  Tensor<double> logits = random_tensor<double>({5, 6}, rng, 2.0);
  Tensor<double> probs = softmax_rows_value(logits);
  std::vector<int32_t> targets = {3, 0, 5, 2, 1};
  double want = 0;
  for (int i = 0; i < 5; ++i) want -= std::log(probs.at(i, targets[static_cast<size_t>(i)]));
  CHECK(nll_from_probs(probs, targets) == doctest::Approx(want).epsilon(1e-12));
  CHECK(nll_from_probs(probs, targets, Reduction::mean) ==
        doctest::Approx(want / 5).epsilon(1e-12));

  std::vector<int32_t> bad = {3, 0, 6, 2, 1};
  CHECK_THROWS_AS(nll_from_probs(probs, bad), DataError);
}

TEST_CASE("gelu value: zero point and asymptote") {
  CHECK(gelu_value(0.0) == 0.0);
  CHECK(std::abs(gelu_value(10.0) - 10.0) < 1e-6);
  CHECK(std::abs(gelu_value(-10.0)) < 1e-6);
}

TEST_CASE("finite difference oracle: quadratic is near-exact") {
  std::mt19937 rng(6);
  Param<double> p{"p", random_tensor<double>({3, 4}, rng), false};
  auto loss = [&]() {
    double s = 0;
    for (double v : p.value.data) s += v * v;
    return s;
  };
  Tensor<double> analytic = p.value;
  for (auto& v : analytic.data) v *= 2;
  FdReport rep = finite_difference_check<double>({&p}, {analytic}, loss);
  CHECK(rep.eval_deterministic);
  CHECK(rep.coords_checked == 12);
  CHECK(rep.max_rel_err < 1e-9);
}

TEST_CASE("graph matmul gradient vs finite differences") {
  std::mt19937 rng(8);
  Param<double> a{"a", random_tensor<double>({5, 7}, rng), false};
  Param<double> b{"b", random_tensor<double>({7, 3}, rng), false};
  Graph<double> g;
  auto root = g.sum_all(g.matmul(g.param(a), g.param(b)));
  g.backward(root);
  std::vector<Tensor<double>> analytic = {g.param_grad(a), g.param_grad(b)};
  auto loss = [&]() {
    Graph<double> h;
    return h.val(h.sum_all(h.matmul(h.param(a), h.param(b)))).data[0];
  };
  FdReport rep = finite_difference_check<double>({&a, &b}, analytic, loss);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("graph matmul_nt matches transposed matmul") {
  std::mt19937 rng(9);
  Tensor<double> a = random_tensor<double>({4, 6}, rng);
  Tensor<double> bt = random_tensor<double>({5, 6}, rng);
  Tensor<double> b(6, 5);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 5; ++j) b.at(i, j) = bt.at(j, i);
  Graph<double> g;
  auto out = g.matmul_nt(g.constant(a), g.constant(bt));
  CHECK(testutil::tensors_close(g.val(out), matmul(a, b), 1e-12));
}

TEST_CASE("layer norm: constant input, gamma zero, gradient") {
  Graph<double> g;
  Param<double> gamma{"g", Tensor<double>::full({4}, 1.0), true};
  Param<double> beta{"b", Tensor<double>::zeros({4}), true};
  auto x = g.constant(Tensor<double>::full({2, 4}, 3.5));
  auto y = g.layer_norm(x, g.param(gamma), g.param(beta), 1e-5);
  for (double v : g.val(y).data) CHECK(std::abs(v) < 1e-9);

  Graph<double> g2;
  Param<double> gamma0{"g", Tensor<double>::zeros({4}), true};
  Param<double> beta7{"b", Tensor<double>::from({4}, {1, 2, 3, 4}), true};
  std::mt19937 rng(10);
  auto x2 = g2.constant(random_tensor<double>({3, 4}, rng));
  auto y2 = g2.layer_norm(x2, g2.param(gamma0), g2.param(beta7), 1e-5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) CHECK(g2.val(y2).at(i, j) == doctest::Approx(beta7.value.data[static_cast<size_t>(j)]));

  // Gradient through input, gamma, and beta.
  Param<double> xin{"x", random_tensor<double>({3, 4}, rng), false};
  Param<double> ga{"ga", random_tensor<double>({4}, rng), true};
  Param<double> be{"be", random_tensor<double>({4}, rng), true};
  Graph<double> g3;
  auto n3 = g3.layer_norm(g3.param(xin), g3.param(ga), g3.param(be), 1e-5);
  auto root = g3.sum_all(g3.mul(n3, n3));
  g3.backward(root);
  std::vector<Tensor<double>> analytic = {g3.param_grad(xin), g3.param_grad(ga),
                                          g3.param_grad(be)};
  auto loss = [&]() {
    Graph<double> h;
    auto n = h.layer_norm(h.param(xin), h.param(ga), h.param(be), 1e-5);
    return h.val(h.sum_all(h.mul(n, n))).data[0];
  };
  FdReport rep = finite_difference_check<double>({&xin, &ga, &be}, analytic, loss);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("elementwise and structural op gradients vs finite differences") {
  std::mt19937 rng(11);
  Param<double> x{"x", random_tensor<double>({3, 6}, rng), false};
  Param<double> b{"b", random_tensor<double>({6}, rng), true};
  auto build = [&](Graph<double>& h) {
    auto p = h.tanh_act(h.sigmoid(h.gelu(h.add_bias_rows(h.param(x), h.param(b)))));
    p = h.concat_cols(std::vector<typename Graph<double>::Id>{
        h.slice_cols(p, 0, 3), h.rows_gather(p, {2, 0, 1})});
    return h.mean_all(h.mul(p, p));
  };
  Graph<double> g;
  auto root = build(g);
  g.backward(root);
  std::vector<Tensor<double>> analytic = {g.param_grad(x), g.param_grad(b)};
  auto loss = [&]() {
    Graph<double> h;
    return h.val(build(h)).data[0];
  };
  FdReport rep = finite_difference_check<double>({&x, &b}, analytic, loss);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("rows_gather routes gradient only into gathered rows") {
  std::mt19937 rng(12);
  Param<double> x{"x", random_tensor<double>({5, 3}, rng), false};
  Graph<double> g;
  auto root = g.sum_all(g.rows_gather(g.param(x), {1, 3}));
  g.backward(root);
  Tensor<double> grad = g.param_grad(x);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(grad.at(i, j) == ((i == 1 || i == 3) ? 1.0 : 0.0));
}

TEST_CASE("cross entropy rows equals scalar recomputation") {
  std::mt19937 rng(13);
  Param<double> logits{"l", random_tensor<double>({4, 6}, rng, 2.0), false};
  std::vector<int32_t> targets = {5, 0, 3, 3};
  Graph<double> g;
  auto root = g.cross_entropy_rows(g.param(logits), targets, Reduction::mean);
  Tensor<double> probs = softmax_rows_value(logits.value);
  double want = 0;
  for (int i = 0; i < 4; ++i) want -= std::log(probs.at(i, targets[static_cast<size_t>(i)]));
  want /= 4;
  CHECK(g.val(root).data[0] == doctest::Approx(want).epsilon(1e-12));

  g.backward(root);
  auto loss = [&]() {
    Graph<double> h;
    return h.val(h.cross_entropy_rows(h.param(logits), targets, Reduction::mean)).data[0];
  };
  FdReport rep = finite_difference_check<double>({&logits}, {g.param_grad(logits)}, loss);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("weighted bce with logits equals scalar recomputation") {
  std::mt19937 rng(14);
  Param<double> logits{"l", random_tensor<double>({3, 4}, rng, 2.0), false};
  Tensor<double> targets = Tensor<double>::from({3, 4}, {1, 0, 0, 1, 0, 1, 0, 0, 1, 1, 1, 0});
  Tensor<double> weights = Tensor<double>::from({4}, {2.0, 0.5, 1.0, 1.5});
  Graph<double> g;
  auto root = g.bce_logits(g.param(logits), targets, weights);
  double want = 0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double z = logits.value.at(i, j);
      const double t = targets.at(i, j);
      const double s = 1.0 / (1.0 + std::exp(-z));
      want += weights.data[static_cast<size_t>(j)] * -(t * std::log(s) + (1 - t) * std::log(1 - s));
    }
  }
  want /= 12;
  CHECK(g.val(root).data[0] == doctest::Approx(want).epsilon(1e-9));

  // All-ones weights equal the empty-weights path.
  Graph<double> g2;
  auto unweighted = g2.bce_logits(g2.constant(logits.value), targets, Tensor<double>{});
  Graph<double> g3;
  auto ones = g3.bce_logits(g3.constant(logits.value), targets, Tensor<double>::full({4}, 1.0));
  CHECK(g2.val(unweighted).data[0] == doctest::Approx(g3.val(ones).data[0]).epsilon(1e-15));

  g.backward(root);
  auto loss = [&]() {
    Graph<double> h;
    return h.val(h.bce_logits(h.param(logits), targets, weights)).data[0];
  };
  FdReport rep = finite_difference_check<double>({&logits}, {g.param_grad(logits)}, loss);
  CHECK(rep.max_rel_err < 1e-6);

  CHECK_THROWS_AS(g.bce_logits(g.param(logits), targets, Tensor<double>::full({3}, 1.0)),
                  DataError);
}

TEST_CASE("softmax graph node rows sum to one and backward matches oracle") {
  std::mt19937 rng(15);
  Param<double> x{"x", random_tensor<double>({4, 5}, rng, 3.0), false};
  Graph<double> g;
  auto sm = g.softmax_rows(g.param(x));
  for (int i = 0; i < 4; ++i) {
    double s = 0;
    for (int j = 0; j < 5; ++j) s += g.val(sm).at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  auto root = g.sum_all(g.mul(sm, sm));
  g.backward(root);
  auto loss = [&]() {
    Graph<double> h;
    auto p = h.softmax_rows(h.param(x));
    return h.val(h.sum_all(h.mul(p, p))).data[0];
  };
  FdReport rep = finite_difference_check<double>({&x}, {g.param_grad(x)}, loss);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("shared parameter accumulates gradient from both uses") {
  // Weight tying: the same Param added twice resolves to one node.
  std::mt19937 rng(16);
  Param<double> w{"w", random_tensor<double>({3, 3}, rng), false};
  Graph<double> g;
  auto a = g.param(w);
  auto b = g.param(w);
  CHECK(a == b);
  auto root = g.sum_all(g.matmul(a, b));  // f(W) = sum(W*W)
  g.backward(root);
  auto loss = [&]() {
    Graph<double> h;
    auto i = h.param(w);
    return h.val(h.sum_all(h.matmul(i, i))).data[0];
  };
  FdReport rep = finite_difference_check<double>({&w}, {g.param_grad(w)}, loss);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("dropout: rate zero is identity, inverted scaling preserves mean") {
  std::mt19937 mt(17);
  Tensor<double> x = random_tensor<double>({20, 20}, mt);
  RngStream rng(1, rng_purpose::dropout);
  Graph<double> g;
  auto out = g.dropout(g.constant(x), 0.0, rng);
  CHECK(g.val(out).data == x.data);

  Tensor<double> ones = Tensor<double>::full({100, 100}, 1.0);
  Graph<double> g2;
  RngStream rng2(2, rng_purpose::dropout);
  auto d = g2.dropout(g2.constant(ones), 0.25, rng2);
  int64_t kept = 0;
  for (double v : g2.val(d).data) {
    CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12));
    if (v != 0.0) ++kept;
  }
  const double frac = static_cast<double>(kept) / 1e4;
  CHECK(frac > 0.72);
  CHECK(frac < 0.78);
}

TEST_CASE("rng streams reproduce and separate by purpose") {
  RngStream a(123, rng_purpose::shuffle, 9, 2);
  RngStream b(123, rng_purpose::shuffle, 9, 2);
  for (int i = 0; i < 10000; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream c(123, rng_purpose::shuffle, 9, 2);
  RngStream d(123, rng_purpose::mask_select, 9, 2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += c.next_u64() == d.next_u64();
  CHECK(same == 0);

  RngStream e(123, rng_purpose::shuffle, 9, 3);  // epoch changes the stream
  RngStream f(123, rng_purpose::shuffle, 9, 2);
  CHECK(e.next_u64() != f.next_u64());
}

TEST_CASE("rng uniform draws are in range and roughly uniform") {
  RngStream r(7, rng_purpose::synth);
  std::vector<int> counts(8, 0);
  for (int i = 0; i < 80000; ++i) {
    uint64_t v = r.next_below(8);
    REQUIRE(v < 8);
    ++counts[static_cast<size_t>(v)];
  }
  for (int c : counts) {
    CHECK(c > 9400);  // 4 sigma around 10000 is roughly +-440
    CHECK(c < 10600);
  }
  RngStream r2(7, rng_purpose::synth);
  for (int i = 0; i < 1000; ++i) {
    double v = r2.next_double();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("rng shuffle produces a permutation") {
  RngStream r(11, rng_purpose::shuffle);
  std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  r.shuffle(v);
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 10);
}

TEST_CASE("fnv1a64 matches published test vectors") {
  CHECK(fnv1a64(std::string("")) == 0xcbf29ce484222325ull);
  CHECK(fnv1a64(std::string("a")) == 0xaf63dc4c8601ec8cull);
  CHECK(mix_key(1, 2) != mix_key(2, 1));
}

TEST_CASE("check_finite flags non-finite tensors") {
  Tensor<double> t = Tensor<double>::from({2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(check_finite(t, "t"), NumericError);
  Tensor<double> ok = Tensor<double>::from({2}, {1.0, 2.0});
  CHECK_NOTHROW(check_finite(ok, "ok"));
}
