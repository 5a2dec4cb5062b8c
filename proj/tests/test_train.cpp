// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
//
// Schedule, clipping, AdamW, metrics, class weighting, oversampling,
// checkpoints, and the pre-training / fine-tuning loops.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "train/checkpoint.hpp"
#include "train/metrics.hpp"
#include "train/optim.hpp"
#include "train/train.hpp"
#include "tests/test_util.hpp"

using namespace segorder;
using namespace segorder::testutil;

namespace {

ModelConfig tiny_cfg(int64_t vocab) {
  ModelConfig c;
  c.d = 8;
  c.layers = 1;
  c.heads = 2;
  c.ffn_mult = 2;
  c.context = 32;
  c.max_segments = 8;
  c.vocab_size = vocab;
  c.dropout = 0.0;
  return c;
}

std::vector<PackedSample> prepared_corpus(const Vocab& v, const PackingConfig& cfg, int docs,
                                          uint64_t seed) {
  std::vector<PackedSample> out;
  for (int i = 0; i < docs; ++i) {
    Document d = make_doc("doc" + std::to_string(i), {5, 6, 4}, 20);
    for (auto& s : pack_document(d, v, cfg)) {
      prepare_sample(s, v, cfg, seed, 0);
      out.push_back(std::move(s));
    }
  }
  return out;
}

// Independent F1 recount from a confusion count per class.
F1Result brute_f1_multiclass(const std::vector<int32_t>& pred, const std::vector<int32_t>& gold,
                             int64_t nc) {
  std::vector<double> tp(static_cast<size_t>(nc), 0), fp(tp), fn(tp);
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == gold[i]) {
      ++tp[static_cast<size_t>(pred[i])];
    } else {
      ++fp[static_cast<size_t>(pred[i])];
      ++fn[static_cast<size_t>(gold[i])];
    }
  }
  double stp = 0, sfp = 0, sfn = 0, macro = 0;
  for (int64_t c = 0; c < nc; ++c) {
    stp += tp[static_cast<size_t>(c)];
    sfp += fp[static_cast<size_t>(c)];
    sfn += fn[static_cast<size_t>(c)];
    const double den = 2 * tp[static_cast<size_t>(c)] + fp[static_cast<size_t>(c)] +
                       fn[static_cast<size_t>(c)];
    macro += den > 0 ? 2 * tp[static_cast<size_t>(c)] / den : 0.0;
  }
  F1Result r;
  const double den = 2 * stp + sfp + sfn;
  r.micro = den > 0 ? 2 * stp / den : 0.0;
  r.macro = macro / static_cast<double>(nc);
  return r;
}

F1Result brute_f1_multilabel(const std::vector<std::vector<int32_t>>& pred,
                             const std::vector<std::vector<int32_t>>& gold, int64_t nc) {
  std::vector<double> tp(static_cast<size_t>(nc), 0), fp(tp), fn(tp);
  for (size_t i = 0; i < pred.size(); ++i) {
    std::set<int32_t> ps(pred[i].begin(), pred[i].end());
    std::set<int32_t> gs(gold[i].begin(), gold[i].end());
    for (int32_t c : ps) {
      if (gs.count(c))
        ++tp[static_cast<size_t>(c)];
      else
        ++fp[static_cast<size_t>(c)];
    }
    for (int32_t c : gs)
      if (!ps.count(c)) ++fn[static_cast<size_t>(c)];
  }
  double stp = 0, sfp = 0, sfn = 0, macro = 0;
  for (int64_t c = 0; c < nc; ++c) {
    stp += tp[static_cast<size_t>(c)];
    sfp += fp[static_cast<size_t>(c)];
    sfn += fn[static_cast<size_t>(c)];
    const double den = 2 * tp[static_cast<size_t>(c)] + fp[static_cast<size_t>(c)] +
                       fn[static_cast<size_t>(c)];
    macro += den > 0 ? 2 * tp[static_cast<size_t>(c)] / den : 0.0;
  }
  F1Result r;
  const double den = 2 * stp + sfp + sfn;
  r.micro = den > 0 ? 2 * stp / den : 0.0;
  r.macro = macro / static_cast<double>(nc);
  return r;
}

double brute_map_at_k(const std::vector<std::vector<double>>& scores,
                      const std::vector<std::vector<int32_t>>& relevant, int64_t k) {
  double total = 0;
  int64_t used = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    std::set<int32_t> rel(relevant[i].begin(), relevant[i].end());
    if (rel.empty()) continue;
    std::vector<int32_t> order(scores[i].size());
    for (size_t c = 0; c < order.size(); ++c) order[c] = static_cast<int32_t>(c);
    std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
      if (scores[i][static_cast<size_t>(a)] != scores[i][static_cast<size_t>(b)])
        return scores[i][static_cast<size_t>(a)] > scores[i][static_cast<size_t>(b)];
      return a < b;
    });
    double hits = 0, ap = 0;
    for (int64_t r = 0; r < std::min<int64_t>(k, static_cast<int64_t>(order.size())); ++r) {
      if (rel.count(order[static_cast<size_t>(r)])) {
        ++hits;
        ap += hits / static_cast<double>(r + 1);
      }
    }
    total += ap / static_cast<double>(std::min<int64_t>(k, static_cast<int64_t>(rel.size())));
    ++used;
  }
  return total / static_cast<double>(used);
}

}  // namespace

TEST_CASE("learning-rate schedule: warmup, decay, clamps, continuity") {
  OptimizerConfig cfg;
  cfg.peak_lr = 1e-4;
  cfg.warmup_fraction = 0.10;
  cfg.total_steps = 100;
  CHECK(cfg.warmup_steps() == 10);
  CHECK(lr_at(5, cfg) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(lr_at(10, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(55, cfg) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(lr_at(100, cfg) == 0.0);
  CHECK(lr_at(101, cfg) == 0.0);
  CHECK(lr_at(0, cfg) == 0.0);

  // Peak is reached exactly once and the sequence is piecewise monotone.
  double prev = 0.0;
  int peaks = 0;
  for (int64_t s = 1; s <= 100; ++s) {
    double lr = lr_at(s, cfg);
    if (lr == cfg.peak_lr) ++peaks;
    if (s <= 10) CHECK(lr >= prev);
    if (s > 10) CHECK(lr < prev);
    prev = lr;
  }
  CHECK(peaks == 1);

  OptimizerConfig no_warm = cfg;
  no_warm.warmup_fraction = 0.0;
  CHECK(lr_at(1, no_warm) == doctest::Approx(1e-4 * 99.0 / 100.0).epsilon(1e-12));
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig cfg;
  cfg.total_steps = 10;
  CHECK_NOTHROW(cfg.validate());
  OptimizerConfig bad = cfg;
  bad.peak_lr = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.warmup_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.clip_mode = "sometimes";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.total_steps = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("gradient clipping: norm, value, none") {
  auto grads = [] {
    std::vector<Tensor<double>> g;
    g.push_back(Tensor<double>::from({2}, {3.0, 0.0}));
    g.push_back(Tensor<double>::from({2}, {0.0, std::sqrt(7.0)}));
    return g;  // global norm 4
  };

  auto g1 = grads();
  CHECK(clip_gradients<double>(g1, 1.0, "norm") == doctest::Approx(0.25).epsilon(1e-12));
  double sq = 0;
  for (const auto& t : g1)
    for (double x : t.data) sq += x * x;
  CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
  // Direction preserved: components keep their ratios.
  CHECK(g1[0].data[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(g1[1].data[1] == doctest::Approx(std::sqrt(7.0) / 4.0).epsilon(1e-12));

  auto g2 = grads();
  CHECK(clip_gradients<double>(g2, 5.0, "norm") == 1.0);
  CHECK(g2[0].data[0] == 3.0);

  auto g3 = grads();
  CHECK(clip_gradients<double>(g3, 1.0, "value") == 1.0);
  CHECK(g3[0].data[0] == 1.0);  // clamped
  CHECK(g3[1].data[1] == 1.0);
  CHECK(g3[0].data[1] == 0.0);

  auto g4 = grads();
  CHECK(clip_gradients<double>(g4, 0.001, "none") == 1.0);
  CHECK(g4[0].data[0] == 3.0);

  auto g5 = grads();
  CHECK_THROWS_AS(clip_gradients<double>(g5, 1.0, "median"), ConfigError);
}

TEST_CASE("adamw: zero gradients leave undecayed params in place") {
  Param<double> p{"w", Tensor<double>::from({2}, {1.5, -2.0}), false};
  Param<double> b{"b", Tensor<double>::from({2}, {0.5, 0.25}), true};  // no_decay
  OptimizerConfig cfg;
  cfg.total_steps = 10;
  cfg.weight_decay = 0.0;
  AdamW<double> opt({&p, &b}, cfg);
  std::vector<Tensor<double>> g = {Tensor<double>::zeros({2}), Tensor<double>::zeros({2})};
  opt.step(g, 0.1);
  CHECK(p.value.data == std::vector<double>{1.5, -2.0});
  CHECK(b.value.data == std::vector<double>{0.5, 0.25});
  CHECK(opt.t() == 1);

  // With decay, only the decayable tensor shrinks.
  OptimizerConfig cfg2;
  cfg2.total_steps = 10;
  cfg2.weight_decay = 0.01;
  AdamW<double> opt2({&p, &b}, cfg2);
  opt2.step(g, 0.1);
  CHECK(p.value.data[0] == doctest::Approx(1.5 * (1.0 - 0.1 * 0.01)).epsilon(1e-15));
  CHECK(b.value.data[0] == 0.5);  // exempt
}

TEST_CASE("adamw: one hand-computed step") {
  Param<double> p{"w", Tensor<double>::from({1}, {1.0}), false};
  OptimizerConfig cfg;
  cfg.total_steps = 10;
  cfg.weight_decay = 0.0;
  AdamW<double> opt({&p}, cfg);
  std::vector<Tensor<double>> g = {Tensor<double>::from({1}, {0.5})};
  const double lr = 0.1;
  opt.step(g, lr);

  const double m = 0.1 * 0.5;           // (1-beta1) g
  const double v = 0.001 * 0.25;        // (1-beta2) g^2
  const double mhat = m / (1 - 0.9);    // t=1 bias correction
  const double vhat = v / (1 - 0.999);
  const double want = 1.0 - lr * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(p.value.data[0] == doctest::Approx(want).epsilon(1e-15));
  CHECK(opt.moment1()[0].data[0] == doctest::Approx(m).epsilon(1e-15));
  CHECK(opt.moment2()[0].data[0] == doctest::Approx(v).epsilon(1e-15));
}

TEST_CASE("adamw: converges on a quadratic and rejects bad gradients") {
  Param<double> p{"w", Tensor<double>::from({1}, {-4.0}), false};
  OptimizerConfig cfg;
  cfg.total_steps = 1000;
  cfg.weight_decay = 0.0;
  AdamW<double> opt({&p}, cfg);
  for (int i = 0; i < 200; ++i) {
    std::vector<Tensor<double>> g = {
        Tensor<double>::from({1}, {2.0 * (p.value.data[0] - 3.0)})};
    opt.step(g, 0.1);
  }
  CHECK(std::abs(p.value.data[0] - 3.0) < 1e-2);

  std::vector<Tensor<double>> bad = {
      Tensor<double>::from({1}, {std::numeric_limits<double>::quiet_NaN()})};
  CHECK_THROWS_AS(opt.step(bad, 0.1), NumericError);
  std::vector<Tensor<double>> wrong_count;
  CHECK_THROWS_AS(opt.step(wrong_count, 0.1), DataError);
}

TEST_CASE("f1_multiclass: endpoints and zero-support convention") {
  std::vector<int32_t> perfect_p = {0, 1, 2, 1};
  F1Result r = f1_multiclass(perfect_p, perfect_p, 3);
  CHECK(r.micro == 1.0);
  CHECK(r.macro == 1.0);

  std::vector<int32_t> p2 = {1, 0}, g2 = {0, 1};
  r = f1_multiclass(p2, g2, 2);
  CHECK(r.micro == 0.0);
  CHECK(r.macro == 0.0);

  // Class 2 never appears: macro averages it in as zero.
  std::vector<int32_t> p3 = {0, 1}, g3 = {0, 1};
  r = f1_multiclass(p3, g3, 3);
  CHECK(r.micro == 1.0);
  CHECK(r.macro == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS(f1_multiclass({}, {}, 2), DataError);
  std::vector<int32_t> short_g = {0};
  CHECK_THROWS_AS(f1_multiclass(p3, short_g, 3), DataError);
  CHECK_THROWS_AS(f1_multiclass(p3, g3, 0), ConfigError);
  std::vector<int32_t> oob = {0, 3};
  CHECK_THROWS_AS(f1_multiclass(oob, g3, 3), DataError);
}

TEST_CASE("f1_multiclass agrees with a confusion-matrix recount") {
  std::mt19937 rng(21);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int it = 0; it < 100; ++it) {
    std::vector<int32_t> pred, gold;
    for (int i = 0; i < 50; ++i) {
      pred.push_back(static_cast<int32_t>(cls(rng)));
      gold.push_back(static_cast<int32_t>(cls(rng)));
    }
    F1Result lib = f1_multiclass(pred, gold, 4);
    F1Result want = brute_f1_multiclass(pred, gold, 4);
    CHECK(lib.micro == doctest::Approx(want.micro).epsilon(1e-12));
    CHECK(lib.macro == doctest::Approx(want.macro).epsilon(1e-12));
    // Single-label micro-F1 is plain accuracy.
    double acc = 0;
    for (size_t i = 0; i < pred.size(); ++i) acc += pred[i] == gold[i];
    acc /= static_cast<double>(pred.size());
    CHECK(lib.micro == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("f1_multilabel agrees with a per-class recount") {
  std::mt19937 rng(22);
  std::bernoulli_distribution coin(0.3);
  for (int it = 0; it < 100; ++it) {
    std::vector<std::vector<int32_t>> pred, gold;
    for (int i = 0; i < 30; ++i) {
      std::vector<int32_t> ps, gs;
      for (int32_t c = 0; c < 5; ++c) {
        if (coin(rng)) ps.push_back(c);
        if (coin(rng)) gs.push_back(c);
      }
      pred.push_back(ps);
      gold.push_back(gs);
    }
    F1Result lib = f1_multilabel(pred, gold, 5);
    F1Result want = brute_f1_multilabel(pred, gold, 5);
    CHECK(lib.micro == doctest::Approx(want.micro).epsilon(1e-12));
    CHECK(lib.macro == doctest::Approx(want.macro).epsilon(1e-12));
  }
  CHECK_THROWS_AS(f1_multilabel({}, {}, 2), DataError);
}

TEST_CASE("map_at_k: hand cases, exclusions, tie break") {
  // Relevant class ranked first: AP@3 = 1.
  CHECK(map_at_k({{0.9, 0.1, 0.0}}, {{0}}, 3) == doctest::Approx(1.0).epsilon(1e-12));
  // Relevant class ranked second of three: AP@3 = 1/2.
  CHECK(map_at_k({{0.9, 0.5, 0.1}}, {{1}}, 3) == doctest::Approx(0.5).epsilon(1e-12));
  // Denominator is min(k, |relevant|).
  CHECK(map_at_k({{0.9, 0.8, 0.7}}, {{0, 1, 2}}, 2) == doctest::Approx(1.0).epsilon(1e-12));
  // Segments with no relevant labels are excluded from the mean.
  CHECK(map_at_k({{0.9, 0.5, 0.1}, {0.1, 0.2, 0.3}}, {{1}, {}}, 3) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // Ties rank the smaller class id first.
  CHECK(map_at_k({{0.5, 0.5}}, {{0}}, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(map_at_k({{0.5, 0.5}}, {{1}}, 1) == 0.0);

  CHECK_THROWS_AS(map_at_k({{0.5, 0.5}}, {{0}}, 0), ConfigError);
  CHECK_THROWS_AS(map_at_k({{0.5}, {0.5}}, {{}, {}}, 3), DataError);
  CHECK_THROWS_AS(map_at_k({{0.5}}, {{0}, {0}}, 3), DataError);
}

TEST_CASE("map_at_k agrees with an exhaustive recount") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> u(0, 1);
  std::bernoulli_distribution coin(0.4);
  std::uniform_int_distribution<int> quant(0, 4);
  for (int it = 0; it < 100; ++it) {
    std::vector<std::vector<double>> scores;
    std::vector<std::vector<int32_t>> rel;
    bool any = false;
    for (int i = 0; i < 12; ++i) {
      std::vector<double> row(6);
      // Quantized scores force frequent ties.
      for (auto& x : row) x = quant(rng) / 4.0;
      std::vector<int32_t> rs;
      for (int32_t c = 0; c < 6; ++c)
        if (coin(rng)) rs.push_back(c);
      any |= !rs.empty();
      scores.push_back(std::move(row));
      rel.push_back(std::move(rs));
    }
    if (!any) rel[0].push_back(2);
    for (int64_t k : {1, 3, 5}) {
      CHECK(map_at_k(scores, rel, k) ==
            doctest::Approx(brute_map_at_k(scores, rel, k)).epsilon(1e-12));
    }
  }
}

TEST_CASE("class weights: inverse frequency, mean one, absent classes") {
  std::vector<Document> docs(2);
  docs[0] = make_doc("a", {3, 3}, 10);
  docs[0].labels = {{0, 0, 0}, {0}};  // class 0 appears 4 times
  docs[1] = make_doc("b", {3}, 10);
  docs[1].labels = {{1}};  // class 1 once

  Tensor<double> w = class_weights_from<double>(docs, 3);
  REQUIRE(w.shape == std::vector<int64_t>{3});  // rank-1: usable by the loss kernels
  CHECK(w.data[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(w.data[1] == doctest::Approx(1.6).epsilon(1e-12));
  CHECK(w.data[2] == 1.0);  // absent class
  CHECK((w.data[0] + w.data[1]) / 2.0 == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(class_weights_from<double>(docs, 0), ConfigError);
  std::vector<Document> bad = docs;
  bad[1].labels = {{7}};
  CHECK_THROWS_AS(class_weights_from<double>(bad, 3), DataError);
}

TEST_CASE("oversample counts: factor semantics and determinism") {
  std::vector<Document> docs;
  for (int i = 0; i < 400; ++i) {
    Document d = make_doc("d" + std::to_string(i), {3}, 10);
    if (i % 4 != 0) d.labels = {{i % 3}};  // 300 labeled, 100 unlabeled
    docs.push_back(std::move(d));
  }

  auto c2 = oversample_counts(docs, 2.0, 7, 0);
  for (size_t i = 0; i < docs.size(); ++i)
    CHECK(c2[i] == (docs[i].has_labels() ? 2 : 1));

  auto c1 = oversample_counts(docs, 1.0, 7, 0);
  for (int64_t c : c1) CHECK(c == 1);

  auto ca = oversample_counts(docs, 1.5, 7, 0);
  auto cb = oversample_counts(docs, 1.5, 7, 0);
  CHECK(ca == cb);
  auto cc = oversample_counts(docs, 1.5, 7, 1);
  CHECK(ca != cc);  // epoch re-draws

  int64_t labeled = 0, extra = 0;
  for (size_t i = 0; i < docs.size(); ++i) {
    if (!docs[i].has_labels()) {
      CHECK(ca[i] == 1);
      continue;
    }
    ++labeled;
    CHECK((ca[i] == 1 || ca[i] == 2));
    extra += ca[i] - 1;
  }
  const double frac = static_cast<double>(extra) / static_cast<double>(labeled);
  const double sigma = std::sqrt(0.5 * 0.5 / static_cast<double>(labeled));
  CHECK(std::abs(frac - 0.5) < 4 * sigma);

  CHECK_THROWS_AS(oversample_counts(docs, 0.5, 7, 0), ConfigError);
}

TEST_CASE("checkpoint: write, read, strict restore, scalar width") {
  TempDir tmp;
  ModelConfig c = tiny_cfg(25);
  ModelParams<double> p(c, 42);

  // A couple of optimizer steps make the moments non-trivial.
  OptimizerConfig ocfg;
  ocfg.total_steps = 10;
  AdamW<double> opt(p.all(), ocfg);
  std::mt19937 rng(3);
  for (int s = 0; s < 2; ++s) {
    std::vector<Tensor<double>> grads;
    for (const Param<double>* q : static_cast<const ModelParams<double>&>(p).all())
      grads.push_back(random_tensor<double>(q->value.shape, rng, 0.01));
    opt.step(grads, 1e-3);
  }

  CheckpointMeta meta;
  meta.config = c;
  meta.step = 2;
  meta.epoch = 1;
  meta.seed = 42;
  meta.adam_t = static_cast<uint64_t>(opt.t());
  const std::string path = tmp.file("model.ckpt");
  write_checkpoint<double>(path, p, &opt.moment1(), &opt.moment2(), meta);

  CheckpointMeta peek = read_checkpoint_meta(path);
  CHECK(peek.step == 2);
  CHECK(peek.epoch == 1);
  CHECK(peek.seed == 42);
  CHECK(peek.adam_t == 2);
  CHECK(peek.config.diff(c).empty());
  CHECK(checkpoint_scalar_bytes(path) == 8);

  // Fresh instance restored strictly: params, moments, live ranks.
  ModelParams<double> q(c, 7);
  AdamW<double> opt2(q.all(), ocfg);
  Checkpoint<double> ckpt = read_checkpoint<double>(path);
  apply_checkpoint_strict<double>(ckpt, q, &opt2.moment1(), &opt2.moment2());
  auto pa = p.all();
  auto qa = q.all();
  REQUIRE(pa.size() == qa.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(qa[i]->value.shape == pa[i]->value.shape);  // rank preserved
    CHECK(qa[i]->value.data == pa[i]->value.data);
    CHECK(opt2.moment1()[i].data == opt.moment1()[i].data);
    CHECK(opt2.moment2()[i].data == opt.moment2()[i].data);
  }

  // Config drift is named.
  ModelConfig c2 = c;
  c2.d = 16;
  ModelParams<double> r(c2, 7);
  try {
    apply_checkpoint_strict<double>(ckpt, r, nullptr, nullptr);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("d") != std::string::npos);
    CHECK(std::string(e.what()).find("differing fields") != std::string::npos);
  }

  // Truncation reports an offset; float checkpoints report width 4.
  std::string bytes = read_file(path);
  write_file(tmp.file("trunc.ckpt"), bytes.substr(0, bytes.size() / 2));
  try {
    read_checkpoint<double>(tmp.file("trunc.ckpt"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }

  ModelParams<float> pf(c, 42);
  write_checkpoint<float>(tmp.file("f.ckpt"), pf, nullptr, nullptr, meta);
  CHECK(checkpoint_scalar_bytes(tmp.file("f.ckpt")) == 4);
  CHECK_THROWS_AS(read_checkpoint<double>(tmp.file("f.ckpt")), DataError);
}

TEST_CASE("checkpoint transfer: backbone gate, name and shape filtering") {
  TempDir tmp;
  ModelConfig pre = tiny_cfg(25);  // pointer on, no head
  ModelParams<double> p(pre, 42);
  CheckpointMeta meta;
  meta.config = pre;
  meta.seed = 42;
  const std::string path = tmp.file("pre.ckpt");
  write_checkpoint<double>(path, p, nullptr, nullptr, meta);

  ModelConfig ft = pre;
  ft.use_pointer = false;
  ft.head = "linear";
  ft.num_labels = 4;
  ft.dropout = 0.2;  // non-backbone field may differ
  ModelParams<double> q(ft, 9);
  Tensor<double> fresh_head = q.cls_w.value;

  Checkpoint<double> ckpt = read_checkpoint<double>(path);
  std::vector<std::string> loaded = apply_checkpoint_transfer<double>(ckpt, q);

  CHECK(std::find(loaded.begin(), loaded.end(), "embed.tok") != loaded.end());
  CHECK(std::find(loaded.begin(), loaded.end(), "encoder.layer0.attn.wq") != loaded.end());
  CHECK(std::find(loaded.begin(), loaded.end(), "pointer.wquery") == loaded.end());
  CHECK(std::find(loaded.begin(), loaded.end(), "head.linear.w") == loaded.end());
  CHECK(q.tok_embed.value.data == p.tok_embed.value.data);
  CHECK(q.emb_ln_g.value.shape == std::vector<int64_t>{pre.d});  // rank preserved
  CHECK(q.cls_w.value.data == fresh_head.data);                  // head kept its init

  ModelConfig wrong = ft;
  wrong.d = 16;
  wrong.heads = 2;
  ModelParams<double> r(wrong, 9);
  try {
    apply_checkpoint_transfer<double>(ckpt, r);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("backbone") != std::string::npos);
    CHECK(std::string(e.what()).find(" d") != std::string::npos);
  }
}

TEST_CASE("pretrain: loop runs, logs schema, writes checkpoints") {
  TempDir tmp;
  Vocab v = make_word_vocab(20);
  PackingConfig pk;
  pk.context = 32;
  auto train = prepared_corpus(v, pk, 16, 5);
  auto val = prepared_corpus(v, pk, 4, 6);

  ModelConfig c = tiny_cfg(v.size());
  ModelParams<double> params(c, 11);
  PretrainOptions opt;
  opt.loop.seed = 5;
  opt.loop.optim.total_steps = 10;
  opt.loop.optim.batch_size = 4;
  opt.loop.optim.accumulation_steps = 1;
  opt.loop.eval_every = 5;
  opt.loop.checkpoint_every = 5;
  opt.loop.out_dir = tmp.file("run");
  opt.loop.packing = pk;

  std::ostringstream log;
  TrainResult res = pretrain<double>(params, train, val, v, opt, &log);
  CHECK(res.steps_done == 10);
  REQUIRE(res.step_losses.size() == 10);
  for (double l : res.step_losses) CHECK(std::isfinite(l));
  CHECK_FALSE(res.last_checkpoint.empty());
  CHECK(std::filesystem::exists(tmp.file("run") + "/step5.ckpt"));
  CHECK(std::filesystem::exists(tmp.file("run") + "/last.ckpt"));

  // Every log line is step \t split \t metric \t value.
  std::istringstream in(log.str());
  std::string line;
  size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    std::istringstream ls(line);
    std::string step_s, split, metric, value_s;
    REQUIRE(std::getline(ls, step_s, '\t'));
    REQUIRE(std::getline(ls, split, '\t'));
    REQUIRE(std::getline(ls, metric, '\t'));
    REQUIRE(std::getline(ls, value_s, '\t'));
    CHECK(std::stol(step_s) >= 1);
    CHECK((split == "train" || split == "val"));
    CHECK_FALSE(metric.empty());
    CHECK(std::isfinite(std::stod(value_s)));
  }
  CHECK(lines == res.log.size());

  // Validation metrics cover both objectives.
  CHECK(res.final_val.values.count("mlm_accuracy"));
  CHECK(res.final_val.values.count("so_segment_accuracy"));
  CHECK(res.final_val.values.count("so_exact_accuracy"));
  CHECK(res.final_val.values.count("loss"));
}

TEST_CASE("pretrain: resuming a checkpoint replays the same trajectory") {
  TempDir tmp;
  Vocab v = make_word_vocab(20);
  PackingConfig pk;
  pk.context = 32;
  auto train = prepared_corpus(v, pk, 12, 5);

  ModelConfig c = tiny_cfg(v.size());
  PretrainOptions opt;
  opt.loop.seed = 5;
  opt.loop.optim.total_steps = 10;
  opt.loop.optim.batch_size = 4;
  opt.loop.optim.accumulation_steps = 1;
  opt.loop.eval_every = 0;
  opt.loop.checkpoint_every = 5;
  opt.loop.out_dir = tmp.file("full");
  opt.loop.packing = pk;

  ModelParams<double> full(c, 11);
  TrainResult base = pretrain<double>(full, train, {}, v, opt, nullptr);
  REQUIRE(base.step_losses.size() == 10);

  PretrainOptions ropt = opt;
  ropt.loop.out_dir = tmp.file("resumed");
  ropt.loop.resume = tmp.file("full") + "/step5.ckpt";
  ModelParams<double> resumed(c, 11);
  TrainResult cont = pretrain<double>(resumed, train, {}, v, ropt, nullptr);
  REQUIRE(cont.step_losses.size() == 5);
  for (size_t i = 0; i < 5; ++i) CHECK(cont.step_losses[i] == base.step_losses[5 + i]);
  CHECK(full.tok_embed.value.data == resumed.tok_embed.value.data);

  PretrainOptions wrong = ropt;
  wrong.loop.seed = 6;
  ModelParams<double> w(c, 11);
  CHECK_THROWS_AS(pretrain<double>(w, train, {}, v, wrong, nullptr), DataError);
}

TEST_CASE("pretrain: accumulation only re-slices the same effective batch") {
  Vocab v = make_word_vocab(20);
  PackingConfig pk;
  pk.context = 32;
  auto train = prepared_corpus(v, pk, 16, 5);

  ModelConfig c = tiny_cfg(v.size());
  auto run = [&](int64_t batch, int64_t accum) {
    ModelParams<double> params(c, 11);
    PretrainOptions opt;
    opt.loop.seed = 5;
    opt.loop.optim.total_steps = 4;
    opt.loop.optim.batch_size = batch;
    opt.loop.optim.accumulation_steps = accum;
    opt.loop.eval_every = 0;
    opt.loop.checkpoint_every = 0;
    opt.loop.packing = pk;
    TrainResult r = pretrain<double>(params, train, {}, v, opt, nullptr);
    return std::make_pair(r.step_losses, params.tok_embed.value.data);
  };
  auto [l1, p1] = run(4, 2);
  auto [l2, p2] = run(8, 1);
  CHECK(l1 == l2);
  CHECK(p1 == p2);
}

TEST_CASE("pretrain: objective/config gates") {
  Vocab v = make_word_vocab(20);
  PackingConfig pk;
  pk.context = 32;
  auto train = prepared_corpus(v, pk, 4, 5);
  ModelConfig c = tiny_cfg(v.size());
  c.use_pointer = false;
  ModelParams<double> params(c, 1);
  PretrainOptions opt;
  opt.loop.seed = 1;
  opt.loop.optim.total_steps = 1;
  opt.loop.packing = pk;
  opt.mode = TrainMode::mlm_so;
  CHECK_THROWS_AS(pretrain<double>(params, train, {}, v, opt, nullptr), ConfigError);
  opt.mode = TrainMode::mlm_nsp;
  CHECK_THROWS_AS(pretrain<double>(params, train, {}, v, opt, nullptr), ConfigError);
  opt.mode = TrainMode::head;
  CHECK_THROWS_AS(pretrain<double>(params, train, {}, v, opt, nullptr), ConfigError);
  opt.mode = TrainMode::mlm_only;
  CHECK_THROWS_AS(pretrain<double>(params, {}, {}, v, opt, nullptr), DataError);
}

TEST_CASE("pretrain: non-finite loss aborts with a numeric error") {
  Vocab v = make_word_vocab(20);
  PackingConfig pk;
  pk.context = 32;
  auto train = prepared_corpus(v, pk, 4, 5);
  ModelConfig c = tiny_cfg(v.size());
  ModelParams<double> params(c, 1);
  for (auto& x : params.tok_embed.value.data) x = 1e308;  // force overflow
  PretrainOptions opt;
  opt.loop.seed = 1;
  opt.loop.optim.total_steps = 1;
  opt.loop.optim.batch_size = 2;
  opt.loop.optim.accumulation_steps = 1;
  opt.loop.packing = pk;
  opt.mode = TrainMode::mlm_so;
  CHECK_THROWS_AS(pretrain<double>(params, train, {}, v, opt, nullptr), NumericError);
}

TEST_CASE("evaluate_pretrain equals a per-sample recount") {
  Vocab v = make_word_vocab(20);
  PackingConfig pk;
  pk.context = 32;
  auto samples = prepared_corpus(v, pk, 10, 9);
  ModelConfig c = tiny_cfg(v.size());
  ModelParams<double> params(c, 17);

  MetricReport rep = evaluate_pretrain<double>(params, samples, TrainMode::mlm_so, v.pad_id);

  double loss = 0, mlm_loss = 0, so_loss = 0;
  int64_t mlm_c = 0, mlm_t = 0, so_c = 0, so_t = 0, n_mlm = 0, n_so = 0, exact = 0;
  for (const auto& s : samples) {
    SampleStats st = run_sample<double>(s, params, TrainMode::mlm_so, v.pad_id, false, 0, 0, 0,
                                        nullptr, nullptr);
    loss += st.loss;
    mlm_c += st.mlm_correct;
    mlm_t += st.mlm_total;
    so_c += st.so_correct;
    so_t += st.so_total;
    if (st.mlm_total > 0) {
      mlm_loss += st.mlm_loss;
      ++n_mlm;
    }
    if (st.so_present) {
      so_loss += st.so_loss;
      ++n_so;
      if (st.so_exact) ++exact;
    }
  }
  CHECK(rep.values.at("loss") ==
        doctest::Approx(loss / static_cast<double>(samples.size())).epsilon(1e-12));
  REQUIRE(n_mlm > 0);
  CHECK(rep.values.at("mlm_loss") ==
        doctest::Approx(mlm_loss / static_cast<double>(n_mlm)).epsilon(1e-12));
  CHECK(rep.values.at("mlm_accuracy") ==
        doctest::Approx(static_cast<double>(mlm_c) / static_cast<double>(mlm_t)).epsilon(1e-12));
  CHECK(rep.values.at("so_loss") ==
        doctest::Approx(so_loss / static_cast<double>(n_so)).epsilon(1e-12));
  CHECK(rep.values.at("so_segment_accuracy") ==
        doctest::Approx(static_cast<double>(so_c) / static_cast<double>(so_t)).epsilon(1e-12));
  CHECK(rep.values.at("so_exact_accuracy") ==
        doctest::Approx(static_cast<double>(exact) / static_cast<double>(n_so)).epsilon(1e-12));

  // Thread counts change scheduling, never results.
  MetricReport rep4 = evaluate_pretrain<double>(params, samples, TrainMode::mlm_so, v.pad_id, 4);
  for (const auto& [k, val] : rep.values) CHECK(rep4.values.at(k) == val);
}

TEST_CASE("evaluate_classification equals an external F1 recount") {
  Vocab v = make_word_vocab(20);
  ModelConfig c = tiny_cfg(v.size());
  c.head = "linear";
  c.num_labels = 3;
  c.use_pointer = false;
  ModelParams<double> params(c, 19);

  PackingConfig pk;
  pk.context = 32;
  pk.shuffle = false;
  std::vector<PackedSample> samples;
  std::vector<int32_t> gold_flat;
  std::mt19937 rng(33);
  std::uniform_int_distribution<int> cls(0, 2);
  for (int i = 0; i < 12; ++i) {
    Document d = make_doc("d" + std::to_string(i), {4, 5, 3}, 20);
    d.labels = {{static_cast<int32_t>(cls(rng))},
                {static_cast<int32_t>(cls(rng))},
                {static_cast<int32_t>(cls(rng))}};
    for (auto& s : pack_document(d, v, pk)) samples.push_back(std::move(s));
  }

  MetricReport rep = evaluate_classification<double>(params, samples, v.pad_id);

  std::vector<int32_t> pred_flat;
  for (const auto& s : samples) {
    SampleStats st = run_sample<double>(s, params, TrainMode::head, v.pad_id, false, 0, 0, 0,
                                        nullptr, nullptr);
    for (int32_t k = 0; k < s.segment_count(); ++k) {
      pred_flat.push_back(st.class_pred[static_cast<size_t>(k)]);
      gold_flat.push_back(s.segment_labels[static_cast<size_t>(k)][0]);
    }
  }
  F1Result want = brute_f1_multiclass(pred_flat, gold_flat, 3);
  CHECK(rep.values.at("f1_micro") == doctest::Approx(want.micro).epsilon(1e-12));
  CHECK(rep.values.at("f1_macro") == doctest::Approx(want.macro).epsilon(1e-12));
  CHECK(rep.values.count("map@3"));
  CHECK(rep.values.count("map@5"));
  CHECK(rep.values.at("map@3") <= 1.0);
}

TEST_CASE("finetune: runs, tracks best by earlier step on ties") {
  TempDir tmp;
  Vocab v = make_word_vocab(20);
  ModelConfig c = tiny_cfg(v.size());
  c.head = "linear";
  c.num_labels = 3;
  c.use_pointer = false;
  ModelParams<double> params(c, 23);

  std::vector<Document> train_docs, val_docs;
  for (int i = 0; i < 8; ++i) {
    Document d = make_doc("t" + std::to_string(i), {4, 5}, 20);
    d.labels = {{i % 3}, {(i + 1) % 3}};
    train_docs.push_back(std::move(d));
  }
  for (int i = 0; i < 3; ++i) {
    Document d = make_doc("v" + std::to_string(i), {4, 4}, 20);
    d.labels = {{i % 3}, {(i + 2) % 3}};
    val_docs.push_back(std::move(d));
  }

  FinetuneOptions opt;
  opt.epochs = 2;
  opt.loop.seed = 3;
  opt.loop.optim.batch_size = 4;
  opt.loop.optim.accumulation_steps = 1;
  opt.loop.optim.peak_lr = 1e-12;  // metric cannot move: both evals tie
  opt.loop.optim.total_steps = 1;  // overwritten by the loop's own schedule
  opt.loop.out_dir = tmp.file("ft");
  opt.loop.packing.context = 32;

  std::ostringstream log;
  TrainResult res = finetune<double>(params, train_docs, val_docs, v, opt, &log);
  CHECK(res.steps_done > 0);
  CHECK(res.steps_done % 2 == 0);  // two identical epochs
  CHECK(res.best_step == res.steps_done / 2);  // tie kept the first epoch's eval
  CHECK_FALSE(res.best_checkpoint.empty());
  CHECK(std::filesystem::exists(res.best_checkpoint));
  CHECK(std::filesystem::exists(res.last_checkpoint));
  CHECK(res.final_val.values.count("f1_micro"));
  CHECK(log.str().find("f1_micro") != std::string::npos);

  CheckpointMeta meta = read_checkpoint_meta(res.best_checkpoint);
  CHECK(meta.step == static_cast<uint64_t>(res.best_step));
}

TEST_CASE("finetune: multilabel with weighting, oversampling, dynamic windows") {
  TempDir tmp;
  Vocab v = make_word_vocab(20);
  ModelConfig c = tiny_cfg(v.size());
  c.head = "multilabel";
  c.num_labels = 4;
  c.use_pointer = false;
  ModelParams<double> params(c, 29);

  std::vector<Document> train_docs, val_docs;
  std::mt19937 rng(41);
  std::bernoulli_distribution coin(0.4);
  auto random_sets = [&](size_t k) {
    std::vector<std::vector<int32_t>> sets(k);
    for (auto& s : sets)
      for (int32_t cc = 0; cc < 4; ++cc)
        if (coin(rng)) s.push_back(cc);
    return sets;
  };
  for (int i = 0; i < 6; ++i) {
    Document d = make_doc("t" + std::to_string(i), {4, 4, 4, 4}, 20);
    d.labels = random_sets(4);
    if (d.labels[0].empty()) d.labels[0].push_back(0);  // keep the doc labeled
    train_docs.push_back(std::move(d));
  }
  for (int i = 0; i < 2; ++i) {
    Document d = make_doc("v" + std::to_string(i), {4, 4}, 20);
    d.labels = random_sets(2);
    if (d.labels[0].empty()) d.labels[0].push_back(1);
    val_docs.push_back(std::move(d));
  }

  FinetuneOptions opt;
  opt.epochs = 2;
  opt.dynamic = true;
  opt.class_weighting = true;
  opt.oversample = true;
  opt.oversample_factor = 1.5;
  opt.loop.seed = 13;
  opt.loop.optim.batch_size = 4;
  opt.loop.optim.accumulation_steps = 1;
  opt.loop.optim.total_steps = 1;
  opt.loop.out_dir = tmp.file("ml");
  opt.loop.packing.context = 32;
  opt.loop.packing.l_min = 2;

  TrainResult res = finetune<double>(params, train_docs, val_docs, v, opt, nullptr);
  CHECK(res.steps_done > 0);
  CHECK(res.final_val.values.count("map@3"));
  CHECK(res.best_step > 0);  // selection metric is map@3

  // Weighting demands the multilabel head.
  ModelConfig lin = c;
  lin.head = "linear";
  ModelParams<double> pl(lin, 1);
  std::vector<Document> single = train_docs;
  for (auto& d : single)
    for (auto& s : d.labels) s = {s.empty() ? 0 : s[0]};
  FinetuneOptions bad = opt;
  bad.dynamic = false;
  bad.oversample = false;
  CHECK_THROWS_AS(finetune<double>(pl, single, val_docs, v, bad, nullptr), ConfigError);
}

TEST_CASE("finetune: guards on inputs") {
  Vocab v = make_word_vocab(20);
  ModelConfig c = tiny_cfg(v.size());
  ModelParams<double> params(c, 1);  // no head
  FinetuneOptions opt;
  opt.loop.seed = 1;
  std::vector<Document> docs = {make_doc("a", {3}, 10)};
  docs[0].labels = {{0}};
  CHECK_THROWS_AS(finetune<double>(params, docs, {}, v, opt, nullptr), ConfigError);

  ModelConfig ch = c;
  ch.head = "linear";
  ch.num_labels = 2;
  ModelParams<double> ph(ch, 1);
  CHECK_THROWS_AS(finetune<double>(ph, {}, {}, v, opt, nullptr), DataError);

  std::vector<Document> unlabeled = {make_doc("a", {3}, 10)};
  CHECK_THROWS_AS(finetune<double>(ph, unlabeled, {}, v, opt, nullptr), DataError);

  FinetuneOptions bad = opt;
  bad.epochs = 0;
  CHECK_THROWS_AS(finetune<double>(ph, docs, {}, v, bad, nullptr), ConfigError);
}
