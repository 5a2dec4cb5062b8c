// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "model/model.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "core/common.hpp"

namespace segorder {

void ModelConfig::validate() const {
  if (d < 1 || layers < 1 || heads < 1 || ffn_mult < 1)
    throw ConfigError("model: d, layers, heads, ffn_mult must be >= 1");
  if (d % heads != 0) throw ConfigError("model: d must be divisible by heads");
  if (context < 3) throw ConfigError("model: context must be >= 3");
  if (max_segments < 1) throw ConfigError("model: max_segments must be >= 1");
  if (vocab_size < 5) throw ConfigError("model: vocab_size must cover the specials");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must be in [0,1)");
  if (head != "none" && head != "linear" && head != "multilabel" && head != "gru")
    throw ConfigError("model: head must be none|linear|multilabel|gru");
  if (head != "none" && num_labels < 1)
    throw ConfigError("model: classifier head needs num_labels >= 1");
  if (label_embed_dim < 1) throw ConfigError("model: label_embed_dim must be >= 1");
}

nlohmann::ordered_json ModelConfig::to_json() const {
  return nlohmann::ordered_json{{"d", d},
                                {"layers", layers},
                                {"heads", heads},
                                {"ffn_mult", ffn_mult},
                                {"context", context},
                                {"max_segments", max_segments},
                                {"vocab_size", vocab_size},
                                {"num_labels", num_labels},
                                {"head", head},
                                {"label_embed_dim", label_embed_dim},
                                {"dropout", dropout},
                                {"use_pointer", use_pointer},
                                {"use_nsp", use_nsp}};
}

ModelConfig ModelConfig::from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  c.d = j.at("d").get<int64_t>();
  c.layers = j.at("layers").get<int64_t>();
  c.heads = j.at("heads").get<int64_t>();
  c.ffn_mult = j.at("ffn_mult").get<int64_t>();
  c.context = j.at("context").get<int64_t>();
  c.max_segments = j.at("max_segments").get<int64_t>();
  c.vocab_size = j.at("vocab_size").get<int64_t>();
  c.num_labels = j.at("num_labels").get<int64_t>();
  c.head = j.at("head").get<std::string>();
  c.label_embed_dim = j.at("label_embed_dim").get<int64_t>();
  c.dropout = j.at("dropout").get<double>();
  c.use_pointer = j.at("use_pointer").get<bool>();
  c.use_nsp = j.at("use_nsp").get<bool>();
  return c;
}

std::vector<std::string> ModelConfig::diff(const ModelConfig& o) const {
  std::vector<std::string> out;
  if (d != o.d) out.push_back("d");
  if (layers != o.layers) out.push_back("layers");
  if (heads != o.heads) out.push_back("heads");
  if (ffn_mult != o.ffn_mult) out.push_back("ffn_mult");
  if (context != o.context) out.push_back("context");
  if (max_segments != o.max_segments) out.push_back("max_segments");
  if (vocab_size != o.vocab_size) out.push_back("vocab_size");
  if (num_labels != o.num_labels) out.push_back("num_labels");
  if (head != o.head) out.push_back("head");
  if (label_embed_dim != o.label_embed_dim) out.push_back("label_embed_dim");
  if (dropout != o.dropout) out.push_back("dropout");
  if (use_pointer != o.use_pointer) out.push_back("use_pointer");
  if (use_nsp != o.use_nsp) out.push_back("use_nsp");
  return out;
}

namespace {

template <class S>
void init_param(Param<S>& p, const std::string& name, std::vector<int64_t> shape,
                uint64_t seed, const char* style, bool no_decay) {
  p.name = name;
  p.value = Tensor<S>::zeros(std::move(shape));
  p.no_decay = no_decay;
  if (std::string_view(style) == "normal") {
    RngStream rng(seed, rng_purpose::init, fnv1a64(name));
    for (auto& e : p.value.data) e = static_cast<S>(rng.next_normal() * 0.02);
  } else if (std::string_view(style) == "ones") {
    p.value.fill(S(1));
  }  // "zeros" leaves the buffer as allocated
}

}  // namespace

template <class S>
ModelParams<S>::ModelParams(const ModelConfig& config, uint64_t init_seed) : cfg(config) {
  cfg.validate();
  const int64_t d = cfg.d, V = cfg.vocab_size, C = cfg.context, f = cfg.ffn_dim();
  init_param(tok_embed, "embed.tok", {V, d}, init_seed, "normal", false);
  init_param(pos_embed, "embed.pos", {C, d}, init_seed, "normal", false);
  init_param(emb_ln_g, "embed.ln.gamma", {d}, init_seed, "ones", true);
  init_param(emb_ln_b, "embed.ln.beta", {d}, init_seed, "zeros", true);
  layers.resize(static_cast<size_t>(cfg.layers));
  for (int64_t li = 0; li < cfg.layers; ++li) {
    auto& L = layers[static_cast<size_t>(li)];
    const std::string base = "encoder.layer" + std::to_string(li) + ".";
    init_param(L.wq, base + "attn.wq", {d, d}, init_seed, "normal", false);
    init_param(L.bq, base + "attn.bq", {d}, init_seed, "zeros", true);
    init_param(L.wk, base + "attn.wk", {d, d}, init_seed, "normal", false);
    init_param(L.bk, base + "attn.bk", {d}, init_seed, "zeros", true);
    init_param(L.wv, base + "attn.wv", {d, d}, init_seed, "normal", false);
    init_param(L.bv, base + "attn.bv", {d}, init_seed, "zeros", true);
    init_param(L.wo, base + "attn.wo", {d, d}, init_seed, "normal", false);
    init_param(L.bo, base + "attn.bo", {d}, init_seed, "zeros", true);
    init_param(L.ln1_g, base + "ln1.gamma", {d}, init_seed, "ones", true);
    init_param(L.ln1_b, base + "ln1.beta", {d}, init_seed, "zeros", true);
    init_param(L.w1, base + "ffn.w1", {f, d}, init_seed, "normal", false);
    init_param(L.b1, base + "ffn.b1", {f}, init_seed, "zeros", true);
    init_param(L.w2, base + "ffn.w2", {d, f}, init_seed, "normal", false);
    init_param(L.b2, base + "ffn.b2", {d}, init_seed, "zeros", true);
    init_param(L.ln2_g, base + "ln2.gamma", {d}, init_seed, "ones", true);
    init_param(L.ln2_b, base + "ln2.beta", {d}, init_seed, "zeros", true);
  }
  init_param(mlm_bias, "mlm.bias", {V}, init_seed, "zeros", true);
  if (cfg.use_pointer) {
    init_param(ptr_wquery, "pointer.wquery", {cfg.q(), d}, init_seed, "normal", false);
    init_param(ptr_wkey, "pointer.wkey", {cfg.q(), d}, init_seed, "normal", false);
    init_param(segpos, "pointer.segpos", {cfg.max_segments, d}, init_seed, "normal", false);
  }
  if (cfg.use_nsp) {
    init_param(nsp_w, "nsp.w", {2, d}, init_seed, "normal", false);
    init_param(nsp_b, "nsp.b", {2}, init_seed, "zeros", true);
  }
  if (cfg.head == "linear" || cfg.head == "multilabel") {
    init_param(cls_w, "head.linear.w", {cfg.num_labels, d}, init_seed, "normal", false);
    init_param(cls_b, "head.linear.b", {cfg.num_labels}, init_seed, "zeros", true);
  } else if (cfg.head == "gru") {
    const int64_t h = d;
    const int64_t in = d + cfg.label_embed_dim;
    init_param(gru_wz, "head.gru.wz", {h, in}, init_seed, "normal", false);
    init_param(gru_uz, "head.gru.uz", {h, h}, init_seed, "normal", false);
    init_param(gru_bz, "head.gru.bz", {h}, init_seed, "zeros", true);
    init_param(gru_wr, "head.gru.wr", {h, in}, init_seed, "normal", false);
    init_param(gru_ur, "head.gru.ur", {h, h}, init_seed, "normal", false);
    init_param(gru_br, "head.gru.br", {h}, init_seed, "zeros", true);
    init_param(gru_wh, "head.gru.wh", {h, in}, init_seed, "normal", false);
    init_param(gru_uh, "head.gru.uh", {h, h}, init_seed, "normal", false);
    init_param(gru_bh, "head.gru.bh", {h}, init_seed, "zeros", true);
    init_param(gru_out_w, "head.gru.out.w", {cfg.num_labels, h}, init_seed, "normal", false);
    init_param(gru_out_b, "head.gru.out.b", {cfg.num_labels}, init_seed, "zeros", true);
    init_param(label_embed, "head.gru.labels", {cfg.num_labels + 1, cfg.label_embed_dim},
               init_seed, "normal", false);
  }
}

template <class S>
std::vector<Param<S>*> ModelParams<S>::all() {
  std::vector<Param<S>*> out = {&tok_embed, &pos_embed, &emb_ln_g, &emb_ln_b};
  for (auto& L : layers) {
    out.insert(out.end(), {&L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo, &L.bo, &L.ln1_g,
                           &L.ln1_b, &L.w1, &L.b1, &L.w2, &L.b2, &L.ln2_g, &L.ln2_b});
  }
  out.push_back(&mlm_bias);
  if (cfg.use_pointer) out.insert(out.end(), {&ptr_wquery, &ptr_wkey, &segpos});
  if (cfg.use_nsp) out.insert(out.end(), {&nsp_w, &nsp_b});
  if (cfg.head == "linear" || cfg.head == "multilabel") {
    out.insert(out.end(), {&cls_w, &cls_b});
  } else if (cfg.head == "gru") {
    out.insert(out.end(), {&gru_wz, &gru_uz, &gru_bz, &gru_wr, &gru_ur, &gru_br, &gru_wh,
                           &gru_uh, &gru_bh, &gru_out_w, &gru_out_b, &label_embed});
  }
  return out;
}

template <class S>
std::vector<const Param<S>*> ModelParams<S>::all() const {
  auto mut = const_cast<ModelParams<S>*>(this)->all();
  return {mut.begin(), mut.end()};
}

template <class S>
int64_t ModelParams<S>::parameter_count() const {
  int64_t n = 0;
  for (const Param<S>* p : all()) n += p->value.numel();
  return n;
}

template <class S>
Param<S>* ModelParams<S>::find(const std::string& name) {
  for (Param<S>* p : all())
    if (p->name == name) return p;
  return nullptr;
}

template <class S>
typename ModelForward<S>::Id ModelForward<S>::linear(Id x, const Param<S>& w,
                                                     const Param<S>& b) {
  return g_.add_bias_rows(g_.matmul_nt(x, g_.param(w)), g_.param(b));
}

template <class S>
typename ModelForward<S>::Id ModelForward<S>::maybe_dropout(Id x) {
  if (training_ && drop_ != nullptr && p_.cfg.dropout > 0.0)
    return g_.dropout(x, p_.cfg.dropout, *drop_);
  return x;
}

template <class S>
typename ModelForward<S>::Id ModelForward<S>::encode(const PackedSample& sample, int32_t pad_id,
                                                     int64_t pad_to) {
  const ModelConfig& cfg = p_.cfg;
  const int64_t t = sample.length();
  if (t > cfg.context)
    throw DataError("encode: sample length " + std::to_string(t) + " exceeds context " +
                    std::to_string(cfg.context));
  const int64_t n = std::max(t, pad_to);
  if (n > cfg.context)
    throw DataError("encode: pad_to " + std::to_string(pad_to) + " exceeds context " +
                    std::to_string(cfg.context));
  std::vector<int64_t> ids(static_cast<size_t>(n), static_cast<int64_t>(pad_id));
  for (int64_t i = 0; i < t; ++i)
    ids[static_cast<size_t>(i)] = sample.token_ids[static_cast<size_t>(i)];
  std::vector<int64_t> positions(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) positions[static_cast<size_t>(i)] = i;

  Id x = g_.add(g_.rows_gather(g_.param(p_.tok_embed), ids),
                g_.rows_gather(g_.param(p_.pos_embed), positions));
  x = g_.layer_norm(x, g_.param(p_.emb_ln_g), g_.param(p_.emb_ln_b), static_cast<S>(1e-12));
  x = maybe_dropout(x);

  Id key_mask = -1;
  if (n > t) {
    // Additive bias: -1e9 on pad keys keeps them out of every softmax row.
    Tensor<S> m = Tensor<S>::zeros({n, n});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = t; j < n; ++j)
        m.data[static_cast<size_t>(i * n + j)] = static_cast<S>(-1e9);
    key_mask = g_.constant(std::move(m));
  }

  const int64_t dh = cfg.head_dim();
  const S inv_sqrt_dh = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  for (const auto& L : p_.layers) {
    Id q = linear(x, L.wq, L.bq);
    Id k = linear(x, L.wk, L.bk);
    Id v = linear(x, L.wv, L.bv);
    std::vector<Id> heads;
    heads.reserve(static_cast<size_t>(cfg.heads));
    for (int64_t h = 0; h < cfg.heads; ++h) {
      const int64_t c0 = h * dh, c1 = (h + 1) * dh;
      Id qh = g_.slice_cols(q, c0, c1);
      Id kh = g_.slice_cols(k, c0, c1);
      Id vh = g_.slice_cols(v, c0, c1);
      Id scores = g_.affine(g_.matmul_nt(qh, kh), inv_sqrt_dh, S(0));
      if (key_mask >= 0) scores = g_.add(scores, key_mask);
      Id probs = maybe_dropout(g_.softmax_rows(scores));
      heads.push_back(g_.matmul(probs, vh));
    }
    Id attn = maybe_dropout(linear(g_.concat_cols(heads), L.wo, L.bo));
    x = g_.layer_norm(g_.add(x, attn), g_.param(L.ln1_g), g_.param(L.ln1_b),
                      static_cast<S>(1e-12));
    Id ffn = maybe_dropout(linear(g_.gelu(linear(x, L.w1, L.b1)), L.w2, L.b2));
    x = g_.layer_norm(g_.add(x, ffn), g_.param(L.ln2_g), g_.param(L.ln2_b),
                      static_cast<S>(1e-12));
  }
  return x;
}

template <class S>
typename ModelForward<S>::Id ModelForward<S>::gather_sep(Id h,
                                                         const std::vector<int32_t>& seps) {
  std::vector<int64_t> idx(seps.begin(), seps.end());
  return g_.rows_gather(h, std::move(idx));
}

template <class S>
typename ModelForward<S>::Id ModelForward<S>::add_segment_positions(Id h_sep) {
  const int64_t k = g_.val(h_sep).rows();
  if (k > p_.cfg.max_segments)
    throw DataError("segment count " + std::to_string(k) + " exceeds max_segments " +
                    std::to_string(p_.cfg.max_segments));
  std::vector<int64_t> idx(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) idx[static_cast<size_t>(i)] = i;
  return g_.add(h_sep, g_.rows_gather(g_.param(p_.segpos), std::move(idx)));
}

template <class S>
typename ModelForward<S>::Id ModelForward<S>::pointer_logits(Id h_sep_prime) {
  Id q = g_.matmul_nt(h_sep_prime, g_.param(p_.ptr_wquery));
  Id k = g_.matmul_nt(h_sep_prime, g_.param(p_.ptr_wkey));
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(p_.cfg.q())));
  return g_.affine(g_.matmul_nt(q, k), scale, S(0));
}

template <class S>
typename ModelForward<S>::Id ModelForward<S>::so_loss(Id ptr_logits,
                                                      const std::vector<int32_t>& y) {
  const int64_t k = g_.val(ptr_logits).rows();
  if (static_cast<int64_t>(y.size()) != k)
    throw DataError("so_loss: " + std::to_string(y.size()) + " targets for K=" +
                    std::to_string(k));
  std::vector<bool> seen(static_cast<size_t>(k), false);
  for (int32_t v : y) {
    if (v < 0 || v >= k || seen[static_cast<size_t>(v)])
      throw DataError("so_loss: targets are not a permutation of [0,K)");
    seen[static_cast<size_t>(v)] = true;
  }
  return g_.cross_entropy_rows(ptr_logits, y, Reduction::sum);
}

template <class S>
std::optional<typename ModelForward<S>::Id> ModelForward<S>::mlm_loss(Id h,
                                                                      const PackedSample& sample,
                                                                      SampleStats& stats) {
  std::vector<int64_t> positions;
  std::vector<int32_t> targets;
  for (size_t i = 0; i < sample.mlm_labels.size(); ++i) {
    if (sample.mlm_labels[i] != -1) {
      positions.push_back(static_cast<int64_t>(i));
      targets.push_back(sample.mlm_labels[i]);
    }
  }
  if (positions.empty()) return std::nullopt;
  Id hp = g_.rows_gather(h, std::move(positions));
  Id logits = g_.add_bias_rows(g_.matmul_nt(hp, g_.param(p_.tok_embed)), g_.param(p_.mlm_bias));
  Id loss = g_.cross_entropy_rows(logits, targets, Reduction::mean);
  const Tensor<S>& lv = g_.val(logits);
  const int64_t m = lv.rows(), n = lv.cols();
  for (int64_t i = 0; i < m; ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < n; ++j)
      if (lv.data[static_cast<size_t>(i * n + j)] > lv.data[static_cast<size_t>(i * n + best)])
        best = j;
    if (best == targets[static_cast<size_t>(i)]) ++stats.mlm_correct;
  }
  stats.mlm_total += m;
  stats.mlm_loss = static_cast<double>(g_.val(loss).data[0]);
  return loss;
}

template <class S>
typename ModelForward<S>::Id ModelForward<S>::nsp_loss(Id h, int8_t nsp_label,
                                                       SampleStats& stats) {
  if (nsp_label < 0) throw DataError("nsp loss requires an nsp label");
  Id h0 = g_.rows_gather(h, {0});
  Id logits = linear(h0, p_.nsp_w, p_.nsp_b);
  Id loss = g_.cross_entropy_rows(logits, {static_cast<int32_t>(nsp_label)}, Reduction::mean);
  const Tensor<S>& lv = g_.val(logits);
  const int pred = lv.data[1] > lv.data[0] ? 1 : 0;
  if (pred == nsp_label) ++stats.nsp_correct;
  ++stats.nsp_total;
  stats.nsp_loss = static_cast<double>(g_.val(loss).data[0]);
  return loss;
}

namespace {

template <class S>
void record_row_scores(const Tensor<S>& probs, SampleStats& stats, bool argmax_pred) {
  const int64_t m = probs.rows(), n = probs.cols();
  for (int64_t i = 0; i < m; ++i) {
    std::vector<double> row(static_cast<size_t>(n));
    int64_t best = 0;
    for (int64_t j = 0; j < n; ++j) {
      row[static_cast<size_t>(j)] = static_cast<double>(probs.data[static_cast<size_t>(i * n + j)]);
      if (probs.data[static_cast<size_t>(i * n + j)] > probs.data[static_cast<size_t>(i * n + best)])
        best = j;
    }
    stats.label_scores.push_back(std::move(row));
    if (argmax_pred) stats.class_pred.push_back(static_cast<int32_t>(best));
  }
}

}  // namespace

template <class S>
typename ModelForward<S>::Id ModelForward<S>::multiclass_loss(Id h_sep,
                                                              const std::vector<int32_t>& targets,
                                                              SampleStats& stats) {
  Id logits = linear(h_sep, p_.cls_w, p_.cls_b);
  for (int32_t t : targets)
    if (t < 0 || t >= p_.cfg.num_labels)
      throw DataError("label id " + std::to_string(t) + " outside [0," +
                      std::to_string(p_.cfg.num_labels) + ")");
  Id loss = g_.cross_entropy_rows(logits, targets, Reduction::mean);
  record_row_scores(softmax_rows_value(g_.val(logits)), stats, true);
  stats.head_loss = static_cast<double>(g_.val(loss).data[0]);
  return loss;
}

template <class S>
typename ModelForward<S>::Id ModelForward<S>::multilabel_loss(
    Id h_sep, const std::vector<std::vector<int32_t>>& sets, const Tensor<S>& class_weights,
    SampleStats& stats) {
  const int64_t k = g_.val(h_sep).rows();
  const int64_t r = p_.cfg.num_labels;
  if (static_cast<int64_t>(sets.size()) != k)
    throw DataError("multilabel: " + std::to_string(sets.size()) + " label sets for K=" +
                    std::to_string(k));
  if (!class_weights.data.empty() &&
      (class_weights.rank() != 1 || class_weights.dim(0) != r))
    throw ConfigError("multilabel: class weight vector must have length " + std::to_string(r));
  Tensor<S> targets = Tensor<S>::zeros({k, r});
  for (int64_t i = 0; i < k; ++i) {
    for (int32_t c : sets[static_cast<size_t>(i)]) {
      if (c < 0 || c >= r)
        throw DataError("label id " + std::to_string(c) + " outside [0," + std::to_string(r) +
                        ")");
      targets.data[static_cast<size_t>(i * r + c)] = S(1);
    }
  }
  Id logits = linear(h_sep, p_.cls_w, p_.cls_b);
  Id loss = g_.bce_logits(logits, std::move(targets), class_weights);
  // Scores are plain sigmoids of the logits.
  Tensor<S> scores = g_.val(logits);
  for (auto& e : scores.data) e = S(1) / (S(1) + std::exp(-e));
  record_row_scores(scores, stats, false);
  stats.head_loss = static_cast<double>(g_.val(loss).data[0]);
  return loss;
}

template <class S>
typename ModelForward<S>::Id ModelForward<S>::gru_loss(Id h_sep,
                                                       const std::vector<int32_t>& targets,
                                                       bool teacher_forcing,
                                                       SampleStats& stats) {
  const int64_t k = g_.val(h_sep).rows();
  const int64_t r = p_.cfg.num_labels;
  if (static_cast<int64_t>(targets.size()) != k)
    throw DataError("gru head: " + std::to_string(targets.size()) + " targets for K=" +
                    std::to_string(k));
  for (int32_t t : targets)
    if (t < 0 || t >= r)
      throw DataError("label id " + std::to_string(t) + " outside [0," + std::to_string(r) + ")");
  Id h_prev = g_.constant(Tensor<S>::zeros({1, p_.cfg.d}));
  Id total = -1;
  int64_t prev_label = r;  // start-label row
  for (int64_t i = 0; i < k; ++i) {
    Id xi = g_.concat_cols(std::vector<Id>{g_.rows_gather(h_sep, {i}),
                                           g_.rows_gather(g_.param(p_.label_embed), {prev_label})});
    Id z = g_.sigmoid(g_.add(linear(xi, p_.gru_wz, p_.gru_bz),
                             g_.matmul_nt(h_prev, g_.param(p_.gru_uz))));
    Id rr = g_.sigmoid(g_.add(linear(xi, p_.gru_wr, p_.gru_br),
                              g_.matmul_nt(h_prev, g_.param(p_.gru_ur))));
    Id hc = g_.tanh_act(g_.add(linear(xi, p_.gru_wh, p_.gru_bh),
                               g_.matmul_nt(g_.mul(rr, h_prev), g_.param(p_.gru_uh))));
    Id h_new = g_.add(g_.mul(g_.affine(z, S(-1), S(1)), h_prev), g_.mul(z, hc));
    Id logits = linear(h_new, p_.gru_out_w, p_.gru_out_b);
    Id ce = g_.cross_entropy_rows(logits, {targets[static_cast<size_t>(i)]}, Reduction::sum);
    total = (total < 0) ? ce : g_.add(total, ce);
    const Tensor<S>& lv = g_.val(logits);
    int64_t best = 0;
    for (int64_t j = 1; j < r; ++j)
      if (lv.data[static_cast<size_t>(j)] > lv.data[static_cast<size_t>(best)]) best = j;
    stats.class_pred.push_back(static_cast<int32_t>(best));
    record_row_scores(softmax_rows_value(lv), stats, false);
    prev_label = teacher_forcing ? targets[static_cast<size_t>(i)] : best;
    h_prev = h_new;
  }
  stats.head_loss = static_cast<double>(g_.val(total).data[0]);
  return total;
}

namespace {

template <class S>
std::vector<int32_t> argmax_rows(const Tensor<S>& a) {
  std::vector<int32_t> out;
  const int64_t m = a.rows(), n = a.cols();
  out.reserve(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < n; ++j)
      if (a.data[static_cast<size_t>(i * n + j)] > a.data[static_cast<size_t>(i * n + best)])
        best = j;
    out.push_back(static_cast<int32_t>(best));
  }
  return out;
}

}  // namespace

std::vector<int32_t> so_predict(const Tensor<float>& a) { return argmax_rows(a); }
std::vector<int32_t> so_predict(const Tensor<double>& a) { return argmax_rows(a); }

template <class S>
SampleStats run_sample(const PackedSample& sample, const ModelParams<S>& params, TrainMode mode,
                       int32_t pad_id, bool training, uint64_t seed, uint64_t epoch,
                       uint64_t step, const Tensor<S>* class_weights,
                       std::vector<Tensor<S>>* grads_out) {
  Graph<S> g;
  RngStream drop(seed, rng_purpose::dropout, mix_key(sample.unit_key, step), epoch);
  ModelForward<S> fwd(g, params, training, &drop);
  SampleStats st;
  using Id = typename Graph<S>::Id;
  Id h = fwd.encode(sample, pad_id);
  std::vector<Id> losses;

  if (mode == TrainMode::mlm_so || mode == TrainMode::mlm_only || mode == TrainMode::mlm_nsp) {
    if (auto l = fwd.mlm_loss(h, sample, st)) losses.push_back(*l);
  }
  if (mode == TrainMode::mlm_so) {
    Id hsep = fwd.gather_sep(h, sample.sep_positions);
    Id hsp = fwd.add_segment_positions(hsep);
    Id logits = fwd.pointer_logits(hsp);
    Id so = fwd.so_loss(logits, sample.so_targets);
    losses.push_back(so);
    st.so_loss = static_cast<double>(g.val(so).data[0]);
    Tensor<S> a = softmax_rows_value(g.val(logits));
#ifndef NDEBUG
    for (int64_t i = 0; i < a.rows(); ++i) {
      S sum = S(0);
      for (int64_t j = 0; j < a.cols(); ++j) sum += a.data[static_cast<size_t>(i * a.cols() + j)];
      assert(std::abs(static_cast<double>(sum) - 1.0) < 1e-5);
    }
#endif
    st.so_pred = argmax_rows(a);
    st.so_present = true;
    st.so_total = a.rows();
    bool exact = true;
    for (int64_t i = 0; i < a.rows(); ++i) {
      if (st.so_pred[static_cast<size_t>(i)] == sample.so_targets[static_cast<size_t>(i)])
        ++st.so_correct;
      else
        exact = false;
    }
    st.so_exact = exact;
  }
  if (mode == TrainMode::mlm_nsp) losses.push_back(fwd.nsp_loss(h, sample.nsp_label, st));
  if (mode == TrainMode::head) {
    if (sample.segment_labels.empty())
      throw DataError("classifier training requires per-segment labels");
    Id hsep = fwd.gather_sep(h, sample.sep_positions);
    if (params.cfg.head == "linear" || params.cfg.head == "gru") {
      std::vector<int32_t> targets;
      targets.reserve(sample.segment_labels.size());
      for (const auto& set : sample.segment_labels) {
        if (set.size() != 1)
          throw DataError("multi-class head requires exactly one label per segment");
        targets.push_back(set[0]);
      }
      if (params.cfg.head == "linear")
        losses.push_back(fwd.multiclass_loss(hsep, targets, st));
      else
        losses.push_back(fwd.gru_loss(hsep, targets, training, st));
    } else if (params.cfg.head == "multilabel") {
      static const Tensor<S> kNoWeights;
      losses.push_back(fwd.multilabel_loss(hsep, sample.segment_labels,
                                           class_weights ? *class_weights : kNoWeights, st));
    } else {
      throw ConfigError("model has no classifier head configured");
    }
  }

  if (losses.empty()) {
    st.loss = 0.0;
    if (grads_out) {
      grads_out->clear();
      for (const Param<S>* p : params.all()) grads_out->push_back(Tensor<S>::zeros(p->value.shape));
    }
    return st;
  }
  Id total = losses[0];
  for (size_t i = 1; i < losses.size(); ++i) total = g.add(total, losses[i]);
  st.loss = static_cast<double>(g.val(total).data[0]);
  check_finite(g.val(total), "loss");
  if (grads_out) {
    g.backward(total);
    grads_out->clear();
    for (const Param<S>* p : params.all()) grads_out->push_back(g.param_grad(*p));
  }
  return st;
}

template class ModelForward<float>;
template class ModelForward<double>;
template struct ModelParams<float>;
template struct ModelParams<double>;
template SampleStats run_sample<float>(const PackedSample&, const ModelParams<float>&, TrainMode,
                                       int32_t, bool, uint64_t, uint64_t, uint64_t,
                                       const Tensor<float>*, std::vector<Tensor<float>>*);
template SampleStats run_sample<double>(const PackedSample&, const ModelParams<double>&,
                                        TrainMode, int32_t, bool, uint64_t, uint64_t, uint64_t,
                                        const Tensor<double>*, std::vector<Tensor<double>>*);

}  // namespace segorder
