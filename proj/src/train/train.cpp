// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "train/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "core/rng.hpp"
#include "train/checkpoint.hpp"

namespace segorder {

namespace {

double now_sec() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

void emit(std::vector<MetricLine>& sink, std::ostream* log, int64_t step, const std::string& split,
          const std::string& metric, double value) {
  sink.push_back({step, split, metric, value});
  if (log) {
    std::ostringstream line;
    line << step << '\t' << split << '\t' << metric << '\t' << std::setprecision(17) << value
         << '\n';
    *log << line.str() << std::flush;
  }
}

void emit_report(std::vector<MetricLine>& sink, std::ostream* log, const MetricReport& report,
                 const std::string& split) {
  for (const auto& [name, value] : report.values) emit(sink, log, report.step, split, name, value);
}

/// Runs samples[first..last) with run_sample, filling per-index slots; used
/// both single-threaded and as a worker body. Harvest stays index-ordered.
template <class S>
void run_range(const std::vector<PackedSample>& samples, const std::vector<size_t>& picks,
               size_t first, size_t last, const ModelParams<S>& params, TrainMode mode,
               int32_t pad_id, bool training, uint64_t seed, uint64_t epoch, uint64_t step,
               const Tensor<S>* class_weights, std::vector<SampleStats>* stats_out,
               std::vector<std::vector<Tensor<S>>>* grads_out) {
  for (size_t i = first; i < last; ++i) {
    const PackedSample& s = samples[picks[i]];
    std::vector<Tensor<S>>* g = grads_out ? &(*grads_out)[i] : nullptr;
    (*stats_out)[i] = run_sample<S>(s, params, mode, pad_id, training, seed, epoch, step,
                                    class_weights, g);
  }
}

template <class S>
void run_batch(const std::vector<PackedSample>& samples, const std::vector<size_t>& picks,
               const ModelParams<S>& params, TrainMode mode, int32_t pad_id, bool training,
               uint64_t seed, uint64_t epoch, uint64_t step, const Tensor<S>* class_weights,
               int threads, std::vector<SampleStats>& stats_out,
               std::vector<std::vector<Tensor<S>>>* grads_out) {
  size_t n = picks.size();
  stats_out.assign(n, SampleStats{});
  if (grads_out) grads_out->assign(n, {});
  int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (workers == 1) {
    run_range<S>(samples, picks, 0, n, params, mode, pad_id, training, seed, epoch, step,
                 class_weights, &stats_out, grads_out);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mu;
  for (int w = 0; w < workers; ++w) {
    size_t lo = n * static_cast<size_t>(w) / static_cast<size_t>(workers);
    size_t hi = n * static_cast<size_t>(w + 1) / static_cast<size_t>(workers);
    pool.emplace_back([&, lo, hi] {
      try {
        run_range<S>(samples, picks, lo, hi, params, mode, pad_id, training, seed, epoch, step,
                     class_weights, &stats_out, grads_out);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Ordered accumulation keeps float summation deterministic across thread
/// counts: grads land in index slots first, then fold left-to-right.
template <class S>
void fold_gradients(const std::vector<std::vector<Tensor<S>>>& per_sample,
                    std::vector<Tensor<S>>& acc) {
  for (const auto& gs : per_sample) {
    if (gs.empty()) continue;
    if (acc.empty()) {
      acc = gs;
      continue;
    }
    for (size_t p = 0; p < gs.size(); ++p) {
      S* a = acc[p].data.data();
      const S* b = gs[p].data.data();
      for (size_t k = 0; k < gs[p].data.size(); ++k) a[k] += b[k];
    }
  }
}

template <class S>
MetricReport pool_eval(const std::vector<SampleStats>& stats) {
  MetricReport r;
  int64_t mlm_c = 0, mlm_t = 0, so_c = 0, so_t = 0, nsp_c = 0, nsp_t = 0;
  int64_t so_samples = 0, so_exact = 0;
  int64_t n_mlm = 0, n_so = 0, n_nsp = 0;
  double loss = 0, mlm_loss = 0, so_loss = 0, nsp_loss = 0;
  for (const auto& st : stats) {
    loss += st.loss;
    mlm_c += st.mlm_correct;
    mlm_t += st.mlm_total;
    so_c += st.so_correct;
    so_t += st.so_total;
    nsp_c += st.nsp_correct;
    nsp_t += st.nsp_total;
    if (st.mlm_total > 0) {
      mlm_loss += st.mlm_loss;
      ++n_mlm;
    }
    if (st.so_present) {
      so_loss += st.so_loss;
      ++so_samples;
      if (st.so_exact) ++so_exact;
      ++n_so;
    }
    if (st.nsp_total > 0) {
      nsp_loss += st.nsp_loss;
      ++n_nsp;
    }
  }
  size_t n = stats.size();
  r.values["loss"] = n ? loss / static_cast<double>(n) : 0.0;
  if (n_mlm) {
    r.values["mlm_loss"] = mlm_loss / static_cast<double>(n_mlm);
    r.values["mlm_accuracy"] = mlm_t ? static_cast<double>(mlm_c) / static_cast<double>(mlm_t) : 0.0;
  }
  if (n_so) {
    r.values["so_loss"] = so_loss / static_cast<double>(n_so);
    r.values["so_segment_accuracy"] = so_t ? static_cast<double>(so_c) / static_cast<double>(so_t) : 0.0;
    r.values["so_exact_accuracy"] = static_cast<double>(so_exact) / static_cast<double>(so_samples);
  }
  if (n_nsp) {
    r.values["nsp_loss"] = nsp_loss / static_cast<double>(n_nsp);
    r.values["nsp_accuracy"] = nsp_t ? static_cast<double>(nsp_c) / static_cast<double>(nsp_t) : 0.0;
  }
  return r;
}

/// Training-epoch view of a stored sample: epoch 0 is the stored preparation
/// itself; later epochs invert it and re-draw with the run seed.
PackedSample sample_for_epoch(const PackedSample& stored, const Vocab& vocab,
                              const PackingConfig& cfg, uint64_t seed, uint64_t epoch) {
  PackedSample s = stored;
  if (epoch == 0) return s;
  restore_sample(s);
  prepare_sample(s, vocab, cfg, seed, epoch);
  return s;
}

std::vector<size_t> epoch_order(size_t n, uint64_t seed, uint64_t epoch) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  RngStream rng(seed, rng_purpose::order, 0, epoch);
  rng.shuffle(idx);
  return idx;
}

template <class S>
void save(const std::string& dir, const std::string& name, ModelParams<S>& params, AdamW<S>& opt,
          int64_t step, uint64_t epoch, uint64_t seed, std::string* out_path) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  CheckpointMeta meta;
  meta.config = params.cfg;
  meta.step = static_cast<uint64_t>(step);
  meta.epoch = epoch;
  meta.seed = seed;
  meta.adam_t = static_cast<uint64_t>(opt.t());
  std::string path = dir + "/" + name;
  write_checkpoint<S>(path, params, &opt.moment1(), &opt.moment2(), meta);
  if (out_path) *out_path = path;
}

}  // namespace

template <class S>
MetricReport evaluate_pretrain(const ModelParams<S>& params, const std::vector<PackedSample>& samples,
                               TrainMode mode, int32_t pad_id, int threads) {
  std::vector<size_t> picks(samples.size());
  for (size_t i = 0; i < picks.size(); ++i) picks[i] = i;
  std::vector<SampleStats> stats;
  run_batch<S>(samples, picks, params, mode, pad_id, /*training=*/false, /*seed=*/0, /*epoch=*/0,
               /*step=*/0, nullptr, threads, stats, nullptr);
  MetricReport r = pool_eval<S>(stats);
  r.wall_time_sec = now_sec();
  return r;
}

template <class S>
MetricReport evaluate_classification(const ModelParams<S>& params,
                                     const std::vector<PackedSample>& samples, int32_t pad_id,
                                     int threads) {
  std::vector<size_t> picks(samples.size());
  for (size_t i = 0; i < picks.size(); ++i) picks[i] = i;
  std::vector<SampleStats> stats;
  run_batch<S>(samples, picks, params, TrainMode::head, pad_id, /*training=*/false, 0, 0, 0,
               nullptr, threads, stats, nullptr);

  bool multilabel = params.cfg.head == "multilabel";
  MetricReport r;
  double loss = 0;
  std::vector<int32_t> pred_flat, gold_flat;
  std::vector<std::vector<int32_t>> pred_sets, gold_sets;
  std::vector<std::vector<double>> scores;
  for (size_t i = 0; i < samples.size(); ++i) {
    const PackedSample& s = samples[i];
    const SampleStats& st = stats[i];
    loss += st.loss;
    if (s.segment_labels.empty()) throw DataError("evaluation sample has no labels");
    for (int32_t k = 0; k < s.segment_count(); ++k) {
      const std::vector<int32_t>& gold = s.segment_labels[static_cast<size_t>(k)];
      scores.push_back(st.label_scores[static_cast<size_t>(k)]);
      if (multilabel) {
        std::vector<int32_t> pred;
        const auto& row = st.label_scores[static_cast<size_t>(k)];
        for (size_t c = 0; c < row.size(); ++c) {
          if (row[c] > 0.5) pred.push_back(static_cast<int32_t>(c));
        }
        pred_sets.push_back(std::move(pred));
        gold_sets.push_back(gold);
      } else {
        if (gold.size() != 1) throw DataError("single-label head given a non-singleton label set");
        pred_flat.push_back(st.class_pred[static_cast<size_t>(k)]);
        gold_flat.push_back(gold[0]);
        gold_sets.push_back(gold);
      }
    }
  }
  r.values["loss"] = samples.empty() ? 0.0 : loss / static_cast<double>(samples.size());
  if (multilabel) {
    F1Result f1 = f1_multilabel(pred_sets, gold_sets, params.cfg.num_labels);
    r.values["f1_micro"] = f1.micro;
    r.values["f1_macro"] = f1.macro;
  } else {
    F1Result f1 = f1_multiclass(pred_flat, gold_flat, params.cfg.num_labels);
    r.values["f1_micro"] = f1.micro;
    r.values["f1_macro"] = f1.macro;
  }
  bool any_relevant = false;
  for (const auto& g : gold_sets) any_relevant |= !g.empty();
  if (any_relevant) {
    r.values["map@3"] = map_at_k(scores, gold_sets, 3);
    r.values["map@5"] = map_at_k(scores, gold_sets, 5);
  }
  r.wall_time_sec = now_sec();
  return r;
}

template <class S>
TrainResult pretrain(ModelParams<S>& params, const std::vector<PackedSample>& train,
                     const std::vector<PackedSample>& val, const Vocab& vocab,
                     const PretrainOptions& opt, std::ostream* metrics_log) {
  const TrainLoopOptions& loop = opt.loop;
  loop.optim.validate();
  loop.packing.validate();
  if (train.empty()) throw DataError("pre-training requires a non-empty training shard");
  if (opt.mode == TrainMode::head) throw ConfigError("head mode is a fine-tuning objective");
  if (opt.mode == TrainMode::mlm_so && !params.cfg.use_pointer) {
    throw ConfigError("mlm+so objective requires use_pointer=true");
  }
  if (opt.mode == TrainMode::mlm_nsp && !params.cfg.use_nsp) {
    throw ConfigError("mlm+nsp objective requires use_nsp=true");
  }

  const int32_t pad_id = 0;
  const int64_t eb = loop.optim.batch_size * loop.optim.accumulation_steps;
  const int64_t n = static_cast<int64_t>(train.size());
  const int64_t batches_per_epoch = (n + eb - 1) / eb;

  AdamW<S> adam(params.all(), loop.optim);
  int64_t start_step = 0;
  if (!loop.resume.empty()) {
    Checkpoint<S> ckpt = read_checkpoint<S>(loop.resume);
    if (ckpt.meta.seed != loop.seed) {
      throw DataError("checkpoint seed " + std::to_string(ckpt.meta.seed) +
                      " does not match run seed " + std::to_string(loop.seed));
    }
    apply_checkpoint_strict<S>(ckpt, params, &adam.moment1(), &adam.moment2());
    adam.set_t(static_cast<int64_t>(ckpt.meta.adam_t));
    start_step = static_cast<int64_t>(ckpt.meta.step);
  }

  TrainResult result;
  result.steps_done = start_step;
  uint64_t epoch_cached = UINT64_MAX;
  std::vector<size_t> order;

  for (int64_t step = start_step; step < loop.optim.total_steps; ++step) {
    uint64_t epoch = static_cast<uint64_t>(step / batches_per_epoch);
    if (epoch != epoch_cached) {
      order = epoch_order(static_cast<size_t>(n), loop.seed, epoch);
      epoch_cached = epoch;
    }
    int64_t b = step % batches_per_epoch;
    int64_t lo = b * eb;
    int64_t hi = std::min<int64_t>(lo + eb, n);

    std::vector<PackedSample> batch;
    batch.reserve(static_cast<size_t>(hi - lo));
    std::vector<size_t> picks;
    for (int64_t i = lo; i < hi; ++i) {
      batch.push_back(sample_for_epoch(train[order[static_cast<size_t>(i)]], vocab, loop.packing,
                                       loop.seed, epoch));
      picks.push_back(static_cast<size_t>(batch.size() - 1));
    }

    std::vector<SampleStats> stats;
    std::vector<std::vector<Tensor<S>>> per_sample_grads;
    run_batch<S>(batch, picks, params, opt.mode, pad_id, /*training=*/true, loop.seed, epoch,
                 static_cast<uint64_t>(step), nullptr, loop.threads, stats, &per_sample_grads);

    std::vector<Tensor<S>> grads;
    fold_gradients<S>(per_sample_grads, grads);
    double batch_n = static_cast<double>(picks.size());
    double mean_loss = 0;
    for (const auto& st : stats) mean_loss += st.loss;
    mean_loss /= batch_n;
    if (!std::isfinite(mean_loss)) {
      throw NumericError("non-finite batch loss at step " + std::to_string(step + 1) +
                         "; last-good checkpoint retained");
    }
    for (auto& g : grads) {
      for (S& v : g.data) v = static_cast<S>(static_cast<double>(v) / batch_n);
    }
    clip_gradients<S>(grads, loop.optim.clip_threshold, loop.optim.clip_mode);
    double lr = lr_at(step + 1, loop.optim);
    adam.step(grads, lr);

    result.step_losses.push_back(mean_loss);
    emit(result.log, metrics_log, step + 1, "train", "loss", mean_loss);
    emit(result.log, metrics_log, step + 1, "train", "lr", lr);

    bool last = (step + 1 == loop.optim.total_steps);
    if (!val.empty() && loop.eval_every > 0 && ((step + 1) % loop.eval_every == 0 || last)) {
      MetricReport rep = evaluate_pretrain<S>(params, val, opt.mode, pad_id, loop.threads);
      rep.step = step + 1;
      emit_report(result.log, metrics_log, rep, "val");
      result.final_val = rep;
    }
    if (loop.checkpoint_every > 0 && (step + 1) % loop.checkpoint_every == 0 && !last) {
      save<S>(loop.out_dir, "step" + std::to_string(step + 1) + ".ckpt", params, adam, step + 1,
              epoch, loop.seed, nullptr);
    }
    result.steps_done = step + 1;
  }

  uint64_t final_epoch =
      result.steps_done > 0 ? static_cast<uint64_t>((result.steps_done - 1) / batches_per_epoch) : 0;
  save<S>(loop.out_dir, "last.ckpt", params, adam, result.steps_done, final_epoch, loop.seed,
          &result.last_checkpoint);
  return result;
}

template <class S>
Tensor<S> class_weights_from(const std::vector<Document>& docs, int64_t num_labels) {
  if (num_labels <= 0) throw ConfigError("class weights need num_labels > 0");
  std::vector<int64_t> freq(static_cast<size_t>(num_labels), 0);
  for (const Document& d : docs) {
    if (!d.has_labels()) continue;
    for (const auto& set : d.labels) {
      for (int32_t c : set) {
        if (c < 0 || c >= num_labels) {
          throw DataError("label id " + std::to_string(c) + " out of range for " +
                          std::to_string(num_labels) + " classes");
        }
        ++freq[static_cast<size_t>(c)];
      }
    }
  }
  // Rank-1: the loss kernels broadcast weights per class column.
  Tensor<S> w(std::vector<int64_t>{num_labels});
  double sum_present = 0;
  int64_t present = 0;
  for (int64_t c = 0; c < num_labels; ++c) {
    if (freq[static_cast<size_t>(c)] > 0) {
      double raw = 1.0 / static_cast<double>(freq[static_cast<size_t>(c)]);
      w.data[static_cast<size_t>(c)] = static_cast<S>(raw);
      sum_present += raw;
      ++present;
    }
  }
  double scale = present > 0 ? static_cast<double>(present) / sum_present : 1.0;
  for (int64_t c = 0; c < num_labels; ++c) {
    if (freq[static_cast<size_t>(c)] > 0) {
      w.data[static_cast<size_t>(c)] =
          static_cast<S>(static_cast<double>(w.data[static_cast<size_t>(c)]) * scale);
    } else {
      w.data[static_cast<size_t>(c)] = static_cast<S>(1);
    }
  }
  return w;
}

std::vector<int64_t> oversample_counts(const std::vector<Document>& docs, double factor,
                                       uint64_t seed, uint64_t epoch) {
  if (factor < 1.0) throw ConfigError("oversample factor must be >= 1");
  std::vector<int64_t> counts(docs.size(), 1);
  int64_t whole = static_cast<int64_t>(std::floor(factor));
  double frac = factor - static_cast<double>(whole);
  for (size_t i = 0; i < docs.size(); ++i) {
    bool labeled = false;
    for (const auto& set : docs[i].labels) labeled |= !set.empty();
    if (!labeled) continue;
    RngStream rng(seed, rng_purpose::oversample, static_cast<uint64_t>(i), epoch);
    counts[i] = whole + ((frac > 0.0 && rng.next_double() < frac) ? 1 : 0);
  }
  return counts;
}

namespace {

/// Deterministic per-epoch fine-tuning dataset: oversampled documents packed
/// either dynamically (fresh L draws each epoch and copy) or greedily.
std::vector<PackedSample> finetune_epoch_samples(const std::vector<Document>& docs,
                                                 const Vocab& vocab, const FinetuneOptions& opt,
                                                 uint64_t epoch) {
  PackingConfig cfg = opt.loop.packing;
  cfg.shuffle = false;  // fine-tuning keeps document order
  std::vector<int64_t> counts =
      opt.oversample ? oversample_counts(docs, opt.oversample_factor, opt.loop.seed, epoch)
                     : std::vector<int64_t>(docs.size(), 1);
  std::vector<PackedSample> out;
  for (size_t di = 0; di < docs.size(); ++di) {
    for (int64_t copy = 0; copy < counts[di]; ++copy) {
      std::vector<PackedSample> got;
      if (opt.dynamic) {
        RngStream rng(opt.loop.seed, rng_purpose::dynamic_l,
                      mix_key(fnv1a64(docs[di].id.data(), docs[di].id.size()),
                              static_cast<uint64_t>(copy)),
                      epoch);
        got = dynamic_sample(docs[di], vocab, cfg, rng);
      } else {
        got = pack_document(docs[di], vocab, cfg);
      }
      for (auto& s : got) out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace

template <class S>
TrainResult finetune(ModelParams<S>& params, const std::vector<Document>& train_docs,
                     const std::vector<Document>& val_docs, const Vocab& vocab,
                     const FinetuneOptions& opt, std::ostream* metrics_log) {
  const TrainLoopOptions& loop = opt.loop;
  if (opt.epochs <= 0) throw ConfigError("fine-tuning needs epochs > 0");
  if (params.cfg.head == "none") throw ConfigError("fine-tuning requires a classification head");
  if (params.cfg.num_labels <= 0) throw ConfigError("fine-tuning requires num_labels > 0");
  loop.packing.validate();
  if (train_docs.empty()) throw DataError("fine-tuning requires training documents");
  for (const Document& d : train_docs) {
    if (!d.has_labels()) throw DataError("training document '" + d.id + "' has no labels");
  }

  const int32_t pad_id = 0;
  const bool multilabel = params.cfg.head == "multilabel";
  const std::string select_metric = multilabel ? "map@3" : "f1_micro";

  Tensor<S> weights;
  const Tensor<S>* weights_ptr = nullptr;
  if (opt.class_weighting) {
    if (!multilabel) throw ConfigError("class weighting applies to the multilabel head only");
    weights = class_weights_from<S>(train_docs, params.cfg.num_labels);
    weights_ptr = &weights;
  }

  // Epoch datasets are pure functions of (seed, epoch); a dry pass fixes the
  // schedule length before any update so lr_at sees the true total.
  std::vector<int64_t> steps_in_epoch(static_cast<size_t>(opt.epochs), 0);
  const int64_t eb = loop.optim.batch_size * loop.optim.accumulation_steps;
  int64_t total_steps = 0;
  for (int64_t e = 0; e < opt.epochs; ++e) {
    int64_t ns = static_cast<int64_t>(
        finetune_epoch_samples(train_docs, vocab, opt, static_cast<uint64_t>(e)).size());
    steps_in_epoch[static_cast<size_t>(e)] = (ns + eb - 1) / eb;
    total_steps += steps_in_epoch[static_cast<size_t>(e)];
  }
  if (total_steps == 0) throw DataError("fine-tuning dataset packs to zero samples");
  OptimizerConfig sched = loop.optim;
  sched.total_steps = total_steps;
  sched.validate();

  std::vector<PackedSample> val_samples;
  {
    PackingConfig vcfg = loop.packing;
    vcfg.shuffle = false;
    for (const Document& d : val_docs) {
      for (auto& s : pack_document(d, vocab, vcfg)) val_samples.push_back(std::move(s));
    }
  }

  AdamW<S> adam(params.all(), sched);
  TrainResult result;
  result.best_value = -1.0;
  int64_t step = 0;

  for (int64_t e = 0; e < opt.epochs; ++e) {
    std::vector<PackedSample> samples =
        finetune_epoch_samples(train_docs, vocab, opt, static_cast<uint64_t>(e));
    std::vector<size_t> order = epoch_order(samples.size(), loop.seed, static_cast<uint64_t>(e));
    int64_t n = static_cast<int64_t>(samples.size());

    for (int64_t lo = 0; lo < n; lo += eb) {
      int64_t hi = std::min<int64_t>(lo + eb, n);
      std::vector<size_t> picks(order.begin() + lo, order.begin() + hi);

      std::vector<SampleStats> stats;
      std::vector<std::vector<Tensor<S>>> per_sample_grads;
      run_batch<S>(samples, picks, params, TrainMode::head, pad_id, /*training=*/true, loop.seed,
                   static_cast<uint64_t>(e), static_cast<uint64_t>(step), weights_ptr,
                   loop.threads, stats, &per_sample_grads);

      std::vector<Tensor<S>> grads;
      fold_gradients<S>(per_sample_grads, grads);
      double batch_n = static_cast<double>(picks.size());
      double mean_loss = 0;
      for (const auto& st : stats) mean_loss += st.loss;
      mean_loss /= batch_n;
      if (!std::isfinite(mean_loss)) {
        throw NumericError("non-finite batch loss at step " + std::to_string(step + 1) +
                           "; last-good checkpoint retained");
      }
      for (auto& g : grads) {
        for (S& v : g.data) v = static_cast<S>(static_cast<double>(v) / batch_n);
      }
      clip_gradients<S>(grads, sched.clip_threshold, sched.clip_mode);
      double lr = lr_at(step + 1, sched);
      adam.step(grads, lr);
      ++step;
      result.step_losses.push_back(mean_loss);
      emit(result.log, metrics_log, step, "train", "loss", mean_loss);
      emit(result.log, metrics_log, step, "train", "lr", lr);
      result.steps_done = step;
    }

    if (!val_samples.empty()) {
      MetricReport rep = evaluate_classification<S>(params, val_samples, pad_id, loop.threads);
      rep.step = step;
      emit_report(result.log, metrics_log, rep, "val");
      result.final_val = rep;
      auto it = rep.values.find(select_metric);
      double value = it != rep.values.end() ? it->second : 0.0;
      if (value > result.best_value) {  // strict: ties keep the earlier step
        result.best_value = value;
        result.best_step = step;
        save<S>(loop.out_dir, "best.ckpt", params, adam, step, static_cast<uint64_t>(e), loop.seed,
                &result.best_checkpoint);
      }
    }
  }

  save<S>(loop.out_dir, "last.ckpt", params, adam, step,
          static_cast<uint64_t>(opt.epochs > 0 ? opt.epochs - 1 : 0), loop.seed,
          &result.last_checkpoint);
  return result;
}

#define SEGORDER_TRAIN_INSTANTIATE(S)                                                             \
  template MetricReport evaluate_pretrain<S>(const ModelParams<S>&,                               \
                                             const std::vector<PackedSample>&, TrainMode,         \
                                             int32_t, int);                                       \
  template MetricReport evaluate_classification<S>(const ModelParams<S>&,                         \
                                                   const std::vector<PackedSample>&, int32_t,     \
                                                   int);                                          \
  template TrainResult pretrain<S>(ModelParams<S>&, const std::vector<PackedSample>&,             \
                                   const std::vector<PackedSample>&, const Vocab&,                \
                                   const PretrainOptions&, std::ostream*);                        \
  template Tensor<S> class_weights_from<S>(const std::vector<Document>&, int64_t);                \
  template TrainResult finetune<S>(ModelParams<S>&, const std::vector<Document>&,                 \
                                   const std::vector<Document>&, const Vocab&,                    \
                                   const FinetuneOptions&, std::ostream*);

SEGORDER_TRAIN_INSTANTIATE(float)
SEGORDER_TRAIN_INSTANTIATE(double)

}  // namespace segorder
