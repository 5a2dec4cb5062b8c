// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "cli/config.hpp"

#include <set>

#include "core/common.hpp"

namespace segorder {

namespace {

using json = nlohmann::ordered_json;

json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError(what + " is not valid JSON");
  return j;
}

/// "a.b.c=value" -> nested assignment into root. Values parse as JSON when
/// possible, otherwise they are taken as strings ("head=gru" just works).
void apply_override(json& root, const std::string& kv) {
  size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + kv + "' is not of the form key=value");
  }
  std::string path = kv.substr(0, eq);
  std::string value_text = kv.substr(eq + 1);
  json value = json::parse(value_text, nullptr, false);
  if (value.is_discarded()) value = value_text;

  json* node = &root;
  size_t start = 0;
  while (true) {
    size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("override '" + kv + "' has an empty key component");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

/// Fine-tuning recipes by name; explicit config keys override preset values.
json preset_json(const std::string& name) {
  if (name == "csabstruct-like") {
    return json{{"model", {{"head", "gru"}, {"dropout", 0.1}, {"label_embed_dim", 32}}},
                {"optimizer", {{"peak_lr", 1e-4}, {"batch_size", 8}, {"accumulation_steps", 1}}},
                {"task",
                 {{"epochs", 2},
                  {"dynamic_sampling", false},
                  {"class_weighting", false},
                  {"oversampling", false}}}};
  }
  if (name == "pubmed-like") {
    return json{{"model", {{"head", "linear"}, {"dropout", 0.2}}},
                {"optimizer", {{"peak_lr", 5e-5}, {"batch_size", 4}, {"accumulation_steps", 1}}},
                {"task",
                 {{"epochs", 2},
                  {"dynamic_sampling", false},
                  {"class_weighting", false},
                  {"oversampling", false}}}};
  }
  if (name == "nicta-like") {
    return json{{"model", {{"head", "linear"}, {"dropout", 0.2}}},
                {"optimizer", {{"peak_lr", 5e-5}, {"batch_size", 4}, {"accumulation_steps", 1}}},
                {"task",
                 {{"epochs", 3},
                  {"dynamic_sampling", false},
                  {"class_weighting", false},
                  {"oversampling", false}}}};
  }
  if (name == "ifrs-like") {
    return json{{"model", {{"head", "multilabel"}, {"dropout", 0.2}}},
                {"optimizer", {{"peak_lr", 5e-5}, {"batch_size", 4}, {"accumulation_steps", 1}}},
                {"task",
                 {{"epochs", 30},
                  {"dynamic_sampling", true},
                  {"class_weighting", true},
                  {"oversampling", false}}}};
  }
  if (name == "gri-like") {
    return json{{"model", {{"head", "multilabel"}, {"dropout", 0.2}}},
                {"optimizer", {{"peak_lr", 1e-5}, {"batch_size", 4}, {"accumulation_steps", 1}}},
                {"task",
                 {{"epochs", 3},
                  {"dynamic_sampling", true},
                  {"class_weighting", true},
                  {"oversampling", true}}}};
  }
  std::string known;
  for (const auto& n : preset_names()) known += " " + n;
  throw ConfigError("unknown preset '" + name + "'; known presets:" + known);
}

/// Deep merge: overlay wins on scalar conflicts, objects merge recursively.
void merge_into(json& base, const json& overlay) {
  for (const auto& [k, v] : overlay.items()) {
    if (v.is_object() && base.contains(k) && base[k].is_object()) {
      merge_into(base[k], v);
    } else {
      base[k] = v;
    }
  }
}

/// Typed field extraction with key-level error naming. Each section walks
/// its JSON object and rejects keys it does not know.
class Section {
 public:
  Section(const json& j, std::string name) : name_(std::move(name)) {
    if (!j.is_object()) throw ConfigError("section '" + name_ + "' must be a JSON object");
    j_ = &j;
  }

  template <class T>
  void get(const char* key, T& out) {
    known_.insert(key);
    if (!j_->contains(key)) return;
    try {
      out = j_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name_ + "." + std::string(key) + "' has the wrong type");
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_->items()) {
      if (!known_.count(k)) throw ConfigError("unknown config key '" + name_ + "." + k + "'");
    }
  }

 private:
  const json* j_ = nullptr;
  std::string name_;
  std::set<std::string> known_;
};

void fill_corpus(const json& j, SynthSpec& s) {
  Section sec(j, "corpus");
  sec.get("docs", s.docs);
  sec.get("segments_min", s.segments_min);
  sec.get("segments_max", s.segments_max);
  sec.get("tokens_min", s.tokens_min);
  sec.get("tokens_max", s.tokens_max);
  std::string cue = synth_cue_name(s.cue);
  sec.get("cue", cue);
  s.cue = synth_cue_from(cue);
  sec.get("classes", s.classes);
  sec.get("label_mode", s.label_mode);
  sec.get("label_rule", s.label_rule);
  sec.get("multi_rate", s.multi_rate);
  sec.get("filler_words", s.filler_words);
  sec.get("link_words", s.link_words);
  sec.finish();
}

void fill_packing(const json& j, PackingConfig& p, bool& nsp) {
  Section sec(j, "packing");
  sec.get("context", p.context);
  sec.get("mlm_rate", p.mlm_rate);
  sec.get("mask_prob", p.mask_prob);
  sec.get("random_prob", p.random_prob);
  sec.get("keep_prob", p.keep_prob);
  sec.get("l_min", p.l_min);
  sec.get("shuffle", p.shuffle);
  sec.get("nsp", nsp);
  sec.finish();
}

void fill_model(const json& j, ModelConfig& m) {
  Section sec(j, "model");
  sec.get("d", m.d);
  sec.get("layers", m.layers);
  sec.get("heads", m.heads);
  sec.get("ffn_mult", m.ffn_mult);
  sec.get("context", m.context);
  sec.get("max_segments", m.max_segments);
  sec.get("vocab_size", m.vocab_size);
  sec.get("num_labels", m.num_labels);
  sec.get("head", m.head);
  sec.get("label_embed_dim", m.label_embed_dim);
  sec.get("dropout", m.dropout);
  sec.get("use_pointer", m.use_pointer);
  sec.get("use_nsp", m.use_nsp);
  sec.finish();
}

void fill_optimizer(const json& j, OptimizerConfig& o) {
  Section sec(j, "optimizer");
  sec.get("peak_lr", o.peak_lr);
  sec.get("weight_decay", o.weight_decay);
  sec.get("clip_threshold", o.clip_threshold);
  sec.get("clip_mode", o.clip_mode);
  sec.get("warmup_fraction", o.warmup_fraction);
  sec.get("total_steps", o.total_steps);
  sec.get("batch_size", o.batch_size);
  sec.get("accumulation_steps", o.accumulation_steps);
  sec.get("beta1", o.beta1);
  sec.get("beta2", o.beta2);
  sec.get("eps", o.eps);
  sec.finish();
}

void fill_task(const json& j, TaskConfig& t) {
  Section sec(j, "task");
  sec.get("objective", t.objective);
  sec.get("split", t.split);
  sec.get("epochs", t.epochs);
  sec.get("dynamic_sampling", t.dynamic_sampling);
  sec.get("class_weighting", t.class_weighting);
  sec.get("oversampling", t.oversampling);
  sec.get("oversample_factor", t.oversample_factor);
  sec.get("eval_every", t.eval_every);
  sec.get("checkpoint_every", t.checkpoint_every);
  sec.get("threads", t.threads);
  sec.get("precision", t.precision);
  sec.finish();
}

void fill_paths(const json& j, PathsConfig& p) {
  Section sec(j, "paths");
  sec.get("out_dir", p.out_dir);
  sec.get("corpus", p.corpus);
  sec.get("val_corpus", p.val_corpus);
  sec.get("vocab", p.vocab);
  sec.get("shard", p.shard);
  sec.get("val_shard", p.val_shard);
  sec.get("checkpoint", p.checkpoint);
  sec.get("resume", p.resume);
  sec.get("report", p.report);
  sec.get("stats", p.stats);
  sec.finish();
}

void require(bool cond, const std::string& message) {
  if (!cond) throw ConfigError(message);
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"csabstruct-like", "pubmed-like", "nicta-like",
                                                 "ifrs-like", "gri-like"};
  return names;
}

RunConfig resolve_config(const std::string& command, const std::string& file_text,
                         const std::vector<std::string>& overrides) {
  json merged = json::object();
  if (!file_text.empty()) {
    merged = parse_json(file_text, "config file");
    if (!merged.is_object()) throw ConfigError("config file must hold a JSON object");
  }
  for (const auto& kv : overrides) apply_override(merged, kv);

  json effective = json::object();
  RunConfig rc;
  if (merged.contains("preset")) {
    try {
      rc.preset = merged.at("preset").get<std::string>();
    } catch (const json::exception&) {
      throw ConfigError("config key 'preset' must be a string");
    }
    effective = preset_json(rc.preset);
  }
  merge_into(effective, merged);

  static const std::set<std::string> top_keys = {"preset", "seed",      "corpus", "packing",
                                                 "model",  "optimizer", "task",   "paths"};
  for (const auto& [k, v] : effective.items()) {
    if (!top_keys.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }

  if (effective.contains("seed")) {
    const json& s = effective.at("seed");
    // get<uint64_t> would wrap negatives silently; reject them up front.
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<int64_t>() >= 0)) {
      throw ConfigError("config key 'seed' must be a non-negative integer");
    }
    rc.seed = s.get<uint64_t>();
    rc.has_seed = true;
  }
  if (effective.contains("corpus")) fill_corpus(effective["corpus"], rc.corpus);
  if (effective.contains("packing")) fill_packing(effective["packing"], rc.packing, rc.pack_nsp);
  if (effective.contains("model")) fill_model(effective["model"], rc.model);
  if (effective.contains("optimizer")) fill_optimizer(effective["optimizer"], rc.optimizer);
  if (effective.contains("task")) fill_task(effective["task"], rc.task);
  if (effective.contains("paths")) fill_paths(effective["paths"], rc.paths);
  rc.corpus.seed = rc.seed;

  require(rc.task.precision == "f32" || rc.task.precision == "f64",
          "task.precision must be f32 or f64");
  require(rc.task.threads >= 1, "task.threads must be >= 1");
  require(rc.task.objective == "mlm+so" || rc.task.objective == "mlm-only" ||
              rc.task.objective == "mlm+nsp",
          "task.objective must be one of mlm+so, mlm-only, mlm+nsp");

  if (command == "synth") {
    require(!rc.paths.corpus.empty(), "synth needs paths.corpus (output JSONL)");
    if (rc.paths.stats.empty()) rc.paths.stats = rc.paths.corpus + ".stats";
  } else if (command == "pack") {
    require(!rc.paths.corpus.empty(), "pack needs paths.corpus (input JSONL)");
    require(!rc.paths.vocab.empty(), "pack needs paths.vocab");
    require(!rc.paths.shard.empty(), "pack needs paths.shard (output)");
    rc.packing.validate();
  } else if (command == "pretrain") {
    require(rc.has_seed, "pretrain needs an explicit seed (config key 'seed' or --seed)");
    require(!rc.paths.shard.empty(), "pretrain needs paths.shard (training shard)");
    require(!rc.paths.vocab.empty(), "pretrain needs paths.vocab");
    require(!rc.paths.out_dir.empty(), "pretrain needs paths.out_dir");
    rc.packing.validate();
    rc.optimizer.validate();
    if (rc.task.objective == "mlm-only") rc.model.use_pointer = false;
    if (rc.task.objective == "mlm+nsp") {
      rc.model.use_pointer = false;
      rc.model.use_nsp = true;
      // Pair order carries the label; epoch re-preparation must not reorder it.
      rc.packing.shuffle = false;
    }
  } else if (command == "finetune") {
    require(rc.has_seed, "finetune needs an explicit seed (config key 'seed' or --seed)");
    require(!rc.paths.corpus.empty(), "finetune needs paths.corpus (labeled training JSONL)");
    require(!rc.paths.vocab.empty(), "finetune needs paths.vocab");
    require(!rc.paths.out_dir.empty(), "finetune needs paths.out_dir");
    require(rc.model.head != "none", "finetune needs model.head (linear, multilabel, or gru)");
    require(rc.model.num_labels > 0, "finetune needs model.num_labels > 0");
    require(rc.task.epochs > 0, "finetune needs task.epochs > 0");
    rc.packing.validate();
  } else if (command == "eval") {
    require(!rc.paths.checkpoint.empty(), "eval needs paths.checkpoint");
    require(!rc.paths.vocab.empty(), "eval needs paths.vocab");
    require(!rc.paths.shard.empty() || !rc.paths.corpus.empty(),
            "eval needs paths.shard (pre-training metrics) or paths.corpus (classification)");
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  return rc;
}

nlohmann::ordered_json run_config_json(const RunConfig& rc) {
  json j = json::object();
  if (!rc.preset.empty()) j["preset"] = rc.preset;
  if (rc.has_seed) j["seed"] = rc.seed;
  j["corpus"] = {{"docs", rc.corpus.docs},
                 {"segments_min", rc.corpus.segments_min},
                 {"segments_max", rc.corpus.segments_max},
                 {"tokens_min", rc.corpus.tokens_min},
                 {"tokens_max", rc.corpus.tokens_max},
                 {"cue", synth_cue_name(rc.corpus.cue)},
                 {"classes", rc.corpus.classes},
                 {"label_mode", rc.corpus.label_mode},
                 {"label_rule", rc.corpus.label_rule},
                 {"multi_rate", rc.corpus.multi_rate},
                 {"filler_words", rc.corpus.filler_words},
                 {"link_words", rc.corpus.link_words}};
  j["packing"] = {{"context", rc.packing.context},
                  {"mlm_rate", rc.packing.mlm_rate},
                  {"mask_prob", rc.packing.mask_prob},
                  {"random_prob", rc.packing.random_prob},
                  {"keep_prob", rc.packing.keep_prob},
                  {"l_min", rc.packing.l_min},
                  {"shuffle", rc.packing.shuffle},
                  {"nsp", rc.pack_nsp}};
  j["model"] = rc.model.to_json();
  j["optimizer"] = {{"peak_lr", rc.optimizer.peak_lr},
                    {"weight_decay", rc.optimizer.weight_decay},
                    {"clip_threshold", rc.optimizer.clip_threshold},
                    {"clip_mode", rc.optimizer.clip_mode},
                    {"warmup_fraction", rc.optimizer.warmup_fraction},
                    {"total_steps", rc.optimizer.total_steps},
                    {"batch_size", rc.optimizer.batch_size},
                    {"accumulation_steps", rc.optimizer.accumulation_steps},
                    {"beta1", rc.optimizer.beta1},
                    {"beta2", rc.optimizer.beta2},
                    {"eps", rc.optimizer.eps}};
  j["task"] = {{"objective", rc.task.objective},
               {"split", rc.task.split},
               {"epochs", rc.task.epochs},
               {"dynamic_sampling", rc.task.dynamic_sampling},
               {"class_weighting", rc.task.class_weighting},
               {"oversampling", rc.task.oversampling},
               {"oversample_factor", rc.task.oversample_factor},
               {"eval_every", rc.task.eval_every},
               {"checkpoint_every", rc.task.checkpoint_every},
               {"threads", rc.task.threads},
               {"precision", rc.task.precision}};
  j["paths"] = json::object();
  auto put_path = [&](const char* key, const std::string& v) {
    if (!v.empty()) j["paths"][key] = v;
  };
  put_path("out_dir", rc.paths.out_dir);
  put_path("corpus", rc.paths.corpus);
  put_path("val_corpus", rc.paths.val_corpus);
  put_path("vocab", rc.paths.vocab);
  put_path("shard", rc.paths.shard);
  put_path("val_shard", rc.paths.val_shard);
  put_path("checkpoint", rc.paths.checkpoint);
  put_path("resume", rc.paths.resume);
  put_path("report", rc.paths.report);
  put_path("stats", rc.paths.stats);
  return j;
}

}  // namespace segorder
