// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
//
// Thin orchestrator over the C API: parses flags into dotted config
// overrides, resolves the run config, executes the command, prints the JSON
// report. Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric abort.
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "segorder.h"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string seed;  // kept as text so 0 is distinguishable from unset
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Run config JSON file");
  cmd->add_option("--set", args.sets, "Dotted override, e.g. optimizer.peak_lr=5e-5")
      ->take_all();
  cmd->add_option("--seed", args.seed, "Run seed (shorthand for --set seed=N)");
}

/// Appends "key=value" when the flag was given.
void push_if(std::vector<std::string>& sets, const std::string& key, const std::string& value) {
  if (!value.empty()) sets.push_back(key + "=" + value);
}

int fail(const char* stage, sgo_status status) {
  std::cerr << "segorder: " << stage << " failed: " << sgo_last_error() << "\n";
  return static_cast<int>(status);
}

int run(const char* command, const CommonArgs& args,
        sgo_status (*runner)(const char*, char**)) {
  std::string config_text;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path, std::ios::binary);
    if (!in) {
      std::cerr << "segorder: cannot read config file: " << args.config_path << "\n";
      return 3;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    config_text = std::move(ss).str();
  }
  std::vector<std::string> sets = args.sets;
  push_if(sets, "seed", args.seed);
  std::vector<const char*> set_ptrs;
  for (const auto& s : sets) set_ptrs.push_back(s.c_str());

  char* resolved = nullptr;
  sgo_status st = sgo_config_resolve(command, config_text.empty() ? nullptr : config_text.c_str(),
                                     set_ptrs.data(), set_ptrs.size(), &resolved);
  if (st != SGO_OK) return fail("config", st);

  char* report = nullptr;
  st = runner(resolved, &report);
  sgo_string_free(resolved);
  if (st != SGO_OK) return fail(command, st);
  std::cout << report << "\n";
  sgo_string_free(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segment-ordering pre-training toolkit"};
  app.require_subcommand(1);
  std::string version = sgo_version();
  app.set_version_flag("--version", version);

  CommonArgs synth_args, pack_args, pre_args, fine_args, eval_args;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic JSONL corpus");
  add_common(synth, synth_args);
  std::string synth_corpus, synth_vocab, synth_docs, synth_cue, synth_classes;
  synth->add_option("--corpus", synth_corpus, "Output corpus path (paths.corpus)");
  synth->add_option("--vocab", synth_vocab, "Also write the matching vocabulary here");
  synth->add_option("--docs", synth_docs, "Number of documents (corpus.docs)");
  synth->add_option("--cue", synth_cue, "Ordering cue: none, ordinal, chain");
  synth->add_option("--classes", synth_classes, "Label classes (corpus.classes)");

  CLI::App* pack = app.add_subcommand("pack", "Tokenize, pack, shuffle, and mask a corpus");
  add_common(pack, pack_args);
  std::string pack_corpus, pack_vocab, pack_shard, pack_context;
  bool pack_no_shuffle = false, pack_nsp = false;
  pack->add_option("--corpus", pack_corpus, "Input JSONL corpus (paths.corpus)");
  pack->add_option("--vocab", pack_vocab, "Vocabulary file (paths.vocab)");
  pack->add_option("--shard", pack_shard, "Output shard path (paths.shard)");
  pack->add_option("--context", pack_context, "Context window C (packing.context)");
  pack->add_flag("--no-shuffle", pack_no_shuffle, "Keep original segment order");
  pack->add_flag("--nsp", pack_nsp, "Pack next-sentence pairs instead of SO samples");

  CLI::App* pre = app.add_subcommand("pretrain", "Run joint-objective pre-training");
  add_common(pre, pre_args);
  std::string pre_shard, pre_val, pre_vocab, pre_out, pre_steps, pre_objective, pre_resume,
      pre_threads;
  pre->add_option("--shard", pre_shard, "Training shard (paths.shard)");
  pre->add_option("--val-shard", pre_val, "Validation shard (paths.val_shard)");
  pre->add_option("--vocab", pre_vocab, "Vocabulary file (paths.vocab)");
  pre->add_option("--out-dir", pre_out, "Run directory (paths.out_dir)");
  pre->add_option("--steps", pre_steps, "Optimizer steps (optimizer.total_steps)");
  pre->add_option("--objective", pre_objective, "mlm+so, mlm-only, or mlm+nsp");
  pre->add_option("--resume", pre_resume, "Checkpoint to resume from (paths.resume)");
  pre->add_option("--threads", pre_threads, "Worker threads (task.threads)");

  CLI::App* fine = app.add_subcommand("finetune", "Fine-tune a classification head");
  add_common(fine, fine_args);
  std::string fine_corpus, fine_val, fine_vocab, fine_ckpt, fine_out, fine_preset, fine_epochs,
      fine_threads;
  fine->add_option("--corpus", fine_corpus, "Labeled training JSONL (paths.corpus)");
  fine->add_option("--val-corpus", fine_val, "Labeled validation JSONL (paths.val_corpus)");
  fine->add_option("--vocab", fine_vocab, "Vocabulary file (paths.vocab)");
  fine->add_option("--checkpoint", fine_ckpt, "Pre-trained checkpoint (paths.checkpoint)");
  fine->add_option("--out-dir", fine_out, "Run directory (paths.out_dir)");
  fine->add_option("--preset", fine_preset,
                   "csabstruct-like, pubmed-like, nicta-like, ifrs-like, gri-like");
  fine->add_option("--epochs", fine_epochs, "Training epochs (task.epochs)");
  fine->add_option("--threads", fine_threads, "Worker threads (task.threads)");

  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a shard or labeled corpus");
  add_common(ev, eval_args);
  std::string ev_ckpt, ev_vocab, ev_shard, ev_corpus, ev_report, ev_split;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint to evaluate (paths.checkpoint)");
  ev->add_option("--vocab", ev_vocab, "Vocabulary file (paths.vocab)");
  ev->add_option("--shard", ev_shard, "Shard for pre-training metrics (paths.shard)");
  ev->add_option("--corpus", ev_corpus, "Labeled JSONL for classification metrics (paths.corpus)");
  ev->add_option("--report", ev_report, "Write the JSON report here (paths.report)");
  ev->add_option("--split", ev_split, "Split name recorded in the report (task.split)");

  CLI::App* ins = app.add_subcommand("inspect", "Print one packed sample, human-readable");
  std::string ins_shard, ins_vocab;
  uint64_t ins_index = 0;
  ins->add_option("shard", ins_shard, "Shard file")->required();
  ins->add_option("--vocab", ins_vocab, "Vocabulary file")->required();
  ins->add_option("--index", ins_index, "Sample index (default 0)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (synth->parsed()) {
    push_if(synth_args.sets, "paths.corpus", synth_corpus);
    push_if(synth_args.sets, "paths.vocab", synth_vocab);
    push_if(synth_args.sets, "corpus.docs", synth_docs);
    push_if(synth_args.sets, "corpus.cue", synth_cue);
    push_if(synth_args.sets, "corpus.classes", synth_classes);
    return run("synth", synth_args, &sgo_run_synth);
  }
  if (pack->parsed()) {
    push_if(pack_args.sets, "paths.corpus", pack_corpus);
    push_if(pack_args.sets, "paths.vocab", pack_vocab);
    push_if(pack_args.sets, "paths.shard", pack_shard);
    push_if(pack_args.sets, "packing.context", pack_context);
    if (pack_no_shuffle) pack_args.sets.push_back("packing.shuffle=false");
    if (pack_nsp) pack_args.sets.push_back("packing.nsp=true");
    return run("pack", pack_args, &sgo_run_pack);
  }
  if (pre->parsed()) {
    push_if(pre_args.sets, "paths.shard", pre_shard);
    push_if(pre_args.sets, "paths.val_shard", pre_val);
    push_if(pre_args.sets, "paths.vocab", pre_vocab);
    push_if(pre_args.sets, "paths.out_dir", pre_out);
    push_if(pre_args.sets, "optimizer.total_steps", pre_steps);
    push_if(pre_args.sets, "task.objective", pre_objective);
    push_if(pre_args.sets, "paths.resume", pre_resume);
    push_if(pre_args.sets, "task.threads", pre_threads);
    return run("pretrain", pre_args, &sgo_run_pretrain);
  }
  if (fine->parsed()) {
    push_if(fine_args.sets, "paths.corpus", fine_corpus);
    push_if(fine_args.sets, "paths.val_corpus", fine_val);
    push_if(fine_args.sets, "paths.vocab", fine_vocab);
    push_if(fine_args.sets, "paths.checkpoint", fine_ckpt);
    push_if(fine_args.sets, "paths.out_dir", fine_out);
    push_if(fine_args.sets, "preset", fine_preset);
    push_if(fine_args.sets, "task.epochs", fine_epochs);
    push_if(fine_args.sets, "task.threads", fine_threads);
    return run("finetune", fine_args, &sgo_run_finetune);
  }
  if (ev->parsed()) {
    push_if(eval_args.sets, "paths.checkpoint", ev_ckpt);
    push_if(eval_args.sets, "paths.vocab", ev_vocab);
    push_if(eval_args.sets, "paths.shard", ev_shard);
    push_if(eval_args.sets, "paths.corpus", ev_corpus);
    push_if(eval_args.sets, "paths.report", ev_report);
    push_if(eval_args.sets, "task.split", ev_split);
    return run("eval", eval_args, &sgo_run_eval);
  }
  if (ins->parsed()) {
    char* text = nullptr;
    sgo_status st = sgo_inspect_sample(ins_shard.c_str(), ins_vocab.c_str(), ins_index, &text);
    if (st != SGO_OK) return fail("inspect", st);
    std::cout << text;
    sgo_string_free(text);
    return 0;
  }
  return 2;
}
