#include "prunekit/run.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "prunekit/checkpoint.hpp"

namespace prunekit {

namespace fs = std::filesystem;

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
}

RunLock::RunLock(const std::string& dir) {
  fs::create_directories(dir);
  path_ = (fs::path(dir) / artifacts::kLock).string();
  if (fs::exists(path_)) {
    throw Error("run directory '" + dir + "' is locked by another writer (" + path_ + ")");
  }
  write_text_file(path_, "locked\n");
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::vector<int> model_input_shape(const TrainConfig& cfg) {
  const int c = dataset_input_channels(cfg.dataset);
  const int hw = cfg.dataset == "cifar10" ? 32 : 28;
  return {c, hw, hw};
}

namespace {

std::string in_dir(const std::string& dir, const char* name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

}  // namespace

double run_train_stage(const TrainConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  auto data = load_and_split(cfg);
  Rng rng(cfg.seed);
  auto graph = build_model(cfg, rng);
  auto result = train_stage1(graph, cfg, data);

  save_checkpoint(graph, in_dir(out_dir, artifacts::kStage1Checkpoint));
  write_text_file(in_dir(out_dir, artifacts::kStage1Report),
                  stage_report_csv(result.report));
  write_text_file(in_dir(out_dir, artifacts::kController),
                  controller_csv(result.controller));
  return evaluate(graph, data.test, data.mean, data.stddev, cfg.batch_size);
}

void run_prune_stage(const TrainConfig& cfg, const std::string& out_dir,
                     const std::string& checkpoint, RunOutcome& outcome) {
  cfg.validate();
  const std::string ckpt =
      checkpoint.empty() ? in_dir(out_dir, artifacts::kStage1Checkpoint) : checkpoint;
  auto graph = load_checkpoint(ckpt);
  auto data = load_and_split(cfg);

  outcome.before_prune_acc = evaluate(graph, data.test, data.mean, data.stddev, cfg.batch_size);

  auto importance = compute_importance(graph, cfg.importance_metric(), cfg.norm_kind());
  write_text_file(in_dir(out_dir, artifacts::kImportance), importance_csv(importance));

  auto plan = cfg.selection_rule() == SelectionRule::Local
                  ? select_local(importance, cfg.threshold_p)
                  : select_global(importance, cfg.ratio_r);
  write_text_file(in_dir(out_dir, artifacts::kPlan), plan_to_text(plan));

  NetworkGraph to_prune = graph.clone();
  if (cfg.bias_absorb) {
    auto absorbed = absorb_bias(graph, plan);
    to_prune = std::move(absorbed.graph);
  }
  auto [pruned, transcript] = prune_graph(to_prune, plan, model_input_shape(cfg));
  write_text_file(in_dir(out_dir, artifacts::kTranscript), transcript_to_text(transcript));
  write_text_file(in_dir(out_dir, artifacts::kDistribution), distribution_csv(transcript));
  save_checkpoint(pruned, in_dir(out_dir, artifacts::kPrunedCheckpoint));

  outcome.after_prune_acc = evaluate(pruned, data.test, data.mean, data.stddev, cfg.batch_size);
  outcome.final_sparsity = model_sparsity(plan, graph).value;
  outcome.collapse = plan.any_collapse();
  outcome.min_rule_survivors = plan.min_rule_survivors();
  outcome.counts_before = transcript.before;
  outcome.counts_after = transcript.after;
}

void run_finetune_stage(const TrainConfig& cfg, const std::string& out_dir,
                        const std::string& checkpoint, RunOutcome& outcome) {
  cfg.validate();
  const std::string ckpt =
      checkpoint.empty() ? in_dir(out_dir, artifacts::kPrunedCheckpoint) : checkpoint;
  auto graph = load_checkpoint(ckpt);
  auto data = load_and_split(cfg);

  auto report = finetune_stage3(graph, cfg, data, cfg.scratch_retrain);
  write_text_file(in_dir(out_dir, artifacts::kStage3Report), stage_report_csv(report));
  save_checkpoint(graph, in_dir(out_dir, artifacts::kFinalCheckpoint));
  outcome.after_finetune_acc =
      evaluate(graph, data.test, data.mean, data.stddev, cfg.batch_size);
}

RunOutcome run_all(const TrainConfig& cfg, const std::string& out_dir) {
  RunOutcome outcome;
  outcome.before_prune_acc = run_train_stage(cfg, out_dir);
  run_prune_stage(cfg, out_dir, "", outcome);
  run_finetune_stage(cfg, out_dir, "", outcome);
  write_summary(out_dir, cfg, outcome);
  return outcome;
}

void write_summary(const std::string& out_dir, const TrainConfig& cfg,
                   const RunOutcome& outcome) {
  std::ostringstream os;
  os << "ratio " << cfg.ratio_r << "\n";
  os << "rule " << cfg.rule << "\n";
  os << "metric " << cfg.metric << "\n";
  os << "seed " << cfg.seed << "\n";
  os << "before_prune_acc " << outcome.before_prune_acc << "\n";
  os << "after_prune_acc " << outcome.after_prune_acc << "\n";
  os << "after_finetune_acc " << outcome.after_finetune_acc << "\n";
  os << "final_sparsity " << outcome.final_sparsity << "\n";
  os << "collapse " << (outcome.collapse ? 1 : 0) << "\n";
  os << "min_rule_survivors " << outcome.min_rule_survivors << "\n";
  os << "params_before " << outcome.counts_before.params << "\n";
  os << "params_after " << outcome.counts_after.params << "\n";
  os << "flops_before " << outcome.counts_before.flops << "\n";
  os << "flops_after " << outcome.counts_after.flops << "\n";
  write_text_file(in_dir(out_dir, artifacts::kSummary), os.str());
}

}  // namespace prunekit
