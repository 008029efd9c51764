#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "prunekit/checkpoint.hpp"
#include "prunekit/report.hpp"
#include "prunekit/run.hpp"

using namespace prunekit;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;
constexpr int kExitCollapse = 3;

TrainConfig load_config(const std::string& config_path, const std::vector<std::string>& sets) {
  ConfigMap map = config_path.empty() ? ConfigMap{} : parse_toml_file(config_path);
  // Precedence: --set > config file > environment > built-in default.
  if (!map.values.count("data.root")) {
    if (const char* env = std::getenv("PRUNEKIT_DATA_ROOT")) {
      map.values["data.root"] = env;
    }
  }
  for (const auto& s : sets) apply_override(map, s);
  return config_from_map(map);
}

void echo_config(const TrainConfig& cfg, const std::string& out_dir) {
  write_text_file((fs::path(out_dir) / artifacts::kConfig).string(), config_to_toml(cfg));
}

void mark_failed(const std::string& out_dir, const std::string& why) {
  if (out_dir.empty()) return;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  try {
    write_text_file((fs::path(out_dir) / artifacts::kFailureMarker).string(), why + "\n");
  } catch (...) {
    // The marker is best effort; the original error matters more.
  }
}

void print_outcome(const RunOutcome& o) {
  std::cout << "before_prune_acc " << o.before_prune_acc << "\n"
            << "after_prune_acc " << o.after_prune_acc << "\n"
            << "after_finetune_acc " << o.after_finetune_acc << "\n"
            << "final_sparsity " << o.final_sparsity << "\n"
            << "params " << o.counts_before.params << " -> " << o.counts_after.params << "\n"
            << "flops " << o.counts_before.flops << " -> " << o.counts_after.flops << "\n"
            << "min_rule_survivors " << o.min_rule_survivors << "\n"
            << "collapse " << (o.collapse ? 1 : 0) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prunekit: dependency-aware filter pruning at desk scale"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint;
  std::vector<std::string> sets;
  auto add_common = [&](CLI::App* cmd, bool with_checkpoint) {
    cmd->add_option("--config", config_path, "TOML config file");
    cmd->add_option("--set", sets, "key=value override (repeatable)");
    cmd->add_option("--out", out_dir, "run directory for artifacts")->required();
    if (with_checkpoint) {
      cmd->add_option("--checkpoint", checkpoint,
                      "input checkpoint (defaults to the run directory's own)");
    }
  };

  auto* c_train = app.add_subcommand("train", "stage 1: sparsity training with the controller");
  add_common(c_train, false);
  auto* c_prune = app.add_subcommand("prune", "stage 2: score, select and prune");
  add_common(c_prune, true);
  auto* c_finetune = app.add_subcommand("finetune", "stage 3: finetune (or scratch retrain)");
  add_common(c_finetune, true);
  auto* c_run_all = app.add_subcommand("run-all", "train, prune and finetune in one run");
  add_common(c_run_all, false);

  std::string ds_out = "data";
  int ds_train = 200, ds_test = 50;
  unsigned ds_seed = 1234;
  auto* c_make = app.add_subcommand("make-dataset",
                                    "generate the synthetic IDX dataset for desk-scale runs");
  c_make->add_option("--out", ds_out, "output directory");
  c_make->add_option("--train-per-class", ds_train, "training images per class");
  c_make->add_option("--test-per-class", ds_test, "test images per class");
  c_make->add_option("--seed", ds_seed, "generator seed");

  std::vector<std::string> report_runs;
  std::string report_out = ".";
  auto* c_report = app.add_subcommand("report", "compare finished runs and emit merged CSVs");
  c_report->add_option("--compare", report_runs, "run directories")->required();
  c_report->add_option("--out", report_out, "directory for merged CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (c_make->parsed()) {
      generate_synth_dataset(ds_out, ds_train, ds_test, ds_seed);
      std::cout << "wrote synthetic IDX dataset to " << ds_out << "\n";
      return kExitOk;
    }
    if (c_report->parsed()) {
      std::vector<RunRecord> runs;
      for (const auto& dir : report_runs) runs.push_back(read_run(dir));
      std::cout << comparison_table(runs);
      fs::create_directories(report_out);
      write_text_file((fs::path(report_out) / "accuracy_vs_ratio.csv").string(),
                      accuracy_vs_ratio_csv(runs));
      write_text_file((fs::path(report_out) / "filter_distribution.csv").string(),
                      merged_distribution_csv(runs));
      write_text_file((fs::path(report_out) / "controller_merged.csv").string(),
                      merged_controller_csv(runs));
      return kExitOk;
    }

    const TrainConfig cfg = load_config(config_path, sets);

    if (c_train->parsed()) {
      RunLock lock(out_dir);
      echo_config(cfg, out_dir);
      const double acc = run_train_stage(cfg, out_dir);
      std::cout << "stage1_test_acc " << acc << "\n";
      return kExitOk;
    }
    if (c_prune->parsed()) {
      RunLock lock(out_dir);
      echo_config(cfg, out_dir);
      RunOutcome o;
      run_prune_stage(cfg, out_dir, checkpoint, o);
      print_outcome(o);
      return o.collapse ? kExitCollapse : kExitOk;
    }
    if (c_finetune->parsed()) {
      RunLock lock(out_dir);
      echo_config(cfg, out_dir);
      RunOutcome o;
      run_finetune_stage(cfg, out_dir, checkpoint, o);
      std::cout << "after_finetune_acc " << o.after_finetune_acc << "\n";
      return kExitOk;
    }
    if (c_run_all->parsed()) {
      RunLock lock(out_dir);
      echo_config(cfg, out_dir);
      const RunOutcome o = run_all(cfg, out_dir);
      print_outcome(o);
      return o.collapse ? kExitCollapse : kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    mark_failed(out_dir, e.what());
    return kExitRuntimeError;
  }
  return kExitConfigError;
}
