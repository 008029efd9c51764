#pragma once

#include <string>

#include "prunekit/config.hpp"
#include "prunekit/pruner.hpp"

namespace prunekit {

// Artifact names inside a run directory.
namespace artifacts {
inline constexpr const char* kConfig = "config.resolved.toml";
inline constexpr const char* kStage1Checkpoint = "stage1.pkpt";
inline constexpr const char* kStage1Report = "stage1_report.csv";
inline constexpr const char* kController = "controller.csv";
inline constexpr const char* kImportance = "importance.csv";
inline constexpr const char* kPlan = "plan.txt";
inline constexpr const char* kTranscript = "transcript.txt";
inline constexpr const char* kDistribution = "distribution.csv";
inline constexpr const char* kPrunedCheckpoint = "pruned.pkpt";
inline constexpr const char* kStage3Report = "stage3_report.csv";
inline constexpr const char* kFinalCheckpoint = "final.pkpt";
inline constexpr const char* kSummary = "summary.txt";
inline constexpr const char* kFailureMarker = "FAILED";
inline constexpr const char* kLock = ".lock";
}  // namespace artifacts

// Holds <dir>/.lock for the lifetime of the command; a second writer fails.
class RunLock {
 public:
  explicit RunLock(const std::string& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
};

struct RunOutcome {
  double before_prune_acc = 0.0;
  double after_prune_acc = 0.0;
  double after_finetune_acc = 0.0;
  double final_sparsity = 0.0;
  bool collapse = false;
  int min_rule_survivors = 0;
  CountReport counts_before, counts_after;
};

// Stage 1: sparsity training. Writes checkpoint, stage report and the
// controller trajectory; returns the test accuracy of the trained model.
double run_train_stage(const TrainConfig& cfg, const std::string& out_dir);

// Stage 2: importance, plan, structural prune. Reads the stage-1 checkpoint
// from `checkpoint` (empty = the run dir's own) and fills the outcome fields
// it owns. Writes importance/plan/transcript/distribution and pruned.pkpt.
void run_prune_stage(const TrainConfig& cfg, const std::string& out_dir,
                     const std::string& checkpoint, RunOutcome& outcome);

// Stage 3: finetune (or scratch retrain per the config flag) of pruned.pkpt.
void run_finetune_stage(const TrainConfig& cfg, const std::string& out_dir,
                        const std::string& checkpoint, RunOutcome& outcome);

// The full train -> prune -> finetune pipeline in one run directory.
RunOutcome run_all(const TrainConfig& cfg, const std::string& out_dir);

void write_summary(const std::string& out_dir, const TrainConfig& cfg,
                   const RunOutcome& outcome);

std::vector<int> model_input_shape(const TrainConfig& cfg);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace prunekit
