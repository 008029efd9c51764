#pragma once

#include <map>
#include <string>
#include <vector>

namespace prunekit {

// Parsed artifacts of one finished run directory.
struct RunRecord {
  std::string dir;
  std::map<std::string, std::string> summary;           // summary.txt key/value
  std::vector<std::vector<std::string>> distribution;   // distribution.csv rows
  std::string controller_csv;                           // raw controller.csv

  double number(const std::string& key) const;
};

// Throws naming the first absent artifact file.
RunRecord read_run(const std::string& dir);

// Side-by-side table of the accuracy triple plus collapse metadata.
std::string comparison_table(const std::vector<RunRecord>& runs);

// CSV with header: run,ratio,before_prune_acc,after_prune_acc,
// after_finetune_acc,flops_after,min_rule_survivors,collapse
// Rows sorted by ratio ascending.
std::string accuracy_vs_ratio_csv(const std::vector<RunRecord>& runs);

// CSV with header: run,layer,kept,total
std::string merged_distribution_csv(const std::vector<RunRecord>& runs);

// CSV with header: run,epoch,lambda,sparsity
std::string merged_controller_csv(const std::vector<RunRecord>& runs);

}  // namespace prunekit
