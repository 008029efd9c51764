#include "prunekit/report.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "prunekit/errors.hpp"
#include "prunekit/run.hpp"

namespace prunekit {

namespace fs = std::filesystem;

namespace {

std::string must_read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("report: missing run artifact '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string run_name(const RunRecord& r) {
  auto name = fs::path(r.dir).filename().string();
  return name.empty() ? r.dir : name;
}

}  // namespace

double RunRecord::number(const std::string& key) const {
  auto it = summary.find(key);
  if (it == summary.end()) {
    throw Error("report: summary of '" + dir + "' has no key '" + key + "'");
  }
  return std::stod(it->second);
}

RunRecord read_run(const std::string& dir) {
  RunRecord r;
  r.dir = dir;
  const auto summary_text = must_read(fs::path(dir) / artifacts::kSummary);
  std::istringstream in(summary_text);
  std::string key, value;
  while (in >> key >> value) r.summary[key] = value;
  r.distribution = parse_csv(must_read(fs::path(dir) / artifacts::kDistribution));
  r.controller_csv = must_read(fs::path(dir) / artifacts::kController);
  return r;
}

std::string comparison_table(const std::vector<RunRecord>& runs) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "run" << std::setw(8) << "rule" << std::setw(7) << "ratio"
     << std::setw(14) << "before_prune" << std::setw(13) << "after_prune" << std::setw(15)
     << "after_finetune" << std::setw(13) << "min_channels" << "collapse\n";
  for (const auto& r : runs) {
    os << std::left << std::setw(20) << run_name(r) << std::setw(8) << r.summary.at("rule")
       << std::setw(7) << r.summary.at("ratio") << std::setw(14)
       << r.summary.at("before_prune_acc") << std::setw(13) << r.summary.at("after_prune_acc")
       << std::setw(15) << r.summary.at("after_finetune_acc") << std::setw(13)
       << r.summary.at("min_rule_survivors") << r.summary.at("collapse") << "\n";
  }
  return os.str();
}

std::string accuracy_vs_ratio_csv(const std::vector<RunRecord>& runs) {
  auto sorted = runs;
  std::sort(sorted.begin(), sorted.end(), [](const RunRecord& a, const RunRecord& b) {
    return a.number("ratio") < b.number("ratio");
  });
  std::ostringstream os;
  os << "run,ratio,before_prune_acc,after_prune_acc,after_finetune_acc,flops_after,"
        "min_rule_survivors,collapse\n";
  for (const auto& r : sorted) {
    os << run_name(r) << "," << r.summary.at("ratio") << "," << r.summary.at("before_prune_acc")
       << "," << r.summary.at("after_prune_acc") << "," << r.summary.at("after_finetune_acc")
       << "," << r.summary.at("flops_after") << "," << r.summary.at("min_rule_survivors") << ","
       << r.summary.at("collapse") << "\n";
  }
  return os.str();
}

std::string merged_distribution_csv(const std::vector<RunRecord>& runs) {
  std::ostringstream os;
  os << "run,layer,kept,total\n";
  for (const auto& r : runs) {
    for (std::size_t i = 1; i < r.distribution.size(); ++i) {  // skip per-run header
      const auto& row = r.distribution[i];
      if (row.size() < 3) continue;
      os << run_name(r) << "," << row[0] << "," << row[1] << "," << row[2] << "\n";
    }
  }
  return os.str();
}

std::string merged_controller_csv(const std::vector<RunRecord>& runs) {
  std::ostringstream os;
  os << "run,epoch,lambda,sparsity\n";
  for (const auto& r : runs) {
    auto rows = parse_csv(r.controller_csv);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& row = rows[i];
      if (row.size() < 3) continue;
      os << run_name(r) << "," << row[0] << "," << row[1] << "," << row[2] << "\n";
    }
  }
  return os.str();
}

}  // namespace prunekit
