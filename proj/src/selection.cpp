#include "prunekit/selection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

namespace prunekit {

bool PrunePlan::any_collapse() const {
  return std::any_of(entries.begin(), entries.end(),
                     [](const PlanEntry& e) { return e.collapsed; });
}

int PrunePlan::min_rule_survivors() const {
  int best = -1;
  for (const auto& e : entries) {
    if (best < 0 || e.rule_survivors < best) best = e.rule_survivors;
  }
  return best;
}

namespace {

// Index of the maximum score, lowest index on ties.
int argmax_channel(const std::vector<float>& score) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(score.size()); ++c) {
    if (score[static_cast<std::size_t>(c)] > score[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

PlanEntry make_entry(const PairScores& ps, std::vector<int> rule_selected) {
  PlanEntry e;
  e.bn_id = ps.bn_id;
  e.channels = ps.channels;
  e.feature_selection = ps.feature_selection;
  e.counts_in_sparsity = ps.counts_in_sparsity;
  std::sort(rule_selected.begin(), rule_selected.end());
  e.rule_selected = std::move(rule_selected);
  e.rule_survivors = e.channels - static_cast<int>(e.rule_selected.size());
  e.collapsed = e.rule_survivors == 0;
  e.pruned = e.rule_selected;
  const int keep = argmax_channel(ps.score);
  e.pruned.erase(std::remove(e.pruned.begin(), e.pruned.end(), keep), e.pruned.end());
  return e;
}

}  // namespace

PrunePlan select_local(const ImportanceTable& imp, float p) {
  if (imp.pairs.empty()) throw Error("select_local: empty importance table");
  if (!(p > 0.0f && p < 1.0f)) {
    throw Error("select_local: threshold p must be in (0,1), got " + std::to_string(p));
  }
  PrunePlan plan;
  plan.rule = SelectionRule::Local;
  plan.threshold_p = p;
  for (const auto& ps : imp.pairs) {
    const float mx = *std::max_element(ps.score.begin(), ps.score.end());
    const float threshold = mx * p;
    std::vector<int> selected;
    for (int c = 0; c < ps.channels; ++c) {
      if (ps.score[static_cast<std::size_t>(c)] <= threshold) selected.push_back(c);
    }
    plan.entries.push_back(make_entry(ps, std::move(selected)));
  }
  return plan;
}

PrunePlan select_global(const ImportanceTable& imp, float r) {
  if (imp.pairs.empty()) throw Error("select_global: empty importance table");
  if (!(r > 0.0f && r < 1.0f)) {
    throw Error("select_global: ratio r must be in (0,1), got " + std::to_string(r));
  }
  PrunePlan plan;
  plan.rule = SelectionRule::Global;
  plan.ratio_r = r;

  std::vector<std::tuple<float, int, int>> pool;  // (score, pair index, channel)
  std::int64_t total = 0;
  for (int li = 0; li < static_cast<int>(imp.pairs.size()); ++li) {
    const auto& ps = imp.pairs[static_cast<std::size_t>(li)];
    if (!ps.counts_in_sparsity) continue;
    total += ps.channels;
    for (int c = 0; c < ps.channels; ++c) {
      pool.emplace_back(ps.score[static_cast<std::size_t>(c)], li, c);
    }
  }
  std::sort(pool.begin(), pool.end());
  const auto budget = static_cast<std::size_t>(std::floor(static_cast<double>(r) * total));

  std::vector<std::vector<int>> selected(imp.pairs.size());
  for (std::size_t i = 0; i < budget && i < pool.size(); ++i) {
    selected[static_cast<std::size_t>(std::get<1>(pool[i]))].push_back(std::get<2>(pool[i]));
  }
  for (std::size_t li = 0; li < imp.pairs.size(); ++li) {
    plan.entries.push_back(make_entry(imp.pairs[li], std::move(selected[li])));
  }
  return plan;
}

SparsityReading model_sparsity(const PrunePlan& plan, NetworkGraph& graph) {
  const auto pairs = graph.bn_conv_pairs();
  if (pairs.size() != plan.entries.size()) {
    throw Error("model_sparsity: plan has " + std::to_string(plan.entries.size()) +
                " entries but graph has " + std::to_string(pairs.size()) + " pairs");
  }
  SparsityReading reading;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& entry = plan.entries[i];
    const auto& pair = pairs[i];
    if (entry.bn_id != pair.bn_id || entry.channels != pair.channels) {
      throw Error("model_sparsity: plan entry '" + entry.bn_id + "' (" +
                  std::to_string(entry.channels) + " ch) does not match graph pair '" +
                  pair.bn_id + "' (" + std::to_string(pair.channels) + " ch)");
    }
    if (!pair.counts_in_sparsity) continue;
    reading.pruned_count += static_cast<std::int64_t>(entry.rule_selected.size());
    reading.total_count += pair.channels;
  }
  reading.value = reading.total_count == 0
                      ? 0.0
                      : static_cast<double>(reading.pruned_count) /
                            static_cast<double>(reading.total_count);
  return reading;
}

namespace {

std::string indices_to_text(const std::vector<int>& v) {
  if (v.empty()) return "-";
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  return os.str();
}

std::vector<int> indices_from_text(const std::string& s) {
  std::vector<int> out;
  if (s == "-") return out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

}  // namespace

std::string plan_to_text(const PrunePlan& plan) {
  std::ostringstream os;
  os << "prunekit-plan v1\n";
  if (plan.rule == SelectionRule::Local) {
    os << "rule local p=" << plan.threshold_p << "\n";
  } else {
    os << "rule global r=" << plan.ratio_r << "\n";
  }
  for (const auto& e : plan.entries) {
    os << "entry " << e.bn_id << " channels=" << e.channels
       << " pruned=" << indices_to_text(e.pruned)
       << " rule=" << indices_to_text(e.rule_selected) << " fs=" << (e.feature_selection ? 1 : 0)
       << " counted=" << (e.counts_in_sparsity ? 1 : 0) << " collapsed=" << (e.collapsed ? 1 : 0)
       << "\n";
  }
  os << "end\n";
  return os.str();
}

PrunePlan plan_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "prunekit-plan v1") {
    throw Error("plan_from_text: missing 'prunekit-plan v1' header");
  }
  PrunePlan plan;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string word;
    is >> word;
    if (word == "end") {
      ended = true;
      break;
    } else if (word == "rule") {
      std::string kind, kv;
      is >> kind >> kv;
      if (kind == "local") {
        plan.rule = SelectionRule::Local;
        plan.threshold_p = std::stof(kv.substr(kv.find('=') + 1));
      } else if (kind == "global") {
        plan.rule = SelectionRule::Global;
        plan.ratio_r = std::stof(kv.substr(kv.find('=') + 1));
      } else {
        throw Error("plan_from_text: unknown rule '" + kind + "'");
      }
    } else if (word == "entry") {
      PlanEntry e;
      is >> e.bn_id;
      std::string tok;
      while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw Error("plan_from_text: bad token '" + tok + "'");
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "channels") e.channels = std::stoi(val);
        else if (key == "pruned") e.pruned = indices_from_text(val);
        else if (key == "rule") e.rule_selected = indices_from_text(val);
        else if (key == "fs") e.feature_selection = val != "0";
        else if (key == "counted") e.counts_in_sparsity = val != "0";
        else if (key == "collapsed") e.collapsed = val != "0";
        else throw Error("plan_from_text: unknown key '" + key + "'");
      }
      e.rule_survivors = e.channels - static_cast<int>(e.rule_selected.size());
      plan.entries.push_back(std::move(e));
    } else {
      throw Error("plan_from_text: unknown directive '" + word + "'");
    }
  }
  if (!ended) throw Error("plan_from_text: missing 'end'");
  return plan;
}

}  // namespace prunekit
