#pragma once

#include <string>
#include <vector>

#include "prunekit/importance.hpp"

namespace prunekit {

enum class SelectionRule { Local, Global };

struct PlanEntry {
  std::string bn_id;
  int channels = 0;
  // What the rule selected (the F_pruned set) and what actually gets removed
  // after the survivor guard. They differ only when the rule would have
  // emptied the layer.
  std::vector<int> rule_selected;
  std::vector<int> pruned;
  bool feature_selection = false;
  bool counts_in_sparsity = true;
  bool collapsed = false;  // rule selected every channel of the pair
  int rule_survivors = 0;  // channels - |rule_selected|
};

struct PrunePlan {
  SelectionRule rule = SelectionRule::Local;
  float threshold_p = 0.0f;  // local rule
  float ratio_r = 0.0f;      // global rule
  std::vector<PlanEntry> entries;

  bool any_collapse() const;
  int min_rule_survivors() const;
};

// Per-layer rule: prune channels with S_c <= max(S^l) * p. Selection in one
// layer depends only on that layer's scores. The survivor guard keeps the
// argmax-score channel (lowest index on ties) alive in every pair.
PrunePlan select_local(const ImportanceTable& imp, float p);

// Global-ranking baseline: prune the floor(r * sum C^l) channels of smallest
// score across all counted layers, ties broken by (layer, channel) ascending.
// Feature-selection pairs are left untouched by this rule.
PrunePlan select_global(const ImportanceTable& imp, float r);

struct SparsityReading {
  double value = 0.0;            // P
  std::int64_t pruned_count = 0; // numerator
  std::int64_t total_count = 0;  // denominator
};

// P = sum |F_pruned^l| / sum C^l over counted pairs only; feature-selection
// masks contribute to neither side.
SparsityReading model_sparsity(const PrunePlan& plan, NetworkGraph& graph);

std::string plan_to_text(const PrunePlan& plan);
PrunePlan plan_from_text(const std::string& text);

}  // namespace prunekit
