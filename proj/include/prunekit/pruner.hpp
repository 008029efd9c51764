#pragma once

#include <string>
#include <vector>

#include "prunekit/selection.hpp"

namespace prunekit {

// Audit record of a structural prune: which indices survived where, and what
// it did to the model size.
struct PruneTranscript {
  struct LayerChange {
    std::string layer_id;
    std::vector<int> kept_outputs;  // empty if the output dim was untouched
    std::vector<int> kept_inputs;   // empty if the input dim was untouched
  };
  struct DistributionRow {
    std::string pair_id;
    int kept = 0;
    int total = 0;
    bool feature_selection = false;
  };

  std::vector<LayerChange> layers;
  std::vector<DistributionRow> distribution;
  std::vector<std::string> collapsed_pairs;  // pairs where the guard had to intervene
  int pruned_filters = 0;                    // physically removed filters (counted pairs)
  CountReport before, after;
};

// Materializes the plan: per pruned channel of a BN->conv pair the producer
// drops the output filter, the BN drops its per-channel state and the
// consumer drops the input slice. Feature-selection sites install a channel
// mask instead of touching a producer; the identity path keeps its width.
// The input graph is untouched; `input_shape` ([C,H,W]) sizes the transcript.
std::pair<NetworkGraph, PruneTranscript> prune_graph(NetworkGraph& graph, const PrunePlan& plan,
                                                     const std::vector<int>& input_shape);

struct AbsorbResult {
  NetworkGraph graph;
  // Pairs where a padded consumer makes the fold exact only away from the
  // image border.
  std::vector<std::string> padding_warnings;
};

// Optional pre-step before pruning: folds each planned channel's constant
// eval-mode output relu(beta_c) into the consumer's bias, so that pruning a
// constant-output channel preserves interior-pixel outputs.
AbsorbResult absorb_bias(NetworkGraph& graph, const PrunePlan& plan);

std::string transcript_to_text(const PruneTranscript& t);
// CSV with header: layer,kept,total
std::string distribution_csv(const PruneTranscript& t);

}  // namespace prunekit
