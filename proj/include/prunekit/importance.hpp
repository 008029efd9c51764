#pragma once

#include <string>
#include <vector>

#include "prunekit/graph.hpp"

namespace prunekit {

// The dependency-aware score couples a channel's BN scale with how strongly
// its consumer uses it: S_c = |gamma_c| * ||W~_c|| of the following layer.
// GammaOnly drops the consumer norm (the classic slimming baseline signal).
enum class ImportanceMetric { DependencyAware, GammaOnly };

enum class NormKind { L2, L1 };

struct PairScores {
  std::string bn_id;
  int channels = 0;
  std::vector<float> gamma_abs;    // |gamma_c|
  std::vector<float> weight_norm;  // ||W~_c|| of the consumer (0 for masked channels)
  std::vector<float> score;        // S_c, non-negative
  bool feature_selection = false;
  bool counts_in_sparsity = true;
};

struct ImportanceTable {
  std::vector<PairScores> pairs;
};

// Entry c = norm of the channel-c block of the unfolded weight. Accepts 4-d
// conv weights and 2-d linear weights (column c is the channel-c block).
std::vector<float> channel_norms(const TensorPtr& weight, NormKind norm = NormKind::L2);

ImportanceTable compute_importance(NetworkGraph& graph,
                                   ImportanceMetric metric = ImportanceMetric::DependencyAware,
                                   NormKind norm = NormKind::L2);

// CSV with header: layer,channel,gamma,weight_norm,score
std::string importance_csv(const ImportanceTable& table);

struct BoundReport {
  std::string pair_id;
  double lhs = 0.0;  // ||F||_F of the chain output
  double rhs = 0.0;  // sum_c |gamma_c| * ||W~_c|| * ||X~_c||
  bool holds = false;
};

// Evaluates the BN->ReLU->conv chain bound directly: y = gamma * xhat,
// z = relu(y), F = conv(z, weight). `column_of`, when given, maps each
// channel to its weight input slice (-1 for masked channels).
BoundReport dependency_bound_chain(const std::vector<float>& gamma, const TensorPtr& xhat,
                                   const TensorPtr& weight, int stride, int padding,
                                   const std::vector<int>* column_of = nullptr);

// Runs the graph on `input` (eval mode), normalizes every paired BN's input
// with its running statistics and checks the chain bound per pair.
std::vector<BoundReport> verify_dependency_bounds(NetworkGraph& graph, const TensorPtr& input);

}  // namespace prunekit
