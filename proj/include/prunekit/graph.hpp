#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "prunekit/ops.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

enum class LayerKind { Conv, BatchNorm, Relu, MaxPool, GlobalAvgPool, Flatten, Linear };

const char* layer_kind_name(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  // conv
  int in_channels = 0, out_channels = 0, kernel = 1, stride = 1, padding = 0;
  bool has_bias = false;
  // batchnorm
  int channels = 0;
  // maxpool
  int pool_kernel = 2, pool_stride = 2;
  // linear
  int in_features = 0, out_features = 0;
};

// A layer plus its parameters. Which tensors exist depends on the kind.
struct Layer {
  std::string id;
  LayerSpec spec;
  TensorPtr weight, bias;                                 // conv / linear
  TensorPtr gamma, beta, running_mean, running_var;       // batchnorm
};

// Pre-activation bottleneck: BN1, ReLU, (feature selection), Conv1 1x1,
// BN2, ReLU, Conv2 3x3, BN3, ReLU, Conv3 1x1, plus the identity path.
// The channel count entering and leaving the identity path is `width()` and
// is never pruned; `selection` masks BN1 output channels feeding Conv1.
struct ResidualBlock {
  std::string id;
  Layer bn1, conv1, bn2, conv2, bn3, conv3;
  std::vector<int> selection;  // kept channel indices after BN1, ascending

  int width() const { return bn1.spec.channels; }
  bool selection_is_full() const {
    return static_cast<int>(selection.size()) == width();
  }
};

using Block = std::variant<Layer, ResidualBlock>;

// BN layer together with the consumer that fuses its channels (Conv or
// Linear-as-1x1-conv) and the producer whose output filters a prune removes.
// Feature-selection pairs (residual BN1) have no producer and are excluded
// from the model-sparsity count.
struct BnConvPair {
  std::string bn_id, consumer_id, producer_id;
  Layer* bn = nullptr;
  Layer* consumer = nullptr;
  Layer* producer = nullptr;        // null for feature-selection pairs
  ResidualBlock* block = nullptr;   // owning block for feature-selection pairs
  int channels = 0;
  bool feature_selection = false;
  bool counts_in_sparsity = true;
};

// Observation hook for forward passes: called for every Layer (including the
// ones inside residual blocks) with its input and output activations.
using LayerTap = std::function<void(const Layer&, const TensorPtr&, const TensorPtr&)>;

struct NetworkGraph {
  std::string arch;  // "vgg" | "preact_resnet"
  int input_channels = 0;
  int num_classes = 0;
  std::vector<Block> blocks;

  TensorPtr forward(Tape* tape, const TensorPtr& input, bool training) const;
  TensorPtr forward_traced(Tape* tape, const TensorPtr& input, bool training,
                           const LayerTap& tap) const;

  // Learnable tensors in deterministic order, as (name, tensor).
  std::vector<std::pair<std::string, TensorPtr>> parameters() const;
  // Learnable tensors plus BN running statistics (checkpoint payload).
  std::vector<std::pair<std::string, TensorPtr>> named_tensors() const;

  // Derives the BN->consumer pairs in traversal order. Every prunable gamma
  // belongs to exactly one pair; identity-path BNs (the final BN of a
  // pre-activation ResNet) are unprunable and appear in no pair.
  std::vector<BnConvPair> bn_conv_pairs();

  // BN layer ids that are marked unprunable (no pair, excluded from L1).
  std::vector<std::string> unprunable_bn_ids();

  Layer* find_layer(const std::string& id);

  NetworkGraph clone() const;
};

// `config` tokens are channel counts or "M" for a 2x2/2 maxpool, e.g.
// {"16","16","M","32","32","M"}. Convs are 3x3 stride 1 pad 1 without bias,
// each followed by BN and ReLU; the net ends with global average pooling,
// flatten and a linear classifier.
NetworkGraph build_vgg(const std::vector<std::string>& config, int in_channels, int num_classes,
                       Rng& rng);

// Stem conv (3x3, width channels), a 2x2 maxpool, `num_blocks` bottleneck
// blocks (another maxpool before the second half), final BN+ReLU, global
// average pooling and a linear classifier. mid_channels defaults to width/2.
NetworkGraph build_preact_resnet(int num_blocks, int in_channels, int num_classes,
                                 int width, int mid_channels, Rng& rng);

void init_parameters(NetworkGraph& graph, Rng& rng);

struct CountReport {
  std::int64_t params = 0;
  std::int64_t flops = 0;  // 2 FLOPs per multiply-accumulate, conv/linear only
};

// input_shape is per-sample [C,H,W].
CountReport count_params_flops(const NetworkGraph& graph, const std::vector<int>& input_shape);

// Human-readable architecture descriptor; graph_from_descriptor rebuilds the
// architecture with zero-initialized parameters.
std::string describe_graph(const NetworkGraph& graph);
NetworkGraph graph_from_descriptor(const std::string& text);

}  // namespace prunekit
