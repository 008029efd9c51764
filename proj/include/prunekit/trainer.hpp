#pragma once

#include <string>
#include <vector>

#include "prunekit/controller.hpp"
#include "prunekit/dataset.hpp"
#include "prunekit/graph.hpp"
#include "prunekit/importance.hpp"
#include "prunekit/selection.hpp"

namespace prunekit {

struct TrainConfig {
  // data
  std::string dataset = "mnist";  // mnist | cifar10
  std::string data_root = "data";
  int limit_per_class = 0;  // 0 = use everything
  float val_fraction = 0.1f;

  // model
  std::string arch = "vgg-small";  // vgg-small | preact-resnet-8 | preact-resnet-14
  std::string vgg_config = "16,16,M,32,32,M";
  int width = 32;           // resnet residual-path width
  int mid_channels = 16;    // resnet bottleneck width
  int num_classes = 10;

  // optimization
  int stage1_epochs = 20;
  int finetune_epochs = 20;
  int batch_size = 64;
  float lr = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  bool decay_bn_params = true;
  bool augment = true;  // pad-4 random crop (+ horizontal flip on CIFAR)

  // pruning
  float threshold_p = 0.01f;  // p of the local rule
  float ratio_r = 0.5f;       // r, the target pruning ratio
  double delta_lambda = 1e-5;
  double constant_lambda = -1.0;  // >= 0 switches off the controller (fixed-lambda arm)
  std::string rule = "local";     // local | global
  std::string metric = "dependency";  // dependency | gamma
  std::string norm = "l2";            // l2 | l1
  bool bias_absorb = false;
  bool scratch_retrain = false;

  unsigned seed = 1;

  void validate() const;
  SelectionRule selection_rule() const;
  ImportanceMetric importance_metric() const;
  NormKind norm_kind() const;
};

struct EpochRow {
  int epoch = 0;
  double train_loss = 0, train_acc = 0, val_acc = 0;
  double sparsity = 0, lambda = 0, lr = 0;
};

struct StageReport {
  std::string stage;
  std::vector<EpochRow> rows;
  double wall_seconds = 0;
};

// CSV with header: epoch,train_loss,train_acc,val_acc,sparsity,lambda,lr
std::string stage_report_csv(const StageReport& report);

// Train/val/test splits plus the normalization statistics computed from the
// train portion. The val carve-out is seed-deterministic.
struct SplitData {
  RawDataset train, val, test;
  std::vector<float> mean, stddev;
};

SplitData load_and_split(const TrainConfig& cfg);

NetworkGraph build_model(const TrainConfig& cfg, Rng& rng);
int dataset_input_channels(const std::string& dataset_id);

struct Stage1Result {
  StageReport report;
  ControllerState controller;
};

// Sparsity training: SGD at a fixed learning rate, L1 on the prunable BN
// scales, and one controller step per epoch (skipped in fixed-lambda mode).
Stage1Result train_stage1(NetworkGraph& graph, const TrainConfig& cfg, const SplitData& data);

// Standard SGD with the step schedule (lr/10 past 50% and 75% of the stage).
// scratch=true re-initializes every parameter first (the scratch-E arm).
StageReport finetune_stage3(NetworkGraph& graph, const TrainConfig& cfg, const SplitData& data,
                            bool scratch = false);

double evaluate(NetworkGraph& graph, const RawDataset& split, const std::vector<float>& mean,
                const std::vector<float>& stddev, int batch_size = 64);

// End-of-epoch sparsity measurement: local rule at the configured p over the
// configured importance metric.
SparsityReading measure_sparsity(NetworkGraph& graph, const TrainConfig& cfg);

}  // namespace prunekit
