#include "prunekit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace prunekit {

void TrainConfig::validate() const {
  if (!(ratio_r > 0.0f && ratio_r < 1.0f)) {
    throw ConfigError("config: ratio r must be in (0,1)");
  }
  if (!(threshold_p > 0.0f && threshold_p < 1.0f)) {
    throw ConfigError("config: threshold p must be in (0,1)");
  }
  if (lr < 0 || momentum < 0 || weight_decay < 0) {
    throw ConfigError("config: rates must be >= 0");
  }
  if (delta_lambda <= 0) throw ConfigError("config: delta_lambda must be positive");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (stage1_epochs < 0 || finetune_epochs < 0) {
    throw ConfigError("config: epoch counts must be >= 0");
  }
  if (val_fraction < 0.0f || val_fraction >= 1.0f) {
    throw ConfigError("config: val_fraction must be in [0,1)");
  }
  if (rule != "local" && rule != "global") {
    throw ConfigError("config: rule must be 'local' or 'global', got '" + rule + "'");
  }
  if (metric != "dependency" && metric != "gamma") {
    throw ConfigError("config: metric must be 'dependency' or 'gamma', got '" + metric + "'");
  }
  if (norm != "l2" && norm != "l1") {
    throw ConfigError("config: norm must be 'l2' or 'l1', got '" + norm + "'");
  }
  if (dataset != "mnist" && dataset != "cifar10") {
    throw ConfigError("config: dataset must be 'mnist' or 'cifar10', got '" + dataset + "'");
  }
  if (arch != "vgg-small" && arch != "preact-resnet-8" && arch != "preact-resnet-14") {
    throw ConfigError("config: unknown arch '" + arch + "'");
  }
}

SelectionRule TrainConfig::selection_rule() const {
  return rule == "local" ? SelectionRule::Local : SelectionRule::Global;
}

ImportanceMetric TrainConfig::importance_metric() const {
  return metric == "dependency" ? ImportanceMetric::DependencyAware
                                : ImportanceMetric::GammaOnly;
}

NormKind TrainConfig::norm_kind() const {
  return norm == "l2" ? NormKind::L2 : NormKind::L1;
}

std::string stage_report_csv(const StageReport& report) {
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,val_acc,sparsity,lambda,lr\n";
  for (const auto& r : report.rows) {
    os << r.epoch << "," << r.train_loss << "," << r.train_acc << "," << r.val_acc << ","
       << r.sparsity << "," << r.lambda << "," << r.lr << "\n";
  }
  return os.str();
}

int dataset_input_channels(const std::string& dataset_id) {
  return dataset_id == "cifar10" ? 3 : 1;
}

namespace {

RawDataset take_indices(const RawDataset& data, const std::vector<int>& idx) {
  RawDataset out;
  out.channels = data.channels;
  out.height = data.height;
  out.width = data.width;
  const std::size_t sz = data.image_size();
  for (int i : idx) {
    out.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
    out.images.insert(out.images.end(), data.images.begin() + i * sz,
                      data.images.begin() + (i + 1) * sz);
  }
  return out;
}

}  // namespace

SplitData load_and_split(const TrainConfig& cfg) {
  SplitData out;
  auto full_train = load_dataset(cfg.dataset, cfg.data_root, "train", cfg.limit_per_class);
  out.test = load_dataset(cfg.dataset, cfg.data_root, "test", cfg.limit_per_class);

  std::vector<int> order(static_cast<std::size_t>(full_train.count()));
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(cfg.seed);
  split_rng.shuffle(order);
  const int n_val = static_cast<int>(cfg.val_fraction * static_cast<float>(full_train.count()));
  std::vector<int> val_idx(order.begin(), order.begin() + n_val);
  std::vector<int> train_idx(order.begin() + n_val, order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  out.val = take_indices(full_train, val_idx);
  out.train = take_indices(full_train, train_idx);

  out.mean = channel_means(out.train);
  out.stddev = channel_stds(out.train, out.mean);
  return out;
}

NetworkGraph build_model(const TrainConfig& cfg, Rng& rng) {
  const int in_ch = dataset_input_channels(cfg.dataset);
  if (cfg.arch == "vgg-small") {
    std::vector<std::string> tokens;
    std::stringstream ss(cfg.vgg_config);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) tokens.push_back(tok);
    }
    return build_vgg(tokens, in_ch, cfg.num_classes, rng);
  }
  const int blocks = cfg.arch == "preact-resnet-8" ? 2 : 4;  // depth = 3*blocks + 2
  return build_preact_resnet(blocks, in_ch, cfg.num_classes, cfg.width, cfg.mid_channels, rng);
}

namespace {

// SGD with momentum and decoupled-from-nothing weight decay (decay folded
// into the gradient, the standard recipe): v = mu*v + g + wd*p; p -= lr*v.
class Sgd {
 public:
  Sgd(float momentum, float weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(const std::vector<std::pair<std::string, TensorPtr>>& params, float lr,
            bool decay_bn) {
    for (const auto& [name, p] : params) {
      if (!p->has_grad()) continue;
      auto& v = velocity_[p->id];
      if (v.size() != p->data.size()) v.assign(p->data.size(), 0.0f);
      const bool is_bn_param = name.find(".gamma") != std::string::npos ||
                               name.find(".beta") != std::string::npos;
      const float wd = (is_bn_param && !decay_bn) ? 0.0f : weight_decay_;
      for (std::size_t i = 0; i < p->data.size(); ++i) {
        const float g = p->grad[i] + wd * p->data[i];
        v[i] = momentum_ * v[i] + g;
        p->data[i] -= lr * v[i];
      }
    }
  }

 private:
  float momentum_, weight_decay_;
  std::map<std::int64_t, std::vector<float>> velocity_;
};

struct BatchStats {
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  std::int64_t seen = 0;
};

int argmax_row(const float* row, int k) {
  int best = 0;
  for (int j = 1; j < k; ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

void train_one_epoch(NetworkGraph& graph, const TrainConfig& cfg, const SplitData& data,
                     Sgd& sgd, float lr, double lambda, Rng& epoch_rng, BatchStats& stats,
                     int epoch_for_diagnostics) {
  BatchOptions opt;
  opt.batch_size = cfg.batch_size;
  opt.shuffle = true;
  opt.augment = cfg.augment;
  opt.hflip = cfg.augment && cfg.dataset == "cifar10";
  const auto params = graph.parameters();
  int batch_index = 0;
  for_each_batch(data.train, data.mean, data.stddev, opt, epoch_rng,
                 [&](const TensorPtr& x, const std::vector<int>& labels) {
                   Tape tape;
                   auto logits = graph.forward(&tape, x, true);
                   auto loss = softmax_cross_entropy(&tape, logits, labels);
                   if (!std::isfinite(loss->data[0])) {
                     throw Error("training diverged: loss " + std::to_string(loss->data[0]) +
                                 " at epoch " + std::to_string(epoch_for_diagnostics) +
                                 ", batch " + std::to_string(batch_index));
                   }
                   for (const auto& [name, p] : params) p->zero_grad();
                   tape.backward(loss);
                   if (lambda > 0.0) apply_l1_subgradients(graph, lambda);
                   sgd.step(params, lr, cfg.decay_bn_params);

                   stats.loss_sum += static_cast<double>(loss->data[0]) * labels.size();
                   const int k = logits->dim(1);
                   for (std::size_t i = 0; i < labels.size(); ++i) {
                     if (argmax_row(logits->data.data() + i * k, k) == labels[i]) {
                       ++stats.correct;
                     }
                   }
                   stats.seen += static_cast<std::int64_t>(labels.size());
                   ++batch_index;
                 });
}

}  // namespace

SparsityReading measure_sparsity(NetworkGraph& graph, const TrainConfig& cfg) {
  auto imp = compute_importance(graph, cfg.importance_metric(), cfg.norm_kind());
  auto plan = select_local(imp, cfg.threshold_p);
  return model_sparsity(plan, graph);
}

double evaluate(NetworkGraph& graph, const RawDataset& split, const std::vector<float>& mean,
                const std::vector<float>& stddev, int batch_size) {
  if (split.count() == 0) return 0.0;
  BatchOptions opt;
  opt.batch_size = batch_size;
  Rng rng(0);  // unused: no shuffle, no augmentation
  std::int64_t correct = 0;
  for_each_batch(split, mean, stddev, opt, rng,
                 [&](const TensorPtr& x, const std::vector<int>& labels) {
                   auto logits = graph.forward(nullptr, x, false);
                   const int k = logits->dim(1);
                   for (std::size_t i = 0; i < labels.size(); ++i) {
                     if (argmax_row(logits->data.data() + i * k, k) == labels[i]) ++correct;
                   }
                 });
  return static_cast<double>(correct) / static_cast<double>(split.count());
}

Stage1Result train_stage1(NetworkGraph& graph, const TrainConfig& cfg, const SplitData& data) {
  cfg.validate();
  Stage1Result result;
  result.report.stage = "train";
  result.controller = make_controller(std::max(1, cfg.stage1_epochs), cfg.ratio_r,
                                      cfg.delta_lambda);
  if (cfg.stage1_epochs == 0) return result;

  const auto start = std::chrono::steady_clock::now();
  const bool fixed_lambda = cfg.constant_lambda >= 0.0;
  Sgd sgd(cfg.momentum, cfg.weight_decay);
  Rng master(cfg.seed * 9176u + 13u);

  for (int epoch = 1; epoch <= cfg.stage1_epochs; ++epoch) {
    const double lambda = fixed_lambda ? cfg.constant_lambda : result.controller.lambda;
    Rng epoch_rng = master.fork();
    BatchStats stats;
    // The learning rate stays fixed through stage 1; sparsity stalls once it
    // decays, so all decay is deferred to the finetune stage.
    train_one_epoch(graph, cfg, data, sgd, cfg.lr, lambda, epoch_rng, stats, epoch);

    const auto sparsity = measure_sparsity(graph, cfg);
    if (!fixed_lambda) {
      controller_step(result.controller, sparsity.value);
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = stats.seen ? stats.loss_sum / static_cast<double>(stats.seen) : 0.0;
    row.train_acc = stats.seen ? static_cast<double>(stats.correct) / stats.seen : 0.0;
    row.val_acc = evaluate(graph, data.val, data.mean, data.stddev, cfg.batch_size);
    row.sparsity = sparsity.value;
    row.lambda = lambda;
    row.lr = cfg.lr;
    result.report.rows.push_back(row);
  }
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

StageReport finetune_stage3(NetworkGraph& graph, const TrainConfig& cfg, const SplitData& data,
                            bool scratch) {
  cfg.validate();
  StageReport report;
  report.stage = scratch ? "scratch" : "finetune";
  if (cfg.finetune_epochs == 0) return report;

  if (scratch) {
    Rng reinit(cfg.seed * 7919u + 271u);
    init_parameters(graph, reinit);
  }

  const auto start = std::chrono::steady_clock::now();
  Sgd sgd(cfg.momentum, cfg.weight_decay);
  Rng master(cfg.seed * 5231u + 97u);
  const int n = cfg.finetune_epochs;
  const int m1 = n / 2, m2 = (3 * n) / 4;

  for (int epoch = 1; epoch <= n; ++epoch) {
    float lr = cfg.lr;
    if (epoch > m1) lr *= 0.1f;
    if (epoch > m2) lr *= 0.1f;
    Rng epoch_rng = master.fork();
    BatchStats stats;
    train_one_epoch(graph, cfg, data, sgd, lr, 0.0, epoch_rng, stats, epoch);

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = stats.seen ? stats.loss_sum / static_cast<double>(stats.seen) : 0.0;
    row.train_acc = stats.seen ? static_cast<double>(stats.correct) / stats.seen : 0.0;
    row.val_acc = evaluate(graph, data.val, data.mean, data.stddev, cfg.batch_size);
    row.sparsity = 0.0;
    row.lambda = 0.0;
    row.lr = lr;
    report.rows.push_back(row);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace prunekit
