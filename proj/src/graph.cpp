#include "prunekit/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace prunekit {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::BatchNorm: return "bn";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::GlobalAvgPool: return "gap";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Linear: return "linear";
  }
  return "?";
}

namespace {

Layer make_conv(std::string id, int in_ch, int out_ch, int k, int stride, int pad,
                bool bias = false) {
  Layer l;
  l.id = std::move(id);
  l.spec.kind = LayerKind::Conv;
  l.spec.in_channels = in_ch;
  l.spec.out_channels = out_ch;
  l.spec.kernel = k;
  l.spec.stride = stride;
  l.spec.padding = pad;
  l.spec.has_bias = bias;
  l.weight = make_param({out_ch, in_ch, k, k});
  if (bias) l.bias = make_param({out_ch});
  return l;
}

Layer make_bn(std::string id, int channels) {
  Layer l;
  l.id = std::move(id);
  l.spec.kind = LayerKind::BatchNorm;
  l.spec.channels = channels;
  l.gamma = make_param({channels});
  l.beta = make_param({channels});
  l.running_mean = make_tensor({channels}, 0.0f);
  l.running_var = make_tensor({channels}, 1.0f);
  return l;
}

Layer make_plain(std::string id, LayerKind kind) {
  Layer l;
  l.id = std::move(id);
  l.spec.kind = kind;
  return l;
}

Layer make_maxpool(std::string id, int k, int stride) {
  Layer l = make_plain(std::move(id), LayerKind::MaxPool);
  l.spec.pool_kernel = k;
  l.spec.pool_stride = stride;
  return l;
}

Layer make_linear(std::string id, int in_features, int out_features, bool bias = true) {
  Layer l;
  l.id = std::move(id);
  l.spec.kind = LayerKind::Linear;
  l.spec.in_features = in_features;
  l.spec.out_features = out_features;
  l.spec.has_bias = bias;
  l.weight = make_param({out_features, in_features});
  if (bias) l.bias = make_param({out_features});
  return l;
}

TensorPtr layer_forward_impl(const Layer& l, Tape* tape, const TensorPtr& x, bool training) {
  switch (l.spec.kind) {
    case LayerKind::Conv:
      return conv2d(tape, x, l.weight, l.bias, l.spec.stride, l.spec.padding);
    case LayerKind::BatchNorm:
      return batchnorm2d(tape, x, l.gamma, l.beta, l.running_mean, l.running_var, training);
    case LayerKind::Relu:
      return relu(tape, x);
    case LayerKind::MaxPool:
      return maxpool2d(tape, x, l.spec.pool_kernel, l.spec.pool_stride);
    case LayerKind::GlobalAvgPool:
      return global_avgpool(tape, x);
    case LayerKind::Flatten:
      return flatten(tape, x);
    case LayerKind::Linear:
      return linear(tape, x, l.weight, l.bias);
  }
  throw Error("layer_forward: unknown layer kind");
}

TensorPtr layer_forward(const Layer& l, Tape* tape, const TensorPtr& x, bool training,
                        const LayerTap& tap) {
  auto y = layer_forward_impl(l, tape, x, training);
  if (tap) tap(l, x, y);
  return y;
}

TensorPtr block_forward(const ResidualBlock& b, Tape* tape, const TensorPtr& x, bool training,
                        const LayerTap& tap) {
  auto t = layer_forward(b.bn1, tape, x, training, tap);
  t = relu(tape, t);
  if (!b.selection_is_full()) t = channel_gather(tape, t, b.selection);
  t = layer_forward(b.conv1, tape, t, training, tap);
  t = layer_forward(b.bn2, tape, t, training, tap);
  t = relu(tape, t);
  t = layer_forward(b.conv2, tape, t, training, tap);
  t = layer_forward(b.bn3, tape, t, training, tap);
  t = relu(tape, t);
  t = layer_forward(b.conv3, tape, t, training, tap);
  return add(tape, x, t);
}

void collect_layer_tensors(const Layer& l, bool with_stats,
                           std::vector<std::pair<std::string, TensorPtr>>& out) {
  if (l.weight) out.emplace_back(l.id + ".weight", l.weight);
  if (l.bias) out.emplace_back(l.id + ".bias", l.bias);
  if (l.gamma) out.emplace_back(l.id + ".gamma", l.gamma);
  if (l.beta) out.emplace_back(l.id + ".beta", l.beta);
  if (with_stats && l.running_mean) out.emplace_back(l.id + ".running_mean", l.running_mean);
  if (with_stats && l.running_var) out.emplace_back(l.id + ".running_var", l.running_var);
}

void init_layer(Layer& l, Rng& rng) {
  switch (l.spec.kind) {
    case LayerKind::Conv: {
      const float fan_in = static_cast<float>(l.spec.in_channels * l.spec.kernel * l.spec.kernel);
      const float stddev = std::sqrt(2.0f / fan_in);
      for (auto& v : l.weight->data) v = rng.normal(0.0f, stddev);
      if (l.bias) std::fill(l.bias->data.begin(), l.bias->data.end(), 0.0f);
      break;
    }
    case LayerKind::Linear: {
      const float stddev = std::sqrt(1.0f / static_cast<float>(l.spec.in_features));
      for (auto& v : l.weight->data) v = rng.normal(0.0f, stddev);
      if (l.bias) std::fill(l.bias->data.begin(), l.bias->data.end(), 0.0f);
      break;
    }
    case LayerKind::BatchNorm:
      // 0.5 leaves headroom for the L1 pressure to separate channels.
      std::fill(l.gamma->data.begin(), l.gamma->data.end(), 0.5f);
      std::fill(l.beta->data.begin(), l.beta->data.end(), 0.0f);
      std::fill(l.running_mean->data.begin(), l.running_mean->data.end(), 0.0f);
      std::fill(l.running_var->data.begin(), l.running_var->data.end(), 1.0f);
      break;
    default:
      break;
  }
}

Layer clone_layer(const Layer& l) {
  Layer out;
  out.id = l.id;
  out.spec = l.spec;
  auto copy = [](const TensorPtr& t, bool param) -> TensorPtr {
    if (!t) return nullptr;
    auto c = param ? make_param(t->shape) : make_tensor(t->shape);
    c->data = t->data;
    return c;
  };
  out.weight = copy(l.weight, true);
  out.bias = copy(l.bias, true);
  out.gamma = copy(l.gamma, true);
  out.beta = copy(l.beta, true);
  out.running_mean = copy(l.running_mean, false);
  out.running_var = copy(l.running_var, false);
  return out;
}

}  // namespace

TensorPtr NetworkGraph::forward(Tape* tape, const TensorPtr& input, bool training) const {
  return forward_traced(tape, input, training, nullptr);
}

TensorPtr NetworkGraph::forward_traced(Tape* tape, const TensorPtr& input, bool training,
                                       const LayerTap& tap) const {
  const bool batched = input->ndim() == 4;
  if (!batched && input->ndim() != 3) {
    throw ShapeError("forward: input must be [N,C,H,W] or [C,H,W], got " + input->shape_str());
  }
  if (input->dim(batched ? 1 : 0) != input_channels) {
    throw ShapeError("forward: input channel axis " +
                     std::to_string(input->dim(batched ? 1 : 0)) + " != graph input channels " +
                     std::to_string(input_channels));
  }
  TensorPtr x = input;
  if (!batched) {
    x = make_tensor({1, input->dim(0), input->dim(1), input->dim(2)}, input->data);
  }
  for (const auto& block : blocks) {
    if (std::holds_alternative<Layer>(block)) {
      x = layer_forward(std::get<Layer>(block), tape, x, training, tap);
    } else {
      x = block_forward(std::get<ResidualBlock>(block), tape, x, training, tap);
    }
  }
  return x;
}

std::vector<std::pair<std::string, TensorPtr>> NetworkGraph::parameters() const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  for (const auto& block : blocks) {
    if (std::holds_alternative<Layer>(block)) {
      collect_layer_tensors(std::get<Layer>(block), false, out);
    } else {
      const auto& b = std::get<ResidualBlock>(block);
      for (const Layer* l : {&b.bn1, &b.conv1, &b.bn2, &b.conv2, &b.bn3, &b.conv3}) {
        collect_layer_tensors(*l, false, out);
      }
    }
  }
  return out;
}

std::vector<std::pair<std::string, TensorPtr>> NetworkGraph::named_tensors() const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  for (const auto& block : blocks) {
    if (std::holds_alternative<Layer>(block)) {
      collect_layer_tensors(std::get<Layer>(block), true, out);
    } else {
      const auto& b = std::get<ResidualBlock>(block);
      for (const Layer* l : {&b.bn1, &b.conv1, &b.bn2, &b.conv2, &b.bn3, &b.conv3}) {
        collect_layer_tensors(*l, true, out);
      }
    }
  }
  return out;
}

std::vector<BnConvPair> NetworkGraph::bn_conv_pairs() {
  std::vector<BnConvPair> pairs;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (std::holds_alternative<ResidualBlock>(blocks[i])) {
      auto& b = std::get<ResidualBlock>(blocks[i]);
      BnConvPair fs;
      fs.bn_id = b.bn1.id;
      fs.consumer_id = b.conv1.id;
      fs.bn = &b.bn1;
      fs.consumer = &b.conv1;
      fs.block = &b;
      fs.channels = b.bn1.spec.channels;
      fs.feature_selection = true;
      fs.counts_in_sparsity = false;
      pairs.push_back(fs);

      BnConvPair p2;
      p2.bn_id = b.bn2.id;
      p2.consumer_id = b.conv2.id;
      p2.producer_id = b.conv1.id;
      p2.bn = &b.bn2;
      p2.consumer = &b.conv2;
      p2.producer = &b.conv1;
      p2.channels = b.bn2.spec.channels;
      pairs.push_back(p2);

      BnConvPair p3;
      p3.bn_id = b.bn3.id;
      p3.consumer_id = b.conv3.id;
      p3.producer_id = b.conv2.id;
      p3.bn = &b.bn3;
      p3.consumer = &b.conv3;
      p3.producer = &b.conv2;
      p3.channels = b.bn3.spec.channels;
      pairs.push_back(p3);
      continue;
    }

    auto& layer = std::get<Layer>(blocks[i]);
    if (layer.spec.kind != LayerKind::BatchNorm) continue;

    // Producer: the conv immediately upstream in the same plain run. A
    // residual block in between means the BN scales the identity path and
    // its producer side cannot be pruned.
    Layer* producer = nullptr;
    for (std::size_t j = i; j-- > 0;) {
      if (std::holds_alternative<ResidualBlock>(blocks[j])) break;
      auto& prev = std::get<Layer>(blocks[j]);
      if (prev.spec.kind == LayerKind::Conv) {
        producer = &prev;
        break;
      }
      if (prev.spec.kind == LayerKind::BatchNorm || prev.spec.kind == LayerKind::Linear) break;
    }
    if (producer == nullptr) continue;  // unprunable

    // Consumer: next conv or linear, skipping channel-preserving layers.
    Layer* consumer = nullptr;
    for (std::size_t j = i + 1; j < blocks.size(); ++j) {
      if (std::holds_alternative<ResidualBlock>(blocks[j])) break;
      auto& next = std::get<Layer>(blocks[j]);
      if (next.spec.kind == LayerKind::Conv || next.spec.kind == LayerKind::Linear) {
        consumer = &next;
        break;
      }
      if (next.spec.kind == LayerKind::BatchNorm) break;
    }
    if (consumer == nullptr) continue;  // unprunable

    BnConvPair p;
    p.bn_id = layer.id;
    p.consumer_id = consumer->id;
    p.producer_id = producer->id;
    p.bn = &layer;
    p.consumer = consumer;
    p.producer = producer;
    p.channels = layer.spec.channels;
    pairs.push_back(p);
  }
  return pairs;
}

std::vector<std::string> NetworkGraph::unprunable_bn_ids() {
  std::vector<std::string> paired;
  for (const auto& p : bn_conv_pairs()) paired.push_back(p.bn_id);
  std::vector<std::string> out;
  for (const auto& block : blocks) {
    if (!std::holds_alternative<Layer>(block)) continue;
    const auto& l = std::get<Layer>(block);
    if (l.spec.kind != LayerKind::BatchNorm) continue;
    if (std::find(paired.begin(), paired.end(), l.id) == paired.end()) out.push_back(l.id);
  }
  return out;
}

Layer* NetworkGraph::find_layer(const std::string& id) {
  for (auto& block : blocks) {
    if (std::holds_alternative<Layer>(block)) {
      auto& l = std::get<Layer>(block);
      if (l.id == id) return &l;
    } else {
      auto& b = std::get<ResidualBlock>(block);
      for (Layer* l : {&b.bn1, &b.conv1, &b.bn2, &b.conv2, &b.bn3, &b.conv3}) {
        if (l->id == id) return l;
      }
    }
  }
  return nullptr;
}

NetworkGraph NetworkGraph::clone() const {
  NetworkGraph out;
  out.arch = arch;
  out.input_channels = input_channels;
  out.num_classes = num_classes;
  for (const auto& block : blocks) {
    if (std::holds_alternative<Layer>(block)) {
      out.blocks.emplace_back(clone_layer(std::get<Layer>(block)));
    } else {
      const auto& b = std::get<ResidualBlock>(block);
      ResidualBlock nb;
      nb.id = b.id;
      nb.bn1 = clone_layer(b.bn1);
      nb.conv1 = clone_layer(b.conv1);
      nb.bn2 = clone_layer(b.bn2);
      nb.conv2 = clone_layer(b.conv2);
      nb.bn3 = clone_layer(b.bn3);
      nb.conv3 = clone_layer(b.conv3);
      nb.selection = b.selection;
      out.blocks.emplace_back(std::move(nb));
    }
  }
  return out;
}

NetworkGraph build_vgg(const std::vector<std::string>& config, int in_channels, int num_classes,
                       Rng& rng) {
  if (config.empty()) throw ConfigError("build_vgg: empty config");
  NetworkGraph g;
  g.arch = "vgg";
  g.input_channels = in_channels;
  g.num_classes = num_classes;

  int prev = in_channels;
  int conv_idx = 0, pool_idx = 0;
  for (const auto& tok : config) {
    if (tok == "M") {
      ++pool_idx;
      g.blocks.emplace_back(make_maxpool("pool" + std::to_string(pool_idx), 2, 2));
      continue;
    }
    int ch = 0;
    try {
      ch = std::stoi(tok);
    } catch (const std::exception&) {
      throw ConfigError("build_vgg: bad config token '" + tok + "'");
    }
    if (ch <= 0) throw ConfigError("build_vgg: channel count must be positive, got " + tok);
    ++conv_idx;
    const std::string n = std::to_string(conv_idx);
    g.blocks.emplace_back(make_conv("conv" + n, prev, ch, 3, 1, 1));
    g.blocks.emplace_back(make_bn("bn" + n, ch));
    g.blocks.emplace_back(make_plain("relu" + n, LayerKind::Relu));
    prev = ch;
  }
  if (conv_idx == 0) throw ConfigError("build_vgg: config has no conv layers");
  g.blocks.emplace_back(make_plain("gap", LayerKind::GlobalAvgPool));
  g.blocks.emplace_back(make_plain("flatten", LayerKind::Flatten));
  g.blocks.emplace_back(make_linear("fc", prev, num_classes));
  init_parameters(g, rng);
  return g;
}

NetworkGraph build_preact_resnet(int num_blocks, int in_channels, int num_classes, int width,
                                 int mid_channels, Rng& rng) {
  if (num_blocks < 1) throw ConfigError("build_preact_resnet: need at least one block");
  if (width < 1 || mid_channels < 1) {
    throw ConfigError("build_preact_resnet: width and mid_channels must be positive");
  }
  NetworkGraph g;
  g.arch = "preact_resnet";
  g.input_channels = in_channels;
  g.num_classes = num_classes;

  g.blocks.emplace_back(make_conv("stem", in_channels, width, 3, 1, 1));
  g.blocks.emplace_back(make_maxpool("pool1", 2, 2));
  const int first_half = (num_blocks + 1) / 2;
  for (int i = 0; i < num_blocks; ++i) {
    if (i == first_half && num_blocks > 1) {
      g.blocks.emplace_back(make_maxpool("pool2", 2, 2));
    }
    ResidualBlock b;
    b.id = "block" + std::to_string(i + 1);
    b.bn1 = make_bn(b.id + ".bn1", width);
    b.conv1 = make_conv(b.id + ".conv1", width, mid_channels, 1, 1, 0);
    b.bn2 = make_bn(b.id + ".bn2", mid_channels);
    b.conv2 = make_conv(b.id + ".conv2", mid_channels, mid_channels, 3, 1, 1);
    b.bn3 = make_bn(b.id + ".bn3", mid_channels);
    b.conv3 = make_conv(b.id + ".conv3", mid_channels, width, 1, 1, 0);
    b.selection.resize(static_cast<std::size_t>(width));
    std::iota(b.selection.begin(), b.selection.end(), 0);
    g.blocks.emplace_back(std::move(b));
  }
  g.blocks.emplace_back(make_bn("final_bn", width));
  g.blocks.emplace_back(make_plain("final_relu", LayerKind::Relu));
  g.blocks.emplace_back(make_plain("gap", LayerKind::GlobalAvgPool));
  g.blocks.emplace_back(make_plain("flatten", LayerKind::Flatten));
  g.blocks.emplace_back(make_linear("fc", width, num_classes));
  init_parameters(g, rng);
  return g;
}

void init_parameters(NetworkGraph& graph, Rng& rng) {
  for (auto& block : graph.blocks) {
    if (std::holds_alternative<Layer>(block)) {
      init_layer(std::get<Layer>(block), rng);
    } else {
      auto& b = std::get<ResidualBlock>(block);
      for (Layer* l : {&b.bn1, &b.conv1, &b.bn2, &b.conv2, &b.bn3, &b.conv3}) {
        init_layer(*l, rng);
      }
    }
  }
}

namespace {

struct ShapeCursor {
  std::int64_t c = 0, h = 0, w = 0;
  bool flat = false;
};

void count_layer(const Layer& l, ShapeCursor& s, CountReport& r) {
  switch (l.spec.kind) {
    case LayerKind::Conv: {
      if (s.flat) throw ShapeError("count: conv after flatten");
      if (s.c != l.spec.in_channels) {
        throw ShapeError("count: layer " + l.id + " expects " +
                         std::to_string(l.spec.in_channels) + " channels, got " +
                         std::to_string(s.c));
      }
      const std::int64_t ho = conv_out_dim(static_cast<int>(s.h), l.spec.kernel, l.spec.stride,
                                           l.spec.padding);
      const std::int64_t wo = conv_out_dim(static_cast<int>(s.w), l.spec.kernel, l.spec.stride,
                                           l.spec.padding);
      const std::int64_t k2 = static_cast<std::int64_t>(l.spec.kernel) * l.spec.kernel;
      r.params += k2 * l.spec.in_channels * l.spec.out_channels +
                  (l.spec.has_bias ? l.spec.out_channels : 0);
      r.flops += 2 * k2 * l.spec.in_channels * l.spec.out_channels * ho * wo;
      s.c = l.spec.out_channels;
      s.h = ho;
      s.w = wo;
      break;
    }
    case LayerKind::BatchNorm:
      r.params += 2LL * l.spec.channels;
      break;
    case LayerKind::MaxPool:
      s.h = (s.h - l.spec.pool_kernel) / l.spec.pool_stride + 1;
      s.w = (s.w - l.spec.pool_kernel) / l.spec.pool_stride + 1;
      break;
    case LayerKind::GlobalAvgPool:
      s.h = 1;
      s.w = 1;
      break;
    case LayerKind::Flatten:
      s.c = s.c * s.h * s.w;
      s.flat = true;
      break;
    case LayerKind::Linear:
      r.params += static_cast<std::int64_t>(l.spec.in_features) * l.spec.out_features +
                  (l.spec.has_bias ? l.spec.out_features : 0);
      r.flops += 2LL * l.spec.in_features * l.spec.out_features;
      s.c = l.spec.out_features;
      break;
    case LayerKind::Relu:
      break;
  }
}

}  // namespace

CountReport count_params_flops(const NetworkGraph& graph, const std::vector<int>& input_shape) {
  CountReport r;
  if (graph.blocks.empty()) return r;
  if (input_shape.size() != 3) {
    throw ShapeError("count_params_flops: input shape must be [C,H,W]");
  }
  ShapeCursor s{input_shape[0], input_shape[1], input_shape[2], false};
  for (const auto& block : graph.blocks) {
    if (std::holds_alternative<Layer>(block)) {
      count_layer(std::get<Layer>(block), s, r);
    } else {
      const auto& b = std::get<ResidualBlock>(block);
      ShapeCursor t = s;
      count_layer(b.bn1, t, r);
      t.c = static_cast<std::int64_t>(b.selection.size());  // feature selection
      count_layer(b.conv1, t, r);
      count_layer(b.bn2, t, r);
      count_layer(b.conv2, t, r);
      count_layer(b.bn3, t, r);
      count_layer(b.conv3, t, r);
      // identity path: spatial and channel dims unchanged
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Architecture descriptor
// ---------------------------------------------------------------------------

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  return os.str();
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

void describe_layer(std::ostringstream& os, const Layer& l) {
  os << "layer " << layer_kind_name(l.spec.kind) << " " << l.id;
  switch (l.spec.kind) {
    case LayerKind::Conv:
      os << " in=" << l.spec.in_channels << " out=" << l.spec.out_channels
         << " k=" << l.spec.kernel << " s=" << l.spec.stride << " p=" << l.spec.padding
         << " bias=" << (l.spec.has_bias ? 1 : 0);
      break;
    case LayerKind::BatchNorm:
      os << " c=" << l.spec.channels;
      break;
    case LayerKind::MaxPool:
      os << " k=" << l.spec.pool_kernel << " s=" << l.spec.pool_stride;
      break;
    case LayerKind::Linear:
      os << " in=" << l.spec.in_features << " out=" << l.spec.out_features
         << " bias=" << (l.spec.has_bias ? 1 : 0);
      break;
    default:
      break;
  }
  os << "\n";
}

[[noreturn]] void malformed(const std::string& why) {
  throw CheckpointError(CheckpointError::Kind::Malformed, "architecture descriptor: " + why);
}

std::map<std::string, std::string> parse_kv(std::istringstream& is) {
  std::map<std::string, std::string> kv;
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) malformed("expected key=value, got '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

int kv_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) malformed("missing key '" + key + "'");
  return std::stoi(it->second);
}

}  // namespace

std::string describe_graph(const NetworkGraph& graph) {
  std::ostringstream os;
  os << "prunekit-graph v1\n";
  os << "arch " << graph.arch << "\n";
  os << "input " << graph.input_channels << "\n";
  os << "classes " << graph.num_classes << "\n";
  for (const auto& block : graph.blocks) {
    if (std::holds_alternative<Layer>(block)) {
      describe_layer(os, std::get<Layer>(block));
    } else {
      const auto& b = std::get<ResidualBlock>(block);
      os << "block " << b.id << " c=" << b.width() << " m1=" << b.conv1.spec.out_channels
         << " m2=" << b.conv2.spec.out_channels << " sel="
         << (b.selection_is_full() ? std::string("all") : join_ints(b.selection)) << "\n";
    }
  }
  os << "end\n";
  return os.str();
}

NetworkGraph graph_from_descriptor(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "prunekit-graph v1") {
    malformed("missing 'prunekit-graph v1' header");
  }
  NetworkGraph g;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string word;
    is >> word;
    if (word == "end") {
      ended = true;
      break;
    } else if (word == "arch") {
      is >> g.arch;
    } else if (word == "input") {
      is >> g.input_channels;
    } else if (word == "classes") {
      is >> g.num_classes;
    } else if (word == "layer") {
      std::string kind, id;
      is >> kind >> id;
      auto kv = parse_kv(is);
      if (kind == "conv") {
        g.blocks.emplace_back(make_conv(id, kv_int(kv, "in"), kv_int(kv, "out"), kv_int(kv, "k"),
                                        kv_int(kv, "s"), kv_int(kv, "p"),
                                        kv_int(kv, "bias") != 0));
      } else if (kind == "bn") {
        g.blocks.emplace_back(make_bn(id, kv_int(kv, "c")));
      } else if (kind == "relu") {
        g.blocks.emplace_back(make_plain(id, LayerKind::Relu));
      } else if (kind == "maxpool") {
        g.blocks.emplace_back(make_maxpool(id, kv_int(kv, "k"), kv_int(kv, "s")));
      } else if (kind == "gap") {
        g.blocks.emplace_back(make_plain(id, LayerKind::GlobalAvgPool));
      } else if (kind == "flatten") {
        g.blocks.emplace_back(make_plain(id, LayerKind::Flatten));
      } else if (kind == "linear") {
        g.blocks.emplace_back(
            make_linear(id, kv_int(kv, "in"), kv_int(kv, "out"), kv_int(kv, "bias") != 0));
      } else {
        malformed("unknown layer kind '" + kind + "'");
      }
    } else if (word == "block") {
      std::string id;
      is >> id;
      auto kv = parse_kv(is);
      const int c = kv_int(kv, "c"), m1 = kv_int(kv, "m1"), m2 = kv_int(kv, "m2");
      auto sel_it = kv.find("sel");
      if (sel_it == kv.end()) malformed("block missing sel=");
      ResidualBlock b;
      b.id = id;
      if (sel_it->second == "all") {
        b.selection.resize(static_cast<std::size_t>(c));
        std::iota(b.selection.begin(), b.selection.end(), 0);
      } else {
        b.selection = split_ints(sel_it->second);
      }
      b.bn1 = make_bn(id + ".bn1", c);
      b.conv1 = make_conv(id + ".conv1", static_cast<int>(b.selection.size()), m1, 1, 1, 0);
      b.bn2 = make_bn(id + ".bn2", m1);
      b.conv2 = make_conv(id + ".conv2", m1, m2, 3, 1, 1);
      b.bn3 = make_bn(id + ".bn3", m2);
      b.conv3 = make_conv(id + ".conv3", m2, c, 1, 1, 0);
      g.blocks.emplace_back(std::move(b));
    } else {
      malformed("unknown directive '" + word + "'");
    }
  }
  if (!ended) malformed("missing 'end'");
  if (g.input_channels <= 0 || g.num_classes <= 0) malformed("missing input/classes");
  return g;
}

}  // namespace prunekit
