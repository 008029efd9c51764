#include "prunekit/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace prunekit {

namespace {
std::atomic<std::int64_t> g_next_id{0};
}

bool Tensor::all_finite() const {
  for (float v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

TensorPtr make_tensor(std::vector<int> shape, float fill) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  std::int64_t n = 1;
  for (int d : t->shape) {
    if (d < 0) throw ShapeError("make_tensor: negative dimension in " + t->shape_str());
    n *= d;
  }
  t->data.assign(static_cast<std::size_t>(n), fill);
  t->id = g_next_id.fetch_add(1);
  return t;
}

TensorPtr make_tensor(std::vector<int> shape, std::vector<float> data) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  std::int64_t n = 1;
  for (int d : t->shape) n *= d;
  if (n != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("make_tensor: shape " + t->shape_str() + " wants " + std::to_string(n) +
                     " values, got " + std::to_string(data.size()));
  }
  t->data = std::move(data);
  t->id = g_next_id.fetch_add(1);
  return t;
}

TensorPtr make_param(std::vector<int> shape, float fill) {
  auto t = make_tensor(std::move(shape), fill);
  t->requires_grad = true;
  return t;
}

const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Conv2d: return "conv2d";
    case OpKind::BatchNorm2d: return "batchnorm2d";
    case OpKind::Relu: return "relu";
    case OpKind::MaxPool2d: return "maxpool2d";
    case OpKind::GlobalAvgPool: return "global_avgpool";
    case OpKind::Flatten: return "flatten";
    case OpKind::Linear: return "linear";
    case OpKind::Add: return "add";
    case OpKind::ChannelGather: return "channel_gather";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "?";
}

void Tape::record(OpKind kind, std::vector<std::int64_t> input_ids, std::int64_t output_id,
                  std::function<void()> backward_fn) {
  // Outputs are created in execution order, so ids must be increasing; this
  // keeps the record list a valid reverse topological order.
  if (!records_.empty() && output_id <= records_.back().output_id) {
    throw Error("tape: op outputs recorded out of order");
  }
  records_.push_back(OpRecord{kind, std::move(input_ids), output_id, std::move(backward_fn)});
}

void Tape::backward(const TensorPtr& loss) {
  if (consumed_) {
    throw Error("tape: backward called twice without a new forward pass");
  }
  if (loss->numel() != 1) {
    throw ShapeError("tape: backward needs a scalar loss, got " + loss->shape_str());
  }
  consumed_ = true;
  loss->ensure_grad();
  loss->grad[0] = 1.0f;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->backward();
  }
}

}  // namespace prunekit
