#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "prunekit/errors.hpp"

namespace prunekit {

// Dense n-dimensional f32 array, row-major, with an optional gradient buffer
// of the same length. Carries activations and parameters alike.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;
  std::int64_t id = -1;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  int ndim() const { return static_cast<int>(shape.size()); }

  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  bool has_grad() const { return !grad.empty(); }

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
  }

  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0f);
  }

  // NaN/Inf detection, checkable on demand.
  bool all_finite() const;

  std::string shape_str() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<int> shape, float fill = 0.0f);
TensorPtr make_tensor(std::vector<int> shape, std::vector<float> data);
// Same as make_tensor but with requires_grad set; used for parameters.
TensorPtr make_param(std::vector<int> shape, float fill = 0.0f);

enum class OpKind {
  Conv2d,
  BatchNorm2d,
  Relu,
  MaxPool2d,
  GlobalAvgPool,
  Flatten,
  Linear,
  Add,
  ChannelGather,
  SoftmaxCrossEntropy,
};

const char* op_kind_name(OpKind k);

// One recorded forward op. The backward closure owns the saved forward
// context (input shapes, batch statistics, argmax maps, ...).
struct OpRecord {
  OpKind kind;
  std::vector<std::int64_t> input_ids;
  std::int64_t output_id = -1;
  std::function<void()> backward;
};

// Forward tape. Records are appended in execution order, so iterating in
// reverse is a reverse topological traversal and visits each record once.
class Tape {
 public:
  void record(OpKind kind, std::vector<std::int64_t> input_ids, std::int64_t output_id,
              std::function<void()> backward_fn);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded op backward once.
  // Throws if `loss` is not scalar or the tape was already consumed.
  void backward(const TensorPtr& loss);

  void reset() {
    records_.clear();
    consumed_ = false;
  }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<OpRecord>& records() const { return records_; }

 private:
  std::vector<OpRecord> records_;
  bool consumed_ = false;
};

}  // namespace prunekit
