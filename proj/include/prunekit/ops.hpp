#pragma once

#include <vector>

#include "prunekit/tensor.hpp"

namespace prunekit {

// All forward ops accept a nullable tape; pass nullptr for inference-only
// execution (nothing is recorded, no backward possible).

// input [N,C_in,H,W] or [C_in,H,W]; weight [C_out,C_in,kh,kw]; bias [C_out] or null.
// Output spatial dims: floor((H + 2*padding - k)/stride) + 1.
TensorPtr conv2d(Tape* tape, const TensorPtr& input, const TensorPtr& weight,
                 const TensorPtr& bias, int stride, int padding);

// [C_out,C_in,k,k] -> [C_out, k^2*C_in]; column block c (width k^2) is the
// kernel slice for input channel c. fold_weight is the inverse.
TensorPtr unfold_weight(const TensorPtr& weight);
TensorPtr fold_weight(const TensorPtr& unfolded, int c_in, int k);

// x [N,C,H,W]. Train mode normalizes with batch statistics and updates the
// running stats in place (exponential moving average); eval mode uses the
// running stats. Output channel c = gamma_c * xhat_c + beta_c.
TensorPtr batchnorm2d(Tape* tape, const TensorPtr& x, const TensorPtr& gamma,
                      const TensorPtr& beta, const TensorPtr& running_mean,
                      const TensorPtr& running_var, bool training, float eps = 1e-5f,
                      float momentum = 0.1f);

TensorPtr relu(Tape* tape, const TensorPtr& x);

// No padding; output dims floor((H - k)/stride) + 1.
TensorPtr maxpool2d(Tape* tape, const TensorPtr& x, int k = 2, int stride = 2);

// [N,C,H,W] -> [N,C]
TensorPtr global_avgpool(Tape* tape, const TensorPtr& x);

// [N,...] -> [N, prod(rest)]
TensorPtr flatten(Tape* tape, const TensorPtr& x);

// x [N,C]; weight [K,C]; bias [K] or null. y = x W^T + b.
TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& weight, const TensorPtr& bias);

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);

// Keeps the listed channels of x [N,C,H,W], in the given (ascending) order.
TensorPtr channel_gather(Tape* tape, const TensorPtr& x, std::vector<int> keep);

// logits [N,K]; labels[n] in [0,K). Mean cross-entropy over the batch.
TensorPtr softmax_cross_entropy(Tape* tape, const TensorPtr& logits,
                                const std::vector<int>& labels);

inline int conv_out_dim(int in, int k, int stride, int padding) {
  return (in + 2 * padding - k) / stride + 1;
}

// Row-major sgemm: C[m,n] = alpha * op(A) op(B) + beta * C.
void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc);

}  // namespace prunekit
