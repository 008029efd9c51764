#include "prunekit/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

extern "C" void openblas_set_num_threads(int);

namespace prunekit {

namespace {

// Forward order is the deterministic reduction order; keep BLAS off threads.
struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
} g_blas_init;

bool out_requires_grad(std::initializer_list<const TensorPtr*> ins) {
  for (const TensorPtr* t : ins) {
    if (*t && (*t)->requires_grad) return true;
  }
  return false;
}

// col is [C*k*k, N*Ho*Wo]; row (c*k+ky)*k+kx, column (n*Ho+oy)*Wo+ox.
void im2col(const float* x, int n_batch, int c_in, int h, int w, int kh, int kw, int stride,
            int pad, int ho, int wo, float* col) {
  const int cols = n_batch * ho * wo;
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        float* row = col + static_cast<std::size_t>((c * kh + ky) * kw + kx) * cols;
        for (int n = 0; n < n_batch; ++n) {
          const float* plane = x + (static_cast<std::size_t>(n) * c_in + c) * h * w;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            float* dst = row + (static_cast<std::size_t>(n) * ho + oy) * wo;
            if (iy < 0 || iy >= h) {
              std::fill(dst, dst + wo, 0.0f);
              continue;
            }
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              dst[ox] = (ix < 0 || ix >= w) ? 0.0f : plane[iy * w + ix];
            }
          }
        }
      }
    }
  }
}

// Accumulates col gradients back into dx (shape [N,C,H,W]).
void col2im_acc(const float* col, int n_batch, int c_in, int h, int w, int kh, int kw, int stride,
                int pad, int ho, int wo, float* dx) {
  const int cols = n_batch * ho * wo;
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const float* row = col + static_cast<std::size_t>((c * kh + ky) * kw + kx) * cols;
        for (int n = 0; n < n_batch; ++n) {
          float* plane = dx + (static_cast<std::size_t>(n) * c_in + c) * h * w;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const float* src = row + (static_cast<std::size_t>(n) * ho + oy) * wo;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < w) plane[iy * w + ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

TensorPtr conv2d(Tape* tape, const TensorPtr& input, const TensorPtr& weight,
                 const TensorPtr& bias, int stride, int padding) {
  const bool batched = input->ndim() == 4;
  if (!batched && input->ndim() != 3) {
    throw ShapeError("conv2d: input must be [N,C,H,W] or [C,H,W], got " + input->shape_str());
  }
  if (weight->ndim() != 4) {
    throw ShapeError("conv2d: weight must be [C_out,C_in,k,k], got " + weight->shape_str());
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");

  const int n_batch = batched ? input->dim(0) : 1;
  const int c_in = input->dim(batched ? 1 : 0);
  const int h = input->dim(batched ? 2 : 1);
  const int w = input->dim(batched ? 3 : 2);
  const int c_out = weight->dim(0);
  const int kh = weight->dim(2);
  const int kw = weight->dim(3);
  if (weight->dim(1) != c_in) {
    throw ShapeError("conv2d: input channel axis (" + std::to_string(c_in) +
                     ") != weight C_in axis (" + std::to_string(weight->dim(1)) + ")");
  }
  if (kh < 1 || kw < 1) throw ShapeError("conv2d: kernel size must be >= 1");
  if (bias && bias->numel() != c_out) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias->numel()) + " != C_out " +
                     std::to_string(c_out));
  }
  const int ho = conv_out_dim(h, kh, stride, padding);
  const int wo = conv_out_dim(w, kw, stride, padding);
  if (ho < 1 || wo < 1) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " does not fit input " + input->shape_str() + " with stride " +
                     std::to_string(stride) + ", padding " + std::to_string(padding));
  }

  const int krows = c_in * kh * kw;
  const int cols = n_batch * ho * wo;
  auto col = std::make_shared<std::vector<float>>(static_cast<std::size_t>(krows) * cols);
  im2col(input->data.data(), n_batch, c_in, h, w, kh, kw, stride, padding, ho, wo, col->data());

  // out_mat[C_out, N*Ho*Wo] = W~ x col, then regroup to [N,C_out,Ho,Wo].
  std::vector<float> out_mat(static_cast<std::size_t>(c_out) * cols);
  sgemm(false, false, c_out, cols, krows, 1.0f, weight->data.data(), krows, col->data(), cols,
        0.0f, out_mat.data(), cols);

  auto out = make_tensor(batched ? std::vector<int>{n_batch, c_out, ho, wo}
                                 : std::vector<int>{c_out, ho, wo});
  const int plane = ho * wo;
  for (int n = 0; n < n_batch; ++n) {
    for (int o = 0; o < c_out; ++o) {
      const float* src = out_mat.data() + static_cast<std::size_t>(o) * cols + n * plane;
      float* dst = out->data.data() + (static_cast<std::size_t>(n) * c_out + o) * plane;
      if (bias) {
        const float b = bias->data[static_cast<std::size_t>(o)];
        for (int s = 0; s < plane; ++s) dst[s] = src[s] + b;
      } else {
        std::memcpy(dst, src, sizeof(float) * static_cast<std::size_t>(plane));
      }
    }
  }

  out->requires_grad = out_requires_grad({&input, &weight, &bias});
  if (tape && out->requires_grad) {
    std::vector<std::int64_t> in_ids{input->id, weight->id};
    if (bias) in_ids.push_back(bias->id);
    TensorPtr in = input, wt = weight, bs = bias, y = out;
    tape->record(OpKind::Conv2d, std::move(in_ids), out->id, [=]() {
      if (!y->has_grad()) return;
      std::vector<float> dy_mat(static_cast<std::size_t>(c_out) * cols);
      for (int n = 0; n < n_batch; ++n) {
        for (int o = 0; o < c_out; ++o) {
          std::memcpy(dy_mat.data() + static_cast<std::size_t>(o) * cols + n * plane,
                      y->grad.data() + (static_cast<std::size_t>(n) * c_out + o) * plane,
                      sizeof(float) * static_cast<std::size_t>(plane));
        }
      }
      if (wt->requires_grad) {
        wt->ensure_grad();
        sgemm(false, true, c_out, krows, cols, 1.0f, dy_mat.data(), cols, col->data(), cols, 1.0f,
              wt->grad.data(), krows);
      }
      if (bs && bs->requires_grad) {
        bs->ensure_grad();
        for (int o = 0; o < c_out; ++o) {
          double acc = 0.0;
          const float* row = dy_mat.data() + static_cast<std::size_t>(o) * cols;
          for (int s = 0; s < cols; ++s) acc += row[s];
          bs->grad[static_cast<std::size_t>(o)] += static_cast<float>(acc);
        }
      }
      if (in->requires_grad) {
        in->ensure_grad();
        std::vector<float> dcol(static_cast<std::size_t>(krows) * cols);
        sgemm(true, false, krows, cols, c_out, 1.0f, wt->data.data(), krows, dy_mat.data(), cols,
              0.0f, dcol.data(), cols);
        col2im_acc(dcol.data(), n_batch, c_in, h, w, kh, kw, stride, padding, ho, wo,
                   in->grad.data());
      }
    });
  }
  return out;
}

TensorPtr unfold_weight(const TensorPtr& weight) {
  if (weight->ndim() != 4) {
    throw ShapeError("unfold_weight: want 4-d [C_out,C_in,k,k], got " + weight->shape_str());
  }
  if (weight->dim(2) != weight->dim(3)) {
    throw ShapeError("unfold_weight: non-square kernel " + weight->shape_str());
  }
  const int c_out = weight->dim(0);
  const int c_in = weight->dim(1);
  const int k = weight->dim(2);
  // Row-major [C_out][C_in][k][k] already lays channel blocks out contiguously.
  return make_tensor({c_out, k * k * c_in}, weight->data);
}

TensorPtr fold_weight(const TensorPtr& unfolded, int c_in, int k) {
  if (unfolded->ndim() != 2) {
    throw ShapeError("fold_weight: want 2-d unfolded weight, got " + unfolded->shape_str());
  }
  if (unfolded->dim(1) != k * k * c_in) {
    throw ShapeError("fold_weight: column count " + std::to_string(unfolded->dim(1)) +
                     " != k^2*C_in = " + std::to_string(k * k * c_in));
  }
  return make_tensor({unfolded->dim(0), c_in, k, k}, unfolded->data);
}

TensorPtr batchnorm2d(Tape* tape, const TensorPtr& x, const TensorPtr& gamma,
                      const TensorPtr& beta, const TensorPtr& running_mean,
                      const TensorPtr& running_var, bool training, float eps, float momentum) {
  if (x->ndim() != 4) {
    throw ShapeError("batchnorm2d: input must be [N,C,H,W], got " + x->shape_str());
  }
  const int n_batch = x->dim(0);
  const int c = x->dim(1);
  const int h = x->dim(2);
  const int w = x->dim(3);
  if (gamma->numel() != c || beta->numel() != c) {
    throw ShapeError("batchnorm2d: gamma/beta length (" + std::to_string(gamma->numel()) + "/" +
                     std::to_string(beta->numel()) + ") != channel axis " + std::to_string(c));
  }
  const std::int64_t m = static_cast<std::int64_t>(n_batch) * h * w;
  if (training && n_batch == 0) {
    throw Error("batchnorm2d: zero-size batch in train mode");
  }

  auto mean = std::make_shared<std::vector<float>>(static_cast<std::size_t>(c));
  auto invstd = std::make_shared<std::vector<float>>(static_cast<std::size_t>(c));
  const int plane = h * w;
  if (training) {
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int n = 0; n < n_batch; ++n) {
        const float* p = x->data.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
        for (int s = 0; s < plane; ++s) acc += p[s];
      }
      const double mu = acc / static_cast<double>(m);
      double var_acc = 0.0;
      for (int n = 0; n < n_batch; ++n) {
        const float* p = x->data.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
        for (int s = 0; s < plane; ++s) {
          const double d = p[s] - mu;
          var_acc += d * d;
        }
      }
      const double var = var_acc / static_cast<double>(m);
      (*mean)[static_cast<std::size_t>(ch)] = static_cast<float>(mu);
      (*invstd)[static_cast<std::size_t>(ch)] = static_cast<float>(1.0 / std::sqrt(var + eps));
      if (running_mean && running_var) {
        const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1)
                                      : var;
        auto& rm = running_mean->data[static_cast<std::size_t>(ch)];
        auto& rv = running_var->data[static_cast<std::size_t>(ch)];
        rm = static_cast<float>((1.0 - momentum) * rm + momentum * mu);
        rv = static_cast<float>((1.0 - momentum) * rv + momentum * unbiased);
      }
    }
  } else {
    if (!running_mean || !running_var) {
      throw Error("batchnorm2d: eval mode needs running statistics");
    }
    for (int ch = 0; ch < c; ++ch) {
      (*mean)[static_cast<std::size_t>(ch)] = running_mean->data[static_cast<std::size_t>(ch)];
      (*invstd)[static_cast<std::size_t>(ch)] = static_cast<float>(
          1.0 / std::sqrt(static_cast<double>(running_var->data[static_cast<std::size_t>(ch)]) +
                          eps));
    }
  }

  auto out = make_tensor(x->shape);
  for (int n = 0; n < n_batch; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const float mu = (*mean)[static_cast<std::size_t>(ch)];
      const float is = (*invstd)[static_cast<std::size_t>(ch)];
      const float g = gamma->data[static_cast<std::size_t>(ch)];
      const float b = beta->data[static_cast<std::size_t>(ch)];
      const float* src = x->data.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
      float* dst = out->data.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
      for (int s = 0; s < plane; ++s) dst[s] = g * (src[s] - mu) * is + b;
    }
  }

  out->requires_grad = out_requires_grad({&x, &gamma, &beta});
  if (tape && out->requires_grad) {
    TensorPtr in = x, g = gamma, b = beta, y = out;
    const bool train_stats = training;
    tape->record(OpKind::BatchNorm2d, {x->id, gamma->id, beta->id}, out->id, [=]() {
      if (!y->has_grad()) return;
      std::vector<double> sum_dy(static_cast<std::size_t>(c), 0.0);
      std::vector<double> sum_dy_xhat(static_cast<std::size_t>(c), 0.0);
      for (int n = 0; n < n_batch; ++n) {
        for (int ch = 0; ch < c; ++ch) {
          const float mu = (*mean)[static_cast<std::size_t>(ch)];
          const float is = (*invstd)[static_cast<std::size_t>(ch)];
          const float* xs = in->data.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
          const float* dys = y->grad.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
          double s_dy = 0.0, s_dyx = 0.0;
          for (int s = 0; s < plane; ++s) {
            s_dy += dys[s];
            s_dyx += static_cast<double>(dys[s]) * ((xs[s] - mu) * is);
          }
          sum_dy[static_cast<std::size_t>(ch)] += s_dy;
          sum_dy_xhat[static_cast<std::size_t>(ch)] += s_dyx;
        }
      }
      if (g->requires_grad) {
        g->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
          g->grad[static_cast<std::size_t>(ch)] +=
              static_cast<float>(sum_dy_xhat[static_cast<std::size_t>(ch)]);
        }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
          b->grad[static_cast<std::size_t>(ch)] +=
              static_cast<float>(sum_dy[static_cast<std::size_t>(ch)]);
        }
      }
      if (in->requires_grad) {
        in->ensure_grad();
        const double inv_m = 1.0 / static_cast<double>(m);
        for (int n = 0; n < n_batch; ++n) {
          for (int ch = 0; ch < c; ++ch) {
            const float mu = (*mean)[static_cast<std::size_t>(ch)];
            const float is = (*invstd)[static_cast<std::size_t>(ch)];
            const float gv = g->data[static_cast<std::size_t>(ch)];
            const float* xs = in->data.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
            const float* dys = y->grad.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
            float* dxs = in->grad.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
            if (train_stats) {
              const double mean_dy = sum_dy[static_cast<std::size_t>(ch)] * inv_m;
              const double mean_dyx = sum_dy_xhat[static_cast<std::size_t>(ch)] * inv_m;
              for (int s = 0; s < plane; ++s) {
                const double xhat = (xs[s] - mu) * is;
                dxs[s] += static_cast<float>(static_cast<double>(gv) * is *
                                             (dys[s] - mean_dy - xhat * mean_dyx));
              }
            } else {
              for (int s = 0; s < plane; ++s) dxs[s] += gv * is * dys[s];
            }
          }
        }
      }
    });
  }
  return out;
}

TensorPtr relu(Tape* tape, const TensorPtr& x) {
  auto out = make_tensor(x->shape);
  const std::size_t n = x->data.size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = x->data[i] > 0.0f ? x->data[i] : 0.0f;
  out->requires_grad = x->requires_grad;
  if (tape && out->requires_grad) {
    TensorPtr in = x, y = out;
    tape->record(OpKind::Relu, {x->id}, out->id, [=]() {
      if (!y->has_grad() || !in->requires_grad) return;
      in->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        if (in->data[i] > 0.0f) in->grad[i] += y->grad[i];
      }
    });
  }
  return out;
}

TensorPtr maxpool2d(Tape* tape, const TensorPtr& x, int k, int stride) {
  if (x->ndim() != 4) {
    throw ShapeError("maxpool2d: input must be [N,C,H,W], got " + x->shape_str());
  }
  if (k < 1 || stride < 1) throw ShapeError("maxpool2d: kernel and stride must be >= 1");
  const int n_batch = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  const int ho = (h - k) / stride + 1;
  const int wo = (w - k) / stride + 1;
  if (ho < 1 || wo < 1) {
    throw ShapeError("maxpool2d: window " + std::to_string(k) + " does not fit input " +
                     x->shape_str());
  }
  auto out = make_tensor({n_batch, c, ho, wo});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out->data.size());
  const int plane = h * w, oplane = ho * wo;
  for (int n = 0; n < n_batch; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const float* src = x->data.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
      const std::size_t obase = (static_cast<std::size_t>(n) * c + ch) * oplane;
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          float best = -std::numeric_limits<float>::infinity();
          int best_idx = -1;
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int idx = (oy * stride + ky) * w + (ox * stride + kx);
              if (src[idx] > best) {
                best = src[idx];
                best_idx = idx;
              }
            }
          }
          out->data[obase + oy * wo + ox] = best;
          (*argmax)[obase + oy * wo + ox] =
              (static_cast<std::size_t>(n) * c + ch) * plane + best_idx;
        }
      }
    }
  }
  out->requires_grad = x->requires_grad;
  if (tape && out->requires_grad) {
    TensorPtr in = x, y = out;
    tape->record(OpKind::MaxPool2d, {x->id}, out->id, [=]() {
      if (!y->has_grad() || !in->requires_grad) return;
      in->ensure_grad();
      for (std::size_t i = 0; i < y->grad.size(); ++i) {
        in->grad[static_cast<std::size_t>((*argmax)[i])] += y->grad[i];
      }
    });
  }
  return out;
}

TensorPtr global_avgpool(Tape* tape, const TensorPtr& x) {
  if (x->ndim() != 4) {
    throw ShapeError("global_avgpool: input must be [N,C,H,W], got " + x->shape_str());
  }
  const int n_batch = x->dim(0), c = x->dim(1), plane = x->dim(2) * x->dim(3);
  auto out = make_tensor({n_batch, c});
  for (int n = 0; n < n_batch; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const float* src = x->data.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
      double acc = 0.0;
      for (int s = 0; s < plane; ++s) acc += src[s];
      out->data[static_cast<std::size_t>(n) * c + ch] =
          static_cast<float>(acc / static_cast<double>(plane));
    }
  }
  out->requires_grad = x->requires_grad;
  if (tape && out->requires_grad) {
    TensorPtr in = x, y = out;
    tape->record(OpKind::GlobalAvgPool, {x->id}, out->id, [=]() {
      if (!y->has_grad() || !in->requires_grad) return;
      in->ensure_grad();
      const float inv = 1.0f / static_cast<float>(plane);
      for (int n = 0; n < n_batch; ++n) {
        for (int ch = 0; ch < c; ++ch) {
          const float g = y->grad[static_cast<std::size_t>(n) * c + ch] * inv;
          float* dst = in->grad.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
          for (int s = 0; s < plane; ++s) dst[s] += g;
        }
      }
    });
  }
  return out;
}

TensorPtr flatten(Tape* tape, const TensorPtr& x) {
  if (x->ndim() < 1) throw ShapeError("flatten: scalar input");
  const int n_batch = x->dim(0);
  const int rest = static_cast<int>(x->numel() / n_batch);
  auto out = make_tensor({n_batch, rest}, x->data);
  out->requires_grad = x->requires_grad;
  if (tape && out->requires_grad) {
    TensorPtr in = x, y = out;
    tape->record(OpKind::Flatten, {x->id}, out->id, [=]() {
      if (!y->has_grad() || !in->requires_grad) return;
      in->ensure_grad();
      for (std::size_t i = 0; i < y->grad.size(); ++i) in->grad[i] += y->grad[i];
    });
  }
  return out;
}

TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& weight, const TensorPtr& bias) {
  if (x->ndim() != 2) throw ShapeError("linear: input must be [N,C], got " + x->shape_str());
  if (weight->ndim() != 2) {
    throw ShapeError("linear: weight must be [K,C], got " + weight->shape_str());
  }
  const int n_batch = x->dim(0), c = x->dim(1), k_out = weight->dim(0);
  if (weight->dim(1) != c) {
    throw ShapeError("linear: input feature axis (" + std::to_string(c) +
                     ") != weight column axis (" + std::to_string(weight->dim(1)) + ")");
  }
  if (bias && bias->numel() != k_out) {
    throw ShapeError("linear: bias length " + std::to_string(bias->numel()) + " != K " +
                     std::to_string(k_out));
  }
  auto out = make_tensor({n_batch, k_out});
  if (n_batch > 0) {
    sgemm(false, true, n_batch, k_out, c, 1.0f, x->data.data(), c, weight->data.data(), c, 0.0f,
          out->data.data(), k_out);
  }
  if (bias) {
    for (int n = 0; n < n_batch; ++n) {
      float* row = out->data.data() + static_cast<std::size_t>(n) * k_out;
      for (int k = 0; k < k_out; ++k) row[k] += bias->data[static_cast<std::size_t>(k)];
    }
  }
  out->requires_grad = out_requires_grad({&x, &weight, &bias});
  if (tape && out->requires_grad) {
    std::vector<std::int64_t> in_ids{x->id, weight->id};
    if (bias) in_ids.push_back(bias->id);
    TensorPtr in = x, wt = weight, bs = bias, y = out;
    tape->record(OpKind::Linear, std::move(in_ids), out->id, [=]() {
      if (!y->has_grad()) return;
      if (wt->requires_grad) {
        wt->ensure_grad();
        sgemm(true, false, k_out, c, n_batch, 1.0f, y->grad.data(), k_out, in->data.data(), c,
              1.0f, wt->grad.data(), c);
      }
      if (bs && bs->requires_grad) {
        bs->ensure_grad();
        for (int k = 0; k < k_out; ++k) {
          double acc = 0.0;
          for (int n = 0; n < n_batch; ++n) acc += y->grad[static_cast<std::size_t>(n) * k_out + k];
          bs->grad[static_cast<std::size_t>(k)] += static_cast<float>(acc);
        }
      }
      if (in->requires_grad) {
        in->ensure_grad();
        sgemm(false, false, n_batch, c, k_out, 1.0f, y->grad.data(), k_out, wt->data.data(), c,
              1.0f, in->grad.data(), c);
      }
    });
  }
  return out;
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape) {
    throw ShapeError("add: shape mismatch " + a->shape_str() + " vs " + b->shape_str());
  }
  auto out = make_tensor(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
  out->requires_grad = a->requires_grad || b->requires_grad;
  if (tape && out->requires_grad) {
    TensorPtr ta = a, tb = b, y = out;
    tape->record(OpKind::Add, {a->id, b->id}, out->id, [=]() {
      if (!y->has_grad()) return;
      if (ta->requires_grad) {
        ta->ensure_grad();
        for (std::size_t i = 0; i < y->grad.size(); ++i) ta->grad[i] += y->grad[i];
      }
      if (tb->requires_grad) {
        tb->ensure_grad();
        for (std::size_t i = 0; i < y->grad.size(); ++i) tb->grad[i] += y->grad[i];
      }
    });
  }
  return out;
}

TensorPtr channel_gather(Tape* tape, const TensorPtr& x, std::vector<int> keep) {
  if (x->ndim() != 4) {
    throw ShapeError("channel_gather: input must be [N,C,H,W], got " + x->shape_str());
  }
  const int n_batch = x->dim(0), c = x->dim(1), plane = x->dim(2) * x->dim(3);
  for (int idx : keep) {
    if (idx < 0 || idx >= c) {
      throw ShapeError("channel_gather: index " + std::to_string(idx) +
                       " out of range for channel axis " + std::to_string(c));
    }
  }
  const int kept = static_cast<int>(keep.size());
  auto out = make_tensor({n_batch, kept, x->dim(2), x->dim(3)});
  for (int n = 0; n < n_batch; ++n) {
    for (int j = 0; j < kept; ++j) {
      std::memcpy(out->data.data() + (static_cast<std::size_t>(n) * kept + j) * plane,
                  x->data.data() + (static_cast<std::size_t>(n) * c + keep[j]) * plane,
                  sizeof(float) * static_cast<std::size_t>(plane));
    }
  }
  out->requires_grad = x->requires_grad;
  if (tape && out->requires_grad) {
    TensorPtr in = x, y = out;
    auto idx = std::make_shared<std::vector<int>>(std::move(keep));
    tape->record(OpKind::ChannelGather, {x->id}, out->id, [=]() {
      if (!y->has_grad() || !in->requires_grad) return;
      in->ensure_grad();
      for (int n = 0; n < n_batch; ++n) {
        for (int j = 0; j < kept; ++j) {
          const float* src = y->grad.data() + (static_cast<std::size_t>(n) * kept + j) * plane;
          float* dst = in->grad.data() + (static_cast<std::size_t>(n) * c + (*idx)[j]) * plane;
          for (int s = 0; s < plane; ++s) dst[s] += src[s];
        }
      }
    });
  }
  return out;
}

TensorPtr softmax_cross_entropy(Tape* tape, const TensorPtr& logits,
                                const std::vector<int>& labels) {
  if (logits->ndim() != 2) {
    throw ShapeError("softmax_cross_entropy: logits must be [N,K], got " + logits->shape_str());
  }
  const int n_batch = logits->dim(0), k = logits->dim(1);
  if (static_cast<int>(labels.size()) != n_batch) {
    throw ShapeError("softmax_cross_entropy: label count " + std::to_string(labels.size()) +
                     " != batch axis " + std::to_string(n_batch));
  }
  if (n_batch == 0) throw Error("softmax_cross_entropy: empty batch");
  auto probs = std::make_shared<std::vector<float>>(logits->data.size());
  double loss_acc = 0.0;
  for (int n = 0; n < n_batch; ++n) {
    const float* row = logits->data.data() + static_cast<std::size_t>(n) * k;
    float* prow = probs->data() + static_cast<std::size_t>(n) * k;
    if (labels[static_cast<std::size_t>(n)] < 0 || labels[static_cast<std::size_t>(n)] >= k) {
      throw Error("softmax_cross_entropy: label " +
                  std::to_string(labels[static_cast<std::size_t>(n)]) + " out of range");
    }
    float mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    const double log_denom = std::log(denom);
    for (int j = 0; j < k; ++j) {
      prow[j] = static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / denom);
    }
    loss_acc += -(static_cast<double>(row[labels[static_cast<std::size_t>(n)]] - mx) - log_denom);
  }
  auto out = make_tensor({1}, {static_cast<float>(loss_acc / n_batch)});
  out->requires_grad = logits->requires_grad;
  if (tape && out->requires_grad) {
    TensorPtr in = logits, y = out;
    auto lab = std::make_shared<std::vector<int>>(labels);
    tape->record(OpKind::SoftmaxCrossEntropy, {logits->id}, out->id, [=]() {
      if (!y->has_grad() || !in->requires_grad) return;
      in->ensure_grad();
      const float gl = y->grad[0] / static_cast<float>(n_batch);
      for (int n = 0; n < n_batch; ++n) {
        const float* prow = probs->data() + static_cast<std::size_t>(n) * k;
        float* drow = in->grad.data() + static_cast<std::size_t>(n) * k;
        for (int j = 0; j < k; ++j) {
          const float target = j == (*lab)[static_cast<std::size_t>(n)] ? 1.0f : 0.0f;
          drow[j] += gl * (prow[j] - target);
        }
      }
    });
  }
  return out;
}

}  // namespace prunekit
