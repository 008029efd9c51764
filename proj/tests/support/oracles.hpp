#pragma once

// Reference implementations used as test oracles. These stay independent of
// the library's compute paths: scalar loops, double precision, no BLAS.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "prunekit/tensor.hpp"

namespace oracle {

// Direct 6-nested-loop convolution. x is [N,C,H,W], w is [Cout,Cin,kh,kw].
inline std::vector<double> conv2d_loop(const std::vector<float>& x, int n_batch, int c_in, int h,
                                       int w, const std::vector<float>& wt, int c_out, int kh,
                                       int kw, const std::vector<float>* bias, int stride,
                                       int pad) {
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(n_batch) * c_out * ho * wo, 0.0);
  for (int n = 0; n < n_batch; ++n)
    for (int o = 0; o < c_out; ++o)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = bias ? (*bias)[static_cast<std::size_t>(o)] : 0.0;
          for (int c = 0; c < c_in; ++c)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += static_cast<double>(
                           x[((static_cast<std::size_t>(n) * c_in + c) * h + iy) * w + ix]) *
                       wt[((static_cast<std::size_t>(o) * c_in + c) * kh + ky) * kw + kx];
              }
          out[((static_cast<std::size_t>(n) * c_out + o) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

// L2 norm of the channel-c slice w[:,c,:,:], scalar loop in double.
inline double channel_slice_norm(const std::vector<float>& wt, int c_out, int c_in, int kh,
                                 int kw, int c) {
  double acc = 0.0;
  for (int o = 0; o < c_out; ++o)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const double v = wt[((static_cast<std::size_t>(o) * c_in + c) * kh + ky) * kw + kx];
        acc += v * v;
      }
  return std::sqrt(acc);
}

inline double frob_norm(const std::vector<float>& v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

struct GradCheckReport {
  bool ok = true;
  double max_err = 0.0;       // worst |ad - fd|
  double max_rel = 0.0;       // worst |ad - fd| / (atol/rtol mix denominator)
  std::string worst;          // description of the worst entry
  int checked = 0;

  void note(std::int64_t param_id, std::size_t index, double ad, double fd, double err,
            double allowed) {
    ++checked;
    if (err > max_err) max_err = err;
    const double rel = err / allowed;
    if (rel > max_rel) {
      max_rel = rel;
      std::ostringstream os;
      os << "param " << param_id << "[" << index << "]: ad=" << ad << " fd=" << fd;
      worst = os.str();
    }
    if (err > allowed) ok = false;
  }
};

// Central-finite-difference gradient check. `fwd` runs a fresh forward pass
// (recording on the tape when one is given) and must be deterministic. The
// output is scalarized as sum_i v_i * y_i with test-owned weights v, so the
// same harness covers non-scalar ops; v is applied in double precision.
template <class Fwd>
GradCheckReport gradcheck(Fwd&& fwd, const std::vector<prunekit::TensorPtr>& params,
                          std::mt19937& eng, double rtol = 1e-3, double atol = 1e-4,
                          double h = 1e-3) {
  using prunekit::Tape;
  using prunekit::TensorPtr;

  GradCheckReport report;
  Tape tape;
  TensorPtr out = fwd(&tape);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(out->data.size());
  for (auto& x : v) x = dist(eng);

  for (const auto& p : params) p->zero_grad();
  out->ensure_grad();
  out->grad = v;
  for (auto it = tape.records().rbegin(); it != tape.records().rend(); ++it) it->backward();

  auto weighted = [&](const TensorPtr& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y->data.size(); ++i) {
      acc += static_cast<double>(v[i]) * y->data[i];
    }
    return acc;
  };

  for (const auto& p : params) {
    if (!p->has_grad()) {
      report.ok = false;
      report.worst = "param " + std::to_string(p->id) + " received no gradient";
      return report;
    }
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const float saved = p->data[i];
      p->data[i] = static_cast<float>(saved + h);
      const double lp = weighted(fwd(nullptr));
      p->data[i] = static_cast<float>(saved - h);
      const double lm = weighted(fwd(nullptr));
      p->data[i] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double ad = p->grad[i];
      report.note(p->id, i, ad, fd, std::abs(ad - fd), atol + rtol * std::abs(fd));
    }
  }
  return report;
}

// Pairwise-distinct values, so maxpool windows never tie and finite
// differences stay off the kinks.
inline std::vector<float> distinct_values(std::size_t n, std::mt19937& eng) {
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = 0.01f * static_cast<float>(i) - 0.005f * static_cast<float>(n);
  }
  std::shuffle(v.begin(), v.end(), eng);
  return v;
}

// Values bounded away from zero, for relu finite differences.
inline std::vector<float> kink_free_values(std::size_t n, std::mt19937& eng) {
  std::uniform_real_distribution<float> mag(0.2f, 1.2f);
  std::bernoulli_distribution sign(0.5);
  std::vector<float> v(n);
  for (auto& x : v) x = (sign(eng) ? 1.0f : -1.0f) * mag(eng);
  return v;
}

inline std::vector<float> uniform_values(std::size_t n, std::mt19937& eng, float lo = -1.0f,
                                         float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(eng);
  return v;
}

}  // namespace oracle
