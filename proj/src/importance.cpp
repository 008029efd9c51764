#include "prunekit/importance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace prunekit {

std::vector<float> channel_norms(const TensorPtr& weight, NormKind norm) {
  if (weight->ndim() == 4) {
    const int c_out = weight->dim(0), c_in = weight->dim(1);
    const int k2 = weight->dim(2) * weight->dim(3);
    std::vector<float> out(static_cast<std::size_t>(c_in));
    for (int c = 0; c < c_in; ++c) {
      double acc = 0.0;
      for (int o = 0; o < c_out; ++o) {
        const float* block = weight->data.data() + (static_cast<std::size_t>(o) * c_in + c) * k2;
        for (int j = 0; j < k2; ++j) {
          acc += norm == NormKind::L2 ? static_cast<double>(block[j]) * block[j]
                                      : std::abs(static_cast<double>(block[j]));
        }
      }
      out[static_cast<std::size_t>(c)] =
          static_cast<float>(norm == NormKind::L2 ? std::sqrt(acc) : acc);
    }
    return out;
  }
  if (weight->ndim() == 2) {
    const int k_out = weight->dim(0), c_in = weight->dim(1);
    std::vector<float> out(static_cast<std::size_t>(c_in));
    for (int c = 0; c < c_in; ++c) {
      double acc = 0.0;
      for (int o = 0; o < k_out; ++o) {
        const double v = weight->data[static_cast<std::size_t>(o) * c_in + c];
        acc += norm == NormKind::L2 ? v * v : std::abs(v);
      }
      out[static_cast<std::size_t>(c)] =
          static_cast<float>(norm == NormKind::L2 ? std::sqrt(acc) : acc);
    }
    return out;
  }
  throw ShapeError("channel_norms: want a 4-d conv or 2-d linear weight, got " +
                   weight->shape_str());
}

ImportanceTable compute_importance(NetworkGraph& graph, ImportanceMetric metric, NormKind norm) {
  ImportanceTable table;
  for (auto& pair : graph.bn_conv_pairs()) {
    PairScores ps;
    ps.bn_id = pair.bn_id;
    ps.channels = pair.channels;
    ps.feature_selection = pair.feature_selection;
    ps.counts_in_sparsity = pair.counts_in_sparsity;
    ps.gamma_abs.resize(static_cast<std::size_t>(pair.channels));
    for (int c = 0; c < pair.channels; ++c) {
      ps.gamma_abs[static_cast<std::size_t>(c)] =
          std::abs(pair.bn->gamma->data[static_cast<std::size_t>(c)]);
    }

    const auto consumer_norms = channel_norms(pair.consumer->weight, norm);
    ps.weight_norm.assign(static_cast<std::size_t>(pair.channels), 0.0f);
    if (pair.feature_selection) {
      // Masked channels have no consumer slice; their norm (and score) is 0.
      const auto& sel = pair.block->selection;
      if (consumer_norms.size() != sel.size()) {
        throw ShapeError("compute_importance: pair " + pair.bn_id + " selection size " +
                         std::to_string(sel.size()) + " != consumer input axis " +
                         std::to_string(consumer_norms.size()));
      }
      for (std::size_t j = 0; j < sel.size(); ++j) {
        ps.weight_norm[static_cast<std::size_t>(sel[j])] = consumer_norms[j];
      }
    } else {
      if (static_cast<int>(consumer_norms.size()) != pair.channels) {
        throw ShapeError("compute_importance: pair " + pair.bn_id + " has " +
                         std::to_string(pair.channels) + " channels but consumer input axis is " +
                         std::to_string(consumer_norms.size()));
      }
      ps.weight_norm = consumer_norms;
    }

    ps.score.resize(static_cast<std::size_t>(pair.channels));
    for (int c = 0; c < pair.channels; ++c) {
      const auto i = static_cast<std::size_t>(c);
      ps.score[i] = metric == ImportanceMetric::DependencyAware
                        ? ps.gamma_abs[i] * ps.weight_norm[i]
                        : ps.gamma_abs[i];
    }
    table.pairs.push_back(std::move(ps));
  }
  return table;
}

std::string importance_csv(const ImportanceTable& table) {
  std::ostringstream os;
  os << "layer,channel,gamma,weight_norm,score\n";
  for (const auto& p : table.pairs) {
    for (int c = 0; c < p.channels; ++c) {
      const auto i = static_cast<std::size_t>(c);
      os << p.bn_id << "," << c << "," << p.gamma_abs[i] << "," << p.weight_norm[i] << ","
         << p.score[i] << "\n";
    }
  }
  return os.str();
}

namespace {

// Frobenius norm of the channel-c rows of the unfolded activation, i.e. the
// im2col rows for channel c under the consumer conv geometry, without
// materializing the matrix.
double unfolded_channel_norm(const TensorPtr& x, int channel, int k, int stride, int pad) {
  const int n_batch = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  const int ho = conv_out_dim(h, k, stride, pad);
  const int wo = conv_out_dim(w, k, stride, pad);
  double acc = 0.0;
  for (int n = 0; n < n_batch; ++n) {
    const float* plane = x->data.data() + (static_cast<std::size_t>(n) * c + channel) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const double v = plane[iy * w + ix];
            acc += v * v;
          }
        }
      }
    }
  }
  return std::sqrt(acc);
}

double frob(const TensorPtr& t) {
  double acc = 0.0;
  for (float v : t->data) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

}  // namespace

BoundReport dependency_bound_chain(const std::vector<float>& gamma, const TensorPtr& xhat,
                                   const TensorPtr& weight, int stride, int padding,
                                   const std::vector<int>* column_of) {
  if (xhat->ndim() != 4) {
    throw ShapeError("dependency_bound_chain: xhat must be [N,C,H,W], got " + xhat->shape_str());
  }
  const int n_batch = xhat->dim(0), c = xhat->dim(1);
  if (static_cast<int>(gamma.size()) != c) {
    throw ShapeError("dependency_bound_chain: gamma length " + std::to_string(gamma.size()) +
                     " != channel axis " + std::to_string(c));
  }
  const int k = weight->dim(2);

  // y = gamma * xhat (no shift, matching the scale-only analysis), z = relu(y)
  auto z = make_tensor(xhat->shape);
  const int plane = xhat->dim(2) * xhat->dim(3);
  for (int n = 0; n < n_batch; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const float g = gamma[static_cast<std::size_t>(ch)];
      const float* src = xhat->data.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
      float* dst = z->data.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
      for (int s = 0; s < plane; ++s) {
        const float y = g * src[s];
        dst[s] = y > 0.0f ? y : 0.0f;
      }
    }
  }

  TensorPtr conv_in = z;
  if (column_of) {
    std::vector<int> keep;
    for (int ch = 0; ch < c; ++ch) {
      if ((*column_of)[static_cast<std::size_t>(ch)] >= 0) keep.push_back(ch);
    }
    conv_in = channel_gather(nullptr, z, keep);
  }
  auto f = conv2d(nullptr, conv_in, weight, nullptr, stride, padding);

  BoundReport report;
  report.lhs = frob(f);
  const auto w_norms = channel_norms(weight, NormKind::L2);
  double rhs = 0.0;
  for (int ch = 0; ch < c; ++ch) {
    const int col = column_of ? (*column_of)[static_cast<std::size_t>(ch)] : ch;
    if (col < 0) continue;
    rhs += std::abs(static_cast<double>(gamma[static_cast<std::size_t>(ch)])) *
           w_norms[static_cast<std::size_t>(col)] *
           unfolded_channel_norm(xhat, ch, k, stride, padding);
  }
  report.rhs = rhs;
  report.holds = report.lhs <= report.rhs * (1.0 + 1e-4) + 1e-12;
  return report;
}

std::vector<BoundReport> verify_dependency_bounds(NetworkGraph& graph, const TensorPtr& input) {
  auto pairs = graph.bn_conv_pairs();

  // The bound needs sigma(0)=0 and Lipschitz constant 1 on the pair paths;
  // of the supported kinds only ReLU is a nonlinearity, and pooling keeps
  // norms non-increasing. Any future activation kind must be vetted here.
  auto vet = [](const Layer& l) {
    switch (l.spec.kind) {
      case LayerKind::Conv:
      case LayerKind::BatchNorm:
      case LayerKind::Relu:
      case LayerKind::MaxPool:
      case LayerKind::GlobalAvgPool:
      case LayerKind::Flatten:
      case LayerKind::Linear:
        return;
    }
    throw Error("verify_dependency_bounds: unsupported activation in layer " + l.id);
  };
  for (const auto& block : graph.blocks) {
    if (std::holds_alternative<Layer>(block)) {
      vet(std::get<Layer>(block));
    } else {
      const auto& b = std::get<ResidualBlock>(block);
      for (const Layer* l : {&b.bn1, &b.conv1, &b.bn2, &b.conv2, &b.bn3, &b.conv3}) vet(*l);
    }
  }

  std::map<std::string, TensorPtr> bn_inputs;
  graph.forward_traced(nullptr, input, false,
                       [&](const Layer& l, const TensorPtr& in, const TensorPtr&) {
                         if (l.spec.kind == LayerKind::BatchNorm) bn_inputs[l.id] = in;
                       });

  std::vector<BoundReport> reports;
  for (const auto& pair : pairs) {
    auto it = bn_inputs.find(pair.bn_id);
    if (it == bn_inputs.end()) throw Error("verify_dependency_bounds: no activation for " +
                                           pair.bn_id);
    const TensorPtr& x = it->second;

    // Normalize with the BN's running statistics (eval-mode xhat).
    auto xhat = make_tensor(x->shape);
    const int n_batch = x->dim(0), c = x->dim(1), plane = x->dim(2) * x->dim(3);
    for (int n = 0; n < n_batch; ++n) {
      for (int ch = 0; ch < c; ++ch) {
        const float mu = pair.bn->running_mean->data[static_cast<std::size_t>(ch)];
        const float is = static_cast<float>(
            1.0 /
            std::sqrt(
                static_cast<double>(pair.bn->running_var->data[static_cast<std::size_t>(ch)]) +
                1e-5));
        const float* src = x->data.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
        float* dst = xhat->data.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
        for (int s = 0; s < plane; ++s) dst[s] = (src[s] - mu) * is;
      }
    }

    std::vector<float> gamma(pair.bn->gamma->data.begin(), pair.bn->gamma->data.end());

    TensorPtr weight = pair.consumer->weight;
    int stride = 1, padding = 0;
    if (pair.consumer->spec.kind == LayerKind::Conv) {
      stride = pair.consumer->spec.stride;
      padding = pair.consumer->spec.padding;
    } else {
      // Linear consumer acts as a 1x1 conv on the channel axis.
      weight = make_tensor({pair.consumer->spec.out_features, pair.consumer->spec.in_features,
                            1, 1},
                           pair.consumer->weight->data);
    }

    BoundReport report;
    if (pair.feature_selection) {
      std::vector<int> column_of(static_cast<std::size_t>(c), -1);
      const auto& sel = pair.block->selection;
      for (std::size_t j = 0; j < sel.size(); ++j) {
        column_of[static_cast<std::size_t>(sel[j])] = static_cast<int>(j);
      }
      report = dependency_bound_chain(gamma, xhat, weight, stride, padding, &column_of);
    } else {
      report = dependency_bound_chain(gamma, xhat, weight, stride, padding);
    }
    report.pair_id = pair.bn_id;
    reports.push_back(report);
  }
  return reports;
}

}  // namespace prunekit
