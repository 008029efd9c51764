#include "prunekit/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace prunekit {

namespace {

std::vector<int> complement(const std::vector<int>& pruned, int n) {
  std::vector<int> keep;
  keep.reserve(static_cast<std::size_t>(n) - pruned.size());
  std::size_t j = 0;
  for (int c = 0; c < n; ++c) {
    if (j < pruned.size() && pruned[j] == c) {
      ++j;
      continue;
    }
    keep.push_back(c);
  }
  return keep;
}

TensorPtr take_vector(const TensorPtr& v, const std::vector<int>& keep) {
  auto out = v->requires_grad ? make_param({static_cast<int>(keep.size())})
                              : make_tensor({static_cast<int>(keep.size())});
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out->data[i] = v->data[static_cast<std::size_t>(keep[i])];
  }
  return out;
}

// Keeps rows (output filters) of a conv [O,I,k,k] or linear [O,I] weight.
TensorPtr take_rows(const TensorPtr& w, const std::vector<int>& keep) {
  auto shape = w->shape;
  const std::size_t row = w->data.size() / static_cast<std::size_t>(shape[0]);
  shape[0] = static_cast<int>(keep.size());
  auto out = make_param(shape);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    std::copy_n(w->data.begin() + static_cast<std::ptrdiff_t>(keep[i] * row), row,
                out->data.begin() + static_cast<std::ptrdiff_t>(i * row));
  }
  return out;
}

// Keeps input-channel slices: columns of a linear [O,I] weight or the
// second axis of a conv [O,I,k,k] weight.
TensorPtr take_input_slices(const TensorPtr& w, const std::vector<int>& keep) {
  auto shape = w->shape;
  const int o = shape[0], i_in = shape[1];
  const std::size_t inner =
      w->ndim() == 4 ? static_cast<std::size_t>(shape[2]) * shape[3] : 1;
  shape[1] = static_cast<int>(keep.size());
  auto out = make_param(shape);
  for (int row = 0; row < o; ++row) {
    for (std::size_t j = 0; j < keep.size(); ++j) {
      std::copy_n(
          w->data.begin() + (static_cast<std::size_t>(row) * i_in + keep[j]) * inner, inner,
          out->data.begin() + (static_cast<std::size_t>(row) * keep.size() + j) * inner);
    }
  }
  return out;
}

void check_plan(NetworkGraph& graph, const PrunePlan& plan, std::vector<BnConvPair>& pairs) {
  pairs = graph.bn_conv_pairs();
  if (pairs.size() != plan.entries.size()) {
    throw Error("prune_graph: plan has " + std::to_string(plan.entries.size()) +
                " entries but graph has " + std::to_string(pairs.size()) + " pairs");
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& e = plan.entries[i];
    const auto& p = pairs[i];
    if (e.bn_id != p.bn_id || e.channels != p.channels) {
      throw Error("prune_graph: plan entry '" + e.bn_id + "' does not match pair '" + p.bn_id +
                  "' (unprunable site or stale plan)");
    }
    if (static_cast<int>(e.pruned.size()) >= e.channels && e.channels > 0) {
      throw Error("prune_graph: plan empties pair '" + e.bn_id +
                  "' entirely (survivor guard violated)");
    }
    for (int c : e.pruned) {
      if (c < 0 || c >= e.channels) {
        throw Error("prune_graph: plan index " + std::to_string(c) + " out of range for pair '" +
                    e.bn_id + "'");
      }
    }
  }
}

}  // namespace

std::pair<NetworkGraph, PruneTranscript> prune_graph(NetworkGraph& graph, const PrunePlan& plan,
                                                     const std::vector<int>& input_shape) {
  {
    std::vector<BnConvPair> pairs;
    check_plan(graph, plan, pairs);
  }

  PruneTranscript transcript;
  transcript.before = count_params_flops(graph, input_shape);

  NetworkGraph out = graph.clone();
  auto pairs = out.bn_conv_pairs();

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& entry = plan.entries[i];
    auto& pair = pairs[i];
    if (entry.collapsed) transcript.collapsed_pairs.push_back(entry.bn_id);

    if (pair.feature_selection) {
      auto& sel = pair.block->selection;
      // Mask only channels that are still selected; the rest are gone already.
      std::vector<int> to_mask;
      std::vector<int> keep_positions;  // conv1 input slices to keep
      std::set<int> pruned_set(entry.pruned.begin(), entry.pruned.end());
      std::vector<int> new_sel;
      for (std::size_t j = 0; j < sel.size(); ++j) {
        if (pruned_set.count(sel[j])) {
          to_mask.push_back(sel[j]);
        } else {
          new_sel.push_back(sel[j]);
          keep_positions.push_back(static_cast<int>(j));
        }
      }
      transcript.distribution.push_back(
          {pair.bn_id, static_cast<int>(new_sel.size()), pair.channels, true});
      if (to_mask.empty()) continue;
      if (new_sel.empty()) {
        throw Error("prune_graph: feature selection would mask every channel of '" +
                    pair.bn_id + "'");
      }
      sel = std::move(new_sel);
      pair.consumer->weight = take_input_slices(pair.consumer->weight, keep_positions);
      pair.consumer->spec.in_channels = static_cast<int>(sel.size());
      transcript.layers.push_back({pair.consumer->id, {}, keep_positions});
      continue;
    }

    auto pruned_sorted = entry.pruned;
    std::sort(pruned_sorted.begin(), pruned_sorted.end());
    const auto keep = complement(pruned_sorted, entry.channels);
    transcript.distribution.push_back(
        {pair.bn_id, static_cast<int>(keep.size()), pair.channels, false});
    if (entry.pruned.empty()) continue;
    transcript.pruned_filters += static_cast<int>(entry.pruned.size());

    // Producer loses output filters.
    pair.producer->weight = take_rows(pair.producer->weight, keep);
    if (pair.producer->bias) pair.producer->bias = take_vector(pair.producer->bias, keep);
    pair.producer->spec.out_channels = static_cast<int>(keep.size());

    // The BN drops the per-channel state.
    pair.bn->gamma = take_vector(pair.bn->gamma, keep);
    pair.bn->beta = take_vector(pair.bn->beta, keep);
    pair.bn->running_mean = take_vector(pair.bn->running_mean, keep);
    pair.bn->running_var = take_vector(pair.bn->running_var, keep);
    pair.bn->spec.channels = static_cast<int>(keep.size());

    // Consumer loses the matching input slices.
    pair.consumer->weight = take_input_slices(pair.consumer->weight, keep);
    if (pair.consumer->spec.kind == LayerKind::Conv) {
      pair.consumer->spec.in_channels = static_cast<int>(keep.size());
    } else {
      pair.consumer->spec.in_features = static_cast<int>(keep.size());
    }

    transcript.layers.push_back({pair.producer->id, keep, {}});
    transcript.layers.push_back({pair.bn->id, keep, {}});
    transcript.layers.push_back({pair.consumer->id, {}, keep});
  }

  transcript.after = count_params_flops(out, input_shape);
  return {std::move(out), std::move(transcript)};
}

AbsorbResult absorb_bias(NetworkGraph& graph, const PrunePlan& plan) {
  {
    std::vector<BnConvPair> pairs;
    check_plan(graph, plan, pairs);
  }

  AbsorbResult result{graph.clone(), {}};
  auto pairs = result.graph.bn_conv_pairs();

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& entry = plan.entries[i];
    auto& pair = pairs[i];
    if (entry.pruned.empty()) continue;

    auto pruned_sorted = entry.pruned;
    std::sort(pruned_sorted.begin(), pruned_sorted.end());

    // Channel positions in the consumer's input axis.
    std::vector<std::pair<int, int>> targets;  // (channel, consumer column)
    if (pair.feature_selection) {
      const auto& sel = pair.block->selection;
      for (std::size_t j = 0; j < sel.size(); ++j) {
        if (std::binary_search(pruned_sorted.begin(), pruned_sorted.end(), sel[j])) {
          targets.emplace_back(sel[j], static_cast<int>(j));
        }
      }
    } else {
      for (int c : pruned_sorted) targets.emplace_back(c, c);
    }

    bool touched = false;
    for (const auto& [channel, column] : targets) {
      const float beta = pair.bn->beta->data[static_cast<std::size_t>(channel)];
      const float kappa = beta > 0.0f ? beta : 0.0f;  // relu of the constant map
      if (kappa == 0.0f) continue;
      touched = true;

      if (!pair.consumer->bias) {
        const int out_dim = pair.consumer->spec.kind == LayerKind::Conv
                                ? pair.consumer->spec.out_channels
                                : pair.consumer->spec.out_features;
        pair.consumer->bias = make_param({out_dim});
        pair.consumer->spec.has_bias = true;
      }
      auto& w = pair.consumer->weight;
      if (pair.consumer->spec.kind == LayerKind::Conv) {
        const int c_in = w->dim(1), k2 = w->dim(2) * w->dim(3);
        for (int o = 0; o < w->dim(0); ++o) {
          double acc = 0.0;
          const float* block = w->data.data() + (static_cast<std::size_t>(o) * c_in + column) * k2;
          for (int j = 0; j < k2; ++j) acc += block[j];
          pair.consumer->bias->data[static_cast<std::size_t>(o)] +=
              static_cast<float>(kappa * acc);
        }
      } else {
        const int c_in = w->dim(1);
        for (int o = 0; o < w->dim(0); ++o) {
          pair.consumer->bias->data[static_cast<std::size_t>(o)] +=
              kappa * w->data[static_cast<std::size_t>(o) * c_in + column];
        }
      }
    }
    if (touched && pair.consumer->spec.kind == LayerKind::Conv &&
        pair.consumer->spec.padding > 0) {
      result.padding_warnings.push_back(pair.bn_id);
    }
  }
  return result;
}

std::string transcript_to_text(const PruneTranscript& t) {
  std::ostringstream os;
  os << "prunekit-transcript v1\n";
  os << "params " << t.before.params << " -> " << t.after.params << "\n";
  os << "flops " << t.before.flops << " -> " << t.after.flops << "\n";
  os << "pruned_filters " << t.pruned_filters << "\n";
  for (const auto& d : t.distribution) {
    os << "pair " << d.pair_id << " kept=" << d.kept << "/" << d.total
       << (d.feature_selection ? " feature_selection" : "") << "\n";
  }
  for (const auto& c : t.collapsed_pairs) os << "collapsed " << c << "\n";
  for (const auto& l : t.layers) {
    os << "layer " << l.layer_id;
    if (!l.kept_outputs.empty()) {
      os << " out=";
      for (std::size_t i = 0; i < l.kept_outputs.size(); ++i) {
        os << (i ? "," : "") << l.kept_outputs[i];
      }
    }
    if (!l.kept_inputs.empty()) {
      os << " in=";
      for (std::size_t i = 0; i < l.kept_inputs.size(); ++i) {
        os << (i ? "," : "") << l.kept_inputs[i];
      }
    }
    os << "\n";
  }
  os << "end\n";
  return os.str();
}

std::string distribution_csv(const PruneTranscript& t) {
  std::ostringstream os;
  os << "layer,kept,total\n";
  for (const auto& d : t.distribution) {
    os << d.pair_id << "," << d.kept << "," << d.total << "\n";
  }
  return os.str();
}

}  // namespace prunekit
