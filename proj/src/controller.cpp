#include "prunekit/controller.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace prunekit {

ControllerState make_controller(int total_epochs, double target_r, double delta_lambda) {
  if (total_epochs < 1) throw Error("controller: total epochs must be >= 1");
  if (!(target_r > 0.0 && target_r < 1.0)) {
    throw Error("controller: target ratio must be in (0,1)");
  }
  if (delta_lambda <= 0.0) throw Error("controller: delta_lambda must be positive");
  ControllerState s;
  s.total_epochs = total_epochs;
  s.target = target_r;
  s.delta_lambda = delta_lambda;
  return s;
}

void controller_step(ControllerState& state, double observed_sparsity) {
  if (state.t > state.total_epochs) {
    throw Error("controller_step: stepped past the last epoch (t=" + std::to_string(state.t) +
                ", N=" + std::to_string(state.total_epochs) + ")");
  }
  if (!(observed_sparsity >= 0.0 && observed_sparsity <= 1.0)) {
    throw Error("controller_step: sparsity must be in [0,1]");
  }

  ControllerEvent ev;
  ev.epoch = state.t;
  ev.sparsity = observed_sparsity;

  const double expected_gain =
      (state.target - state.p_prev) / static_cast<double>(state.total_epochs - state.t + 1);
  const double gain = observed_sparsity - state.p_prev;

  if (gain < expected_gain) {
    state.lambda += state.delta_lambda;
    ev.increased = true;
    ev.overshoot_increase = observed_sparsity > state.target;
  } else if (observed_sparsity > state.target) {
    state.lambda = std::max(0.0, state.lambda - state.delta_lambda);
    ev.decreased = true;
  }

  ev.lambda = state.lambda;
  state.p_prev = observed_sparsity;
  state.t += 1;
  state.history.push_back(ev);
}

std::string controller_csv(const ControllerState& state) {
  std::ostringstream os;
  os << "epoch,lambda,sparsity\n";
  for (const auto& ev : state.history) {
    os << ev.epoch << "," << ev.lambda << "," << ev.sparsity << "\n";
  }
  return os.str();
}

namespace {

float sign_of(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

}  // namespace

L1Penalty l1_penalty(NetworkGraph& graph, double lambda) {
  if (lambda < 0.0) throw Error("l1_penalty: lambda must be >= 0");
  L1Penalty out;
  for (const auto& pair : graph.bn_conv_pairs()) {
    std::vector<float> sub(pair.bn->gamma->data.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < sub.size(); ++i) {
      const float g = pair.bn->gamma->data[i];
      acc += std::abs(static_cast<double>(g));
      sub[i] = static_cast<float>(lambda) * sign_of(g);
    }
    out.value += lambda * acc;
    out.subgradients.emplace_back(pair.bn_id, std::move(sub));
  }
  return out;
}

void apply_l1_subgradients(NetworkGraph& graph, double lambda) {
  if (lambda == 0.0) return;
  for (const auto& pair : graph.bn_conv_pairs()) {
    pair.bn->gamma->ensure_grad();
    for (std::size_t i = 0; i < pair.bn->gamma->data.size(); ++i) {
      pair.bn->gamma->grad[i] +=
          static_cast<float>(lambda) * sign_of(pair.bn->gamma->data[i]);
    }
  }
}

}  // namespace prunekit
