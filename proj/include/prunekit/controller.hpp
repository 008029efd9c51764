#pragma once

#include <string>
#include <vector>

#include "prunekit/graph.hpp"

namespace prunekit {

struct ControllerEvent {
  int epoch = 0;        // the epoch that just finished (1-based)
  double sparsity = 0;  // P_t measured at the end of that epoch
  double lambda = 0;    // lambda_{t+1}, i.e. the coefficient for the next epoch
  bool increased = false;
  bool decreased = false;
  // P_t > r yet the gain branch still raised lambda (the if/elif ordering);
  // only possible when sparsity decreased across epochs.
  bool overshoot_increase = false;
};

// Feedback control of the L1 coefficient: once per epoch, compare the
// sparsity gain against the linear schedule towards the target and step
// lambda by +/- delta_lambda.
struct ControllerState {
  int t = 1;             // next epoch index, 1-based
  int total_epochs = 0;  // N
  double target = 0.0;   // r
  double lambda = 0.0;   // lambda_t, starts at 0
  double p_prev = 0.0;   // P_{t-1}, starts at 0
  double delta_lambda = 1e-5;
  std::vector<ControllerEvent> history;
};

ControllerState make_controller(int total_epochs, double target_r, double delta_lambda = 1e-5);

// Advances the state with the sparsity observed at the end of epoch t:
//   if P_t - P_{t-1} < (r - P_{t-1}) / (N - t + 1):  lambda += delta
//   elif P_t > r:                                    lambda -= delta (floor 0)
// Throws if stepped past N or if the sparsity is outside [0,1].
void controller_step(ControllerState& state, double observed_sparsity);

// CSV with header: epoch,lambda,sparsity
std::string controller_csv(const ControllerState& state);

struct L1Penalty {
  double value = 0.0;  // lambda * sum of |gamma| over prunable BNs
  std::vector<std::pair<std::string, std::vector<float>>> subgradients;  // per BN id
};

// L1 on the scaling factors of every paired (prunable) BN; identity-path and
// other unprunable gammas are excluded. Subgradient is lambda*sign(gamma)
// with sign(0)=0.
L1Penalty l1_penalty(NetworkGraph& graph, double lambda);

// Adds the subgradients straight into the gamma grad buffers.
void apply_l1_subgradients(NetworkGraph& graph, double lambda);

}  // namespace prunekit
