#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace prunekit {

// Single seeded generator threaded through initialization and data shuffling.
// Every source of randomness in a run goes through one of these, so a run is
// reproducible from (binary, config, seed).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(static_cast<std::mt19937::result_type>(seed)) {}

  float uniform(float lo, float hi) {
    std::uniform_real_distribution<float> d(lo, hi);
    return d(engine_);
  }

  float normal(float mean, float stddev) {
    std::normal_distribution<float> d(mean, stddev);
    return d(engine_);
  }

  // Uniform integer in [0, n).
  int below(int n) {
    std::uniform_int_distribution<int> d(0, n - 1);
    return d(engine_);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), engine_);
  }

  bool coin() { return below(2) == 1; }

  // Derive an independent stream, e.g. one per epoch.
  Rng fork() { return Rng(engine_()); }

  std::mt19937& engine() { return engine_; }

 private:
  std::mt19937 engine_;
};

}  // namespace prunekit
