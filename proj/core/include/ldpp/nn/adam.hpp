#pragma once

#include <unordered_map>
#include <vector>

#include "ldpp/nn/tape.hpp"

namespace ldpp::nn {

struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Plain Adam with bias correction. Moment buffers are keyed by parameter
// identity, so late additions to the parameter set are fine (fresh moments).
class Adam {
 public:
  explicit Adam(AdamSettings settings = {}) : settings_(settings) {}

  // Applies one update with the given learning rate to every trainable
  // parameter with a non-empty gradient, then clears those gradients.
  void step(const std::vector<Parameter*>& params, double lr);

  const AdamSettings& settings() const { return settings_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
    long t = 0;
  };
  AdamSettings settings_;
  std::unordered_map<Parameter*, Moments> state_;
};

// Linear decay from base_lr at step 0 to 0 at total_steps.
double linear_lr(double base_lr, long step, long total_steps);

}  // namespace ldpp::nn
