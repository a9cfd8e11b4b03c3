#include "ldpp/nn/adam.hpp"

#include <cmath>

namespace ldpp::nn {

void Adam::step(const std::vector<Parameter*>& params, double lr) {
  for (Parameter* p : params) {
    if (!p->trainable || p->grad.size() == 0) continue;
    Moments& mom = state_[p];
    if (mom.m.size() == 0) {
      mom.m = Matrix::Zero(p->value.rows(), p->value.cols());
      mom.v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    ++mom.t;
    mom.m = settings_.beta1 * mom.m + (1.0 - settings_.beta1) * p->grad;
    mom.v = settings_.beta2 * mom.v +
            (1.0 - settings_.beta2) * p->grad.cwiseProduct(p->grad);
    const double bc1 = 1.0 - std::pow(settings_.beta1, static_cast<double>(mom.t));
    const double bc2 = 1.0 - std::pow(settings_.beta2, static_cast<double>(mom.t));
    const double scale = lr / bc1;
    p->value.array() -=
        scale * mom.m.array() / ((mom.v.array() / bc2).sqrt() + settings_.eps);
    p->grad.setZero();
  }
}

double linear_lr(double base_lr, long step, long total_steps) {
  if (total_steps <= 0) return base_lr;
  if (step >= total_steps) return 0.0;
  return base_lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

}  // namespace ldpp::nn
