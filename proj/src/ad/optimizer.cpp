#include "dejavu/ad/optimizer.h"

#include <cmath>

#include <fmt/format.h>

#include "dejavu/error.h"

namespace dejavu::ad {

double global_grad_norm(const ParamStore& store) {
  double total = 0.0;
  for (const auto& [_, e] : store.entries()) total += squared_norm(e.grad.data());
  return std::sqrt(total);
}

double Adam::step(ParamStore& store) {
  for (const auto& [name, e] : store.entries()) {
    if (!e.grad.all_finite()) {
      throw DivergenceError(fmt::format("non-finite gradient in parameter '{}'", name));
    }
  }
  const double norm = global_grad_norm(store);
  const double clip = (options_.clip_norm > 0 && norm > options_.clip_norm)
                          ? options_.clip_norm / norm
                          : 1.0;

  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double bc1 = 1.0 - std::pow(options_.beta1, t);
  const double bc2 = 1.0 - std::pow(options_.beta2, t);
  const double lr = options_.learning_rate;

  for (auto& [name, e] : store.entries()) {
    auto [m_it, m_new] = state_.first_moment.try_emplace(name, e.value.shape());
    auto [v_it, v_new] = state_.second_moment.try_emplace(name, e.value.shape());
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i] * clip;
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      e.value[i] -= lr * (m_hat / (std::sqrt(v_hat) + options_.epsilon) +
                          options_.weight_decay * e.value[i]);
    }
  }
  return norm;
}

}  // namespace dejavu::ad
