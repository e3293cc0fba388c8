#include "dejavu/ad/init.h"

#include <cmath>

namespace dejavu::ad {

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Tensor orthogonal(std::size_t n, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor q({n, n});
  for (double& v : q.data()) v = dist(rng);
  // Modified Gram-Schmidt over rows.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double proj = 0.0;
      for (std::size_t c = 0; c < n; ++c) proj += q.at(i, c) * q.at(j, c);
      for (std::size_t c = 0; c < n; ++c) q.at(i, c) -= proj * q.at(j, c);
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < n; ++c) norm += q.at(i, c) * q.at(i, c);
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < n; ++c) q.at(i, c) /= norm;
  }
  return q;
}

}  // namespace dejavu::ad
