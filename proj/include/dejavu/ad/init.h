#pragma once

#include <random>

#include "dejavu/ad/tensor.h"

namespace dejavu::ad {

using Rng = std::mt19937_64;

// Uniform in ±sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
// Square orthogonal matrix from Gram-Schmidt on a Gaussian draw.
Tensor orthogonal(std::size_t n, Rng& rng);

}  // namespace dejavu::ad
