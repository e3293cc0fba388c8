#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dejavu/ad/tape.h"

namespace dejavu::ad {

struct AdamOptions {
  double learning_rate = 0.01;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::uint64_t step = 0;
};

// Adam with decoupled weight decay. Before each update the global gradient
// norm over all parameters is clipped to `clip_norm` (<= 0 disables).
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Consumes store gradients; throws DivergenceError naming the first
  // parameter with a non-finite gradient. Returns the pre-clip global norm.
  double step(ParamStore& store);

  const AdamOptions& options() const { return options_; }
  const OptimizerState& state() const { return state_; }

 private:
  AdamOptions options_;
  OptimizerState state_;
};

double global_grad_norm(const ParamStore& store);

}  // namespace dejavu::ad
