#pragma once

#include "simsr/ad/tape.hpp"

#include <cstdint>
#include <vector>

namespace simsr::ad {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One bias-corrected Adam update of params from grads (same order and shapes).
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamState& state);

/// Updates every trainable parameter from its accumulated gradient.
void adam_step(ParamSet& params, AdamState& state);

}  // namespace simsr::ad
