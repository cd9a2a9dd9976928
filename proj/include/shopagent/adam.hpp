#pragma once

#include "shopagent/model.hpp"

namespace shopagent::model {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, applied as lr * wd * theta
  int warmup_steps = 0;       // linear ramp of the learning rate from 0
};

/// First and second moment estimates, one buffer per parameter tensor.
template <typename T>
struct AdamState {
  GradientBuffers<T> m;
  GradientBuffers<T> v;
  long step = 0;

  static AdamState for_params(const ModelParameters<T>& params);
};

/// Learning rate in effect at step t (1-based) under linear warmup.
double warmup_learning_rate(const AdamConfig& cfg, long t);

/// One bias-corrected Adam update at step t = state.step + 1. Throws
/// ContractViolation on non-finite gradients; the caller clips first.
template <typename T>
void adam_step(ModelParameters<T>& params, const GradientBuffers<T>& grads, AdamState<T>& state,
               const AdamConfig& cfg);

}  // namespace shopagent::model
