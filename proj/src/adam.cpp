#include "shopagent/adam.hpp"

#include <cmath>

namespace shopagent::model {

template <typename T>
AdamState<T> AdamState<T>::for_params(const ModelParameters<T>& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

double warmup_learning_rate(const AdamConfig& cfg, long t) {
  require(t >= 1, "Adam step index starts at 1");
  if (cfg.warmup_steps > 0 && t < cfg.warmup_steps)
    return cfg.learning_rate * static_cast<double>(t) / static_cast<double>(cfg.warmup_steps);
  return cfg.learning_rate;
}

template <typename T>
void adam_step(ModelParameters<T>& params, const GradientBuffers<T>& grads, AdamState<T>& state,
               const AdamConfig& cfg) {
  require(grads.size() == params.tensors.size(), "gradient/parameter count mismatch");
  for (const auto& g : grads)
    for (T x : g) require(std::isfinite(x), "non-finite gradient passed to adam_step");

  const long t = state.step + 1;
  const double lr = warmup_learning_rate(cfg, t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const double sqrt_bc2 = std::sqrt(bc2);

  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    auto& theta = params.tensors[k].data;
    const auto& g = grads[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    require(g.size() == theta.size(), "gradient shape mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double x = theta[i];
      if (cfg.weight_decay != 0.0) x -= lr * cfg.weight_decay * x;
      const double denom = std::sqrt(vi) / sqrt_bc2 + cfg.eps;
      x -= lr * (mi / bc1) / denom;
      theta[i] = static_cast<T>(x);
    }
  }
  state.step = t;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(ModelParameters<float>&, const GradientBuffers<float>&, AdamState<float>&,
                               const AdamConfig&);
template void adam_step<double>(ModelParameters<double>&, const GradientBuffers<double>&,
                                AdamState<double>&, const AdamConfig&);

}  // namespace shopagent::model
