#include "advnet/parameters.hpp"

namespace advnet {

template <typename T>
void sgd_momentum_step(ParameterSet<T>& params, const GradientMap<T>& grads,
                       ParameterSet<T>& velocity, double lr, double momentum,
                       double weight_decay) {
  if (grads.size() != params.size() || velocity.size() != params.size()) {
    throw ConfigError("optimizer: " + std::to_string(params.size()) + " parameters, " +
                      std::to_string(grads.size()) + " gradients, " +
                      std::to_string(velocity.size()) + " velocities");
  }
  // Validate everything before touching any parameter.
  for (const auto& [name, value] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) throw ConfigError("optimizer: no gradient for '" + name + "'");
    const Tensor<T>* v = velocity.find(name);
    if (!v) throw ConfigError("optimizer: no velocity for '" + name + "'");
    if (g->second.shape() != value.shape() || v->shape() != value.shape()) {
      throw ConfigError("optimizer: shape mismatch for '" + name + "'");
    }
  }
  const T rate = static_cast<T>(lr);
  const T mom = static_cast<T>(momentum);
  const T decay = static_cast<T>(weight_decay);
  for (auto& [name, value] : params) {
    const Tensor<T>& g = grads.at(name);
    Tensor<T>& v = velocity.at(name);
    T* p = value.ptr();
    T* vel = v.ptr();
    const T* grad = g.ptr();
    for (std::size_t i = 0; i < value.size(); ++i) {
      vel[i] = mom * vel[i] + grad[i] + decay * p[i];
      p[i] = p[i] - rate * vel[i];
    }
  }
}

template void sgd_momentum_step(ParameterSet<float>&, const GradientMap<float>&,
                                ParameterSet<float>&, double, double, double);
template void sgd_momentum_step(ParameterSet<double>&, const GradientMap<double>&,
                                ParameterSet<double>&, double, double, double);

}  // namespace advnet
