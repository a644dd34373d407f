#include "dataclone/optim.hpp"

#include <cmath>

#include "dataclone/errors.hpp"

namespace dataclone::optim {

Adam::Adam(const TensorMap& schema, AdamConfig config)
    : config_(config), m_(zeros_like(schema)), v_(zeros_like(schema)) {
  if (!(config_.lr > 0.0)) fail(ErrorCode::InvalidArgument, "learning rate must be positive");
}

void Adam::step(TensorMap& params, const TensorMap& grads) {
  if (!same_schema(grads, m_)) fail(ErrorCode::InvalidArgument, "gradient schema mismatch");
  t_ += 1;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Tensor& m = m_.at(name);
    Tensor& v = v_.at(name);
    Tensor& p = params.at(name);
    for (size_t i = 0; i < g.size(); ++i) {
      m.data[i] = config_.beta1 * m.data[i] + (1.0 - config_.beta1) * g.data[i];
      v.data[i] = config_.beta2 * v.data[i] + (1.0 - config_.beta2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace dataclone::optim
