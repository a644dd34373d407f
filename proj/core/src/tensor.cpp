#include "dataclone/tensor.hpp"

#include <cmath>

#include "dataclone/errors.hpp"

namespace dataclone {

Tensor::Tensor(std::vector<size_t> shape_in, double fill) : shape(std::move(shape_in)) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  data.assign(n, fill);
}

Tensor Tensor::zeros_like(const Tensor& other) {
  return Tensor(other.shape, 0.0);
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double joint_l2_norm(const TensorMap& tensors) {
  double sum_sq = 0.0;
  for (const auto& [name, t] : tensors) {
    (void)name;
    sum_sq += t.vec().squaredNorm();
  }
  return std::sqrt(sum_sq);
}

void axpy_into(TensorMap& out, const TensorMap& in, double scale) {
  for (const auto& [name, t] : in) {
    auto it = out.find(name);
    if (it == out.end()) {
      fail(ErrorCode::InvalidArgument, "axpy_into: missing tensor '" + name + "'");
    }
    if (!it->second.same_shape(t)) {
      fail(ErrorCode::InvalidArgument, "axpy_into: shape mismatch for '" + name + "'");
    }
    it->second.vec() += scale * t.vec();
  }
}

TensorMap zeros_like(const TensorMap& tensors) {
  TensorMap out;
  for (const auto& [name, t] : tensors) {
    out.emplace(name, Tensor(t.shape, 0.0));
  }
  return out;
}

bool all_finite(const TensorMap& tensors) {
  for (const auto& [name, t] : tensors) {
    (void)name;
    if (!t.all_finite()) return false;
  }
  return true;
}

bool same_schema(const TensorMap& a, const TensorMap& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !ia->second.same_shape(ib->second)) return false;
  }
  return true;
}

}  // namespace dataclone
