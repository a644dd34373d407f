#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace dataclone {

using MatrixMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatrixMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

// Dense row-major tensor of doubles. Rank 1 or 2 is all the model needs;
// higher ranks are stored flat with an explicit shape.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<size_t> shape_in, double fill = 0.0);
  static Tensor zeros_like(const Tensor& other);

  size_t size() const { return data.size(); }
  size_t rank() const { return shape.size(); }
  size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(size_t r, size_t c) { return data[r * cols() + c]; }
  double at(size_t r, size_t c) const { return data[r * cols() + c]; }

  MatrixMap mat() { return MatrixMap(data.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())); }
  ConstMatrixMap mat() const { return ConstMatrixMap(data.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())); }
  VectorMap vec() { return VectorMap(data.data(), static_cast<Eigen::Index>(size())); }
  ConstVectorMap vec() const { return ConstVectorMap(data.data(), static_cast<Eigen::Index>(size())); }

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

// Named tensor collection. std::map keeps a stable, sorted iteration order,
// which the DP noise stream and checkpoint writer rely on.
using TensorMap = std::map<std::string, Tensor>;

// Joint L2 norm over every coordinate of every tensor in the map.
double joint_l2_norm(const TensorMap& tensors);

// out += scale * in, matched by name. Shapes must agree; missing names fail.
void axpy_into(TensorMap& out, const TensorMap& in, double scale);

TensorMap zeros_like(const TensorMap& tensors);
bool all_finite(const TensorMap& tensors);
bool same_schema(const TensorMap& a, const TensorMap& b);

}  // namespace dataclone
