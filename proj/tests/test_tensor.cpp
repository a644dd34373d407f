#include <doctest.h>

#include <cmath>
#include <limits>

#include "dataclone/tensor.hpp"
#include "helpers.hpp"

using namespace dataclone;

namespace {

TensorMap two_tensors() {
  TensorMap m;
  m["a"] = Tensor({2, 2});
  m["b"] = Tensor({3});
  m["a"].data = {1.0, 2.0, 3.0, 4.0};
  m["b"].data = {-1.0, 0.5, 2.0};
  return m;
}

}  // namespace

TEST_CASE("joint_l2_norm spans every tensor") {
  // 1+4+9+16 + 1+0.25+4 = 35.25
  CHECK(joint_l2_norm(two_tensors()) == doctest::Approx(std::sqrt(35.25)).epsilon(1e-12));
  CHECK(joint_l2_norm(TensorMap{}) == 0.0);
}

TEST_CASE("axpy_into accumulates with scale") {
  TensorMap out = two_tensors();
  axpy_into(out, two_tensors(), 0.5);
  CHECK(out["a"].data[3] == doctest::Approx(6.0));
  CHECK(out["b"].data[0] == doctest::Approx(-1.5));
}

TEST_CASE("axpy_into rejects schema mismatches") {
  TensorMap out = two_tensors();
  TensorMap other;
  other["a"] = Tensor({2, 2});
  CHECK_FAILS_WITH(axpy_into(out, other, 1.0), ErrorCode::InvalidArgument);
}

TEST_CASE("zeros_like copies shapes only") {
  const TensorMap z = zeros_like(two_tensors());
  CHECK(z.at("a").shape == std::vector<size_t>{2, 2});
  for (double v : z.at("a").data) CHECK(v == 0.0);
}

TEST_CASE("all_finite flags nan and inf") {
  TensorMap m = two_tensors();
  CHECK(all_finite(m));
  m["b"].data[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK(!all_finite(m));
  m["b"].data[1] = std::numeric_limits<double>::infinity();
  CHECK(!all_finite(m));
}

TEST_CASE("same_schema compares names and shapes") {
  CHECK(same_schema(two_tensors(), two_tensors()));
  TensorMap other = two_tensors();
  other["c"] = Tensor({1});
  CHECK(!same_schema(two_tensors(), other));
  TensorMap reshaped = two_tensors();
  reshaped["b"] = Tensor({4});
  CHECK(!same_schema(two_tensors(), reshaped));
}

TEST_CASE("matrix view is row major") {
  Tensor t({2, 3});
  t.data = {1, 2, 3, 4, 5, 6};
  CHECK(t.mat()(0, 2) == 3.0);
  CHECK(t.mat()(1, 0) == 4.0);
  CHECK(t.at(1, 1) == 5.0);
}
