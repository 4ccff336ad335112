#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "scar/errors.hpp"
#include "scar/tensor_nn.hpp"

namespace scar {

struct ShrinkageParams {
  double gamma0 = 3.0;  // diagonal
  double gamma1 = 3.0;  // off-diagonal
};

struct ClassPrototype {
  int class_id = 0;
  Vector mean;
  Tensor cov;  // shrunk, correlation-normalised
  Tensor inv;
  int sample_count = 0;
};

// sign(v) |v|^delta, element-wise
template <typename Derived>
MatrixX<typename Derived::Scalar> tukey_transform(const Eigen::MatrixBase<Derived>& x, double delta) {
  using S = typename Derived::Scalar;
  if (!(delta > 0.0 && delta <= 1.0)) throw ParameterError("tukey: delta must lie in (0, 1]");
  return x.unaryExpr([delta](S a) -> S {
    return a == S(0) ? S(0) : std::copysign(std::pow(std::abs(a), S(delta)), a);
  });
}

// unbiased covariance of the rows of x
template <typename Derived>
MatrixX<typename Derived::Scalar> sample_covariance(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  if (x.rows() < 2) throw DataError("covariance: need at least 2 samples");
  MatrixX<S> c = x.rowwise() - x.colwise().mean();
  MatrixX<S> cov = (c.transpose() * c) / S(x.rows() - 1);
  return cov;
}

template <typename Derived>
MatrixX<typename Derived::Scalar> shrink_covariance(const Eigen::MatrixBase<Derived>& s,
                                                    const ShrinkageParams& p) {
  using S = typename Derived::Scalar;
  if (s.rows() != s.cols()) throw DimensionError("shrink_covariance: matrix must be square");
  const Eigen::Index d = s.rows();
  const S v0 = s.diagonal().mean();
  const S v1 = d > 1 ? (s.sum() - s.diagonal().sum()) / S(d * d - d) : S(0);
  MatrixX<S> out = s;
  out.array() += S(p.gamma1) * v1;
  out.diagonal().array() += S(p.gamma0) * v0 - S(p.gamma1) * v1;
  return out;
}

template <typename Derived>
MatrixX<typename Derived::Scalar> normalize_correlation(const Eigen::MatrixBase<Derived>& s) {
  using S = typename Derived::Scalar;
  if (s.rows() != s.cols()) throw DimensionError("normalize_correlation: matrix must be square");
  if ((s.diagonal().array() <= S(0)).any())
    throw DataError("normalize_correlation: non-positive variance (degenerate distribution)");
  VectorX<S> inv_sigma = s.diagonal().cwiseSqrt().cwiseInverse();
  MatrixX<S> out = inv_sigma.asDiagonal() * s * inv_sigma.asDiagonal();
  out.diagonal().setOnes();
  return out;
}

// SPD inverse; throws when the factorisation fails
template <typename Derived>
MatrixX<typename Derived::Scalar> spd_inverse(const Eigen::MatrixBase<Derived>& s) {
  using S = typename Derived::Scalar;
  Eigen::LLT<MatrixX<S>> llt(s);
  if (llt.info() != Eigen::Success) throw DataError("covariance is not positive definite");
  MatrixX<S> inv = llt.solve(MatrixX<S>::Identity(s.rows(), s.cols()));
  return (inv + inv.transpose()) / S(2);
}

// features already in Tukey space
ClassPrototype make_prototype(int class_id, const Tensor& features, const ShrinkageParams& p);

std::vector<ClassPrototype> fit_prototypes(const Model& model, const Tensor& x, const std::vector<int>& y,
                                           double delta, const ShrinkageParams& p);

double mahalanobis(const Vector& v, const ClassPrototype& proto);

// argmin over i != true_class, lowest id on ties
const ClassPrototype& nearest_wrong_distribution(const Vector& v, int true_class,
                                                 const std::vector<ClassPrototype>& protos);

void save_prototypes(const std::string& path, const std::vector<ClassPrototype>& protos, double delta);
std::vector<ClassPrototype> load_prototypes(const std::string& path);

}  // namespace scar
