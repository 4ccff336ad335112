#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cstdio>
#include <random>

#include "scar/class_prototypes.hpp"

using namespace scar;

namespace {

Tensor randn(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

ClassPrototype ident(int id, Vector mu) {
  ClassPrototype q;
  q.class_id = id;
  q.mean = std::move(mu);
  q.cov = Tensor::Identity(q.mean.size(), q.mean.size());
  q.inv = q.cov;
  return q;
}

}  // namespace

TEST_CASE("tukey transform") {
  Tensor v(1, 3);
  v << 4.0, -4.0, 0.0;
  Tensor t = tukey_transform(v, 0.5);
  CHECK(t(0, 0) == doctest::Approx(2.0));
  CHECK(t(0, 1) == doctest::Approx(-2.0));
  CHECK(t(0, 2) == 0.0);
  CHECK(tukey_transform(v, 1.0) == v);
  Eigen::MatrixXf f = Eigen::MatrixXf::Constant(2, 2, 9.0f);
  CHECK(tukey_transform(f, 0.5)(1, 1) == doctest::Approx(3.0));
  CHECK_THROWS_AS(tukey_transform(v, 0.0), ParameterError);
}

TEST_CASE("shrinkage examples") {
  Tensor s = Tensor::Identity(2, 2);
  CHECK(shrink_covariance(s, {3, 3}) == 4.0 * Tensor::Identity(2, 2));
  Tensor a(2, 2);
  a << 2, 1, 1, 2;
  Tensor e(2, 2);
  e << 8, 4, 4, 8;
  CHECK((shrink_covariance(a, {3, 3}) - e).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(shrink_covariance(a, {0, 0}) == a);
  CHECK_THROWS_AS(shrink_covariance(Tensor::Zero(2, 3), {3, 3}), DimensionError);
}

TEST_CASE("shrinkage repairs rank-deficient covariances") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    int d = 10 + t % 30, n = 2 + t % 8;
    Tensor s = shrink_covariance(sample_covariance(randn(n, d, rng)), {3, 3});
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Eigen::MatrixXd(s)).eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("correlation normalisation") {
  Tensor d = Tensor::Zero(2, 2);
  d(0, 0) = 4;
  d(1, 1) = 9;
  CHECK(normalize_correlation(d) == Tensor::Identity(2, 2));
  Tensor s(2, 2);
  s << 4, 2, 2, 9;
  Tensor c = normalize_correlation(s);
  CHECK(c(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(c(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK((normalize_correlation(c) - c).cwiseAbs().maxCoeff() <= 1e-12);
  Tensor bad = s;
  bad(1, 1) = 0;
  CHECK_THROWS_AS(normalize_correlation(bad), DataError);

  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    Tensor x = randn(30, 6, rng);
    Tensor n1 = normalize_correlation(shrink_covariance(sample_covariance(x), {3, 3}));
    CHECK((normalize_correlation(n1) - n1).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("covariance errors") {
  CHECK_THROWS_AS(sample_covariance(Tensor::Zero(1, 3)), DataError);
  Tensor neg = -Tensor::Identity(3, 3);
  CHECK_THROWS_AS(spd_inverse(neg), DataError);
}

TEST_CASE("mahalanobis examples") {
  Vector v(3);
  v << 1, -2, 2;
  CHECK(mahalanobis(v, ident(0, Vector::Zero(3))) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(mahalanobis(v, ident(0, v)) == 0.0);

  ClassPrototype q;
  q.mean = Vector::Zero(2);
  q.cov.resize(2, 2);
  q.cov << 1, 0.5, 0.5, 1;
  q.inv = spd_inverse(q.cov);
  Vector w(2);
  w << 1, 1;
  CHECK(mahalanobis(w, q) == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(mahalanobis(Vector::Zero(3), q), DimensionError);

  std::mt19937_64 rng(8);
  for (int t = 0; t < 50; ++t) {
    Vector a = randn(5, 1, rng).col(0), mu = randn(5, 1, rng).col(0);
    CHECK(std::abs(mahalanobis(a, ident(0, mu)) - (a - mu).norm()) <= 1e-10);
  }
}

TEST_CASE("nearest wrong distribution") {
  std::vector<ClassPrototype> p{ident(0, Vector::Zero(2)), ident(1, Vector::Ones(2)), ident(2, -Vector::Ones(2))};
  CHECK(nearest_wrong_distribution(Vector::Ones(2), 0, p).class_id == 1);
  CHECK(nearest_wrong_distribution(Vector::Zero(2), 0, p).class_id == 1);  // tie goes to lowest id
  CHECK(nearest_wrong_distribution(Vector::Ones(2), 1, p).class_id == 0);
  std::vector<ClassPrototype> one{p[0]};
  CHECK_THROWS_AS(nearest_wrong_distribution(Vector::Zero(2), 0, one), ParameterError);

  std::mt19937_64 rng(12);
  std::vector<ClassPrototype> r;
  for (int k = 0; k < 3; ++k) r.push_back(make_prototype(k, randn(20, 4, rng) + Tensor::Constant(20, 4, k), {3, 3}));
  for (int t = 0; t < 100; ++t) {
    Vector v = randn(4, 1, rng).col(0);
    int k = t % 3, best = -1;
    double bd = 1e300;
    for (int i = 0; i < 3; ++i) {
      if (i == k) continue;
      Vector d = v - r[i].mean;
      double m = std::sqrt(d.dot(r[i].cov.fullPivLu().inverse() * d));
      if (m < bd) bd = m, best = i;
    }
    const ClassPrototype& got = nearest_wrong_distribution(v, k, r);
    CHECK(got.class_id == best);
    CHECK(got.class_id != k);
  }
}

TEST_CASE("prototypes from features") {
  std::mt19937_64 rng(5);
  Vector point(4);
  point << 1, 2, -1, 0.5;
  Tensor f = randn(4000, 4, rng).rowwise() + point.transpose();
  ClassPrototype q = make_prototype(0, f, {3, 3});
  CHECK((q.mean - point).cwiseAbs().maxCoeff() <= 3.0 / std::sqrt(4000.0));
  CHECK(q.sample_count == 4000);
  CHECK(q.cov.diagonal().isOnes(1e-15));

  ClassPrototype q2 = make_prototype(1, f, {3, 3});
  CHECK(q2.mean == q.mean);
  CHECK(q2.cov == q.cov);

  Tensor few = randn(100, 512, rng);
  ClassPrototype big = make_prototype(0, few, {3, 3});
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Eigen::MatrixXd(big.cov)).eigenvalues().minCoeff() > 0.0);
  CHECK_THROWS_AS(make_prototype(0, randn(1, 4, rng), {3, 3}), DataError);
}

TEST_CASE("fit_prototypes and persistence") {
  ModelSpec s;
  s.input_dim = 6;
  s.num_classes = 3;
  s.hidden = {5};
  s.relu_features = false;
  Model m = make_model(s, 3);
  std::mt19937_64 rng(6);
  Tensor x = randn(30, 6, rng);
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) y.push_back(i % 3);
  auto protos = fit_prototypes(m, x, y, 0.5, {3, 3});
  REQUIRE(protos.size() == 3);
  CHECK(protos[2].sample_count == 10);
  CHECK(protos[1].mean.size() == 5);

  std::string path = "test_prototypes.ckpt";
  save_prototypes(path, protos, 0.5);
  auto back = load_prototypes(path);
  REQUIRE(back.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(back[k].mean == protos[k].mean);
    CHECK(back[k].cov == protos[k].cov);
    CHECK(back[k].inv == protos[k].inv);
  }
  std::remove(path.c_str());

  std::vector<int> missing(30, 0);
  missing[0] = 1;
  CHECK_THROWS_AS(fit_prototypes(m, x, missing, 0.5, {3, 3}), DataError);
}
