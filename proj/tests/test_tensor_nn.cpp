#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "scar/tensor_nn.hpp"

using namespace scar;

namespace {

Tensor randn(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

ModelSpec vec_spec(int in, int k, std::vector<int> hidden = {8, 6}) {
  ModelSpec s;
  s.input_dim = in;
  s.num_classes = k;
  s.hidden = std::move(hidden);
  return s;
}

double ce_loss(Model& m, const Tensor& x, const std::vector<int>& y) {
  Tape t;
  return cross_entropy(forward(t, m, x), y).scalar();
}

}  // namespace

TEST_CASE("forward: zero weights give zero logits") {
  Model m = make_model(vec_spec(5, 3), 1);
  for (Tensor& p : m.params) p.setZero();
  Tensor z = logits_of(m, randn(7, 5, 2));
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: single identity layer passes input through") {
  Model m = make_model(vec_spec(4, 4, {}), 1);
  m.params[0] = Tensor::Identity(4, 4);
  m.params[1].setZero();
  Tensor x = randn(3, 4, 5);
  CHECK((logits_of(m, x) - x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((features_of(m, x) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: matches a hand-rolled dense oracle") {
  ModelSpec s = vec_spec(6, 3);
  for (bool rf : {true, false}) {
    s.relu_features = rf;
    Model m = make_model(s, 9);
    Tensor x = randn(10, 6, 3);
    Tensor h1 = ((x * m.params[0]).rowwise() + m.params[1].row(0)).cwiseMax(0.0);
    Tensor h2 = (h1 * m.params[2]).rowwise() + m.params[3].row(0);
    if (rf) h2 = h2.cwiseMax(0.0);
    Tensor z = (h2 * m.params[4]).rowwise() + m.params[5].row(0);
    CHECK((logits_of(m, x) - z).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("forward equals head of feature_extract") {
  ModelSpec s = vec_spec(6, 4);
  s.relu_features = false;
  Model m = make_model(s, 4);
  for (int b = 0; b < 100; ++b) {
    Tensor x = randn(1 + b % 7, 6, 100 + b);
    Tape t;
    Tensor viaf = head(t, m, feature_extract(t, m, x)).value();
    Tensor direct = logits_of(m, x);
    REQUIRE((viaf - direct).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("forward rejects wrong input width") {
  Model m = make_model(vec_spec(5, 3), 1);
  CHECK_THROWS_AS(logits_of(m, randn(2, 4, 1)), DimensionError);
  CHECK_THROWS_AS(make_model(vec_spec(0, 3), 1), ParameterError);
}

TEST_CASE("softmax closed forms") {
  Tensor z(1, 2);
  z << std::log(2.0), 0.0;
  Tensor p = softmax(z);
  CHECK(p(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(p(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  z << 4.0, 0.0;
  p = softmax(z, 2.0);
  CHECK(p(0, 0) == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(p(0, 1) == doctest::Approx(0.1192).epsilon(1e-3));
  Tensor eq = Tensor::Constant(3, 5, 1.7);
  for (double T : {0.5, 1.0, 3.0}) CHECK((softmax(eq, T).array() - 0.2).abs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(softmax(eq, 0.0), ParameterError);
  CHECK_THROWS_AS(log_softmax(eq, -1.0), ParameterError);
}

TEST_CASE("softmax rows are positive and sum to one") {
  Tensor z = randn(50, 9, 3) * 30.0;
  Tensor p = softmax(z);
  CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK(p.minCoeff() > 0.0);
}

TEST_CASE("cross entropy") {
  Tape t;
  CHECK(cross_entropy(t.constant(Tensor::Zero(4, 7)), {0, 1, 2, 6}).scalar() ==
        doctest::Approx(std::log(7.0)).epsilon(1e-14));
  Tensor big = Tensor::Zero(1, 3);
  big(0, 1) = 1000.0;
  CHECK(cross_entropy(t.constant(big), {1}).scalar() <= 1e-12);

  Tensor z = randn(20, 5, 8);
  std::vector<int> y;
  for (int i = 0; i < 20; ++i) y.push_back(i % 5);
  double oracle = 0.0;
  for (int i = 0; i < 20; ++i) {
    double s = 0.0;
    for (int k = 0; k < 5; ++k) s += std::exp(z(i, k));
    oracle -= std::log(std::exp(z(i, y[i])) / s);
  }
  CHECK(cross_entropy(t.constant(z), y).scalar() == doctest::Approx(oracle / 20).epsilon(1e-10));
  CHECK_THROWS_AS(cross_entropy(t.constant(z), {0, 1}), DimensionError);
  std::vector<int> bad(20, 5);
  CHECK_THROWS_AS(cross_entropy(t.constant(z), bad), ParameterError);
}

TEST_CASE("backward: linear case and errors") {
  Tape t;
  Tensor W = randn(3, 2, 1), x = randn(4, 3, 2), gW;
  Var w = t.parameter(W, &gW);
  t.backward(sum(matmul(t.constant(x), w)));
  // d/dW sum(xW) = x^T 1
  Tensor expect = x.transpose() * Tensor::Ones(4, 2);
  CHECK((gW - expect).cwiseAbs().maxCoeff() <= 1e-14);

  Tape empty;
  CHECK_THROWS_AS(empty.backward(Var{&empty, 0}), StateError);

  Tape c;
  Tensor g2;
  Var p = c.parameter(W, &g2);
  c.backward(sum(scale(p, 0.0)));
  CHECK(g2.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: finite differences on every parameter tensor") {
  ModelSpec s = vec_spec(5, 3, {6, 4});
  s.relu_features = false;
  Model m = make_model(s, 21);
  Tensor x = randn(8, 5, 22);
  std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1};
  Tape t;
  zero_grad(m);
  backward(t, cross_entropy(forward(t, m, x), y));
  std::vector<Tensor> g = m.grads;
  std::mt19937_64 rng(5);
  int probes = 0;
  for (std::size_t i = 0; i < m.params.size(); ++i)
    for (int r = 0; r < 5; ++r) {
      Eigen::Index k = static_cast<Eigen::Index>(rng() % m.params[i].size());
      double& p = m.params[i].data()[k];
      const double h = 1e-5, keep = p;
      p = keep + h;
      double up = ce_loss(m, x, y);
      p = keep - h;
      double dn = ce_loss(m, x, y);
      p = keep;
      double num = (up - dn) / (2 * h), ana = g[i].data()[k];
      double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6});
      CHECK(rel <= 1e-4);
      ++probes;
    }
  CHECK(probes == 30);
}

TEST_CASE("conv and pool shapes") {
  ModelSpec s;
  s.input_dim = 8 * 8;
  s.num_classes = 3;
  s.image = ImageShape{8, 8, 1};
  s.conv_channels = 4;
  s.hidden = {5};
  Model m = make_model(s, 2);
  CHECK(m.params.size() == 8);
  CHECK(m.params[0].rows() == 9);
  CHECK(m.params[2].rows() == 36);
  CHECK(m.params[4].rows() == 2 * 2 * 4);
  CHECK(logits_of(m, randn(3, 64, 1)).cols() == 3);

  Tape t;
  Tensor img(1, 16);
  for (int i = 0; i < 16; ++i) img(0, i) = i;
  Tensor pooled = maxpool2(t.constant(img), {4, 4, 1}).value();
  REQUIRE(pooled.cols() == 4);
  CHECK(pooled(0, 0) == 5.0);
  CHECK(pooled(0, 3) == 15.0);
}

TEST_CASE("tukey op") {
  Tape t;
  Tensor v(1, 3);
  v << 4.0, -4.0, 0.0;
  Tensor out = tukey(t.constant(v), 0.5).value();
  CHECK(out(0, 0) == doctest::Approx(2.0));
  CHECK(out(0, 1) == doctest::Approx(-2.0));
  CHECK(out(0, 2) == 0.0);
  CHECK((tukey(t.constant(v), 1.0).value() - v).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(tukey(t.constant(v), 0.0), ParameterError);
  CHECK_THROWS_AS(tukey(t.constant(v), 1.5), ParameterError);
}

TEST_CASE("js divergence values") {
  Vector p(2), q(2);
  p << 0.5, 0.5;
  q << 0.9, 0.1;
  CHECK(js_divergence(p, q) == doctest::Approx(0.4394).epsilon(1e-3));
  CHECK(js_divergence(p, q) == doctest::Approx(js_divergence(q, p)).epsilon(1e-14));
  CHECK(js_divergence(p, p) == 0.0);
  Tape t;
  Tensor z = randn(6, 4, 3);
  CHECK(std::abs(js_divergence(t.constant(z), z, 1.0).scalar()) <= 1e-12);
  CHECK(js_divergence(t.constant(z), z, 2.0).scalar() > 0.0);
  CHECK_THROWS_AS(js_divergence(t.constant(z), z, 0.0), ParameterError);
}

TEST_CASE("optimizer") {
  Model m;
  m.spec = vec_spec(1, 1, {});
  m.params = {Tensor::Constant(1, 1, 1.0)};
  OptimState s = make_optimizer(m, 0.1, 0.0);
  m.grads = {Tensor::Constant(1, 1, 1.0)};
  optimizer_step(m, s);
  CHECK(m.params[0](0, 0) < 1.0);
  CHECK(m.grads.empty());
  CHECK_THROWS_AS(optimizer_step(m, s), StateError);

  m.params = {Tensor::Constant(1, 1, 1.0)};
  s = make_optimizer(m, 0.1, 0.0);
  m.grads = {Tensor::Zero(1, 1)};
  optimizer_step(m, s);
  CHECK(m.params[0](0, 0) == 1.0);

  // (p - 2)^2 from 0
  m.params = {Tensor::Zero(1, 1)};
  s = make_optimizer(m, 0.01, 0.0);
  double prev = 4.0;
  for (int i = 0; i < 3; ++i) {
    double p = m.params[0](0, 0);
    m.grads = {Tensor::Constant(1, 1, 2 * (p - 2))};
    optimizer_step(m, s);
    double l = std::pow(m.params[0](0, 0) - 2, 2);
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("training is deterministic and checkpoints round-trip bit-exactly") {
  Tensor x = randn(60, 5, 3);
  std::vector<int> y;
  for (int i = 0; i < 60; ++i) y.push_back(x(i, 0) > 0 ? 1 : 0);
  TrainConfig c;
  c.epochs = 3;
  c.batch = 16;
  Model a = make_model(vec_spec(5, 2), 4), b = make_model(vec_spec(5, 2), 4);
  fit_cross_entropy(a, x, y, c);
  fit_cross_entropy(b, x, y, c);
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i] == b.params[i]);

  std::string path = "test_tensor_nn_model.ckpt";
  save_model(path, a);
  Model r = load_model(path);
  CHECK(r.params.size() == a.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(r.params[i] == a.params[i]);
  CHECK(r.spec.hidden == a.spec.hidden);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_model("does/not/exist.ckpt"), MissingArtifact);

  std::FILE* f = std::fopen(path.c_str(), "wb");
  std::fputs("SCARCKPX", f);
  std::fclose(f);
  CHECK_THROWS_AS(load_model(path), FormatError);
  std::remove(path.c_str());
}
