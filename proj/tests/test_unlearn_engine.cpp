#include <doctest.h>

#include <random>

#include "scar/eval_metrics.hpp"
#include "scar/unlearn_engine.hpp"

using namespace scar;

namespace {

struct Fixture {
  Dataset train, test;
  Model original;
  std::vector<ClassPrototype> protos;
  Tensor surrogate;

  Fixture() {
    train = gen_blobs(3, 40, 10, 0.4, 1, 1.0, 1);
    test = gen_blobs(3, 20, 10, 0.4, 1, 1.0, 2);
    ModelSpec s;
    s.input_dim = 10;
    s.num_classes = 3;
    s.hidden = {8, 8};
    s.relu_features = false;
    original = make_model(s, 5);
    TrainConfig c;
    c.epochs = 20;
    c.batch = 16;
    fit_cross_entropy(original, train.samples(), train.labels(), c);
    original.grads.clear();
    protos = fit_prototypes(original, train.samples(), train.labels(), 0.5, {3, 3});
    SurrogateSpec ss;
    ss.n = 200;
    ss.radius = 2.0;
    surrogate = gen_surrogate(ss, 10).samples;
  }
};

const Fixture& fx() {
  static Fixture f;
  return f;
}

ClassPrototype ident(int id, Vector mu) {
  ClassPrototype q;
  q.class_id = id;
  q.mean = std::move(mu);
  q.cov = Tensor::Identity(q.mean.size(), q.mean.size());
  q.inv = q.cov;
  return q;
}

UnlearnConfig small_cfg() {
  UnlearnConfig c;
  c.forget_batch = 16;
  c.surrogate_batch = 32;
  c.max_epochs = 4;
  c.lr = 1e-3;
  return c;
}

Monitor forget_monitor(const Dataset& d) {
  Monitor m;
  m.forget = [&d](const Model& s) { return accuracy(s, d); };
  return m;
}

bool same(const Model& a, const Model& b) {
  if (a.params.size() != b.params.size()) return false;
  for (std::size_t i = 0; i < a.params.size(); ++i)
    if (a.params[i] != b.params[i]) return false;
  return true;
}

// identity backbone so features equal inputs
Model linear_model(int d, int k) {
  ModelSpec s;
  s.input_dim = d;
  s.num_classes = k;
  s.hidden = {};
  return make_model(s, 1);
}

}  // namespace

TEST_CASE("forget loss examples") {
  Model m = linear_model(2, 3);
  Vector a(2), b(2), c(2);
  a << 0, 0;
  b << 3, 4;
  c << -2, 1;
  std::vector<ClassPrototype> p{ident(0, a), ident(1, b), ident(2, c)};

  // delta = 1 keeps features as they are
  Tensor at(1, 2);
  at << 3, 4;
  CHECK(forget_loss(m, at, {0}, p, 1.0) == doctest::Approx(0.0));
  Tensor x(1, 2);
  x << 1, 1;
  double expect = std::min((x.row(0).transpose() - b).norm(), (x.row(0).transpose() - c).norm());
  CHECK(forget_loss(m, x, {0}, p, 1.0) == doctest::Approx(expect).epsilon(1e-12));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Tensor batch(4, 2);
  for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = 2 * n(rng);
  std::vector<int> y{0, 1, 2, 1};
  Tensor z = tukey_transform(batch, 0.5);
  double oracle = 0.0;
  for (int j = 0; j < 4; ++j) {
    double best = 1e300;
    for (int k = 0; k < 3; ++k)
      if (k != y[j]) best = std::min(best, (z.row(j).transpose() - p[k].mean).norm());
    oracle += best / 4;
  }
  CHECK(forget_loss(m, batch, y, p, 0.5) == doctest::Approx(oracle).epsilon(1e-10));
  CHECK(forget_loss(m, batch, y, p, 0.5) >= 0.0);
  CHECK_THROWS_AS(forget_loss(m, Tensor(0, 2), {}, p, 0.5), ParameterError);
}

TEST_CASE("distillation loss") {
  const Fixture& f = fx();
  CHECK(std::abs(distillation_loss(f.original, f.original, f.surrogate, 1.0)) <= 1e-12);
  CHECK(distillation_loss(f.original, f.original, f.surrogate, 3.0) > 0.0);
  Model other = make_model(f.original.spec, 99);
  double ab = distillation_loss(other, f.original, f.surrogate, 1.0);
  double ba = distillation_loss(f.original, other, f.surrogate, 1.0);
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  CHECK_THROWS_AS(distillation_loss(other, f.original, f.surrogate, 0.0), ParameterError);
}

TEST_CASE("combined loss gradient matches finite differences") {
  const Fixture& f = fx();
  Model m = f.original;
  Tensor xf = f.train.rows({0, 3, 6, 9});
  std::vector<int> yf;
  for (int i : {0, 3, 6, 9}) yf.push_back(f.train.labels()[i]);
  Tensor xs = f.surrogate.topRows(8);
  Tensor tl = logits_of(f.original, xs);
  // perturb so the student differs from the teacher
  for (Tensor& p : m.params) p.array() += 0.05;
  auto loss = [&](Model& s) {
    Tape t;
    return add(forget_loss(t, s, xf, yf, f.protos, 0.5), scale(distillation_loss(t, s, xs, tl, 2.0), 5.0)).scalar();
  };
  Tape t;
  zero_grad(m);
  backward(t, add(forget_loss(t, m, xf, yf, f.protos, 0.5), scale(distillation_loss(t, m, xs, tl, 2.0), 5.0)));
  std::vector<Tensor> g = m.grads;
  std::mt19937_64 rng(2);
  for (std::size_t i = 0; i < m.params.size(); ++i)
    for (int r = 0; r < 3; ++r) {
      Eigen::Index k = static_cast<Eigen::Index>(rng() % m.params[i].size());
      double& p = m.params[i].data()[k];
      const double h = 1e-5, keep = p;
      p = keep + h;
      double up = loss(m);
      p = keep - h;
      double dn = loss(m);
      p = keep;
      double num = (up - dn) / (2 * h), ana = g[i].data()[k];
      CHECK(std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}) <= 1e-4);
    }
}

TEST_CASE("scar_unlearn stopping") {
  const Fixture& f = fx();
  ScenarioSplit s = split_cr(f.train, f.test, 1);
  Model before = f.original;
  UnlearnConfig c = small_cfg();
  c.epsilon = 1.0;
  UnlearnResult r = scar_unlearn(f.original, s.forget.samples(), s.forget.labels(), f.surrogate, f.protos, c,
                                 forget_monitor(s.forget_test));
  CHECK(r.history.epochs_run() == 1);
  CHECK(r.history.stop == StopReason::Threshold);
  CHECK(same(before, f.original));

  c.epsilon = 0.0;
  r = scar_unlearn(f.original, s.forget.samples(), s.forget.labels(), f.surrogate, f.protos, c,
                   forget_monitor(s.forget_test));
  REQUIRE(r.history.stop.has_value());
  const EpochRecord& last = r.history.epochs.back();
  bool thr = last.forget_acc <= c.epsilon, cap = r.history.epochs_run() == c.max_epochs;
  CHECK((thr || cap));
  if (*r.history.stop == StopReason::Threshold) CHECK(thr);
  for (std::size_t i = 0; i + 1 < r.history.epochs.size(); ++i) CHECK(r.history.epochs[i].forget_acc > c.epsilon);
  for (const EpochRecord& e : r.history.epochs) {
    CHECK(e.forget_loss >= 0.0);
    CHECK(e.distill_loss >= 0.0);
  }

  UnlearnResult again = scar_unlearn(f.original, s.forget.samples(), s.forget.labels(), f.surrogate, f.protos, c,
                                     forget_monitor(s.forget_test));
  CHECK(same(again.model, r.model));

  c.lambda1 = 0.0;
  c.lambda2 = 0.0;
  r = scar_unlearn(f.original, s.forget.samples(), s.forget.labels(), f.surrogate, f.protos, c,
                   forget_monitor(s.forget_test));
  CHECK(r.history.stop == StopReason::MaxEpochs);
  CHECK(same(r.model, f.original));

  CHECK_THROWS_AS(scar_unlearn(f.original, s.forget.samples(), s.forget.labels(), Tensor(0, 10), f.protos, c,
                               forget_monitor(s.forget_test)),
                  ParameterError);
  c.temperature = 0.0;
  CHECK_THROWS_AS(scar_unlearn(f.original, s.forget.samples(), s.forget.labels(), f.surrogate, f.protos, c,
                               forget_monitor(s.forget_test)),
                  ParameterError);
}

TEST_CASE("history stop reason is set once") {
  UnlearnHistory h;
  h.set_stop(StopReason::MaxEpochs);
  CHECK_THROWS_AS(h.set_stop(StopReason::Threshold), StateError);
  CHECK(to_string(StopReason::Threshold) == "threshold");
}

TEST_CASE("self-forget partition") {
  const Fixture& f = fx();
  Model rnd = make_model(f.original.spec, 77);
  SurrogateSpec ss;
  ss.n = 1000;
  Tensor sur = gen_surrogate(ss, 10).samples;
  SelfForgetPartition p = self_forget_partition(rnd, sur, {0});
  CHECK(p.forget.rows() + p.retain.rows() == 1000);
  std::vector<int> pred = predict(rnd, sur);
  int fi = 0, ri = 0;
  for (int i = 0; i < 1000; ++i) {
    if (pred[i] == 0) {
      REQUIRE(fi < p.forget.rows());
      CHECK(p.forget.row(fi) == sur.row(i));
      CHECK(p.forget_labels[fi] == 0);
      ++fi;
    } else {
      CHECK(p.retain.row(ri++) == sur.row(i));
    }
  }
  CHECK(fi == p.forget.rows());

  // a model that always predicts class 2
  Model fixed = rnd;
  for (Tensor& t : fixed.params) t.setZero();
  fixed.params.back()(0, 2) = 1.0;
  SelfForgetPartition all = self_forget_partition(fixed, sur, {2});
  CHECK(all.retain.rows() == 0);
  CHECK(all.forget.rows() == 1000);

  CHECK_THROWS_AS(self_forget_partition(rnd, sur, {}), ParameterError);
  CHECK_THROWS_AS(self_forget_partition(rnd, sur, {0, 1, 2}), ParameterError);

  UnlearnConfig c = small_cfg();
  c.scenario = Scenario::HR;
  CHECK_THROWS_AS(scar_self_forget(f.original, sur, {0}, f.protos, c), ParameterError);
  c.scenario = Scenario::CR;
  CHECK_THROWS_AS(scar_self_forget(fixed, sur, {1}, f.protos, c), DataError);
}

TEST_CASE("distillation trick curve") {
  const Fixture& f = fx();
  UnlearnConfig c = small_cfg();
  std::vector<double> zero =
      distillation_trick_train(f.original, f.surrogate, f.test.samples(), f.test.labels(), 0, c);
  REQUIRE(zero.size() == 1);
  CHECK(zero[0] == accuracy(f.original, f.test));
  c.lr = 0.0;
  Model out;
  std::vector<double> flat =
      distillation_trick_train(f.original, f.surrogate, f.test.samples(), f.test.labels(), 3, c, &out);
  REQUIRE(flat.size() == 4);
  for (double a : flat) CHECK(a == flat[0]);
  CHECK(same(out, f.original));
}

TEST_CASE("retrain and fine-tune baselines") {
  const Fixture& f = fx();
  TrainConfig c;
  c.epochs = 5;
  c.batch = 16;
  c.seed = 5;
  Model direct = make_model(f.original.spec, 5);
  fit_cross_entropy(direct, f.train.samples(), f.train.labels(), c);
  CHECK(same(baseline_retrain(f.train, f.original.spec, c), direct));

  ScenarioSplit s = split_cr(f.train, f.test, 2);
  c.epochs = 20;
  Model r1 = baseline_retrain(s.retain, f.original.spec, c), r2 = baseline_retrain(s.retain, f.original.spec, c);
  CHECK(same(r1, r2));
  CHECK(accuracy(r1, s.forget_test) == 0.0);
  CHECK(r1.num_classes() == 3);

  TrainConfig zero = c;
  zero.epochs = 0;
  CHECK(same(baseline_finetune(f.original, s.retain, zero), f.original));
  zero.epochs = 2;
  zero.lr = 0.0;
  CHECK(same(baseline_finetune(f.original, s.retain, zero), f.original));
  CHECK_THROWS_AS(baseline_retrain(Dataset(), f.original.spec, c), ParameterError);
}

TEST_CASE("negative gradient and random labels") {
  const Fixture& f = fx();
  ScenarioSplit s = split_cr(f.train, f.test, 0);
  UnlearnConfig c = small_cfg();
  c.lr = 0.0;
  c.max_epochs = 1;
  UnlearnResult r = baseline_negative_gradient(f.original, s.forget, c, forget_monitor(s.forget_test));
  CHECK(same(r.model, f.original));

  // sign law on one batch
  Model a = f.original, b = f.original;
  Tape ta, tb;
  zero_grad(a);
  zero_grad(b);
  backward(ta, cross_entropy(forward(ta, a, s.forget.samples()), s.forget.labels()));
  backward(tb, scale(cross_entropy(forward(tb, b, s.forget.samples()), s.forget.labels()), -1.0));
  for (std::size_t i = 0; i < a.grads.size(); ++i) CHECK(b.grads[i] == -a.grads[i]);

  std::vector<int> y{0, 1, 1, 0, 1};
  std::mt19937_64 g1(4), g2(4);
  std::vector<int> two = random_labels(y, 2, g1);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(two[i] == 1 - y[i]);
  std::vector<int> big(500);
  for (int i = 0; i < 500; ++i) big[i] = i % 7;
  std::mt19937_64 g3(9), g4(9);
  std::vector<int> l1 = random_labels(big, 7, g3), l2 = random_labels(big, 7, g4);
  CHECK(l1 == l2);
  for (int i = 0; i < 500; ++i) {
    CHECK(l1[i] != big[i]);
    CHECK(l1[i] >= 0);
    CHECK(l1[i] < 7);
  }

  c.lr = 1e-2;
  c.max_epochs = 3;
  UnlearnResult rl = baseline_random_labels(f.original, s.forget, c, forget_monitor(s.forget_test));
  CHECK(rl.history.stop.has_value());
  CHECK(rl.history.epochs_run() <= 3);
}
