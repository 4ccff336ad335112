#include "scar/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace scar {

double accuracy(const Model& model, const Dataset& data) {
  if (data.empty()) throw ParameterError("accuracy: empty dataset");
  std::vector<int> p = predict(model, data.samples());
  const std::vector<int>& y = data.labels();
  long hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += p[i] == y[i];
  return static_cast<double>(hit) / y.size();
}

double aus(double a_or, double a_t, double a_f, Scenario scenario) {
  for (double a : {a_or, a_t, a_f})
    if (!(a >= 0.0 && a <= 1.0)) throw ParameterError("aus: accuracies must be fractions in [0, 1]");
  const double delta = scenario == Scenario::CR ? std::abs(a_f) : std::abs(a_t - a_f);
  return (1.0 - (a_or - a_t)) / (1.0 + delta);
}

// ---------------------------------------------------------------- kernel SVM

Tensor rbf_kernel(const Tensor& a, const Tensor& b, double gamma) {
  Eigen::VectorXd na = a.rowwise().squaredNorm(), nb = b.rowwise().squaredNorm();
  Tensor k = -2.0 * a * b.transpose();
  k.colwise() += na;
  k.rowwise() += nb.transpose();
  return (-gamma * k.cwiseMax(0.0)).array().exp();
}

Vector KernelSvm::decision(const Tensor& x) const {
  if (support.rows() == 0) return Vector::Constant(x.rows(), -rho);
  return rbf_kernel(x, support, gamma) * coef - Vector::Constant(x.rows(), rho);
}

std::vector<int> KernelSvm::predict(const Tensor& x) const {
  Vector d = decision(x);
  std::vector<int> out(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) out[i] = d(i) > 0.0 ? 1 : -1;
  return out;
}

KernelSvm fit_kernel_svm(const Tensor& x, const std::vector<int>& y, double c, double gamma, double tol,
                         int max_iter) {
  const int n = static_cast<int>(x.rows());
  if (static_cast<int>(y.size()) != n) throw DimensionError("svm: label count mismatch");
  int pos = 0, neg = 0;
  for (int v : y) {
    if (v == 1) ++pos;
    else if (v == -1) ++neg;
    else throw ParameterError("svm: labels must be +1 or -1");
  }
  if (pos == 0 || neg == 0) throw ParameterError("svm: both classes required");
  if (!(c > 0.0) || !(gamma > 0.0)) throw ParameterError("svm: C and gamma must be positive");

  const Tensor k = rbf_kernel(x, x, gamma);
  Eigen::VectorXd yd(n);
  for (int i = 0; i < n; ++i) yd(i) = y[i];
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n), g = -Eigen::VectorXd::Ones(n);
  constexpr double tau = 1e-12;
  const double inf = std::numeric_limits<double>::infinity();
  auto up = [&](int t) { return (yd(t) > 0 && alpha(t) < c) || (yd(t) < 0 && alpha(t) > 0); };
  auto low = [&](int t) { return (yd(t) > 0 && alpha(t) > 0) || (yd(t) < 0 && alpha(t) < c); };

  int it = 0;
  for (; it < max_iter; ++it) {
    int i = -1;
    double gmax = -inf;
    for (int t = 0; t < n; ++t)
      if (up(t) && -yd(t) * g(t) >= gmax) gmax = -yd(t) * g(t), i = t;
    int j = -1;
    double gmin = inf, best = inf;
    for (int t = 0; t < n; ++t) {
      if (!low(t)) continue;
      const double v = -yd(t) * g(t);
      gmin = std::min(gmin, v);
      const double b = gmax - v;
      if (i >= 0 && b > 0.0) {
        double a = k(i, i) + k(t, t) - 2.0 * k(i, t);
        if (a <= 0.0) a = tau;
        if (-(b * b) / a <= best) best = -(b * b) / a, j = t;
      }
    }
    if (i < 0 || j < 0 || gmax - gmin < tol) break;

    const double qij = yd(i) * yd(j) * k(i, j);
    const double ai = alpha(i), aj = alpha(j);
    if (yd(i) != yd(j)) {
      double quad = k(i, i) + k(j, j) + 2.0 * qij;
      if (quad <= 0.0) quad = tau;
      const double d = (-g(i) - g(j)) / quad, diff = alpha(i) - alpha(j);
      alpha(i) += d;
      alpha(j) += d;
      if (diff > 0.0) {
        if (alpha(j) < 0.0) alpha(j) = 0.0, alpha(i) = diff;
      } else if (alpha(i) < 0.0) {
        alpha(i) = 0.0, alpha(j) = -diff;
      }
      if (diff > 0.0) {
        if (alpha(i) > c) alpha(i) = c, alpha(j) = c - diff;
      } else if (alpha(j) > c) {
        alpha(j) = c, alpha(i) = c + diff;
      }
    } else {
      double quad = k(i, i) + k(j, j) - 2.0 * qij;
      if (quad <= 0.0) quad = tau;
      const double d = (g(i) - g(j)) / quad, s = alpha(i) + alpha(j);
      alpha(i) -= d;
      alpha(j) += d;
      if (s > c) {
        if (alpha(i) > c) alpha(i) = c, alpha(j) = s - c;
      } else if (alpha(j) < 0.0) {
        alpha(j) = 0.0, alpha(i) = s;
      }
      if (s > c) {
        if (alpha(j) > c) alpha(j) = c, alpha(i) = s - c;
      } else if (alpha(i) < 0.0) {
        alpha(i) = 0.0, alpha(j) = s;
      }
    }
    const double dai = alpha(i) - ai, daj = alpha(j) - aj;
    // G_t += Q_ti dA_i + Q_tj dA_j
    g.array() += yd.array() * (k.col(i).array() * (yd(i) * dai) + k.col(j).array() * (yd(j) * daj));
  }

  double ub = inf, lb = -inf, sum_free = 0.0;
  int n_free = 0;
  for (int t = 0; t < n; ++t) {
    const double yg = yd(t) * g(t);
    if (alpha(t) >= c) {
      if (yd(t) < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha(t) <= 0.0) {
      if (yd(t) > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  KernelSvm m;
  m.gamma = gamma;
  m.iterations = it;
  m.rho = n_free > 0 ? sum_free / n_free : (ub + lb) / 2.0;
  std::vector<int> sv;
  for (int t = 0; t < n; ++t)
    if (alpha(t) > 0.0) sv.push_back(t);
  m.support = gather_rows(x, sv);
  m.coef.resize(sv.size());
  for (std::size_t s = 0; s < sv.size(); ++s) m.coef(s) = alpha(sv[s]) * yd(sv[s]);
  return m;
}

std::vector<double> default_c_grid() { return {0.1, 1.0, 10.0, 100.0}; }
std::vector<double> default_gamma_grid() { return {0.01, 0.1, 1.0, 0.0}; }

double f1_micro(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size() || truth.empty()) throw DimensionError("f1: size mismatch");
  long hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i];
  return static_cast<double>(hit) / truth.size();
}

double f1_positive(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size() || truth.empty()) throw DimensionError("f1: size mismatch");
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    tp += truth[i] == 1 && pred[i] == 1;
    fp += truth[i] != 1 && pred[i] == 1;
    fn += truth[i] == 1 && pred[i] != 1;
  }
  return tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
}

SvmParams grid_search_svm(const Tensor& x, const std::vector<int>& y, std::vector<double> c_grid,
                          std::vector<double> gamma_grid, int folds, std::uint64_t seed) {
  const int n = static_cast<int>(x.rows());
  if (folds < 2 || n < folds) throw ParameterError("grid search: not enough samples for the folds");
  const double var = (x.array() - x.mean()).square().mean();
  const double scale_gamma = var > 0.0 ? 1.0 / (x.cols() * var) : 1.0;
  for (double& g : gamma_grid)
    if (g == 0.0) g = scale_gamma;
  std::sort(c_grid.begin(), c_grid.end());
  std::sort(gamma_grid.begin(), gamma_grid.end());
  c_grid.erase(std::unique(c_grid.begin(), c_grid.end()), c_grid.end());
  gamma_grid.erase(std::unique(gamma_grid.begin(), gamma_grid.end()), gamma_grid.end());

  // stratified fold assignment
  std::mt19937_64 rng(seed);
  std::vector<int> fold(n);
  for (int cls : {1, -1}) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (y[i] == cls) idx.push_back(i);
    std::vector<int> p = permutation(static_cast<int>(idx.size()), rng);
    for (std::size_t r = 0; r < p.size(); ++r) fold[idx[p[r]]] = static_cast<int>(r % folds);
  }
  SvmParams best{c_grid.front(), gamma_grid.front(), -1.0};
  for (double c : c_grid)
    for (double g : gamma_grid) {
      double total = 0.0;
      int used = 0;
      for (int f = 0; f < folds; ++f) {
        std::vector<int> tr, te;
        for (int i = 0; i < n; ++i) (fold[i] == f ? te : tr).push_back(i);
        std::vector<int> ytr = gather(y, tr), yte = gather(y, te);
        bool both = std::count(ytr.begin(), ytr.end(), 1) > 0 && std::count(ytr.begin(), ytr.end(), -1) > 0;
        if (te.empty() || !both) continue;
        KernelSvm m = fit_kernel_svm(gather_rows(x, tr), ytr, c, g);
        total += f1_micro(yte, m.predict(gather_rows(x, te)));
        ++used;
      }
      double score = used ? total / used : 0.0;
      if (score > best.cv_score) best = {c, g, score};
    }
  return best;
}

// ---------------------------------------------------------------- MIA

namespace {

std::vector<int> sample_without_replacement(int n, int k, std::mt19937_64& rng) {
  std::vector<int> p = permutation(n, rng);
  p.resize(std::min(n, k));
  return p;
}

}  // namespace

MiaResult mia_attack(const Tensor& members, const Tensor& nonmembers, int ratio, std::uint64_t seed,
                     int iterations) {
  if (members.rows() < 10) throw DataError("mia: fewer than 10 forget samples");
  if (ratio < 1) throw ParameterError("mia: ratio must be at least 1");
  const int n_non = std::min(static_cast<int>(nonmembers.rows()), static_cast<int>(members.rows()) / ratio);
  if (n_non < 2) throw DataError("mia: not enough non-member samples");
  const int n_mem = ratio * n_non;
  MiaResult res;
  res.chance = static_cast<double>(n_mem) / (n_mem + n_non);
  std::mt19937_64 rng(seed);
  for (int it = 0; it < iterations; ++it) {
    std::vector<int> mi = sample_without_replacement(static_cast<int>(members.rows()), n_mem, rng);
    std::vector<int> ni = sample_without_replacement(static_cast<int>(nonmembers.rows()), n_non, rng);
    Tensor pool(n_mem + n_non, members.cols());
    pool.topRows(n_mem) = gather_rows(members, mi);
    pool.bottomRows(n_non) = gather_rows(nonmembers, ni);
    std::vector<int> label(n_mem + n_non, -1);
    std::fill(label.begin(), label.begin() + n_mem, 1);
    // stratified 80 / 20 split
    std::vector<int> tr, te;
    for (auto [from, count] : {std::pair{0, n_mem}, std::pair{n_mem, n_non}}) {
      std::vector<int> p = permutation(count, rng);
      const int ntr = static_cast<int>(std::lround(0.8 * count));
      for (int r = 0; r < count; ++r) (r < ntr ? tr : te).push_back(from + p[r]);
    }
    Tensor xtr = gather_rows(pool, tr), xte = gather_rows(pool, te);
    std::vector<int> ytr = gather(label, tr), yte = gather(label, te);
    SvmParams hp = grid_search_svm(xtr, ytr, default_c_grid(), default_gamma_grid(), 3, rng());
    KernelSvm m = fit_kernel_svm(xtr, ytr, hp.c, hp.gamma);
    res.scores.push_back(f1_micro(yte, m.predict(xte)));
  }
  double s = 0.0, s2 = 0.0;
  for (double v : res.scores) s += v;
  res.mean = s / res.scores.size();
  for (double v : res.scores) s2 += (v - res.mean) * (v - res.mean);
  res.std = std::sqrt(s2 / res.scores.size());
  return res;
}

MiaResult mia_hr(const Model& model, const Dataset& forget, const Dataset& test, std::uint64_t seed,
                 int iterations) {
  if (forget.size() < 10) throw DataError("mia: fewer than 10 forget samples");
  if (test.size() < forget.size()) throw ParameterError("mia_hr: test set smaller than forget set");
  MiaResult r = mia_attack(softmax(logits_of(model, forget.samples())), softmax(logits_of(model, test.samples())), 1,
                           seed, iterations);
  r.chance = 0.5;
  return r;
}

MiaResult mia_cr(const Model& model, const Dataset& forget, const Dataset& forget_test, std::uint64_t seed,
                 int iterations) {
  if (forget.size() < 10) throw DataError("mia: fewer than 10 forget samples");
  MiaResult r = mia_attack(softmax(logits_of(model, forget.samples())),
                           softmax(logits_of(model, forget_test.samples())), 3, seed, iterations);
  r.chance = 0.75;
  return r;
}

// ---------------------------------------------------------------- reports

std::vector<std::pair<std::string, double>> numeric_fields(const MetricsReport& r) {
  return {{"a_or", r.a_or},         {"a_t", r.a_t},         {"a_f", r.a_f},
          {"aus", r.aus},           {"mia_mean", r.mia_mean}, {"mia_std", r.mia_std},
          {"epochs", double(r.epochs)}, {"seconds", r.seconds}};
}

std::map<std::string, MeanStd> aggregate(const std::vector<MetricsReport>& runs) {
  if (runs.empty()) throw ParameterError("aggregate: no runs");
  std::map<std::string, MeanStd> out;
  std::map<std::string, std::vector<double>> cols;
  for (const MetricsReport& r : runs)
    for (auto& [k, v] : numeric_fields(r)) cols[k].push_back(v);
  for (auto& [k, v] : cols) {
    double m = 0.0, s = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) s += (x - m) * (x - m);
    out[k] = {m, std::sqrt(s / v.size())};
  }
  return out;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j{{"scenario", r.scenario}, {"method", r.method}, {"run_id", r.run_id}};
  for (auto& [k, v] : numeric_fields(r)) j[k] = v;
  j["epochs"] = r.epochs;
  return j;
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.scenario = j.at("scenario").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.run_id = j.at("run_id").get<long>();
  r.a_or = j.at("a_or").get<double>();
  r.a_t = j.at("a_t").get<double>();
  r.a_f = j.at("a_f").get<double>();
  r.aus = j.at("aus").get<double>();
  r.mia_mean = j.value("mia_mean", 0.0);
  r.mia_std = j.value("mia_std", 0.0);
  r.epochs = j.value("epochs", 0);
  r.seconds = j.value("seconds", 0.0);
  return r;
}

}  // namespace scar
