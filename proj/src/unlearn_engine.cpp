#include "scar/unlearn_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace scar {

void UnlearnConfig::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ParameterError("unlearn: loss weights must be non-negative");
  if (!(temperature > 0.0)) throw ParameterError("unlearn: temperature must be positive");
  if (epsilon < 0.0 || epsilon > 1.0) throw ParameterError("unlearn: epsilon must lie in [0, 1]");
  if (max_epochs < 1) throw ParameterError("unlearn: max_epochs must be at least 1");
  if (forget_batch < 1 || surrogate_batch < 1) throw ParameterError("unlearn: batch sizes must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw ParameterError("unlearn: delta must lie in (0, 1]");
  if (lr < 0.0) throw ParameterError("unlearn: lr must be non-negative");
}

void UnlearnHistory::set_stop(StopReason r) {
  if (stop) throw StateError("history: stop reason already set");
  stop = r;
}

std::string to_string(StopReason r) { return r == StopReason::Threshold ? "threshold" : "max-epochs"; }

double accuracy_on(const Model& model, const Tensor& x, const std::vector<int>& y) {
  if (y.empty()) throw ParameterError("accuracy: empty dataset");
  std::vector<int> p = predict(model, x);
  long hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += p[i] == y[i];
  return static_cast<double>(hit) / y.size();
}

// ---------------------------------------------------------------- losses

Var forget_loss(Tape& tape, Model& student, const Tensor& x, const std::vector<int>& y,
                const std::vector<ClassPrototype>& protos, double delta) {
  if (x.rows() == 0) throw ParameterError("forget_loss: empty batch");
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw DimensionError("forget_loss: label count mismatch");
  Var z = tukey(feature_extract(tape, student, x), delta);
  const Tensor& zv = z.value();
  Tensor means(zv.rows(), zv.cols());
  std::vector<const Tensor*> inv(zv.rows());
  for (Eigen::Index j = 0; j < zv.rows(); ++j) {
    const ClassPrototype& q = nearest_wrong_distribution(zv.row(j).transpose(), y[j], protos);
    means.row(j) = q.mean.transpose();
    inv[j] = &q.inv;
  }
  return mahalanobis_rows(z, means, inv);
}

double forget_loss(const Model& student, const Tensor& x, const std::vector<int>& y,
                   const std::vector<ClassPrototype>& protos, double delta) {
  Model m = student;
  Tape t;
  return forget_loss(t, m, x, y, protos, delta).scalar();
}

Var distillation_loss(Tape& tape, Model& student, const Tensor& x, const Tensor& teacher_logits,
                      double temperature) {
  return js_divergence(forward(tape, student, x), teacher_logits, temperature);
}

double distillation_loss(const Model& student, const Model& teacher, const Tensor& x, double temperature) {
  Model m = student;
  Tape t;
  return distillation_loss(t, m, x, logits_of(teacher, x), temperature).scalar();
}

// ---------------------------------------------------------------- SCAR

namespace {

using Clock = std::chrono::steady_clock;

std::vector<int> window(const std::vector<int>& perm, int batch, int b) {
  const int n = static_cast<int>(perm.size());
  const int m = std::min(batch, n);
  std::vector<int> idx(m);
  for (int i = 0; i < m; ++i) idx[i] = perm[(static_cast<long>(b) * batch + i) % n];
  return idx;
}

bool finish_epoch(UnlearnHistory& h, EpochRecord rec, const UnlearnConfig& cfg) {
  const double acc = rec.forget_acc;
  h.epochs.push_back(rec);
  if (acc <= cfg.epsilon) {
    h.set_stop(StopReason::Threshold);
    return true;
  }
  if (rec.epoch >= cfg.max_epochs) {
    h.set_stop(StopReason::MaxEpochs);
    return true;
  }
  return false;
}

}  // namespace

UnlearnResult scar_unlearn(const Model& original, const Tensor& forget_x, const std::vector<int>& forget_y,
                           const Tensor& surrogate, const std::vector<ClassPrototype>& protos,
                           const UnlearnConfig& cfg, const Monitor& monitor) {
  cfg.validate();
  if (surrogate.rows() == 0) throw ParameterError("scar: empty surrogate dataset");
  if (forget_x.rows() == 0) throw ParameterError("scar: empty forget set");
  if (!monitor.forget) throw ParameterError("scar: forget monitor required");
  UnlearnResult res{original, {}};
  Model& student = res.model;
  const Tensor teacher_logits = logits_of(original, surrogate);
  OptimState opt = make_optimizer(student, cfg.lr, cfg.weight_decay);
  std::mt19937_64 rng(cfg.seed);
  const int nf = static_cast<int>(forget_x.rows()), ns = static_cast<int>(surrogate.rows());
  const int nb = std::max((nf + cfg.forget_batch - 1) / cfg.forget_batch, (ns + cfg.surrogate_batch - 1) / cfg.surrogate_batch);
  for (int e = 1;; ++e) {
    auto t0 = Clock::now();
    std::vector<int> pf = permutation(nf, rng), ps = permutation(ns, rng);
    EpochRecord rec;
    rec.epoch = e;
    for (int b = 0; b < nb; ++b) {
      Tape t;
      zero_grad(student);
      std::vector<Var> terms;
      if (cfg.lambda1 > 0.0) {
        std::vector<int> i = window(pf, cfg.forget_batch, b);
        Var lm = forget_loss(t, student, gather_rows(forget_x, i), gather(forget_y, i), protos, cfg.delta);
        rec.forget_loss += lm.scalar() / nb;
        terms.push_back(scale(lm, cfg.lambda1));
      }
      if (cfg.lambda2 > 0.0) {
        std::vector<int> j = window(ps, cfg.surrogate_batch, b);
        Var ltd = distillation_loss(t, student, gather_rows(surrogate, j), gather_rows(teacher_logits, j),
                                    cfg.temperature);
        rec.distill_loss += ltd.scalar() / nb;
        terms.push_back(scale(ltd, cfg.lambda2));
      }
      if (terms.empty()) continue;
      Var loss = terms.size() == 2 ? add(terms[0], terms[1]) : terms[0];
      backward(t, loss);
      optimizer_step(student, opt);
    }
    rec.forget_acc = monitor.forget(student);
    if (monitor.retain) rec.retain_acc = monitor.retain(student);
    rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (finish_epoch(res.history, rec, cfg)) break;
  }
  student.grads.clear();
  return res;
}

SelfForgetPartition self_forget_partition(const Model& original, const Tensor& surrogate,
                                          const std::vector<int>& forget_classes) {
  if (forget_classes.empty()) throw ParameterError("self-forget: no forget classes");
  const int k = original.num_classes();
  for (int c : forget_classes)
    if (c < 0 || c >= k) throw ParameterError("self-forget: class out of range");
  std::vector<int> uniq = forget_classes;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (static_cast<int>(uniq.size()) >= k) throw ParameterError("self-forget: forget classes must be a strict subset");
  std::vector<int> pred = predict(original, surrogate);
  std::vector<int> fi, ri;
  SelfForgetPartition p;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (std::binary_search(uniq.begin(), uniq.end(), pred[i])) {
      fi.push_back(static_cast<int>(i));
      p.forget_labels.push_back(pred[i]);
    } else {
      ri.push_back(static_cast<int>(i));
    }
  }
  p.forget = gather_rows(surrogate, fi);
  p.retain = gather_rows(surrogate, ri);
  return p;
}

UnlearnResult scar_self_forget(const Model& original, const Tensor& surrogate,
                               const std::vector<int>& forget_classes,
                               const std::vector<ClassPrototype>& protos, const UnlearnConfig& cfg,
                               const std::function<double(const Model&)>& retain_monitor) {
  if (cfg.scenario != Scenario::CR) throw ParameterError("self-forget: unsupported scenario (CR only)");
  SelfForgetPartition p = self_forget_partition(original, surrogate, forget_classes);
  if (p.forget.rows() == 0)
    throw DataError("self-forget infeasible: no surrogate sample is predicted into the forget classes");
  Monitor m;
  m.forget = [&p](const Model& s) { return accuracy_on(s, p.forget, p.forget_labels); };
  m.retain = retain_monitor;
  return scar_unlearn(original, p.forget, p.forget_labels, p.retain, protos, cfg, m);
}

std::vector<double> distillation_trick_train(const Model& teacher, const Tensor& surrogate,
                                             const Tensor& test_x, const std::vector<int>& test_y, int epochs,
                                             const UnlearnConfig& cfg, Model* trained) {
  if (surrogate.rows() == 0) throw ParameterError("distillation: empty surrogate dataset");
  Model student = teacher;
  const Tensor teacher_logits = logits_of(teacher, surrogate);
  OptimState opt = make_optimizer(student, cfg.lr, cfg.weight_decay);
  std::mt19937_64 rng(cfg.seed);
  const int ns = static_cast<int>(surrogate.rows());
  std::vector<double> curve{accuracy_on(student, test_x, test_y)};
  for (int e = 0; e < epochs; ++e) {
    std::vector<int> ps = permutation(ns, rng);
    for (int b = 0; b * cfg.surrogate_batch < ns; ++b) {
      std::vector<int> j = window(ps, cfg.surrogate_batch, b);
      Tape t;
      zero_grad(student);
      Var l = distillation_loss(t, student, gather_rows(surrogate, j), gather_rows(teacher_logits, j), cfg.temperature);
      backward(t, l);
      optimizer_step(student, opt);
    }
    curve.push_back(accuracy_on(student, test_x, test_y));
  }
  student.grads.clear();
  if (trained) *trained = std::move(student);
  return curve;
}

// ---------------------------------------------------------------- baselines

Model baseline_retrain(const Dataset& retain, const ModelSpec& spec, const TrainConfig& cfg) {
  if (retain.empty()) throw ParameterError("retrain: empty retain set");
  Model m = make_model(spec, cfg.seed);
  fit_cross_entropy(m, retain.samples(), retain.labels(), cfg);
  m.grads.clear();
  return m;
}

Model baseline_finetune(const Model& original, const Dataset& retain, const TrainConfig& cfg) {
  if (retain.empty()) throw ParameterError("finetune: empty retain set");
  Model m = original;
  fit_cross_entropy(m, retain.samples(), retain.labels(), cfg);
  m.grads.clear();
  return m;
}

std::vector<int> random_labels(const std::vector<int>& y, int num_classes, std::mt19937_64& rng) {
  if (num_classes < 2) throw ParameterError("random_labels: need at least 2 classes");
  std::vector<int> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    int r = static_cast<int>(rng() % static_cast<std::uint64_t>(num_classes - 1));
    out[i] = r >= y[i] ? r + 1 : r;
  }
  return out;
}

namespace {

// sign = -1 ascends cross-entropy on the given labels
UnlearnResult forget_set_descent(const Model& original, const Dataset& forget, const UnlearnConfig& cfg,
                                 const Monitor& monitor, double sign, bool relabel) {
  cfg.validate();
  if (forget.empty()) throw ParameterError("baseline: empty forget set");
  if (!monitor.forget) throw ParameterError("baseline: forget monitor required");
  UnlearnResult res{original, {}};
  Model& m = res.model;
  const Tensor& x = forget.samples();
  const std::vector<int>& y0 = forget.labels();
  OptimState opt = make_optimizer(m, cfg.lr, cfg.weight_decay);
  std::mt19937_64 rng(cfg.seed);
  const int n = forget.size();
  for (int e = 1;; ++e) {
    auto t0 = Clock::now();
    std::vector<int> y = relabel ? random_labels(y0, m.num_classes(), rng) : y0;
    std::vector<int> perm = permutation(n, rng);
    EpochRecord rec;
    rec.epoch = e;
    int batches = 0;
    for (int b = 0; b * cfg.forget_batch < n; ++b, ++batches) {
      std::vector<int> idx(perm.begin() + b * cfg.forget_batch, perm.begin() + std::min(n, (b + 1) * cfg.forget_batch));
      Tape t;
      zero_grad(m);
      Var ce = cross_entropy(forward(t, m, gather_rows(x, idx)), gather(y, idx));
      rec.forget_loss += ce.scalar();
      backward(t, scale(ce, sign));
      optimizer_step(m, opt);
    }
    rec.forget_loss /= batches;
    rec.forget_acc = monitor.forget(m);
    if (monitor.retain) rec.retain_acc = monitor.retain(m);
    rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (finish_epoch(res.history, rec, cfg)) break;
  }
  m.grads.clear();
  return res;
}

}  // namespace

UnlearnResult baseline_negative_gradient(const Model& original, const Dataset& forget, const UnlearnConfig& cfg,
                                         const Monitor& monitor) {
  return forget_set_descent(original, forget, cfg, monitor, -1.0, false);
}

UnlearnResult baseline_random_labels(const Model& original, const Dataset& forget, const UnlearnConfig& cfg,
                                     const Monitor& monitor) {
  return forget_set_descent(original, forget, cfg, monitor, 1.0, true);
}

}  // namespace scar
