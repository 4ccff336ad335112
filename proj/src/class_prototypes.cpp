#include "scar/class_prototypes.hpp"

#include <limits>

namespace scar {

ClassPrototype make_prototype(int class_id, const Tensor& features, const ShrinkageParams& p) {
  if (features.rows() < 2) throw DataError("prototype: class " + std::to_string(class_id) + " has fewer than 2 samples");
  if (p.gamma0 < 0.0 || p.gamma1 < 0.0) throw ParameterError("prototype: shrinkage weights must be non-negative");
  ClassPrototype q;
  q.class_id = class_id;
  q.sample_count = static_cast<int>(features.rows());
  q.mean = features.colwise().mean().transpose();
  q.cov = normalize_correlation(shrink_covariance(sample_covariance(features), p));
  q.inv = spd_inverse(q.cov);
  return q;
}

std::vector<ClassPrototype> fit_prototypes(const Model& model, const Tensor& x, const std::vector<int>& y,
                                           double delta, const ShrinkageParams& p) {
  const int k = model.num_classes();
  Tensor f = tukey_transform(features_of(model, x), delta);
  std::vector<std::vector<int>> rows(k);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= k) throw ParameterError("prototype: label out of range");
    rows[y[i]].push_back(static_cast<int>(i));
  }
  std::vector<ClassPrototype> out;
  for (int c = 0; c < k; ++c) out.push_back(make_prototype(c, gather_rows(f, rows[c]), p));
  return out;
}

double mahalanobis(const Vector& v, const ClassPrototype& q) {
  if (v.size() != q.mean.size()) throw DimensionError("mahalanobis: dimension mismatch");
  Vector r = v - q.mean;
  return std::sqrt(std::max(0.0, r.dot(q.inv * r)));
}

const ClassPrototype& nearest_wrong_distribution(const Vector& v, int true_class,
                                                 const std::vector<ClassPrototype>& protos) {
  const ClassPrototype* best = nullptr;
  double bd = std::numeric_limits<double>::infinity();
  for (const ClassPrototype& q : protos) {
    if (q.class_id == true_class) continue;
    double d = mahalanobis(v, q);
    if (!best || d < bd || (d == bd && q.class_id < best->class_id)) best = &q, bd = d;
  }
  if (!best) throw ParameterError("nearest_wrong_distribution: no candidate class");
  return *best;
}

void save_prototypes(const std::string& path, const std::vector<ClassPrototype>& protos, double delta) {
  nlohmann::json meta{{"kind", "prototypes"}, {"delta", delta}, {"classes", nlohmann::json::array()}};
  std::vector<Tensor> t;
  for (const ClassPrototype& q : protos) {
    meta["classes"].push_back({{"id", q.class_id}, {"count", q.sample_count}});
    t.push_back(q.mean.transpose());
    t.push_back(q.cov);
  }
  save_container(path, meta, t);
}

std::vector<ClassPrototype> load_prototypes(const std::string& path) {
  auto [meta, t] = load_container(path);
  if (meta.value("kind", "") != "prototypes") throw FormatError(path + ": not a prototype store", 0);
  const auto& cls = meta.at("classes");
  if (t.size() != 2 * cls.size()) throw FormatError(path + ": tensor count mismatch", 0);
  std::vector<ClassPrototype> out;
  for (std::size_t i = 0; i < cls.size(); ++i) {
    ClassPrototype q;
    q.class_id = cls[i].at("id").get<int>();
    q.sample_count = cls[i].at("count").get<int>();
    q.mean = t[2 * i].row(0).transpose();
    q.cov = t[2 * i + 1];
    q.inv = spd_inverse(q.cov);
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace scar
