#include "scar/data_scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace scar {

std::string to_string(Scenario s) { return s == Scenario::CR ? "CR" : "HR"; }

Scenario scenario_from_string(const std::string& s) {
  if (s == "CR" || s == "cr") return Scenario::CR;
  if (s == "HR" || s == "hr") return Scenario::HR;
  throw ParameterError("unknown scenario '" + s + "'");
}

Dataset::Dataset(std::string name, Tensor samples, std::vector<int> labels, int num_classes,
                 std::optional<ImageShape> image)
    : name_(std::move(name)),
      samples_(std::move(samples)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      image_(image) {
  if (samples_.rows() != static_cast<Eigen::Index>(labels_.size()))
    throw DimensionError("dataset: sample and label counts differ");
  for (int y : labels_)
    if (y < 0 || y >= num_classes_) throw ParameterError("dataset: label out of range");
  if (image_ && image_->size() != samples_.cols()) throw DimensionError("dataset: image shape mismatch");
}

const Tensor& Dataset::samples() const {
  touch();
  return samples_;
}

const std::vector<int>& Dataset::labels() const {
  touch();
  return labels_;
}

Tensor Dataset::rows(const std::vector<int>& idx) const {
  touch();
  return gather_rows(samples_, idx);
}

Dataset Dataset::subset(const std::vector<int>& idx, const std::string& name) const {
  touch();
  return Dataset(name, gather_rows(samples_, idx), gather(labels_, idx), num_classes_, image_);
}

// ---------------------------------------------------------------- splits

namespace {

std::pair<std::vector<int>, std::vector<int>> by_class(const std::vector<int>& y, int c) {
  std::vector<int> in, out;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] == c ? in : out).push_back(static_cast<int>(i));
  return {in, out};
}

}  // namespace

ScenarioSplit split_cr(const Dataset& train, const Dataset& test, int c) {
  if (c < 0 || c >= train.num_classes()) throw ParameterError("split_cr: class out of range");
  auto [f, r] = by_class(train.labels(), c);
  if (f.empty()) throw ParameterError("split_cr: class " + std::to_string(c) + " absent from training set");
  auto [ft, rt] = by_class(test.labels(), c);
  ScenarioSplit s;
  s.scenario = Scenario::CR;
  s.forget_class = c;
  s.seed = static_cast<std::uint64_t>(c);
  s.forget = train.subset(f, train.name() + "/forget");
  s.retain = train.subset(r, train.name() + "/retain");
  s.forget_test = test.subset(ft, test.name() + "/forget");
  s.retain_test = test.subset(rt, test.name() + "/retain");
  s.test = test;
  return s;
}

ScenarioSplit split_hr(const Dataset& train, const Dataset& test, std::uint64_t seed) {
  if (train.size() < 10) throw ParameterError("split_hr: need at least 10 samples");
  const int nf = static_cast<int>(std::lround(0.10 * train.size()));
  std::mt19937_64 rng(seed);
  std::vector<int> p = permutation(train.size(), rng);
  std::vector<int> f(p.begin(), p.begin() + nf), r(p.begin() + nf, p.end());
  std::sort(f.begin(), f.end());
  std::sort(r.begin(), r.end());
  ScenarioSplit s;
  s.scenario = Scenario::HR;
  s.seed = seed;
  s.forget = train.subset(f, train.name() + "/forget");
  s.retain = train.subset(r, train.name() + "/retain");
  s.test = test;
  return s;
}

// ---------------------------------------------------------------- generators

Dataset gen_blobs(int classes, int per_class, int dim, double spread, std::uint64_t seed, double mean_scale,
                  std::uint64_t stream) {
  if (classes < 2) throw ParameterError("gen_blobs: need at least 2 classes");
  std::mt19937_64 mrng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor means(classes, dim);
  for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = mean_scale * n01(mrng);
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + stream + 1);
  Tensor x(classes * per_class, dim);
  std::vector<int> y(classes * per_class);
  for (int k = 0; k < classes; ++k)
    for (int i = 0; i < per_class; ++i) {
      int r = k * per_class + i;
      y[r] = k;
      for (int d = 0; d < dim; ++d) x(r, d) = means(k, d) + spread * n01(rng);
    }
  return Dataset("blobs", std::move(x), std::move(y), classes);
}

Dataset gen_shapes(int classes, int per_class, int size, std::uint64_t seed, std::uint64_t stream) {
  if (classes < 2 || classes > 8) throw ParameterError("gen_shapes: classes must lie in [2, 8]");
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + stream + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  const double s = size;
  Tensor x(classes * per_class, size * size);
  std::vector<int> y(classes * per_class);
  for (int k = 0; k < classes; ++k)
    for (int i = 0; i < per_class; ++i) {
      int row = k * per_class + i;
      y[row] = k;
      double cx = s / 2 + (u(rng) - 0.5) * s / 3, cy = s / 2 + (u(rng) - 0.5) * s / 3;
      double r = s / 5 + u(rng) * s / 8, t = 0.8 + 0.7 * u(rng);
      for (int py = 0; py < size; ++py)
        for (int px = 0; px < size; ++px) {
          double dx = px + 0.5 - cx, dy = py + 0.5 - cy, dist = std::hypot(dx, dy);
          bool on = false;
          switch (k) {
            case 0: on = std::abs(dy) <= t && std::abs(dx) <= r; break;
            case 1: on = std::abs(dx) <= t && std::abs(dy) <= r; break;
            case 2: on = (std::abs(dy) <= t && std::abs(dx) <= r) || (std::abs(dx) <= t && std::abs(dy) <= r); break;
            case 3: on = dist <= r; break;
            case 4: on = std::abs(dist - r) <= 0.75 * t; break;
            case 5: on = std::max(std::abs(dx), std::abs(dy)) <= r && std::max(std::abs(dx), std::abs(dy)) >= r - t; break;
            case 6: on = std::abs(dx - dy) <= t && std::abs(dx) <= r; break;
            default: on = std::abs(dx + dy) <= t && std::abs(dx) <= r; break;
          }
          x(row, py * size + px) = std::clamp((on ? 1.0 : 0.0) + noise(rng), 0.0, 1.0);
        }
    }
  return Dataset("shapes", std::move(x), std::move(y), classes, ImageShape{size, size, 1});
}

std::string SurrogateDataset::tag() const {
  switch (kind) {
    case SurrogateKind::Structured: return "structured-synthetic";
    case SurrogateKind::Noise: return "gaussian-noise";
    default: return "file-ingested";
  }
}

SurrogateDataset gen_surrogate(const SurrogateSpec& spec, int input_dim, const std::optional<ImageShape>& image) {
  if (spec.n < 1) throw ParameterError("gen_surrogate: n must be at least 1");
  if (spec.kind == SurrogateKind::File) throw ParameterError("gen_surrogate: file surrogates are loaded, not generated");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  SurrogateDataset out;
  out.kind = spec.kind;
  out.samples.resize(spec.n, input_dim);
  if (spec.kind == SurrogateKind::Noise) {
    for (Eigen::Index i = 0; i < out.samples.size(); ++i)
      out.samples.data()[i] = spec.noise_mean + spec.noise_std * n01(rng);
    return out;
  }
  if (image) {
    // plaids of two oriented gratings
    const ImageShape& s = *image;
    for (int i = 0; i < spec.n; ++i) {
      double th[2], f[2], ph[2];
      for (int g = 0; g < 2; ++g) th[g] = u(rng) * std::numbers::pi, f[g] = 1.0 + 4.0 * u(rng), ph[g] = u(rng) * two_pi;
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
          double v = 1.0;
          for (int g = 0; g < 2; ++g)
            v *= 0.5 + 0.5 * std::sin(two_pi * f[g] * (x * std::cos(th[g]) + y * std::sin(th[g])) / s.width + ph[g]);
          for (int c = 0; c < s.channels; ++c) out.samples(i, (y * s.width + x) * s.channels + c) = v;
        }
    }
    return out;
  }
  // sums of three sinusoids along the coordinate axis, scaled to a fixed norm
  for (int i = 0; i < spec.n; ++i) {
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(input_dim);
    for (int c = 0; c < 3; ++c) {
      double a = n01(rng), f = 1.0 + 15.0 * u(rng), ph = u(rng) * two_pi;
      for (int d = 0; d < input_dim; ++d) v(d) += a * std::sin(two_pi * f * d / input_dim + ph);
    }
    double nv = v.norm();
    out.samples.row(i) = nv > 0.0 ? Eigen::RowVectorXd(v * (spec.radius / nv)) : v;
  }
  return out;
}

// ---------------------------------------------------------------- CIFAR-10 binary

namespace {
constexpr int kRecord = 3073;
constexpr int kPixels = 3072;
}  // namespace

Dataset load_cifar_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.empty()) throw FormatError(path + ": empty file", 0);
  const long long n = static_cast<long long>(buf.size()) / kRecord;
  if (static_cast<long long>(buf.size()) % kRecord != 0)
    throw FormatError(path + ": incomplete record", n * kRecord);
  Tensor x(n, kPixels);
  std::vector<int> y(n);
  for (long long r = 0; r < n; ++r) {
    const unsigned char* rec = buf.data() + r * kRecord;
    if (rec[0] >= 10) throw FormatError(path + ": label " + std::to_string(rec[0]) + " out of range", r * kRecord);
    y[r] = rec[0];
    // planes R, G, B of 32x32 -> interleaved HWC
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 1024; ++p) x(r, p * 3 + c) = rec[1 + c * 1024 + p] / 255.0;
  }
  return Dataset("cifar10", std::move(x), std::move(y), 10, ImageShape{32, 32, 3});
}

void write_cifar_binary(const std::string& path, const Tensor& pixels, const std::vector<int>& labels) {
  if (pixels.cols() != kPixels || pixels.rows() != static_cast<Eigen::Index>(labels.size()))
    throw DimensionError("write_cifar_binary: expected N x 3072 pixels");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  std::vector<unsigned char> rec(kRecord);
  for (Eigen::Index r = 0; r < pixels.rows(); ++r) {
    rec[0] = static_cast<unsigned char>(labels[r]);
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 1024; ++p)
        rec[1 + c * 1024 + p] =
            static_cast<unsigned char>(std::lround(std::clamp(pixels(r, p * 3 + c), 0.0, 1.0) * 255.0));
    f.write(reinterpret_cast<const char*>(rec.data()), kRecord);
  }
}

// ---------------------------------------------------------------- KS test

namespace {

double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  const double a2 = -2.0 * lambda * lambda;
  double fac = 2.0, sum = 0.0, prev = 0.0;
  for (int j = 1; j <= 100; ++j) {
    double term = fac * std::exp(a2 * j * j);
    sum += term;
    if (std::abs(term) <= 1e-3 * prev || std::abs(term) <= 1e-8 * sum) return std::clamp(sum, 0.0, 1.0);
    fac = -fac;
    prev = std::abs(term);
  }
  return 1.0;
}

}  // namespace

KsResult ks_test(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ParameterError("ks_test: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = a.size(), nb = b.size();
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  const double en = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_q((en + 0.12 + 0.11 / en) * d)};
}

std::vector<double> sample_pixels(const Tensor& x, int n, std::uint64_t seed) {
  const Eigen::Index total = x.size();
  std::vector<double> out;
  if (n >= total) {
    out.assign(x.data(), x.data() + total);
    return out;
  }
  std::mt19937_64 rng(seed);
  // partial Fisher-Yates over flat indices
  std::vector<Eigen::Index> idx(total);
  for (Eigen::Index i = 0; i < total; ++i) idx[i] = i;
  for (int k = 0; k < n; ++k) {
    Eigen::Index j = k + static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(total - k));
    std::swap(idx[k], idx[j]);
    out.push_back(x.data()[idx[k]]);
  }
  return out;
}

nlohmann::json manifest(const Dataset& d) {
  std::vector<int> counts(d.num_classes(), 0);
  for (int y : d.labels()) ++counts[y];
  nlohmann::json j{{"name", d.name()}, {"size", d.size()}, {"classes", d.num_classes()},
                   {"input_dim", d.input_dim()}, {"class_counts", counts}};
  if (d.image()) j["image"] = {d.image()->height, d.image()->width, d.image()->channels};
  return j;
}

}  // namespace scar
