#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scar/tensor_nn.hpp"

namespace scar {

enum class Scenario { CR, HR };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

// Every read of samples or labels is counted when an audit counter is attached.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, Tensor samples, std::vector<int> labels, int num_classes,
          std::optional<ImageShape> image = std::nullopt);

  const Tensor& samples() const;
  const std::vector<int>& labels() const;
  Tensor rows(const std::vector<int>& idx) const;

  int size() const { return static_cast<int>(labels_.size()); }
  bool empty() const { return labels_.empty(); }
  int num_classes() const { return num_classes_; }
  int input_dim() const { return static_cast<int>(samples_.cols()); }
  const std::string& name() const { return name_; }
  const std::optional<ImageShape>& image() const { return image_; }

  Dataset subset(const std::vector<int>& idx, const std::string& name) const;

  void attach_audit(std::shared_ptr<std::atomic<long>> counter) { audit_ = std::move(counter); }
  long audit_count() const { return audit_ ? audit_->load() : 0; }

 private:
  void touch() const {
    if (audit_) audit_->fetch_add(1);
  }
  std::string name_;
  Tensor samples_;
  std::vector<int> labels_;
  int num_classes_ = 0;
  std::optional<ImageShape> image_;
  std::shared_ptr<std::atomic<long>> audit_;
};

struct ScenarioSplit {
  Scenario scenario = Scenario::CR;
  Dataset retain;
  Dataset forget;
  Dataset retain_test;  // CR
  Dataset forget_test;  // CR
  Dataset test;         // full test set, both scenarios
  int forget_class = -1;
  std::uint64_t seed = 0;
};

ScenarioSplit split_cr(const Dataset& train, const Dataset& test, int forget_class);
ScenarioSplit split_hr(const Dataset& train, const Dataset& test, std::uint64_t seed);

// class means drawn from seed; samples from (seed, stream) so train/test share means
Dataset gen_blobs(int classes, int per_class, int dim, double spread, std::uint64_t seed,
                  double mean_scale = 1.0, std::uint64_t stream = 0);
// bars, crosses, disks, rings, squares, diagonals on a dark background
Dataset gen_shapes(int classes, int per_class, int size, std::uint64_t seed, std::uint64_t stream = 0);

enum class SurrogateKind { Structured, Noise, File };

struct SurrogateDataset {
  Tensor samples;
  SurrogateKind kind = SurrogateKind::Structured;
  std::string tag() const;
};

struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::Structured;
  int n = 5000;
  std::uint64_t seed = 123;
  double radius = 1.0;  // structured vectors: per-sample norm
  double noise_mean = 0.0;
  double noise_std = 1.0;
};

SurrogateDataset gen_surrogate(const SurrogateSpec& spec, int input_dim,
                               const std::optional<ImageShape>& image = std::nullopt);

Dataset load_cifar_binary(const std::string& path);
void write_cifar_binary(const std::string& path, const Tensor& pixels, const std::vector<int>& labels);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

KsResult ks_test(std::vector<double> a, std::vector<double> b);

// n values drawn without replacement from all pixels of x
std::vector<double> sample_pixels(const Tensor& x, int n, std::uint64_t seed);

nlohmann::json manifest(const Dataset& d);

}  // namespace scar
