#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "scar/errors.hpp"

namespace scar {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// rows are samples; images are flattened height x width x channels
using Tensor = MatrixX<double>;
using Vector = VectorX<double>;

// ---------------------------------------------------------------- tape

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const Tensor& value() const;
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Var constant(Tensor value);
  // leaf whose gradient is accumulated into *sink by backward(); null sink = constant
  Var parameter(const Tensor& value, Tensor* sink);
  Var push(Tensor value, std::vector<int> parents, Backward fn);

  void backward(Var loss);
  void clear();
  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  const Tensor& grad(int id) const { return nodes_[id].grad; }
  // gradient accumulator of a parent, zero-initialised on first use
  Tensor& grad_of(int id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Tensor* sink = nullptr;
    std::vector<int> parents;
    Backward back;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------- ops

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var add_row(Var x, Var row);  // broadcast a 1 x n row over x
Var scale(Var a, double s);
Var sum(Var a);
Var relu(Var x);
Var tukey(Var x, double delta);

struct ImageShape {
  int height = 0;
  int width = 0;
  int channels = 0;
  int size() const { return height * width * channels; }
};

// 3x3, stride 1, zero padding 1; weights (9*Cin) x Cout
Var conv3x3(Var x, Var weights, Var bias, ImageShape in);
// 2x2 max pool, stride 2 (odd trailing row/col dropped)
Var maxpool2(Var x, ImageShape in);

Var cross_entropy(Var logits, const std::vector<int>& labels);
// mean over rows of 0.5 KL(p||q) + 0.5 KL(q||p), p = softmax(student), q = softmax(teacher / T)
Var js_divergence(Var student_logits, const Tensor& teacher_logits, double temperature);
// mean over rows of sqrt((z_j - mu_j)^T A_j (z_j - mu_j)); A_j symmetric
Var mahalanobis_rows(Var z, const Tensor& means, const std::vector<const Tensor*>& inverses);

Tensor softmax(const Tensor& logits, double temperature = 1.0);
Tensor log_softmax(const Tensor& logits, double temperature = 1.0);
double js_divergence(const Vector& p, const Vector& q);

// ---------------------------------------------------------------- model

struct ModelSpec {
  int input_dim = 0;
  int num_classes = 0;
  std::vector<int> hidden{64, 64};
  bool relu_features = true;  // ReLU after the last backbone layer
  std::optional<ImageShape> image;
  int conv_channels = 8;
};

struct Model {
  ModelSpec spec;
  std::vector<Tensor> params;
  std::vector<Tensor> grads;  // empty until a forward pass binds them

  int feature_dim() const;
  int num_classes() const { return spec.num_classes; }
  std::size_t parameter_count() const;
};

Model make_model(const ModelSpec& spec, std::uint64_t seed);

Var feature_extract(Tape& tape, Model& model, const Tensor& batch);
Var head(Tape& tape, Model& model, Var features);
Var forward(Tape& tape, Model& model, const Tensor& batch);

// inference only, nothing recorded for backward
Tensor features_of(const Model& model, const Tensor& batch);
Tensor logits_of(const Model& model, const Tensor& batch);
std::vector<int> predict(const Model& model, const Tensor& batch);

void zero_grad(Model& model);
void backward(Tape& tape, Var loss);  // fills model grads, clears the tape

// ---------------------------------------------------------------- optimizer

struct OptimState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

OptimState make_optimizer(const Model& model, double lr, double weight_decay = 5e-4);
void optimizer_step(Model& model, OptimState& state);

// ---------------------------------------------------------------- training

struct TrainConfig {
  int epochs = 30;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  int batch = 64;
  std::uint64_t seed = 42;
};

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);
std::vector<int> gather(const std::vector<int>& v, const std::vector<int>& idx);
std::vector<int> permutation(int n, std::mt19937_64& rng);

// cross-entropy minibatch training in place; returns mean loss of last epoch
double fit_cross_entropy(Model& model, const Tensor& x, const std::vector<int>& y,
                         const TrainConfig& cfg);

// ---------------------------------------------------------------- checkpoints

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

void save_container(const std::string& path, const nlohmann::json& meta,
                    const std::vector<Tensor>& tensors);
std::pair<nlohmann::json, std::vector<Tensor>> load_container(const std::string& path);

void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

}  // namespace scar
