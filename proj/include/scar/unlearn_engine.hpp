#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "scar/class_prototypes.hpp"
#include "scar/data_scenarios.hpp"
#include "scar/tensor_nn.hpp"

namespace scar {

struct UnlearnConfig {
  double lambda1 = 1.0;
  double lambda2 = 5.0;
  double lr = 5e-4;
  double weight_decay = 5e-4;
  int forget_batch = 1024;
  int surrogate_batch = 1024;
  double temperature = 1.0;
  double delta = 0.5;
  ShrinkageParams shrink;
  double epsilon = 0.0;
  int max_epochs = 30;
  std::uint64_t seed = 42;
  Scenario scenario = Scenario::CR;

  void validate() const;
};

enum class StopReason { Threshold, MaxEpochs };

struct EpochRecord {
  int epoch = 0;
  double forget_loss = 0.0;
  double distill_loss = 0.0;
  double forget_acc = 0.0;
  double retain_acc = -1.0;  // -1 when not monitored
  double seconds = 0.0;
};

struct UnlearnHistory {
  std::vector<EpochRecord> epochs;
  std::optional<StopReason> stop;

  void set_stop(StopReason r);
  int epochs_run() const { return static_cast<int>(epochs.size()); }
};

std::string to_string(StopReason r);

struct Monitor {
  std::function<double(const Model&)> forget;  // compared with epsilon
  std::function<double(const Model&)> retain;  // optional, recorded only
};

struct UnlearnResult {
  Model model;
  UnlearnHistory history;
};

// L_M on a recorded tape; nearest wrong prototype chosen from detached features
Var forget_loss(Tape& tape, Model& student, const Tensor& x, const std::vector<int>& y,
                const std::vector<ClassPrototype>& protos, double delta);
double forget_loss(const Model& student, const Tensor& x, const std::vector<int>& y,
                   const std::vector<ClassPrototype>& protos, double delta);

// L_TD against precomputed teacher logits
Var distillation_loss(Tape& tape, Model& student, const Tensor& x, const Tensor& teacher_logits,
                      double temperature);
double distillation_loss(const Model& student, const Model& teacher, const Tensor& x, double temperature);

UnlearnResult scar_unlearn(const Model& original, const Tensor& forget_x, const std::vector<int>& forget_y,
                           const Tensor& surrogate, const std::vector<ClassPrototype>& protos,
                           const UnlearnConfig& cfg, const Monitor& monitor);

struct SelfForgetPartition {
  Tensor retain;
  Tensor forget;
  std::vector<int> forget_labels;  // teacher predictions
};

SelfForgetPartition self_forget_partition(const Model& original, const Tensor& surrogate,
                                          const std::vector<int>& forget_classes);

// stops on the student's accuracy over D^sur_f against the teacher's labels
UnlearnResult scar_self_forget(const Model& original, const Tensor& surrogate,
                               const std::vector<int>& forget_classes,
                               const std::vector<ClassPrototype>& protos, const UnlearnConfig& cfg,
                               const std::function<double(const Model&)>& retain_monitor = {});

// entry 0 is the teacher's accuracy, then one entry per epoch
std::vector<double> distillation_trick_train(const Model& teacher, const Tensor& surrogate,
                                             const Tensor& test_x, const std::vector<int>& test_y, int epochs,
                                             const UnlearnConfig& cfg, Model* trained = nullptr);

Model baseline_retrain(const Dataset& retain, const ModelSpec& spec, const TrainConfig& cfg);
Model baseline_finetune(const Model& original, const Dataset& retain, const TrainConfig& cfg);
UnlearnResult baseline_negative_gradient(const Model& original, const Dataset& forget, const UnlearnConfig& cfg,
                                         const Monitor& monitor);
UnlearnResult baseline_random_labels(const Model& original, const Dataset& forget, const UnlearnConfig& cfg,
                                     const Monitor& monitor);

// uniform over the classes other than each true label
std::vector<int> random_labels(const std::vector<int>& y, int num_classes, std::mt19937_64& rng);

double accuracy_on(const Model& model, const Tensor& x, const std::vector<int>& y);

}  // namespace scar
