#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scar/class_prototypes.hpp"
#include "scar/data_scenarios.hpp"
#include "scar/eval_metrics.hpp"
#include "scar/tensor_nn.hpp"
#include "scar/unlearn_engine.hpp"

namespace scar {

inline constexpr const char* kWorkersEnv = "SCAR_WORKERS";

struct DatasetSpec {
  std::string kind = "blobs";  // blobs | shapes | cifar
  int classes = 8;
  int per_class = 250;
  int test_per_class = 100;
  int dim = 512;
  double spread = 0.5;
  double mean_scale = 0.09;
  int image_size = 16;
  std::uint64_t seed = 7;
  std::string train_path;
  std::string test_path;
};

struct SurrogateConfig {
  std::string kind = "structured";  // structured | noise | cifar
  int n = 5000;
  std::uint64_t seed = 123;
  double radius = 2.0;
  bool noise_match_data = true;  // noise mean/std taken from the training pixels
  double noise_mean = 0.0;
  double noise_std = 1.0;
  std::string path;
};

struct ExperimentConfig {
  Scenario scenario = Scenario::CR;
  DatasetSpec dataset;
  ModelSpec model;
  TrainConfig train;
  SurrogateConfig surrogate;
  std::vector<std::string> methods{"scar"};
  UnlearnConfig unlearn;
  UnlearnConfig self_forget;
  TrainConfig baseline;  // retrain / finetune
  std::vector<long> runs;  // classes (CR) or seeds (HR); empty = protocol default
  std::string out_dir = "out";
  std::vector<int> sweep_sizes;
  int distill_epochs = 20;
  int mia_iterations = 10;
  std::uint64_t seed = 42;
};

const std::vector<std::string>& known_methods();

ExperimentConfig default_config(Scenario s);
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& c);
std::string config_hash(const ExperimentConfig& c);

std::vector<long> run_list(const ExperimentConfig& c);

struct PreparedData {
  Dataset train;
  Dataset test;
  SurrogateDataset surrogate;
};

PreparedData prepare_data(const ExperimentConfig& c);
ModelSpec model_spec_for(const ExperimentConfig& c, const Dataset& train);

struct RunOutcome {
  Model model;
  UnlearnHistory history;
  std::vector<double> curve;  // distill-trick-check only
  double seconds = 0.0;
};

// one isolated run of a method on the split selected by run_id
RunOutcome run_method(const std::string& method, const ExperimentConfig& c, const PreparedData& data,
                      const Model& original, const std::vector<ClassPrototype>& protos, long run_id,
                      const Tensor& surrogate);

ScenarioSplit make_split(const ExperimentConfig& c, const PreparedData& data, long run_id);

// as run_method on a prepared split; the method only reads the parts of the split it is entitled to
RunOutcome run_on_split(const std::string& method, const ExperimentConfig& c, const ScenarioSplit& split,
                        const Model& original, const std::vector<ClassPrototype>& protos, const Tensor& surrogate);

MetricsReport evaluate_run(const ExperimentConfig& c, const ScenarioSplit& split, const Model& original,
                           const Model& unlearned, const std::string& method, long run_id, int epochs,
                           double seconds, bool with_mia = true);

int worker_count();
// runs jobs 0..n-1 on at most worker_count() threads; rethrows the first failure
void parallel_for(int n, const std::function<void(int)>& job);

// artifact layout
std::string original_path(const ExperimentConfig& c);
std::string prototypes_path(const ExperimentConfig& c);
std::string run_dir(const ExperimentConfig& c, const std::string& method, int sweep_size, long run_id);
std::string eval_dir(const ExperimentConfig& c, const std::string& method, int sweep_size);

void cmd_train(const ExperimentConfig& c);
void cmd_unlearn(const ExperimentConfig& c);
void cmd_eval(const ExperimentConfig& c);
void cmd_report(const ExperimentConfig& c);

}  // namespace scar
