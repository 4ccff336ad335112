#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "scar/data_scenarios.hpp"
#include "scar/tensor_nn.hpp"

namespace scar {

double accuracy(const Model& model, const Dataset& data);

// (1 - (a_or - a_t)) / (1 + delta); delta = a_f (CR) or |a_t - a_f| (HR)
double aus(double a_or, double a_t, double a_f, Scenario scenario);

// ---------------------------------------------------------------- kernel SVM

struct KernelSvm {
  Tensor support;  // rows with non-zero alpha
  Vector coef;     // alpha_i * y_i
  double rho = 0.0;
  double gamma = 1.0;
  int iterations = 0;

  Vector decision(const Tensor& x) const;
  std::vector<int> predict(const Tensor& x) const;  // +1 / -1
};

Tensor rbf_kernel(const Tensor& a, const Tensor& b, double gamma);

// labels +1 / -1; SMO with second-order working-set selection
KernelSvm fit_kernel_svm(const Tensor& x, const std::vector<int>& y, double c, double gamma, double tol = 1e-3,
                         int max_iter = 100000);

struct SvmParams {
  double c = 1.0;
  double gamma = 1.0;
  double cv_score = 0.0;
};

// a gamma of 0 in the list stands for 1 / (features * variance of x)
std::vector<double> default_c_grid();
std::vector<double> default_gamma_grid();

SvmParams grid_search_svm(const Tensor& x, const std::vector<int>& y, std::vector<double> c_grid,
                          std::vector<double> gamma_grid, int folds, std::uint64_t seed);

// micro-averaged F1; equals accuracy for single-label binary predictions
double f1_micro(const std::vector<int>& truth, const std::vector<int>& pred);
// F1 of the +1 class
double f1_positive(const std::vector<int>& truth, const std::vector<int>& pred);

// ---------------------------------------------------------------- MIA

struct MiaResult {
  double mean = 0.0;
  double std = 0.0;
  double chance = 0.5;
  std::vector<double> scores;
};

// members sampled members_per_nonmember times as often as non-members
MiaResult mia_attack(const Tensor& member_vectors, const Tensor& nonmember_vectors, int members_per_nonmember,
                     std::uint64_t seed, int iterations = 10);

MiaResult mia_hr(const Model& model, const Dataset& forget, const Dataset& test, std::uint64_t seed,
                 int iterations = 10);
MiaResult mia_cr(const Model& model, const Dataset& forget, const Dataset& forget_test, std::uint64_t seed,
                 int iterations = 10);

// ---------------------------------------------------------------- reports

struct MetricsReport {
  std::string scenario;
  std::string method;
  long run_id = 0;
  double a_or = 0.0;  // original model on the retain test set (CR) or full test set (HR)
  double a_t = 0.0;
  double a_f = 0.0;
  double aus = 0.0;
  double mia_mean = 0.0;
  double mia_std = 0.0;
  int epochs = 0;
  double seconds = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

std::vector<std::pair<std::string, double>> numeric_fields(const MetricsReport& r);
std::map<std::string, MeanStd> aggregate(const std::vector<MetricsReport>& runs);

nlohmann::json to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const nlohmann::json& j);

}  // namespace scar
