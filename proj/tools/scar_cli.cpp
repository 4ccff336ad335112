#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "scar/experiment.hpp"

namespace {

std::vector<int> parse_sizes(const std::string& list) {
  std::vector<int> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw scar::ConfigError("bad surrogate size '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Machine unlearning with Mahalanobis forgetting and surrogate distillation"};
  app.require_subcommand(1);
  std::string config_path, out_dir, method, sweep;
  long long seed = -1;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)");
    sub->add_option("--seed", seed, "override the run seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--method", method, "unlearning method");
    sub->add_option("--sweep-surrogate-sizes", sweep, "comma-separated surrogate sizes");
  };
  CLI::App* train = app.add_subcommand("train", "train the original model and store class prototypes");
  CLI::App* unlearn = app.add_subcommand("unlearn", "run the configured method over the run list");
  CLI::App* eval = app.add_subcommand("eval", "score unlearned models (accuracy, AUS, MIA, KS)");
  CLI::App* report = app.add_subcommand("report", "render tables and charts from eval outputs");
  for (CLI::App* s : {train, unlearn, eval, report}) common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    scar::ExperimentConfig cfg =
        config_path.empty() ? scar::parse_config(nlohmann::json::object()) : scar::load_config(config_path);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!method.empty() || !sweep.empty()) {
      nlohmann::json j = scar::to_json(cfg);
      if (!method.empty()) {
        j["methods"] = std::vector<std::string>{};
        std::stringstream ss(method);
        std::string m;
        while (std::getline(ss, m, ',')) j["methods"].push_back(m);
      }
      if (!sweep.empty()) j["sweep_surrogate_sizes"] = parse_sizes(sweep);
      cfg = scar::parse_config(j);
    }
    if (*train) scar::cmd_train(cfg);
    if (*unlearn) scar::cmd_unlearn(cfg);
    if (*eval) scar::cmd_eval(cfg);
    if (*report) scar::cmd_report(cfg);
  } catch (const scar::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const scar::MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
