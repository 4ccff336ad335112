#include "scar/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace scar {

namespace fs = std::filesystem;
using json = nlohmann::json;

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"scar",   "scar-self-forget", "retrain",           "finetune",
                                          "neg-grad", "random-labels",  "distill-trick-check"};
  return m;
}

// ---------------------------------------------------------------- config

ExperimentConfig default_config(Scenario s) {
  ExperimentConfig c;
  c.scenario = s;
  c.model.relu_features = false;
  c.unlearn.scenario = s;
  if (s == Scenario::HR) {
    c.unlearn.lambda2 = 8.0;
    c.unlearn.temperature = 5.0;
    c.unlearn.delta = 1.0;
  }
  c.self_forget = c.unlearn;
  c.self_forget.lambda2 = 5.0;
  c.self_forget.lr = 7.5e-4;
  c.self_forget.temperature = 2.0;
  c.self_forget.delta = c.unlearn.delta;
  c.self_forget.max_epochs = 25;
  c.baseline.lr = 1e-3;
  return c;
}

namespace {

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in section '" + section + "'");
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_unlearn(const json& j, const std::string& name, UnlearnConfig& u) {
  check_keys(j, name,
             {"lambda1", "lambda2", "lr", "weight_decay", "forget_batch", "surrogate_batch", "temperature", "delta",
              "gamma0", "gamma1", "epsilon", "max_epochs"});
  take(j, "lambda1", u.lambda1);
  take(j, "lambda2", u.lambda2);
  take(j, "lr", u.lr);
  take(j, "weight_decay", u.weight_decay);
  take(j, "forget_batch", u.forget_batch);
  take(j, "surrogate_batch", u.surrogate_batch);
  take(j, "temperature", u.temperature);
  take(j, "delta", u.delta);
  take(j, "gamma0", u.shrink.gamma0);
  take(j, "gamma1", u.shrink.gamma1);
  take(j, "epsilon", u.epsilon);
  take(j, "max_epochs", u.max_epochs);
}

void parse_train(const json& j, const std::string& name, TrainConfig& t) {
  check_keys(j, name, {"epochs", "lr", "weight_decay", "batch"});
  take(j, "epochs", t.epochs);
  take(j, "lr", t.lr);
  take(j, "weight_decay", t.weight_decay);
  take(j, "batch", t.batch);
}

json unlearn_json(const UnlearnConfig& u) {
  return {{"lambda1", u.lambda1},         {"lambda2", u.lambda2},
          {"lr", u.lr},                   {"weight_decay", u.weight_decay},
          {"forget_batch", u.forget_batch}, {"surrogate_batch", u.surrogate_batch},
          {"temperature", u.temperature}, {"delta", u.delta},
          {"gamma0", u.shrink.gamma0},    {"gamma1", u.shrink.gamma1},
          {"epsilon", u.epsilon},         {"max_epochs", u.max_epochs}};
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs}, {"lr", t.lr}, {"weight_decay", t.weight_decay}, {"batch", t.batch}};
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  try {
    check_keys(j, "root",
               {"scenario", "seed", "out", "methods", "method", "runs", "dataset", "model", "train", "surrogate",
                "unlearn", "self_forget", "baseline", "sweep_surrogate_sizes", "distill_epochs", "mia_iterations"});
    ExperimentConfig c = default_config(scenario_from_string(j.value("scenario", std::string("CR"))));
    take(j, "seed", c.seed);
    take(j, "out", c.out_dir);
    if (j.contains("method")) c.methods = {j.at("method").get<std::string>()};
    take(j, "methods", c.methods);
    take(j, "runs", c.runs);
    take(j, "sweep_surrogate_sizes", c.sweep_sizes);
    take(j, "distill_epochs", c.distill_epochs);
    take(j, "mia_iterations", c.mia_iterations);
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      check_keys(d, "dataset",
                 {"kind", "classes", "per_class", "test_per_class", "dim", "spread", "mean_scale", "image_size", "seed",
                  "train_path", "test_path"});
      DatasetSpec& s = c.dataset;
      take(d, "kind", s.kind);
      take(d, "classes", s.classes);
      take(d, "per_class", s.per_class);
      take(d, "test_per_class", s.test_per_class);
      take(d, "dim", s.dim);
      take(d, "spread", s.spread);
      take(d, "mean_scale", s.mean_scale);
      take(d, "image_size", s.image_size);
      take(d, "seed", s.seed);
      take(d, "train_path", s.train_path);
      take(d, "test_path", s.test_path);
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      check_keys(m, "model", {"hidden", "relu_features", "conv_channels"});
      take(m, "hidden", c.model.hidden);
      take(m, "relu_features", c.model.relu_features);
      take(m, "conv_channels", c.model.conv_channels);
    }
    if (j.contains("train")) parse_train(j["train"], "train", c.train);
    if (j.contains("baseline")) parse_train(j["baseline"], "baseline", c.baseline);
    if (j.contains("surrogate")) {
      const json& s = j["surrogate"];
      check_keys(s, "surrogate", {"kind", "n", "seed", "radius", "noise_match_data", "noise_mean", "noise_std", "path"});
      take(s, "kind", c.surrogate.kind);
      take(s, "n", c.surrogate.n);
      take(s, "seed", c.surrogate.seed);
      take(s, "radius", c.surrogate.radius);
      take(s, "noise_match_data", c.surrogate.noise_match_data);
      take(s, "noise_mean", c.surrogate.noise_mean);
      take(s, "noise_std", c.surrogate.noise_std);
      take(s, "path", c.surrogate.path);
    }
    if (j.contains("unlearn")) parse_unlearn(j["unlearn"], "unlearn", c.unlearn);
    if (j.contains("self_forget")) parse_unlearn(j["self_forget"], "self_forget", c.self_forget);
    c.unlearn.scenario = c.self_forget.scenario = c.scenario;

    // validation
    for (const std::string& m : c.methods)
      if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
        throw ConfigError("unknown method '" + m + "'");
    if (c.methods.empty()) throw ConfigError("no method configured");
    if (c.scenario == Scenario::HR &&
        std::find(c.methods.begin(), c.methods.end(), "scar-self-forget") != c.methods.end())
      throw ConfigError("scar-self-forget is only defined for the CR scenario");
    const std::string& k = c.dataset.kind;
    if (k != "blobs" && k != "shapes" && k != "cifar") throw ConfigError("unknown dataset kind '" + k + "'");
    if (k == "cifar" && (c.dataset.train_path.empty() || c.dataset.test_path.empty()))
      throw ConfigError("cifar dataset needs train_path and test_path");
    if (k == "cifar")
      for (const std::string& p : {c.dataset.train_path, c.dataset.test_path})
        if (!fs::exists(p)) throw ConfigError("dataset path does not exist: " + p);
    const std::string& sk = c.surrogate.kind;
    if (sk != "structured" && sk != "noise" && sk != "cifar") throw ConfigError("unknown surrogate kind '" + sk + "'");
    if (sk == "cifar" && !fs::exists(c.surrogate.path))
      throw ConfigError("surrogate path does not exist: " + c.surrogate.path);
    if (c.surrogate.n < 1) throw ConfigError("surrogate.n must be positive");
    for (int s : c.sweep_sizes)
      if (s < 1 || s > c.surrogate.n) throw ConfigError("sweep size " + std::to_string(s) + " outside [1, surrogate.n]");
    if (c.dataset.classes < 2) throw ConfigError("dataset.classes must be at least 2");
    if (c.mia_iterations < 1) throw ConfigError("mia_iterations must be positive");
    try {
      c.unlearn.validate();
      c.self_forget.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  const DatasetSpec& d = c.dataset;
  return {{"scenario", to_string(c.scenario)},
          {"seed", c.seed},
          {"out", c.out_dir},
          {"methods", c.methods},
          {"runs", c.runs},
          {"sweep_surrogate_sizes", c.sweep_sizes},
          {"distill_epochs", c.distill_epochs},
          {"mia_iterations", c.mia_iterations},
          {"dataset",
           {{"kind", d.kind},
            {"classes", d.classes},
            {"per_class", d.per_class},
            {"test_per_class", d.test_per_class},
            {"dim", d.dim},
            {"spread", d.spread},
            {"mean_scale", d.mean_scale},
            {"image_size", d.image_size},
            {"seed", d.seed},
            {"train_path", d.train_path},
            {"test_path", d.test_path}}},
          {"model", {{"hidden", c.model.hidden}, {"relu_features", c.model.relu_features}, {"conv_channels", c.model.conv_channels}}},
          {"train", train_json(c.train)},
          {"baseline", train_json(c.baseline)},
          {"surrogate",
           {{"kind", c.surrogate.kind},
            {"n", c.surrogate.n},
            {"seed", c.surrogate.seed},
            {"radius", c.surrogate.radius},
            {"noise_match_data", c.surrogate.noise_match_data},
            {"noise_mean", c.surrogate.noise_mean},
            {"noise_std", c.surrogate.noise_std},
            {"path", c.surrogate.path}}},
          {"unlearn", unlearn_json(c.unlearn)},
          {"self_forget", unlearn_json(c.self_forget)}};
}

std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("out");
  std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << h;
  return o.str();
}

std::vector<long> run_list(const ExperimentConfig& c) {
  if (!c.runs.empty()) return c.runs;
  std::vector<long> r;
  if (c.scenario == Scenario::HR) return {0, 1, 2, 3, 4, 5, 6, 7, 8, 42};
  if (c.dataset.classes >= 100)
    for (long q = 0; q < 100; q += 10) r.push_back(q);
  else
    for (long q = 0; q < c.dataset.classes; ++q) r.push_back(q);
  return r;
}

// ---------------------------------------------------------------- data

PreparedData prepare_data(const ExperimentConfig& c) {
  PreparedData p;
  const DatasetSpec& d = c.dataset;
  if (d.kind == "blobs") {
    p.train = gen_blobs(d.classes, d.per_class, d.dim, d.spread, d.seed, d.mean_scale, 1);
    p.test = gen_blobs(d.classes, d.test_per_class, d.dim, d.spread, d.seed, d.mean_scale, 2);
  } else if (d.kind == "shapes") {
    p.train = gen_shapes(d.classes, d.per_class, d.image_size, d.seed, 1);
    p.test = gen_shapes(d.classes, d.test_per_class, d.image_size, d.seed, 2);
  } else {
    p.train = load_cifar_binary(d.train_path);
    p.test = load_cifar_binary(d.test_path);
  }
  const SurrogateConfig& s = c.surrogate;
  if (s.kind == "cifar") {
    Dataset sur = load_cifar_binary(s.path);
    if (sur.input_dim() != p.train.input_dim()) throw ConfigError("surrogate width does not match the dataset");
    p.surrogate.kind = SurrogateKind::File;
    const int n = std::min(s.n, sur.size());
    p.surrogate.samples = sur.samples().topRows(n);
  } else {
    SurrogateSpec spec;
    spec.kind = s.kind == "noise" ? SurrogateKind::Noise : SurrogateKind::Structured;
    spec.n = s.n;
    spec.seed = s.seed;
    spec.radius = s.radius;
    spec.noise_mean = s.noise_mean;
    spec.noise_std = s.noise_std;
    if (spec.kind == SurrogateKind::Noise && s.noise_match_data) {
      const Tensor& x = p.train.samples();
      spec.noise_mean = x.mean();
      spec.noise_std = std::sqrt((x.array() - spec.noise_mean).square().mean());
    }
    p.surrogate = gen_surrogate(spec, p.train.input_dim(), p.train.image());
  }
  return p;
}

ModelSpec model_spec_for(const ExperimentConfig& c, const Dataset& train) {
  ModelSpec s = c.model;
  s.input_dim = train.input_dim();
  s.num_classes = train.num_classes();
  s.image = train.image();
  return s;
}

ScenarioSplit make_split(const ExperimentConfig& c, const PreparedData& data, long run_id) {
  if (c.scenario == Scenario::CR) return split_cr(data.train, data.test, static_cast<int>(run_id));
  return split_hr(data.train, data.test, static_cast<std::uint64_t>(run_id));
}

// ---------------------------------------------------------------- runs

RunOutcome run_on_split(const std::string& method, const ExperimentConfig& c, const ScenarioSplit& split,
                        const Model& original, const std::vector<ClassPrototype>& protos, const Tensor& surrogate) {
  auto t0 = std::chrono::steady_clock::now();
  RunOutcome out;
  const bool cr = c.scenario == Scenario::CR;
  UnlearnConfig u = c.unlearn;
  u.scenario = c.scenario;
  u.seed = c.seed;
  Monitor mon;
  if (cr) {
    mon.forget = [&split](const Model& m) { return accuracy(m, split.forget_test); };
    mon.retain = [&split](const Model& m) { return accuracy(m, split.retain_test); };
  } else {
    u.epsilon = accuracy(original, split.test);
    mon.forget = [&split](const Model& m) { return accuracy(m, split.forget); };
    mon.retain = [&split](const Model& m) { return accuracy(m, split.test); };
  }
  TrainConfig retrain = c.train, finetune = c.baseline;
  retrain.seed = finetune.seed = c.seed;

  if (method == "scar") {
    UnlearnResult r = scar_unlearn(original, split.forget.samples(), split.forget.labels(), surrogate, protos, u, mon);
    out.model = std::move(r.model);
    out.history = std::move(r.history);
  } else if (method == "scar-self-forget") {
    if (!cr) throw ParameterError("self-forget: unsupported scenario (CR only)");
    UnlearnConfig sf = c.self_forget;
    sf.scenario = c.scenario;
    sf.seed = c.seed;
    UnlearnResult r = scar_self_forget(original, surrogate, {split.forget_class}, protos, sf, mon.retain);
    out.model = std::move(r.model);
    out.history = std::move(r.history);
  } else if (method == "retrain") {
    out.model = baseline_retrain(split.retain, original.spec, retrain);
  } else if (method == "finetune") {
    out.model = baseline_finetune(original, split.retain, finetune);
  } else if (method == "neg-grad") {
    UnlearnResult r = baseline_negative_gradient(original, split.forget, u, mon);
    out.model = std::move(r.model);
    out.history = std::move(r.history);
  } else if (method == "random-labels") {
    UnlearnResult r = baseline_random_labels(original, split.forget, u, mon);
    out.model = std::move(r.model);
    out.history = std::move(r.history);
  } else if (method == "distill-trick-check") {
    const Dataset& test = split.test;
    out.curve = distillation_trick_train(original, surrogate, test.samples(), test.labels(), c.distill_epochs, u,
                                         &out.model);
  } else {
    throw ConfigError("unknown method '" + method + "'");
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

RunOutcome run_method(const std::string& method, const ExperimentConfig& c, const PreparedData& data,
                      const Model& original, const std::vector<ClassPrototype>& protos, long run_id,
                      const Tensor& surrogate) {
  return run_on_split(method, c, make_split(c, data, run_id), original, protos, surrogate);
}

MetricsReport evaluate_run(const ExperimentConfig& c, const ScenarioSplit& split, const Model& original,
                           const Model& unlearned, const std::string& method, long run_id, int epochs,
                           double seconds, bool with_mia) {
  MetricsReport r;
  r.scenario = to_string(c.scenario);
  r.method = method;
  r.run_id = run_id;
  r.epochs = epochs;
  r.seconds = seconds;
  const std::uint64_t mseed = c.seed * 7919 + static_cast<std::uint64_t>(run_id);
  if (c.scenario == Scenario::CR) {
    r.a_or = accuracy(original, split.retain_test);
    r.a_t = accuracy(unlearned, split.retain_test);
    r.a_f = accuracy(unlearned, split.forget_test);
    if (with_mia) {
      MiaResult m = mia_cr(unlearned, split.forget, split.forget_test, mseed, c.mia_iterations);
      r.mia_mean = m.mean;
      r.mia_std = m.std;
    }
  } else {
    r.a_or = accuracy(original, split.test);
    r.a_t = accuracy(unlearned, split.test);
    r.a_f = accuracy(unlearned, split.forget);
    if (with_mia) {
      MiaResult m = mia_hr(unlearned, split.forget, split.test, mseed, c.mia_iterations);
      r.mia_mean = m.mean;
      r.mia_std = m.std;
    }
  }
  r.aus = aus(r.a_or, r.a_t, r.a_f, c.scenario);
  return r;
}

int worker_count() {
  const char* v = std::getenv(kWorkersEnv);
  if (!v || !*v) return 1;
  try {
    int n = std::stoi(v);
    return std::max(1, n);
  } catch (const std::exception&) {
    throw ConfigError(std::string(kWorkersEnv) + " must be a positive integer");
  }
}

void parallel_for(int n, const std::function<void(int)>& job) {
  const int w = std::min(worker_count(), std::max(n, 1));
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto loop = [&] {
    for (int i; (i = next.fetch_add(1)) < n;) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
        next = n;
      }
    }
  };
  if (w <= 1) {
    loop();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t) pool.emplace_back(loop);
    for (std::thread& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------- artifacts

std::string original_path(const ExperimentConfig& c) { return (fs::path(c.out_dir) / "original.ckpt").string(); }
std::string prototypes_path(const ExperimentConfig& c) { return (fs::path(c.out_dir) / "prototypes.ckpt").string(); }

namespace {

std::string method_tag(const std::string& method, int sweep) {
  return sweep > 0 ? method + "/sur" + std::to_string(sweep) : method;
}

std::vector<int> sweep_list(const ExperimentConfig& c) {
  return c.sweep_sizes.empty() ? std::vector<int>{0} : c.sweep_sizes;
}

void write_json(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p);
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw MissingArtifact("missing artifact " + p.string());
  return json::parse(f);
}

json history_json(const RunOutcome& o) {
  json e = json::array();
  for (const EpochRecord& r : o.history.epochs)
    e.push_back({{"epoch", r.epoch},
                 {"forget_loss", r.forget_loss},
                 {"distill_loss", r.distill_loss},
                 {"forget_acc", r.forget_acc},
                 {"retain_acc", r.retain_acc},
                 {"seconds", r.seconds}});
  return {{"epochs", e},
          {"stop", o.history.stop ? to_string(*o.history.stop) : "none"},
          {"curve", o.curve},
          {"seconds", o.seconds}};
}

struct Loaded {
  Model original;
  std::vector<ClassPrototype> protos;
};

Loaded load_trained(const ExperimentConfig& c) {
  for (const std::string& p : {original_path(c), prototypes_path(c)})
    if (!fs::exists(p)) throw MissingArtifact("missing artifact " + p + " (run 'train' first)");
  return {load_model(original_path(c)), load_prototypes(prototypes_path(c))};
}

std::string fmt(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

std::string fmt_pm(const MeanStd& m) {
  char b[96];
  std::snprintf(b, sizeof b, "%.6f±%.6f", m.mean, m.std);
  return b;
}

}  // namespace

std::string run_dir(const ExperimentConfig& c, const std::string& method, int sweep, long run_id) {
  return (fs::path(c.out_dir) / "runs" / method_tag(method, sweep) / ("run_" + std::to_string(run_id))).string();
}

std::string eval_dir(const ExperimentConfig& c, const std::string& method, int sweep) {
  return (fs::path(c.out_dir) / "eval" / method_tag(method, sweep)).string();
}

// ---------------------------------------------------------------- commands

void cmd_train(const ExperimentConfig& c) {
  PreparedData data = prepare_data(c);
  Model m = make_model(model_spec_for(c, data.train), c.seed);
  TrainConfig t = c.train;
  t.seed = c.seed;
  fit_cross_entropy(m, data.train.samples(), data.train.labels(), t);
  m.grads.clear();
  const double delta = c.unlearn.delta;
  std::vector<ClassPrototype> protos = fit_prototypes(m, data.train.samples(), data.train.labels(), delta, c.unlearn.shrink);
  fs::create_directories(c.out_dir);
  save_model(original_path(c), m);
  save_prototypes(prototypes_path(c), protos, delta);
  const double acc = accuracy(m, data.test);
  write_json(fs::path(c.out_dir) / "manifest.json",
             {{"config_hash", config_hash(c)},
              {"config", to_json(c)},
              {"original_test_accuracy", acc},
              {"train_set", manifest(data.train)},
              {"test_set", manifest(data.test)},
              {"surrogate", {{"tag", data.surrogate.tag()}, {"size", data.surrogate.samples.rows()}}},
              {"artifacts", {original_path(c), prototypes_path(c)}}});
  std::cout << "original test accuracy " << acc << "\n";
}

void cmd_unlearn(const ExperimentConfig& c) {
  Loaded l = load_trained(c);
  PreparedData data = prepare_data(c);
  std::vector<long> runs = run_list(c);
  struct Job {
    std::string method;
    int sweep;
    long run;
  };
  std::vector<Job> jobs;
  for (const std::string& m : c.methods)
    for (int s : sweep_list(c))
      for (long r : runs) jobs.push_back({m, s, r});
  std::mutex io;
  parallel_for(static_cast<int>(jobs.size()), [&](int i) {
    const Job& j = jobs[i];
    fs::path dir = run_dir(c, j.method, j.sweep, j.run);
    if (fs::exists(dir / "history.json")) {
      std::lock_guard<std::mutex> lock(io);
      std::cout << "skip " << dir.string() << " (done)\n";
      return;
    }
    const Tensor sur = j.sweep > 0 ? Tensor(data.surrogate.samples.topRows(j.sweep)) : data.surrogate.samples;
    RunOutcome o = run_method(j.method, c, data, l.original, l.protos, j.run, sur);
    fs::create_directories(dir);
    save_model((dir / "model.ckpt").string(), o.model);
    write_json(dir / "history.json", history_json(o));
    std::lock_guard<std::mutex> lock(io);
    std::cout << j.method << " run " << j.run << (j.sweep ? " sur " + std::to_string(j.sweep) : "") << ": "
              << o.history.epochs_run() << " epochs, "
              << (o.history.stop ? to_string(*o.history.stop) : std::string("n/a")) << "\n";
  });
}

void cmd_eval(const ExperimentConfig& c) {
  Loaded l = load_trained(c);
  PreparedData data = prepare_data(c);
  std::vector<long> runs = run_list(c);
  // pooled pixel intensities, training data vs surrogate
  KsResult ks = ks_test(sample_pixels(data.train.samples(), 5000, c.seed), sample_pixels(data.surrogate.samples, 5000, c.seed + 1));
  for (const std::string& method : c.methods)
    for (int s : sweep_list(c)) {
      std::vector<MetricsReport> reps(runs.size());
      for (long r : runs) {
        fs::path dir = run_dir(c, method, s, r);
        if (!fs::exists(dir / "history.json") || !fs::exists(dir / "model.ckpt"))
          throw MissingArtifact("missing unlearn artifacts in " + dir.string() + " (run 'unlearn' first)");
      }
      parallel_for(static_cast<int>(runs.size()), [&](int i) {
        fs::path dir = run_dir(c, method, s, runs[i]);
        json h = read_json(dir / "history.json");
        Model u = load_model((dir / "model.ckpt").string());
        ScenarioSplit split = make_split(c, data, runs[i]);
        reps[i] = evaluate_run(c, split, l.original, u, method, runs[i], static_cast<int>(h.at("epochs").size()),
                               h.at("seconds").get<double>());
      });
      std::map<std::string, MeanStd> agg = aggregate(reps);
      fs::path out = eval_dir(c, method, s);
      fs::create_directories(out);
      std::ofstream csv(out / "runs.csv");
      csv << "method,scenario,run_id,a_or,a_t,a_f,aus,mia_mean,mia_std,epochs,seconds\n";
      for (const MetricsReport& r : reps) {
        csv << r.method << ',' << r.scenario << ',' << r.run_id;
        for (auto& [k, v] : numeric_fields(r)) csv << ',' << fmt(v);
        csv << '\n';
      }
      csv << method << ',' << to_string(c.scenario) << ",aggregate";
      for (auto& [k, v] : numeric_fields(reps.front())) csv << ',' << fmt_pm(agg.at(k));
      csv << '\n';
      json jr = json::array();
      for (const MetricsReport& r : reps) jr.push_back(to_json(r));
      json ja;
      for (auto& [k, v] : agg) ja[k] = {{"mean", v.mean}, {"std", v.std}};
      write_json(out / "report.json", {{"method", method},
                                       {"scenario", to_string(c.scenario)},
                                       {"surrogate_size", s > 0 ? s : static_cast<int>(data.surrogate.samples.rows())},
                                       {"surrogate_tag", data.surrogate.tag()},
                                       {"ks", {{"statistic", ks.statistic}, {"p_value", ks.p_value}}},
                                       {"runs", jr},
                                       {"aggregate", ja}});
      std::cout << method << (s ? " sur " + std::to_string(s) : "") << ": AUS " << fmt_pm(agg.at("aus"))
                << ", MIA " << fmt_pm(agg.at("mia_mean")) << "\n";
    }
}

void cmd_report(const ExperimentConfig& c) {
  std::vector<int> sweeps = sweep_list(c);
  std::map<std::string, std::vector<std::pair<int, json>>> by_method;
  for (const std::string& m : c.methods)
    for (int s : sweeps) {
      fs::path p = fs::path(eval_dir(c, m, s)) / "report.json";
      if (!fs::exists(p)) throw MissingArtifact("missing eval output " + p.string() + " (run 'eval' first)");
      by_method[m].push_back({s, read_json(p)});
    }
  fs::path out = fs::path(c.out_dir) / "report";
  fs::create_directories(out);
  std::ofstream md(out / "summary.md");
  md << "# Unlearning report (" << to_string(c.scenario) << ")\n\n";
  md << "| method | surrogate size | A_or | A_t | A_f | AUS | MIA F1 | epochs |\n";
  md << "|---|---|---|---|---|---|---|---|\n";
  auto pm = [](const json& a, const char* k) {
    char b[64];
    std::snprintf(b, sizeof b, "%.2f ± %.2f", 100.0 * a.at(k).at("mean").get<double>(),
                  100.0 * a.at(k).at("std").get<double>());
    return std::string(b);
  };
  for (const std::string& m : c.methods)
    for (auto& [s, j] : by_method[m]) {
      const json& a = j.at("aggregate");
      char aus_s[64];
      std::snprintf(aus_s, sizeof aus_s, "%.3f ± %.3f", a.at("aus").at("mean").get<double>(),
                    a.at("aus").at("std").get<double>());
      md << "| " << m << " | " << j.at("surrogate_size") << " | " << pm(a, "a_or") << " | " << pm(a, "a_t") << " | "
         << pm(a, "a_f") << " | " << aus_s << " | " << pm(a, "mia_mean") << " | "
         << a.at("epochs").at("mean").get<double>() << " |\n";
    }
  const json& any = by_method.begin()->second.front().second;
  md << "\nKS test, training pixels vs surrogate (" << any.at("surrogate_tag").get<std::string>()
     << "): statistic " << any.at("ks").at("statistic").get<double>() << ", p-value "
     << any.at("ks").at("p_value").get<double>() << "\n";
  if (c.sweep_sizes.empty()) return;

  // AUS against surrogate size, one polyline per method
  std::ofstream data(out / "aus_vs_surrogate.csv");
  data << "method,surrogate_size,aus\n";
  double lo = 1e9, hi = -1e9;
  for (auto& [m, pts] : by_method)
    for (auto& [s, j] : pts) {
      double v = j.at("aggregate").at("aus").at("mean").get<double>();
      data << m << ',' << s << ',' << fmt(v) << '\n';
      lo = std::min(lo, v), hi = std::max(hi, v);
    }
  if (hi - lo < 1e-9) lo -= 0.05, hi += 0.05;
  const int smin = *std::min_element(c.sweep_sizes.begin(), c.sweep_sizes.end());
  const int smax = *std::max_element(c.sweep_sizes.begin(), c.sweep_sizes.end());
  const double w = 640, h = 400, pad = 60;
  auto px = [&](int s) { return pad + (smax == smin ? 0.5 : double(s - smin) / (smax - smin)) * (w - 2 * pad); };
  auto py = [&](double v) { return h - pad - (v - lo) / (hi - lo) * (h - 2 * pad); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};
  std::ofstream svg(out / "aus_vs_surrogate.svg");
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad << "\" y2=\"" << h - pad
      << "\" stroke=\"black\"/>\n<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << h - pad
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"" << h - 15 << "\" text-anchor=\"middle\">surrogate samples</text>\n";
  svg << "<text x=\"15\" y=\"" << h / 2 << "\" transform=\"rotate(-90 15 " << h / 2
      << ")\" text-anchor=\"middle\">AUS</text>\n";
  for (int s : c.sweep_sizes)
    svg << "<text x=\"" << px(s) << "\" y=\"" << h - pad + 18 << "\" text-anchor=\"middle\" font-size=\"11\">" << s
        << "</text>\n";
  for (double v : {lo, (lo + hi) / 2, hi})
    svg << "<text x=\"" << pad - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
        << std::fixed << std::setprecision(3) << v << "</text>\n";
  int ci = 0;
  for (auto& [m, pts] : by_method) {
    const char* col = colors[ci++ % 7];
    svg << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (auto& [s, j] : pts) svg << px(s) << ',' << py(j.at("aggregate").at("aus").at("mean").get<double>()) << ' ';
    svg << "\"/>\n";
    for (auto& [s, j] : pts) {
      double v = j.at("aggregate").at("aus").at("mean").get<double>();
      svg << "<circle cx=\"" << px(s) << "\" cy=\"" << py(v) << "\" r=\"3\" fill=\"" << col << "\" data-size=\"" << s
          << "\" data-aus=\"" << fmt(v) << "\"/>\n";
    }
    svg << "<text x=\"" << w - pad + 4 << "\" y=\"" << pad + 14 * ci << "\" fill=\"" << col
        << "\" font-size=\"11\">" << m << "</text>\n";
  }
  svg << "</svg>\n";
}

}  // namespace scar
