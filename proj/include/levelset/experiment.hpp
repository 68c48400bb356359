#pragma once

// Experiment orchestration: dataset presets, the phase-1 → traversal pipeline,
// weight-decay sweeps, the circle demo, trajectory analysis and cost
// comparison. Every experiment writes into <output_dir>/<name>/ and finishes
// with a manifest.json written atomically.
//
// Layout:
//   <out>/<name>/manifest.json
//   <out>/<name>/run_<k>/trace.csv, theta_final.bin, theta_final.txt
//   <out>/<name>/run_<k>/trajectory.bin        (when trajectory_stride > 0)
//   <out>/<name>/run_<k>/path.csv              (toy)
//   <out>/<name>/sweep.csv                     (decay-sweep)

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "levelset/datasets.hpp"
#include "levelset/io.hpp"
#include "levelset/parallel.hpp"
#include "levelset/pca.hpp"
#include "levelset/toy.hpp"
#include "levelset/training.hpp"
#include "levelset/traversal.hpp"
#include "levelset/weight_decay.hpp"

namespace levelset::experiment {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum class DatasetKind { iris, autompg, mnist_ff, toy };
enum class Mode { traverse, decay_sweep, toy, analyze };

inline const std::map<std::string, DatasetKind>& dataset_names() {
  static const std::map<std::string, DatasetKind> m{
      {"iris", DatasetKind::iris}, {"autompg", DatasetKind::autompg}, {"mnist-ff", DatasetKind::mnist_ff}, {"toy", DatasetKind::toy}};
  return m;
}

inline std::string to_string(DatasetKind d) {
  for (const auto& [k, v] : dataset_names()) {
    if (v == d) return k;
  }
  return "unknown";
}

inline DatasetKind parse_dataset(const std::string& s) {
  const auto it = dataset_names().find(s);
  if (it == dataset_names().end()) throw ConfigError("unknown dataset '" + s + "' (expected iris, autompg, mnist-ff or toy)");
  return it->second;
}

inline std::string to_string(Mode m) {
  switch (m) {
  case Mode::traverse: return "traverse";
  case Mode::decay_sweep: return "decay-sweep";
  case Mode::toy: return "toy";
  case Mode::analyze: return "analyze";
  }
  return "unknown";
}

inline Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::traverse, Mode::decay_sweep, Mode::toy, Mode::analyze}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown mode '" + s + "'");
}

struct AnalysisConfig {
  std::string input_dir;
  int components = 6;
  int grid_resolution = 100;
  double grid_pad = 0.1;
  /// Use only the first N runs of the input experiment (0 = all).
  int max_runs = 0;
  /// Extra subsampling applied to the stored trajectory points.
  int point_stride = 1;
};

struct ExperimentConfig {
  DatasetKind dataset = DatasetKind::iris;
  Mode mode = Mode::traverse;
  int runs = 10;
  std::uint64_t seed_base = 0;
  std::uint64_t split_seed = 1;
  std::string output_dir = "out";
  std::string name; ///< defaults to "<dataset>-<mode>"
  std::string data_dir = "data";
  unsigned jobs = 1;
  NetworkSpec network;
  TrainConfig phase1;
  TraversalConfig traversal;
  DecayConfig decay;
  /// Store every k-th recorded traversal point in trajectory.bin (0 = off).
  int trajectory_stride = 0;
  std::size_t mnist_subsample = 1000;
  AnalysisConfig analysis;

  std::string experiment_name() const { return name.empty() ? to_string(dataset) + "-" + to_string(mode) : name; }
  fs::path experiment_dir() const { return fs::path(output_dir) / experiment_name(); }

  void validate() const {
    if (runs < 1) throw ConfigError("runs must be >= 1");
    if (trajectory_stride < 0) throw ConfigError("trajectory_stride must be >= 0");
    if (mode == Mode::toy && dataset != DatasetKind::toy) throw ConfigError("toy mode runs the toy dataset only");
    if (mode != Mode::toy && mode != Mode::analyze && dataset == DatasetKind::toy) {
      throw ConfigError("the toy dataset only supports the toy mode");
    }
    if (mode == Mode::analyze && analysis.input_dir.empty()) throw ConfigError("analyze needs an input experiment directory");
    if (dataset != DatasetKind::toy) network.validate();
    phase1.validate();
    traversal.validate();
    if (mode == Mode::decay_sweep) decay.validate();
  }
};

#ifndef LEVELSET_DEFAULT_DATA_DIR
#define LEVELSET_DEFAULT_DATA_DIR "data"
#endif

/// Data directory: $LEVELSET_DATA_DIR when set, else `fallback`.
inline std::string resolve_data_dir(const std::string& fallback) {
  if (const char* env = std::getenv("LEVELSET_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return fallback;
}

/// Default configuration for each dataset.
inline ExperimentConfig preset(DatasetKind dataset, Mode mode) {
  ExperimentConfig c;
  c.dataset = dataset;
  c.mode = mode;
  c.data_dir = resolve_data_dir(LEVELSET_DEFAULT_DATA_DIR);
  c.jobs = default_jobs();
  c.decay.train.epochs = 500;
  switch (dataset) {
  case DatasetKind::iris:
    c.network = {{4, 100, 100, 100, 3}, Head::softmax_classification};
    c.phase1.epochs = 500;
    c.traversal.max_predictor_steps = 20000;
    break;
  case DatasetKind::autompg:
    c.network = {{7, 100, 100, 100, 1}, Head::linear_regression};
    c.phase1.epochs = 500;
    c.traversal.max_predictor_steps = 30000;
    break;
  case DatasetKind::mnist_ff:
    c.network = {{784, 100, 100, 100, 10}, Head::softmax_classification};
    c.phase1.epochs = 100;
    c.decay.train.epochs = 200;
    c.traversal.max_predictor_steps = 10000;
    c.traversal.metrics_every = 10;
    break;
  case DatasetKind::toy:
    c.traversal = toy::default_config();
    c.runs = 20;
    break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// JSON snapshots

inline json to_json(const NetworkSpec& s) {
  return {{"layer_sizes", s.layer_sizes}, {"hidden_activation", "tanh"}, {"head", levelset::to_string(s.head)}};
}

inline json to_json(const TrainConfig& t) {
  return {{"batch_size", t.batch_size}, {"epochs", t.epochs}, {"lr", t.adam.lr},       {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},      {"eps", t.adam.eps},     {"weight_decay", t.weight_decay}};
}

inline json to_json(const TraversalConfig& t) {
  return {{"deviation_threshold", t.deviation_threshold},
          {"max_predictor_steps", t.max_predictor_steps},
          {"angle_change_threshold_deg", t.angle_change_threshold_deg},
          {"lr_decrease_factor", t.lr_decrease_factor},
          {"lr_increase_factor", t.lr_increase_factor},
          {"initial_lr_predictor", t.initial_lr_predictor},
          {"initial_lr_corrector", t.initial_lr_corrector},
          {"max_corrector_steps_per_predictor", t.max_corrector_steps_per_predictor},
          {"antiparallel_stop_deg", t.antiparallel_stop_deg},
          {"metrics_every", t.metrics_every},
          {"direction", t.direction == DirectionMode::minimize_regularizer ? "regularizer" : "random"},
          {"random_direction_seed", t.random_direction_seed}};
}

inline json to_json(const ExperimentConfig& c) {
  json j = {{"dataset", to_string(c.dataset)},
            {"mode", to_string(c.mode)},
            {"name", c.experiment_name()},
            {"runs", c.runs},
            {"seed_base", c.seed_base},
            {"split_seed", c.split_seed},
            {"output_dir", c.output_dir},
            {"data_dir", c.data_dir},
            {"jobs", c.jobs},
            {"trajectory_stride", c.trajectory_stride},
            {"mnist_subsample", c.mnist_subsample}};
  if (c.dataset != DatasetKind::toy) j["network"] = to_json(c.network);
  j["phase1"] = to_json(c.phase1);
  j["traversal"] = to_json(c.traversal);
  if (c.mode == Mode::decay_sweep) {
    j["decay"] = {{"lambda_grid", c.decay.lambda_grid}, {"runs_per_lambda", c.decay.runs_per_lambda}, {"train", to_json(c.decay.train)}};
  }
  if (c.mode == Mode::analyze) {
    j["analysis"] = {{"input_dir", c.analysis.input_dir},   {"components", c.analysis.components},
                     {"grid_resolution", c.analysis.grid_resolution}, {"grid_pad", c.analysis.grid_pad},
                     {"max_runs", c.analysis.max_runs},     {"point_stride", c.analysis.point_stride}};
  }
  return j;
}

/// Writes next to the target and renames, so readers never see a partial manifest.
inline void write_json_atomic(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, p);
}

inline json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return json::parse(in);
}

// ---------------------------------------------------------------------------
// Data

inline data::Split load_split(const ExperimentConfig& c, int run) {
  switch (c.dataset) {
  case DatasetKind::iris:
    return data::make_split(data::load_iris(c.data_dir + "/iris.data"), data::iris_split(c.split_seed), true);
  case DatasetKind::autompg:
    return data::make_split(data::load_autompg(c.data_dir + "/auto-mpg.data"), data::autompg_split(c.split_seed), true);
  case DatasetKind::mnist_ff:
    return data::load_mnist_subsample(c.data_dir + "/mnist", c.mnist_subsample, c.seed_base + static_cast<std::uint64_t>(run));
  case DatasetKind::toy: break;
  }
  throw ConfigError("dataset has no train/test split");
}

/// True when every run shares one split, so it can be loaded once.
inline bool split_is_shared(DatasetKind d) { return d == DatasetKind::iris || d == DatasetKind::autompg; }

inline fs::path run_dir(const ExperimentConfig& c, int run) { return c.experiment_dir() / ("run_" + std::to_string(run)); }

// ---------------------------------------------------------------------------
// Summaries

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

/// Population mean and standard deviation of the finite entries.
inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  for (double x : v) {
    if (std::isfinite(x)) {
      r.mean += x;
      ++r.count;
    }
  }
  if (r.count == 0) return {std::nan(""), std::nan(""), 0};
  r.mean /= static_cast<double>(r.count);
  for (double x : v) {
    if (std::isfinite(x)) r.stddev += (x - r.mean) * (x - r.mean);
  }
  r.stddev = std::sqrt(r.stddev / static_cast<double>(r.count));
  return r;
}

inline json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.stddev}, {"count", m.count}}; }

struct RunManifest {
  json document;
  int failed_runs = 0;
  int total_runs = 0;

  /// 0 on success; 1 only when every run failed.
  int exit_status() const { return total_runs > 0 && failed_runs == total_runs ? 1 : 0; }
};

// ---------------------------------------------------------------------------
// Traverse

struct TraverseRunOutput {
  json summary;
  bool failed = false;
};

inline TraverseRunOutput traverse_one(const ExperimentConfig& c, int run, const data::Split& split) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = c.seed_base + static_cast<std::uint64_t>(run);
  const fs::path dir = run_dir(c, run);
  fs::create_directories(dir);
  TraverseRunOutput out;
  json& s = out.summary;
  s["run"] = run;
  s["seed"] = seed;

  TrainConfig p1 = c.phase1;
  p1.seed = seed;
  GradEvalCounter counter;
  TrainResult start;
  try {
    start = train_phase1(c.network, split.train, p1, counter);
  } catch (const NumericalFailure& e) {
    s["stop_reason"] = to_string(StopReason::numerical_failure);
    s["error"] = std::string("phase 1: ") + e.what();
    s["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.failed = true;
    return out;
  }
  const std::uint64_t phase1_evals = counter.count;

  std::optional<io::VectorStreamWriter> trajectory;
  if (c.trajectory_stride > 0) trajectory.emplace(dir / "trajectory.bin");
  PointObserver observer;
  if (trajectory) {
    observer = [&](const TraceRecord& rec, const Vector& theta) {
      if (rec.predictor_index % static_cast<std::uint64_t>(c.trajectory_stride) == 0) trajectory->write(theta);
    };
  }

  TraversalConfig tc = c.traversal;
  tc.random_direction_seed = c.traversal.random_direction_seed + seed;
  NetworkProblem problem(c.network, split.train, &split.test, counter);
  const TraversalResult res = traverse(problem, start.theta, tc, observer);

  io::write_trace_csv(dir / "trace.csv", res.trace);
  io::write_theta(dir / "theta_final.bin", res.final_theta);
  io::write_theta_sidecar(dir / "theta_final.txt", c.network, seed);
  io::write_theta(dir / "theta_start.bin", start.theta);

  double max_dev = 0.0;
  for (const auto& r : res.trace) max_dev = std::max(max_dev, std::abs(r.train_loss - res.reference_loss));

  s["stop_reason"] = to_string(res.stop_reason);
  if (!res.failure_message.empty()) s["error"] = res.failure_message;
  s["phase1"] = {{"train_loss", start.final_train_loss},
                 {"test_loss", loss_value(c.network, start.theta, split.test)},
                 {"test_metric", test_metric(c.network, start.theta, split.test)},
                 {"sq_norm", start.theta.squaredNorm()},
                 {"grad_evals", phase1_evals}};
  s["final"] = {{"train_loss", loss_value(c.network, res.final_theta, split.train)},
                {"test_loss", loss_value(c.network, res.final_theta, split.test)},
                {"test_metric", test_metric(c.network, res.final_theta, split.test)},
                {"sq_norm", res.final_theta.squaredNorm()},
                {"angle_deg", res.trace.empty() ? std::nan("") : res.trace.back().angle_deg}};
  s["reference_loss"] = res.reference_loss;
  s["max_abs_loss_deviation"] = max_dev;
  s["trace_rows"] = res.trace.size();
  s["predictor_steps"] = res.predictor_steps;
  s["corrector_steps"] = res.corrector_steps;
  s["corrector_stalls"] = res.corrector_stalls;
  s["corrector_budget_hits"] = res.corrector_budget_hits;
  s["cum_grad_evals"] = problem.grad_evals();
  s["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.failed = res.stop_reason == StopReason::numerical_failure;
  return out;
}

inline RunManifest run_traverse(const ExperimentConfig& c) {
  std::optional<data::Split> shared;
  if (split_is_shared(c.dataset)) shared = load_split(c, 0);

  std::vector<TraverseRunOutput> outs(static_cast<std::size_t>(c.runs));
  parallel_for(outs.size(), c.jobs, [&](std::size_t i) {
    const int run = static_cast<int>(i);
    if (shared) {
      outs[i] = traverse_one(c, run, *shared);
    } else {
      const data::Split split = load_split(c, run);
      outs[i] = traverse_one(c, run, split);
    }
  });

  RunManifest m;
  m.total_runs = c.runs;
  json runs = json::array();
  std::vector<double> start_metric, final_metric, final_norm, final_test_loss;
  for (const auto& o : outs) {
    runs.push_back(o.summary);
    if (o.failed) {
      ++m.failed_runs;
      continue;
    }
    start_metric.push_back(o.summary["phase1"]["test_metric"].get<double>());
    final_metric.push_back(o.summary["final"]["test_metric"].get<double>());
    final_norm.push_back(o.summary["final"]["sq_norm"].get<double>());
    final_test_loss.push_back(o.summary["final"]["test_loss"].get<double>());
  }
  m.document["runs"] = runs;
  m.document["summary"] = {{"metric", c.network.head == Head::softmax_classification ? "accuracy" : "mse"},
                           {"phase1_test_metric", to_json(mean_std(start_metric))},
                           {"final_test_metric", to_json(mean_std(final_metric))},
                           {"final_test_loss", to_json(mean_std(final_test_loss))},
                           {"final_sq_norm", to_json(mean_std(final_norm))},
                           {"failed_runs", m.failed_runs}};
  return m;
}

// ---------------------------------------------------------------------------
// Weight-decay sweep

inline RunManifest run_decay_sweep(const ExperimentConfig& c) {
  DecayConfig dc = c.decay;
  dc.seed_base = c.seed_base;
  dc.jobs = c.jobs;
  if (!split_is_shared(c.dataset)) {
    throw ConfigError("decay-sweep is implemented for datasets with a shared split (iris, autompg)");
  }
  const data::Split split = load_split(c, 0);
  const SweepResult sweep = lambda_sweep(c.network, split, dc);
  io::write_sweep_csv(c.experiment_dir() / "sweep.csv", sweep.runs);

  RunManifest m;
  m.total_runs = static_cast<int>(sweep.runs.size());
  json runs = json::array();
  for (const auto& r : sweep.runs) {
    if (r.failed) ++m.failed_runs;
    runs.push_back({{"lambda", r.lambda}, {"run", r.run}, {"seed", r.seed}, {"test_metric", r.test_metric},
                    {"final_sq_norm", r.final_sq_norm}, {"failed", r.failed}, {"grad_evals", r.grad_evals}});
  }
  json aggs = json::array();
  for (const auto& a : sweep.aggregates) {
    aggs.push_back({{"lambda", a.lambda}, {"mean", a.mean}, {"std", a.stddev}, {"successes", a.successes}, {"failures", a.failures}});
  }
  const auto& best = sweep.best();
  m.document["runs"] = runs;
  m.document["aggregates"] = aggs;
  m.document["summary"] = {{"metric", c.network.head == Head::softmax_classification ? "accuracy" : "mse"},
                           {"best_lambda", sweep.best_lambda},
                           {"best_mean", best.mean},
                           {"best_std", best.stddev},
                           {"train_count", split.train.size()},
                           {"epochs", dc.train.epochs},
                           {"warnings", sweep.warnings}};

  // Mean weight vector of the best-λ runs, for overlaying on trajectory plots.
  std::vector<Vector> best_thetas;
  for (const auto& r : sweep.runs) {
    if (r.lambda == sweep.best_lambda && !r.failed) best_thetas.push_back(r.theta);
  }
  io::write_theta(c.experiment_dir() / "best_lambda_mean_theta.bin", mean_vector(best_thetas));
  io::write_theta_sidecar(c.experiment_dir() / "best_lambda_mean_theta.txt", c.network, c.seed_base);
  return m;
}

// ---------------------------------------------------------------------------
// Toy

inline RunManifest run_toy(const ExperimentConfig& c) {
  std::vector<json> outs(static_cast<std::size_t>(c.runs));
  parallel_for(outs.size(), c.jobs, [&](std::size_t i) {
    const int run = static_cast<int>(i);
    const std::uint64_t seed = c.seed_base + static_cast<std::uint64_t>(run);
    const Vector start = toy::random_start(seed);
    std::vector<Vector> path;
    const auto res = toy::traverse(start, c.traversal, [&](const TraceRecord&, const Vector& p) { path.push_back(p); });
    const fs::path dir = run_dir(c, run);
    io::write_trace_csv(dir / "trace.csv", res.trace);
    io::write_path_csv(dir / "path.csv", path);
    double max_dev = 0.0;
    for (const auto& r : res.trace) max_dev = std::max(max_dev, std::abs(r.train_loss - 1.0));
    outs[i] = {{"run", run},
               {"seed", seed},
               {"start", {start[0], start[1]}},
               {"final", {res.final_theta[0], res.final_theta[1]}},
               {"distance_to_optimum", (res.final_theta - toy::optimum()).norm()},
               {"final_angle_deg", res.trace.back().angle_deg},
               {"objective", res.final_theta.sum()},
               {"max_abs_constraint_deviation", max_dev},
               {"stop_reason", to_string(res.stop_reason)},
               {"predictor_steps", res.predictor_steps},
               {"corrector_steps", res.corrector_steps}};
  });
  RunManifest m;
  m.total_runs = c.runs;
  json runs = json::array();
  double worst = 0.0;
  for (auto& o : outs) {
    worst = std::max(worst, o["distance_to_optimum"].get<double>());
    if (o["stop_reason"] == to_string(StopReason::numerical_failure)) ++m.failed_runs;
    runs.push_back(std::move(o));
  }
  m.document["runs"] = runs;
  m.document["summary"] = {{"optimum", {toy::optimum()[0], toy::optimum()[1]}}, {"max_distance_to_optimum", worst}};
  return m;
}

// ---------------------------------------------------------------------------
// Analyze

inline ExperimentConfig config_from_manifest(const json& doc) {
  const json& cj = doc.at("config");
  ExperimentConfig c = preset(parse_dataset(cj.at("dataset").get<std::string>()), Mode::traverse);
  c.runs = cj.at("runs").get<int>();
  c.seed_base = cj.at("seed_base").get<std::uint64_t>();
  c.split_seed = cj.at("split_seed").get<std::uint64_t>();
  c.data_dir = cj.at("data_dir").get<std::string>();
  c.mnist_subsample = cj.value("mnist_subsample", c.mnist_subsample);
  if (cj.contains("network")) {
    c.network.layer_sizes = cj["network"]["layer_sizes"].get<std::vector<int>>();
    c.network.head = cj["network"]["head"] == "linear-regression" ? Head::linear_regression : Head::softmax_classification;
  }
  return c;
}

inline RunManifest run_analyze(const ExperimentConfig& c) {
  const fs::path input(c.analysis.input_dir);
  const json src = read_json(input / "manifest.json");
  const ExperimentConfig origin = config_from_manifest(src);
  if (origin.dataset == DatasetKind::toy) throw ConfigError("analyze works on network traversals");
  const int use_runs = c.analysis.max_runs > 0 ? std::min(c.analysis.max_runs, origin.runs) : origin.runs;

  std::vector<Vector> pooled;
  std::vector<std::pair<int, std::size_t>> labels; // (run, index within run)
  std::vector<Vector> endpoints;
  for (int run = 0; run < use_runs; ++run) {
    const fs::path dir = input / ("run_" + std::to_string(run));
    const auto traj = io::read_vector_stream(dir / "trajectory.bin");
    const auto sub = subsample_every(traj, static_cast<std::size_t>(std::max(1, c.analysis.point_stride)));
    for (std::size_t i = 0; i < sub.size(); ++i) {
      pooled.push_back(sub[i]);
      labels.emplace_back(run, i);
    }
    endpoints.push_back(io::read_theta(dir / "theta_final.bin"));
  }
  const auto k = std::min<Eigen::Index>(c.analysis.components, static_cast<Eigen::Index>(pooled.size()) - 1);
  const PcaModel model = pca_fit(pooled, k);
  const fs::path out = c.experiment_dir();
  io::write_pca_model(out / "pca.bin", out / "pca.txt", model);

  std::vector<Vector> coords;
  {
    auto f = io::open_out(out / "projections.csv");
    f << "run,point";
    for (Eigen::Index j = 0; j < model.k(); ++j) f << ",c" << (j + 1);
    f << '\n';
    for (std::size_t i = 0; i < pooled.size(); ++i) {
      coords.push_back(pca_project(model, pooled[i]));
      f << labels[i].first << ',' << labels[i].second;
      for (double v : coords.back()) f << ',' << io::fmt(v);
      f << '\n';
    }
  }

  const data::Split split = load_split(origin, 0);
  json endpoint_losses = json::array();
  for (const auto& e : endpoints) endpoint_losses.push_back(loss_value(origin.network, e, split.train));

  RunManifest m;
  m.total_runs = use_runs;
  m.document["source"] = input.string();
  m.document["points"] = pooled.size();
  m.document["explained_variance_ratio"] = std::vector<double>(model.explained_variance_ratio.begin(), model.explained_variance_ratio.end());
  m.document["endpoint_train_losses"] = endpoint_losses;
  if (endpoints.size() >= 2) {
    const auto me = mean_endpoint(endpoints, origin.network, split.train);
    io::write_theta(out / "mean_endpoint.bin", me.theta);
    m.document["mean_endpoint_train_loss"] = me.train_loss;
    const Vector mc = pca_project(model, me.theta);
    m.document["mean_endpoint_coords"] = std::vector<double>(mc.begin(), mc.end());
  }
  if (model.k() >= 2) {
    const auto ranges = ranges_around(coords, c.analysis.grid_pad);
    const LossGrid grid = loss_grid(model, origin.network, split.train, ranges, c.analysis.grid_resolution);
    io::write_loss_grid_csv(out / "loss_grid.csv", grid);
    std::size_t flagged = 0;
    for (char f : grid.flagged) flagged += f != 0;
    m.document["grid"] = {{"resolution", grid.resolution}, {"flagged_cells", flagged},
                          {"c1_range", {ranges.c1_min, ranges.c1_max}}, {"c2_range", {ranges.c2_min, ranges.c2_max}}};
  }
  return m;
}

// ---------------------------------------------------------------------------
// Entry point

inline RunManifest run_experiment(const ExperimentConfig& c) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(c.experiment_dir());
  RunManifest m;
  switch (c.mode) {
  case Mode::traverse: m = run_traverse(c); break;
  case Mode::decay_sweep: m = run_decay_sweep(c); break;
  case Mode::toy: m = run_toy(c); break;
  case Mode::analyze: m = run_analyze(c); break;
  }
  json doc;
  doc["config"] = to_json(c);
  for (auto& [k, v] : m.document.items()) doc[k] = v;
  doc["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.document = std::move(doc);
  write_json_atomic(c.experiment_dir() / "manifest.json", m.document);
  return m;
}

// ---------------------------------------------------------------------------
// Cost comparison

struct CostRow {
  std::string method;
  std::string label; ///< run index, or "lambda/run" for the sweep
  std::uint64_t cum_grad_evals = 0;
  double test_metric = 0.0;
  double best_so_far = 0.0;
};

class ComparisonError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Running best of a metric column (max for accuracy, min for MSE). NaN rows keep the previous best.
inline std::vector<double> running_best(const std::vector<double>& v, bool higher_is_better) {
  std::vector<double> out;
  double best = std::nan("");
  for (double x : v) {
    if (std::isfinite(x) && (std::isnan(best) || (higher_is_better ? x > best : x < best))) best = x;
    out.push_back(best);
  }
  return out;
}

/// Cost-vs-performance rows: one per traversal trace row, one per sweep run (cumulative over the grid).
inline std::vector<CostRow> compare_cost(const fs::path& traverse_dir, const fs::path& decay_dir) {
  if (!fs::exists(traverse_dir / "manifest.json") || !fs::exists(decay_dir / "manifest.json")) {
    throw ComparisonError("both experiment directories need a manifest.json");
  }
  const json tm = read_json(traverse_dir / "manifest.json");
  const json dm = read_json(decay_dir / "manifest.json");
  if (tm.at("config").at("mode") != "traverse" || dm.at("config").at("mode") != "decay-sweep") {
    throw ComparisonError("expected a traverse manifest and a decay-sweep manifest");
  }
  if (tm["config"]["dataset"] != dm["config"]["dataset"]) {
    throw ComparisonError("manifests are for different datasets");
  }
  if (tm.at("runs").empty() || dm.at("runs").empty()) throw ComparisonError("manifest has no runs");
  const bool higher = tm["summary"]["metric"] == "accuracy";

  std::vector<CostRow> rows;
  for (const auto& run : tm["runs"]) {
    const int k = run["run"].get<int>();
    const auto trace = io::read_trace_csv(traverse_dir / ("run_" + std::to_string(k)) / "trace.csv");
    std::vector<double> metric;
    for (const auto& r : trace) metric.push_back(r.test_metric);
    const auto best = running_best(metric, higher);
    for (std::size_t i = 0; i < trace.size(); ++i) {
      rows.push_back({"traversal", std::to_string(k), trace[i].cum_grad_evals, trace[i].test_metric, best[i]});
    }
  }

  const std::uint64_t per_run = dm["summary"]["epochs"].get<std::uint64_t>() * dm["summary"]["train_count"].get<std::uint64_t>();
  std::vector<double> metric;
  std::vector<std::string> labels;
  for (const auto& run : dm["runs"]) {
    metric.push_back(run["failed"].get<bool>() ? std::nan("") : run["test_metric"].get<double>());
    labels.push_back(io::fmt(run["lambda"].get<double>()) + "/" + std::to_string(run["run"].get<int>()));
  }
  const auto best = running_best(metric, higher);
  for (std::size_t i = 0; i < metric.size(); ++i) {
    rows.push_back({"weight-decay", labels[i], per_run * (i + 1), metric[i], best[i]});
  }
  return rows;
}

inline void write_cost_csv(std::ostream& out, const std::vector<CostRow>& rows) {
  out << "method,label,cum_grad_evals,test_metric,best_so_far\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.label << ',' << r.cum_grad_evals << ',' << io::fmt(r.test_metric) << ','
        << io::fmt(r.best_so_far) << '\n';
  }
}

} // namespace levelset::experiment
