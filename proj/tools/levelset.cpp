// levelset: train to a near-zero loss point, walk the loss level set toward
// smaller weights, and compare against weight decay.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "levelset/experiment.hpp"
#include "levelset/fetch.hpp"

namespace {

using namespace levelset;
using namespace levelset::experiment;

/// Every value that can come from a config file or a flag. Unset values fall back to the dataset preset.
struct Overrides {
  std::optional<std::string> dataset;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::string> out;
  std::optional<std::string> name;
  std::optional<std::string> data_dir;
  std::optional<unsigned> jobs;
  std::optional<int> steps;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr;
  std::optional<double> deviation_threshold;
  std::optional<double> angle_change_threshold;
  std::optional<double> lr_decrease;
  std::optional<double> lr_increase;
  std::optional<double> initial_lr_predictor;
  std::optional<double> initial_lr_corrector;
  std::optional<int> max_corrector_steps;
  std::optional<double> antiparallel_stop_deg;
  std::optional<int> metrics_every;
  std::optional<std::string> direction;
  std::optional<int> trajectory_stride;
  std::optional<std::size_t> mnist_subsample;
  std::optional<int> lambda_min_exp;
  std::optional<int> lambda_max_exp;
  std::optional<int> runs_per_lambda;
  std::optional<int> decay_epochs;
  std::optional<std::string> input;
  std::optional<int> components;
  std::optional<int> grid_resolution;
  std::optional<int> max_runs;
  std::optional<int> point_stride;
};

template <class T>
void set_if(const std::optional<T>& v, T& target) {
  if (v) target = *v;
}

ExperimentConfig build_config(const Overrides& o, Mode mode) {
  DatasetKind ds = mode == Mode::toy ? DatasetKind::toy : DatasetKind::iris;
  if (o.dataset) ds = parse_dataset(*o.dataset);
  ExperimentConfig c = preset(ds, mode);
  set_if(o.runs, c.runs);
  set_if(o.seed, c.seed_base);
  set_if(o.split_seed, c.split_seed);
  set_if(o.out, c.output_dir);
  set_if(o.name, c.name);
  set_if(o.data_dir, c.data_dir);
  set_if(o.jobs, c.jobs);
  set_if(o.steps, c.traversal.max_predictor_steps);
  set_if(o.epochs, c.phase1.epochs);
  set_if(o.batch_size, c.phase1.batch_size);
  set_if(o.batch_size, c.decay.train.batch_size);
  set_if(o.lr, c.phase1.adam.lr);
  set_if(o.lr, c.decay.train.adam.lr);
  set_if(o.deviation_threshold, c.traversal.deviation_threshold);
  set_if(o.angle_change_threshold, c.traversal.angle_change_threshold_deg);
  set_if(o.lr_decrease, c.traversal.lr_decrease_factor);
  set_if(o.lr_increase, c.traversal.lr_increase_factor);
  set_if(o.initial_lr_predictor, c.traversal.initial_lr_predictor);
  set_if(o.initial_lr_corrector, c.traversal.initial_lr_corrector);
  set_if(o.max_corrector_steps, c.traversal.max_corrector_steps_per_predictor);
  set_if(o.antiparallel_stop_deg, c.traversal.antiparallel_stop_deg);
  set_if(o.metrics_every, c.traversal.metrics_every);
  if (o.direction) {
    if (*o.direction == "regularizer") c.traversal.direction = DirectionMode::minimize_regularizer;
    else if (*o.direction == "random") c.traversal.direction = DirectionMode::random_walk;
    else throw ConfigError("direction must be 'regularizer' or 'random'");
  }
  set_if(o.trajectory_stride, c.trajectory_stride);
  set_if(o.mnist_subsample, c.mnist_subsample);
  if (o.lambda_min_exp || o.lambda_max_exp) {
    c.decay.lambda_grid = log10_grid(o.lambda_min_exp.value_or(-6), o.lambda_max_exp.value_or(6));
  }
  set_if(o.runs_per_lambda, c.decay.runs_per_lambda);
  set_if(o.decay_epochs, c.decay.train.epochs);
  set_if(o.input, c.analysis.input_dir);
  set_if(o.components, c.analysis.components);
  set_if(o.grid_resolution, c.analysis.grid_resolution);
  set_if(o.max_runs, c.analysis.max_runs);
  set_if(o.point_stride, c.analysis.point_stride);
  return c;
}

/// The config-file schema with the values a run would use.
std::string default_config_text(const ExperimentConfig& c) {
  std::ostringstream s;
  auto line = [&](const std::string& key, const auto& value, const std::string& doc) {
    s << "# " << doc << '\n' << key << " = " << value << "\n\n";
  };
  auto quoted = [](const std::string& v) { return '"' + v + '"'; };
  s << "# levelset configuration. Keys match the long command-line flags; flags override the file.\n\n";
  line("dataset", quoted(to_string(c.dataset)), "iris | autompg | mnist-ff | toy");
  line("runs", c.runs, "independent runs; run k uses seed + k");
  line("seed", c.seed_base, "seed of run 0");
  line("split-seed", c.split_seed, "seed of the shared train/test split (iris, autompg)");
  line("out", quoted(c.output_dir), "output root; results go to <out>/<name>/");
  line("name", quoted(c.name), "experiment directory name (empty: <dataset>-<mode>)");
  line("data-dir", quoted(c.data_dir), "dataset directory (LEVELSET_DATA_DIR overrides the built-in default)");
  line("jobs", c.jobs, "concurrent runs");
  line("epochs", c.phase1.epochs, "phase-1 Adam epochs");
  line("batch-size", c.phase1.batch_size, "minibatch size for phase 1 and weight decay");
  line("lr", c.phase1.adam.lr, "Adam learning rate");
  line("steps", c.traversal.max_predictor_steps, "predictor-step budget (trace rows)");
  line("deviation-threshold", c.traversal.deviation_threshold, "corrector runs while (L - L0)^2 exceeds this");
  line("angle-change-threshold", c.traversal.angle_change_threshold_deg, "degrees of turn that shrink a step size");
  line("lr-decrease", c.traversal.lr_decrease_factor, "step-size factor after a sharp turn");
  line("lr-increase", c.traversal.lr_increase_factor, "step-size factor after a smooth step");
  line("initial-lr-predictor", c.traversal.initial_lr_predictor, "first predictor step length");
  line("initial-lr-corrector", c.traversal.initial_lr_corrector, "first corrector step length");
  line("max-corrector-steps", c.traversal.max_corrector_steps_per_predictor, "corrector budget per predictor step");
  line("antiparallel-stop-deg", c.traversal.antiparallel_stop_deg, "stop once the gradient angle is within this of 180");
  line("metrics-every", c.traversal.metrics_every, "evaluate test metrics on every k-th trace row");
  line("direction", quoted(c.traversal.direction == DirectionMode::minimize_regularizer ? "regularizer" : "random"),
       "regularizer | random");
  line("trajectory-stride", c.trajectory_stride, "save every k-th traversal point to trajectory.bin (0 = off)");
  line("mnist-subsample", c.mnist_subsample, "MNIST training examples per run");
  line("lambda-min-exp", -6, "weight-decay grid starts at 10^this");
  line("lambda-max-exp", 6, "weight-decay grid ends at 10^this");
  line("runs-per-lambda", c.decay.runs_per_lambda, "weight-decay seeds per grid value");
  line("decay-epochs", c.decay.train.epochs, "weight-decay training epochs");
  line("input", quoted(c.analysis.input_dir), "analyze: traverse experiment directory");
  line("components", c.analysis.components, "analyze: principal components kept");
  line("grid-resolution", c.analysis.grid_resolution, "analyze: loss grid points per axis");
  line("max-runs", c.analysis.max_runs, "analyze: use only the first N runs (0 = all)");
  line("point-stride", c.analysis.point_stride, "analyze: extra subsampling of stored trajectory points");
  return s.str();
}

int print_summary(const RunManifest& m) {
  std::cout << m.document["config"]["name"].get<std::string>() << ": ";
  if (m.document.contains("summary")) std::cout << m.document["summary"].dump();
  std::cout << '\n';
  if (m.failed_runs > 0) std::cerr << m.failed_runs << " of " << m.total_runs << " runs failed\n";
  return m.exit_status();
}

int run_fetch(const std::string& dataset, const std::string& data_dir, const std::vector<std::string>& mirrors,
              const std::optional<std::string>& checksum) {
  namespace fs = std::filesystem;
  std::vector<fetch::RemoteFile> files;
  fs::path dir = data_dir;
  std::vector<std::string> from = mirrors;
  if (dataset == "mnist-ff" || dataset == "mnist") {
    files = fetch::mnist_files();
    dir /= "mnist";
    if (from.empty()) from = fetch::default_mnist_mirrors();
  } else if (dataset == "iris" || dataset == "autompg") {
    files.push_back({dataset == "iris" ? "iris.data" : "auto-mpg.data", std::nullopt});
    if (checksum) files.back().checksum = fetch::parse_checksum(*checksum);
    if (from.empty()) from = fetch::default_uci_mirrors(dataset);
  } else {
    throw ConfigError("fetch-data supports iris, autompg and mnist-ff");
  }
  for (const auto& f : files) {
    const auto r = fetch::fetch_file(f, from, dir);
    std::cout << r.path.string() << " sha256:" << r.sha256 << (r.verified ? " (verified)" : " (unverified)") << '\n';
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Level-set traversal of neural-network training losses"};
  app.set_config("--config", "", "read options from a config file");
  app.fallthrough();
  app.require_subcommand(0, 1);

  Overrides o;
  bool print_default = false;
  app.add_flag("--print-default-config", print_default, "print the config schema with default values and exit");
  app.add_option("--dataset", o.dataset, "iris | autompg | mnist-ff | toy");
  app.add_option("--runs", o.runs, "number of runs");
  app.add_option("--seed", o.seed, "seed of run 0");
  app.add_option("--split-seed", o.split_seed, "train/test split seed");
  app.add_option("--out", o.out, "output root directory");
  app.add_option("--name", o.name, "experiment directory name");
  app.add_option("--data-dir", o.data_dir, "dataset directory");
  app.add_option("--jobs", o.jobs, "concurrent runs");
  app.add_option("--steps", o.steps, "predictor-step budget");
  app.add_option("--epochs", o.epochs, "phase-1 epochs");
  app.add_option("--batch-size", o.batch_size, "minibatch size");
  app.add_option("--lr", o.lr, "Adam learning rate");
  app.add_option("--deviation-threshold", o.deviation_threshold, "squared loss deviation threshold");
  app.add_option("--angle-change-threshold", o.angle_change_threshold, "step-size turn threshold in degrees");
  app.add_option("--lr-decrease", o.lr_decrease, "step-size decrease factor");
  app.add_option("--lr-increase", o.lr_increase, "step-size increase factor");
  app.add_option("--initial-lr-predictor", o.initial_lr_predictor, "initial predictor step length");
  app.add_option("--initial-lr-corrector", o.initial_lr_corrector, "initial corrector step length");
  app.add_option("--max-corrector-steps", o.max_corrector_steps, "corrector budget per predictor step");
  app.add_option("--antiparallel-stop-deg", o.antiparallel_stop_deg, "anti-parallel stop tolerance in degrees");
  app.add_option("--metrics-every", o.metrics_every, "test-metric cadence");
  app.add_option("--direction", o.direction, "regularizer | random");
  app.add_option("--trajectory-stride", o.trajectory_stride, "save every k-th traversal point (0 = off)");
  app.add_option("--mnist-subsample", o.mnist_subsample, "MNIST training subsample size");
  app.add_option("--lambda-min-exp", o.lambda_min_exp, "smallest weight-decay exponent");
  app.add_option("--lambda-max-exp", o.lambda_max_exp, "largest weight-decay exponent");
  app.add_option("--runs-per-lambda", o.runs_per_lambda, "weight-decay runs per grid value");
  app.add_option("--decay-epochs", o.decay_epochs, "weight-decay epochs");
  app.add_option("--input", o.input, "analyze: traverse experiment directory");
  app.add_option("--components", o.components, "analyze: principal components");
  app.add_option("--grid-resolution", o.grid_resolution, "analyze: grid points per axis");
  app.add_option("--max-runs", o.max_runs, "analyze: first N runs only");
  app.add_option("--point-stride", o.point_stride, "analyze: trajectory subsampling");

  auto* traverse_cmd = app.add_subcommand("traverse", "phase-1 training followed by level-set traversal");
  auto* sweep_cmd = app.add_subcommand("decay-sweep", "weight-decay baseline over a lambda grid");
  auto* toy_cmd = app.add_subcommand("toy", "minimize x + y on the unit circle");
  auto* analyze_cmd = app.add_subcommand("analyze", "PCA, loss grid and endpoint averaging of stored trajectories");
  auto* cost_cmd = app.add_subcommand("compare-cost", "gradient-evaluation cost versus test metric");
  std::string cost_traverse, cost_decay, cost_out;
  cost_cmd->add_option("--traverse-dir", cost_traverse, "traverse experiment directory")->required();
  cost_cmd->add_option("--decay-dir", cost_decay, "decay-sweep experiment directory")->required();
  cost_cmd->add_option("--output", cost_out, "CSV output path (default: stdout)");
  auto* fetch_cmd = app.add_subcommand("fetch-data", "download a dataset with checksum verification");
  std::vector<std::string> mirrors;
  std::optional<std::string> checksum;
  fetch_cmd->add_option("--mirror", mirrors, "base URL to try (repeatable, tried in order)");
  fetch_cmd->add_option("--checksum", checksum, "expected digest, md5:<hex> or sha256:<hex>");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    Mode mode = Mode::traverse;
    if (*sweep_cmd) mode = Mode::decay_sweep;
    else if (*toy_cmd) mode = Mode::toy;
    else if (*analyze_cmd) mode = Mode::analyze;

    if (print_default) {
      std::cout << default_config_text(build_config(o, mode));
      return 0;
    }
    if (*cost_cmd) {
      const auto rows = compare_cost(cost_traverse, cost_decay);
      if (cost_out.empty()) {
        write_cost_csv(std::cout, rows);
      } else {
        auto out = io::open_out(cost_out);
        write_cost_csv(out, rows);
      }
      return 0;
    }
    if (*fetch_cmd) {
      const ExperimentConfig c = build_config(o, Mode::traverse);
      return run_fetch(o.dataset.value_or("iris"), c.data_dir, mirrors, checksum);
    }
    if (!*traverse_cmd && !*sweep_cmd && !*toy_cmd && !*analyze_cmd) {
      std::cerr << app.help();
      return 2;
    }
    const ExperimentConfig c = build_config(o, mode);
    return print_summary(run_experiment(c));
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ComparisonError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
