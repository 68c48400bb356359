#pragma once

// Loaders for the bundled tabular datasets and MNIST IDX files, plus
// deterministic train/test splitting and train-statistics standardization.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "levelset/errors.hpp"
#include "levelset/network.hpp"

namespace levelset::data {

enum class Task { classification, regression };

struct Dataset {
  std::string name;
  Matrix features; ///< examples × features
  std::vector<int> labels; ///< classification only
  Vector targets;          ///< regression only
  std::vector<std::string> feature_names;
  Task task = Task::classification;
  int num_classes = 0;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
};

enum class SplitStrategy { stratified, random, sequential };

struct SplitSpec {
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::uint64_t seed = 0;
  SplitStrategy strategy = SplitStrategy::random;
};

struct Split {
  Batch train;
  Batch test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

// ---------------------------------------------------------------------------
// Tabular loaders

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& tok, long line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError("cannot parse number '" + tok + "'", line);
  }
}

inline std::ifstream open_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

} // namespace detail

/// UCI iris.data: four measurements and a species name per line.
/// Classes: setosa 0, versicolor 1, virginica 2 (an "Iris-" prefix is optional).
inline Dataset load_iris(const std::string& path) {
  static const std::map<std::string, int> kClasses{{"setosa", 0}, {"versicolor", 1}, {"virginica", 2}};
  auto in = detail::open_text(path);
  std::vector<std::array<double, 4>> rows;
  std::vector<int> labels;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(detail::trim(f));
    if (fields.size() != 5) throw ParseError("expected 5 comma-separated fields", lineno);
    std::array<double, 4> r{};
    for (int j = 0; j < 4; ++j) r[static_cast<std::size_t>(j)] = detail::parse_double(fields[static_cast<std::size_t>(j)], lineno);
    std::string species = fields[4];
    if (species.rfind("Iris-", 0) == 0) species = species.substr(5);
    const auto it = kClasses.find(species);
    if (it == kClasses.end()) throw ParseError("unknown species '" + fields[4] + "'", lineno);
    rows.push_back(r);
    labels.push_back(it->second);
  }
  Dataset d;
  d.name = "iris";
  d.task = Task::classification;
  d.num_classes = 3;
  d.feature_names = {"sepal_length", "sepal_width", "petal_length", "petal_width"};
  d.features.resize(static_cast<Eigen::Index>(rows.size()), 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < 4; ++j) d.features(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  d.labels = std::move(labels);
  return d;
}

/// UCI auto-mpg.data: whitespace-separated mpg, cylinders, displacement, horsepower, weight,
/// acceleration, model year, origin, then a quoted car name. Rows with a '?' field are dropped.
/// Target is mpg in its original units; the car name is discarded.
inline Dataset load_autompg(const std::string& path) {
  auto in = detail::open_text(path);
  std::vector<std::array<double, 7>> rows;
  std::vector<double> mpg;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto quote = line.find('"');
    const std::string numeric = detail::trim(line.substr(0, quote));
    if (numeric.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(numeric);
    for (std::string f; ss >> f;) fields.push_back(f);
    if (fields.size() != 8) throw ParseError("expected 8 numeric fields before the car name", lineno);
    if (std::find(fields.begin(), fields.end(), "?") != fields.end()) continue;
    std::array<double, 7> r{};
    const double y = detail::parse_double(fields[0], lineno);
    for (std::size_t j = 0; j < 7; ++j) r[j] = detail::parse_double(fields[j + 1], lineno);
    rows.push_back(r);
    mpg.push_back(y);
  }
  Dataset d;
  d.name = "autompg";
  d.task = Task::regression;
  d.feature_names = {"cylinders", "displacement", "horsepower", "weight", "acceleration", "model_year", "origin"};
  d.features.resize(static_cast<Eigen::Index>(rows.size()), 7);
  d.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < 7; ++j) d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    d.targets[static_cast<Eigen::Index>(i)] = mpg[i];
  }
  return d;
}

// ---------------------------------------------------------------------------
// MNIST IDX

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

/// Whole file contents; gzip input is inflated, plain input passes through unchanged.
inline std::vector<unsigned char> read_maybe_gzip(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> out;
  std::array<unsigned char, 1 << 16> buf{};
  int n = 0;
  while ((n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) out.insert(out.end(), buf.begin(), buf.begin() + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw FormatError("corrupt gzip stream in " + path);
  return out;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off) {
  if (off + 4 > b.size()) throw FormatError("truncated IDX header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

} // namespace detail

/// IDX3 image file as rows of pixels scaled to [0, 1].
inline Matrix read_idx_images(const std::string& path) {
  const auto bytes = detail::read_maybe_gzip(path);
  if (detail::read_be32(bytes, 0) != kIdxImagesMagic) throw FormatError("bad IDX image magic in " + path);
  const std::size_t count = detail::read_be32(bytes, 4);
  const std::size_t rows = detail::read_be32(bytes, 8);
  const std::size_t cols = detail::read_be32(bytes, 12);
  const std::size_t pixels = rows * cols;
  if (bytes.size() != 16 + count * pixels) throw FormatError("IDX image payload size mismatch in " + path);
  Matrix m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(pixels));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = bytes[16 + i * pixels + p] / 255.0;
    }
  }
  return m;
}

inline std::vector<int> read_idx_labels(const std::string& path) {
  const auto bytes = detail::read_maybe_gzip(path);
  if (detail::read_be32(bytes, 0) != kIdxLabelsMagic) throw FormatError("bad IDX label magic in " + path);
  const std::size_t count = detail::read_be32(bytes, 4);
  if (bytes.size() != 8 + count) throw FormatError("IDX label payload size mismatch in " + path);
  return {bytes.begin() + 8, bytes.end()};
}

struct MnistFiles {
  std::string train_images = "train-images-idx3-ubyte.gz";
  std::string train_labels = "train-labels-idx1-ubyte.gz";
  std::string test_images = "t10k-images-idx3-ubyte.gz";
  std::string test_labels = "t10k-labels-idx1-ubyte.gz";
};

inline Dataset make_mnist(std::string name, Matrix images, std::vector<int> labels) {
  if (static_cast<std::size_t>(images.rows()) != labels.size()) throw FormatError("MNIST image/label count mismatch");
  Dataset d;
  d.name = std::move(name);
  d.task = Task::classification;
  d.num_classes = 10;
  d.features = std::move(images);
  d.labels = std::move(labels);
  return d;
}

/// Indices of `n` examples drawn without replacement, in ascending order.
inline std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t n, std::uint64_t seed) {
  if (n > total) throw std::invalid_argument("subsample larger than dataset");
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n == total) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline Batch to_batch(const Dataset& d, std::span<const std::size_t> rows) {
  Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(rows.size()), d.features.cols());
  if (d.task == Task::regression) b.targets.resize(static_cast<Eigen::Index>(rows.size()), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    b.inputs.row(static_cast<Eigen::Index>(i)) = d.features.row(r);
    if (d.task == Task::classification) b.labels.push_back(d.labels[rows[i]]);
    else b.targets(static_cast<Eigen::Index>(i), 0) = d.targets[r];
  }
  return b;
}

inline Batch to_batch(const Dataset& d) {
  std::vector<std::size_t> all(d.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return to_batch(d, all);
}

/// `n` random training examples (seeded) and the full test set, pixels in [0, 1].
inline Split load_mnist_subsample(const std::string& dir, std::size_t n, std::uint64_t seed,
                                  const MnistFiles& files = {}) {
  const Dataset train = make_mnist("mnist-train", read_idx_images(dir + "/" + files.train_images),
                                   read_idx_labels(dir + "/" + files.train_labels));
  const Dataset test = make_mnist("mnist-test", read_idx_images(dir + "/" + files.test_images),
                                  read_idx_labels(dir + "/" + files.test_labels));
  Split s;
  s.train_indices = subsample_indices(train.size(), n, seed);
  s.train = to_batch(train, s.train_indices);
  s.test = to_batch(test);
  s.test_indices.resize(test.size());
  std::iota(s.test_indices.begin(), s.test_indices.end(), std::size_t{0});
  return s;
}

// ---------------------------------------------------------------------------
// Splitting and standardization

namespace detail {

// Largest-remainder allocation of `want` items across groups proportional to their sizes.
inline std::vector<std::size_t> proportional_counts(const std::vector<std::size_t>& sizes, std::size_t want) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::vector<std::size_t> counts(sizes.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    const double exact = static_cast<double>(want) * static_cast<double>(sizes[g]) / static_cast<double>(total);
    counts[g] = static_cast<std::size_t>(std::floor(exact));
    used += counts[g];
    rem.emplace_back(exact - std::floor(exact), g);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < want && i < rem.size(); ++i, ++used) ++counts[rem[i].second];
  return counts;
}

} // namespace detail

/// Disjoint index sets of the requested sizes. Throws when they do not fit in the dataset.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const Dataset& d,
                                                                                  const SplitSpec& spec) {
  if (spec.train_count + spec.test_count > d.size()) throw std::invalid_argument("split larger than dataset");
  std::vector<std::size_t> train, test;
  std::mt19937_64 rng(spec.seed);

  if (spec.strategy == SplitStrategy::stratified) {
    if (d.task != Task::classification) throw std::invalid_argument("stratified split needs class labels");
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(d.num_classes));
    for (std::size_t i = 0; i < d.size(); ++i) by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);
    std::vector<std::size_t> sizes;
    for (auto& c : by_class) {
      std::shuffle(c.begin(), c.end(), rng);
      sizes.push_back(c.size());
    }
    const auto ntrain = detail::proportional_counts(sizes, spec.train_count);
    const auto ntest = detail::proportional_counts(sizes, spec.test_count);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      if (ntrain[c] + ntest[c] > by_class[c].size()) throw std::invalid_argument("class too small for split");
      train.insert(train.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(ntrain[c]));
      test.insert(test.end(), by_class[c].begin() + static_cast<std::ptrdiff_t>(ntrain[c]),
                  by_class[c].begin() + static_cast<std::ptrdiff_t>(ntrain[c] + ntest[c]));
    }
    std::shuffle(train.begin(), train.end(), rng);
    std::shuffle(test.begin(), test.end(), rng);
  } else {
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (spec.strategy == SplitStrategy::random) std::shuffle(idx.begin(), idx.end(), rng);
    train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(spec.train_count));
    test.assign(idx.begin() + static_cast<std::ptrdiff_t>(spec.train_count),
                idx.begin() + static_cast<std::ptrdiff_t>(spec.train_count + spec.test_count));
  }
  return {std::move(train), std::move(test)};
}

/// Per-feature affine map to zero mean, unit (population) variance on the fitted rows.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    s.mean = x.colwise().mean();
    const Matrix centered = x.rowwise() - s.mean;
    s.scale = (centered.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt();
    for (auto& v : s.scale) {
      if (!(v > 0.0)) v = 1.0; // constant column
    }
    return s;
  }

  Matrix apply(const Matrix& x) const { return (x.rowwise() - mean).array().rowwise() / scale.array(); }
};

/// Split, then standardize with training-split statistics when `standardize` is set.
/// Regression targets are centered and scaled too; Batch::target_scale keeps the factor
/// so test errors are still reported in the original units.
inline Split make_split(const Dataset& d, const SplitSpec& spec, bool standardize) {
  Split s;
  std::tie(s.train_indices, s.test_indices) = split_indices(d, spec);
  s.train = to_batch(d, s.train_indices);
  s.test = to_batch(d, s.test_indices);
  if (standardize) {
    const auto st = Standardizer::fit(s.train.inputs);
    s.train.inputs = st.apply(s.train.inputs);
    s.test.inputs = st.apply(s.test.inputs);
    if (d.task == Task::regression) {
      const auto ts = Standardizer::fit(s.train.targets);
      s.train.targets = ts.apply(s.train.targets);
      s.test.targets = ts.apply(s.test.targets);
      s.train.target_scale = s.test.target_scale = ts.scale[0];
    }
  }
  return s;
}

/// 120/30, stratified by class.
inline SplitSpec iris_split(std::uint64_t seed) { return {120, 30, seed, SplitStrategy::stratified}; }

/// 314/78 from the 392 complete rows.
inline SplitSpec autompg_split(std::uint64_t seed) { return {314, 78, seed, SplitStrategy::random}; }

} // namespace levelset::data
