#pragma once

// File formats: trace CSV, toy path CSV, weight-decay sweep CSV, loss-grid CSV,
// and the length-prefixed little-endian float64 parameter format with its text
// sidecar. Every floating-point CSV field is written with 17 significant digits.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "levelset/errors.hpp"
#include "levelset/network.hpp"
#include "levelset/pca.hpp"
#include "levelset/traversal.hpp"
#include "levelset/weight_decay.hpp"

namespace levelset::io {

inline constexpr const char* kTraceHeader =
    "predictor_index,train_loss,test_loss,test_metric,sq_norm,angle_deg,lr_predictor,lr_corrector,corrector_steps,"
    "cum_grad_evals";
inline constexpr const char* kSweepHeader = "lambda,run,seed,test_metric,final_sq_norm,failed";

/// %.17g, with non-finite values spelled nan / inf / -inf.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_field(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::ofstream open_out(const std::filesystem::path& p, std::ios::openmode mode = std::ios::out) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

// ---------------------------------------------------------------------------
// Trace CSV

inline void write_trace_row(std::ostream& out, const TraceRecord& r) {
  out << r.predictor_index << ',' << fmt(r.train_loss) << ',' << fmt(r.test_loss) << ',' << fmt(r.test_metric) << ','
      << fmt(r.sq_norm) << ',' << fmt(r.angle_deg) << ',' << fmt(r.lr_predictor) << ',' << fmt(r.lr_corrector) << ','
      << r.corrector_steps << ',' << r.cum_grad_evals << '\n';
}

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace) write_trace_row(out, r);
}

inline void write_trace_csv(const std::filesystem::path& p, const std::vector<TraceRecord>& trace) {
  auto out = open_out(p);
  write_trace_csv(out, trace);
}

inline std::vector<TraceRecord> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw ParseError("trace CSV header mismatch", 1);
  std::vector<TraceRecord> out;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 10) throw ParseError("trace row needs 10 fields", lineno);
    try {
      TraceRecord r;
      r.predictor_index = std::stoull(f[0]);
      r.train_loss = parse_field(f[1]);
      r.test_loss = parse_field(f[2]);
      r.test_metric = parse_field(f[3]);
      r.sq_norm = parse_field(f[4]);
      r.angle_deg = parse_field(f[5]);
      r.lr_predictor = parse_field(f[6]);
      r.lr_corrector = parse_field(f[7]);
      r.corrector_steps = std::stoull(f[8]);
      r.cum_grad_evals = std::stoull(f[9]);
      out.push_back(r);
    } catch (const std::invalid_argument&) {
      throw ParseError("malformed trace field", lineno);
    } catch (const std::out_of_range&) {
      throw ParseError("trace field out of range", lineno);
    }
  }
  return out;
}

inline std::vector<TraceRecord> read_trace_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return read_trace_csv(in);
}

// ---------------------------------------------------------------------------
// Toy path

inline void write_path_csv(const std::filesystem::path& p, const std::vector<Vector>& points) {
  auto out = open_out(p);
  out << "x,y\n";
  for (const auto& v : points) out << fmt(v[0]) << ',' << fmt(v[1]) << '\n';
}

// ---------------------------------------------------------------------------
// Parameter vectors: u64 length, then float64 values, all little-endian

namespace detail {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

} // namespace detail

inline void write_vector(std::ostream& out, const Vector& v) {
  const std::uint64_t n = detail::to_little(static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (double x : v) {
    const double le = detail::to_little(x);
    out.write(reinterpret_cast<const char*>(&le), sizeof le);
  }
}

/// Reads one vector. Returns false at a clean end of stream.
inline bool read_vector(std::istream& in, Vector& v) {
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (in.gcount() == 0 && in.eof()) return false;
  if (in.gcount() != sizeof n) throw FormatError("truncated vector length prefix");
  n = detail::to_little(n);
  if (n > (std::uint64_t{1} << 34)) throw FormatError("implausible vector length");
  v.resize(static_cast<Eigen::Index>(n));
  for (auto& x : v) {
    double le = 0;
    in.read(reinterpret_cast<char*>(&le), sizeof le);
    if (in.gcount() != sizeof le) throw FormatError("truncated vector payload");
    x = detail::to_little(le);
  }
  return true;
}

inline void write_theta(const std::filesystem::path& p, const Vector& theta) {
  auto out = open_out(p, std::ios::binary);
  write_vector(out, theta);
}

inline Vector read_theta(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  Vector v;
  if (!read_vector(in, v)) throw FormatError("empty parameter file " + p.string());
  return v;
}

/// Appends vectors to one file, each in the parameter format.
class VectorStreamWriter {
public:
  explicit VectorStreamWriter(const std::filesystem::path& p) : out_(open_out(p, std::ios::binary)) {}
  void write(const Vector& v) { write_vector(out_, v); }

private:
  std::ofstream out_;
};

inline std::vector<Vector> read_vector_stream(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::vector<Vector> out;
  Vector v;
  while (read_vector(in, v)) out.push_back(v);
  return out;
}

inline std::string layer_sizes_string(const NetworkSpec& spec) {
  std::string s;
  for (std::size_t i = 0; i < spec.layer_sizes.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(spec.layer_sizes[i]);
  }
  return s;
}

/// `key = value` lines describing the network and seed that produced a parameter file.
inline void write_theta_sidecar(const std::filesystem::path& p, const NetworkSpec& spec, std::uint64_t seed) {
  auto out = open_out(p);
  out << "layer_sizes = " << layer_sizes_string(spec) << '\n'
      << "hidden_activation = tanh\n"
      << "head = " << to_string(spec.head) << '\n'
      << "param_count = " << spec.param_count() << '\n'
      << "seed = " << seed << '\n';
}

struct ThetaSidecar {
  NetworkSpec spec;
  std::uint64_t seed = 0;
};

inline ThetaSidecar read_theta_sidecar(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  ThetaSidecar s;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto key = line.substr(0, eq);
    auto val = line.substr(eq + 1);
    key.erase(key.find_last_not_of(' ') + 1);
    val.erase(0, val.find_first_not_of(' '));
    if (key == "layer_sizes") {
      s.spec.layer_sizes.clear();
      std::stringstream ss(val);
      for (std::string tok; std::getline(ss, tok, ',');) s.spec.layer_sizes.push_back(std::stoi(tok));
    } else if (key == "head") {
      if (val == "softmax-classification") s.spec.head = Head::softmax_classification;
      else if (val == "linear-regression") s.spec.head = Head::linear_regression;
      else throw ParseError("unknown head '" + val + "'", lineno);
    } else if (key == "seed") {
      s.seed = std::stoull(val);
    }
  }
  s.spec.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Weight-decay sweep

inline void write_sweep_csv(std::ostream& out, const std::vector<DecayRun>& runs) {
  out << kSweepHeader << '\n';
  for (const auto& r : runs) {
    out << fmt(r.lambda) << ',' << r.run << ',' << r.seed << ',' << fmt(r.test_metric) << ',' << fmt(r.final_sq_norm)
        << ',' << (r.failed ? 1 : 0) << '\n';
  }
}

inline void write_sweep_csv(const std::filesystem::path& p, const std::vector<DecayRun>& runs) {
  auto out = open_out(p);
  write_sweep_csv(out, runs);
}

inline std::vector<DecayRun> read_sweep_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::string line;
  if (!std::getline(in, line) || line != kSweepHeader) throw ParseError("sweep CSV header mismatch", 1);
  std::vector<DecayRun> out;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw ParseError("sweep row needs 6 fields", lineno);
    try {
      DecayRun r;
      r.lambda = parse_field(f[0]);
      r.run = std::stoi(f[1]);
      r.seed = std::stoull(f[2]);
      r.test_metric = parse_field(f[3]);
      r.final_sq_norm = parse_field(f[4]);
      r.failed = f[5] == "1";
      out.push_back(std::move(r));
    } catch (const std::exception&) {
      throw ParseError("malformed sweep field", lineno);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// PCA model and loss grid

/// Mean then each component, in the parameter format; ratios go to a text sidecar.
inline void write_pca_model(const std::filesystem::path& bin, const std::filesystem::path& sidecar, const PcaModel& m) {
  {
    VectorStreamWriter w(bin);
    w.write(m.mean);
    for (Eigen::Index c = 0; c < m.k(); ++c) w.write(m.components.col(c));
  }
  auto out = open_out(sidecar);
  out << "dim = " << m.dim() << '\n' << "components = " << m.k() << '\n';
  out << "explained_variance_ratio =";
  for (double r : m.explained_variance_ratio) out << ' ' << fmt(r);
  out << "\nexplained_variance =";
  for (double r : m.explained_variance) out << ' ' << fmt(r);
  out << '\n';
}

inline void write_loss_grid_csv(std::ostream& out, const LossGrid& g) {
  out << "# c1_range = " << fmt(g.ranges.c1_min) << ',' << fmt(g.ranges.c1_max) << '\n'
      << "# c2_range = " << fmt(g.ranges.c2_min) << ',' << fmt(g.ranges.c2_max) << '\n'
      << "# resolution = " << g.resolution << '\n'
      << "# explained_variance_ratio =";
  for (double r : g.explained_variance_ratio) out << ' ' << fmt(r);
  out << '\n' << "c1,c2,train_loss\n";
  for (int i = 0; i < g.resolution; ++i) {
    for (int j = 0; j < g.resolution; ++j) out << fmt(g.c1(i)) << ',' << fmt(g.c2(j)) << ',' << fmt(g.loss(i, j)) << '\n';
  }
}

inline void write_loss_grid_csv(const std::filesystem::path& p, const LossGrid& g) {
  auto out = open_out(p);
  write_loss_grid_csv(out, g);
}

} // namespace levelset::io
