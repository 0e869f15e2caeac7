#pragma once

#include <cerrno>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpcp/baselines.hpp"
#include "cpcp/fw.hpp"
#include "cpcp/fwt.hpp"
#include "cpcp/mask.hpp"
#include "cpcp/synthetic.hpp"
#include "cpcp/trace.hpp"

namespace cpcp {

/// Malformed input file; the message carries the path and line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& reason)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + reason) {}
};

namespace detail {

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(std::string_view tok, const std::string& path, std::size_t line) {
  std::string s(tok);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw ParseError(path, line, "bad real value '" + s + "'");
  return v;
}

inline std::int64_t parse_int(std::string_view tok, const std::string& path, std::size_t line) {
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec == std::errc::result_out_of_range) throw ParseError(path, line, "integer overflow '" + std::string(tok) + "'");
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError(path, line, "bad integer '" + std::string(tok) + "'");
  return v;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

/// Reads the banner and size line, skipping comments. Returns the size tokens.
inline std::vector<std::string_view> read_header(std::istream& in, std::string& buffer, std::size_t& line_no,
                                                 const std::string& path, std::string_view format) {
  if (!std::getline(in, buffer)) throw ParseError(path, 1, "empty file");
  line_no = 1;
  std::string lower = buffer;
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  const auto banner = split_ws(lower);
  if (banner.size() != 5 || banner[0] != "%%matrixmarket" || banner[1] != "matrix" || banner[2] != format ||
      banner[3] != "real" || banner[4] != "general")
    throw ParseError(path, 1, "expected '%%MatrixMarket matrix " + std::string(format) + " real general'");
  while (std::getline(in, buffer)) {
    ++line_no;
    const auto toks = split_ws(buffer);
    if (toks.empty() || toks[0].front() == '%') continue;
    return toks;
  }
  throw ParseError(path, line_no, "missing size line");
}

}  // namespace detail

/// Values on a mask: the content of a coordinate MatrixMarket file.
struct MaskedMatrix {
  ObservationMask mask;
  std::vector<double> values;
};

/// Coordinate format, 1-based indices, entries in mask order.
inline void save_masked(const std::string& path, const ObservationMask& mask, std::span<const double> values) {
  if (values.size() != mask.size()) throw std::invalid_argument("save_masked: value count does not match mask");
  auto out = detail::open_out(path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << mask.rows() << ' ' << mask.cols() << ' ' << mask.size() << '\n';
  for (std::size_t e = 0; e < mask.size(); ++e)
    out << mask.row(e) + 1 << ' ' << mask.col(e) + 1 << ' ' << detail::format_double(values[e]) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline MaskedMatrix load_masked(const std::string& path) {
  auto in = detail::open_in(path);
  std::string buf;
  std::size_t line = 0;
  const auto size = detail::read_header(in, buf, line, path, "coordinate");
  if (size.size() != 3) throw ParseError(path, line, "size line needs 'rows cols entries'");
  const std::int64_t m = detail::parse_int(size[0], path, line);
  const std::int64_t n = detail::parse_int(size[1], path, line);
  const std::int64_t nnz = detail::parse_int(size[2], path, line);
  constexpr std::int64_t kMaxDim = std::numeric_limits<std::int32_t>::max();
  if (m <= 0 || n <= 0 || m > kMaxDim || n > kMaxDim) throw ParseError(path, line, "dimensions out of range");
  if (nnz <= 0 || nnz > m * n) throw ParseError(path, line, "entry count out of range");

  std::vector<std::pair<std::pair<Index, Index>, double>> entries;
  entries.reserve(static_cast<std::size_t>(nnz));
  while (std::getline(in, buf)) {
    ++line;
    const auto toks = detail::split_ws(buf);
    if (toks.empty() || toks[0].front() == '%') continue;
    if (toks.size() != 3) throw ParseError(path, line, "entry needs 'row col value'");
    const std::int64_t i = detail::parse_int(toks[0], path, line);
    const std::int64_t j = detail::parse_int(toks[1], path, line);
    if (i < 1 || i > m || j < 1 || j > n) throw ParseError(path, line, "index outside the declared size");
    if (static_cast<std::int64_t>(entries.size()) == nnz) throw ParseError(path, line, "more entries than declared");
    entries.push_back({{static_cast<Index>(i - 1), static_cast<Index>(j - 1)}, detail::parse_double(toks[2], path, line)});
  }
  if (static_cast<std::int64_t>(entries.size()) != nnz)
    throw ParseError(path, line, "expected " + std::to_string(nnz) + " entries, found " + std::to_string(entries.size()));
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t e = 1; e < entries.size(); ++e)
    if (entries[e].first == entries[e - 1].first)
      throw ParseError(path, line, "duplicate entry (" + std::to_string(entries[e].first.first + 1) + "," +
                                       std::to_string(entries[e].first.second + 1) + ")");
  std::vector<std::pair<Index, Index>> idx;
  std::vector<double> values;
  idx.reserve(entries.size());
  values.reserve(entries.size());
  for (const auto& [ij, v] : entries) {
    idx.push_back(ij);
    values.push_back(v);
  }
  return {ObservationMask(static_cast<Index>(m), static_cast<Index>(n), std::move(idx)), std::move(values)};
}

/// Array format, column-major.
inline void save_dense(const std::string& path, const Matrix& a) {
  auto out = detail::open_out(path);
  out << "%%MatrixMarket matrix array real general\n";
  out << a.rows() << ' ' << a.cols() << '\n';
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i) out << detail::format_double(a(i, j)) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline Matrix load_dense(const std::string& path) {
  auto in = detail::open_in(path);
  std::string buf;
  std::size_t line = 0;
  const auto size = detail::read_header(in, buf, line, path, "array");
  if (size.size() != 2) throw ParseError(path, line, "size line needs 'rows cols'");
  const std::int64_t m = detail::parse_int(size[0], path, line);
  const std::int64_t n = detail::parse_int(size[1], path, line);
  if (m <= 0 || n <= 0 || m > std::numeric_limits<std::int32_t>::max() || n > std::numeric_limits<std::int32_t>::max())
    throw ParseError(path, line, "dimensions out of range");
  Matrix a(m, n);
  std::int64_t count = 0;
  while (std::getline(in, buf)) {
    ++line;
    const auto toks = detail::split_ws(buf);
    if (toks.empty() || toks[0].front() == '%') continue;
    if (toks.size() != 1) throw ParseError(path, line, "expected one value per line");
    if (count == m * n) throw ParseError(path, line, "more values than declared");
    a(count % m, count / m) = detail::parse_double(toks[0], path, line);
    ++count;
  }
  if (count != m * n) throw ParseError(path, line, "expected " + std::to_string(m * n) + " values, found " + std::to_string(count));
  return a;
}

// ---------------------------------------------------------------------------
// Traces

inline constexpr std::string_view kTraceHeader = "k,objective,dual_gap,step_a,step_b,rank,nnz,wall_nanos,U_L,U_S";

inline void write_trace_csv(std::ostream& out, const SolverTrace& trace) {
  auto opt = [](const std::optional<double>& x) { return x ? detail::format_double(*x) : std::string(); };
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records())
    out << r.k << ',' << detail::format_double(r.objective) << ',' << opt(r.dual_gap) << ',' << opt(r.step_a) << ','
        << opt(r.step_b) << ',' << r.rank << ',' << r.nnz << ',' << r.wall_nanos << ',' << opt(r.U_L) << ','
        << opt(r.U_S) << '\n';
}

inline void export_trace(const std::string& path, const SolverTrace& trace) {
  auto out = detail::open_out(path);
  write_trace_csv(out, trace);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline SolverTrace read_trace_csv(std::istream& in, const std::string& path = "<trace>") {
  std::string buf;
  if (!std::getline(in, buf)) throw ParseError(path, 1, "empty trace");
  if (!buf.empty() && buf.back() == '\r') buf.pop_back();
  if (buf != kTraceHeader) throw ParseError(path, 1, "unexpected header");
  SolverTrace trace;
  std::size_t line = 1;
  while (std::getline(in, buf)) {
    ++line;
    if (!buf.empty() && buf.back() == '\r') buf.pop_back();
    if (buf.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view s(buf);
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i)
      if (i == s.size() || s[i] == ',') {
        f.push_back(s.substr(start, i - start));
        start = i + 1;
      }
    if (f.size() != 10) throw ParseError(path, line, "expected 10 fields, found " + std::to_string(f.size()));
    auto opt = [&](std::string_view t) -> std::optional<double> {
      if (t.empty()) return std::nullopt;
      return detail::parse_double(t, path, line);
    };
    auto count = [&](std::string_view t) {
      const auto v = detail::parse_int(t, path, line);
      if (v < 0) throw ParseError(path, line, "negative count");
      return static_cast<std::size_t>(v);
    };
    TraceRecord r;
    r.k = count(f[0]);
    r.objective = detail::parse_double(f[1], path, line);
    r.dual_gap = opt(f[2]);
    r.step_a = opt(f[3]);
    r.step_b = opt(f[4]);
    r.rank = count(f[5]);
    r.nnz = count(f[6]);
    r.wall_nanos = detail::parse_int(f[7], path, line);
    r.U_L = opt(f[8]);
    r.U_S = opt(f[9]);
    try {
      trace.push(r);
    } catch (const std::logic_error& e) {
      throw ParseError(path, line, e.what());
    }
  }
  return trace;
}

inline SolverTrace load_trace(const std::string& path) {
  auto in = detail::open_in(path);
  return read_trace_csv(in, path);
}

inline void write_trace_jsonl(std::ostream& out, const SolverTrace& trace) {
  auto opt = [](const std::optional<double>& x) { return x ? nlohmann::json(*x) : nlohmann::json(nullptr); };
  for (const auto& r : trace.records()) {
    nlohmann::json j = {{"k", r.k},         {"objective", r.objective}, {"dual_gap", opt(r.dual_gap)},
                        {"step_a", opt(r.step_a)}, {"step_b", opt(r.step_b)},   {"rank", r.rank},
                        {"nnz", r.nnz},     {"wall_nanos", r.wall_nanos}, {"U_L", opt(r.U_L)},
                        {"U_S", opt(r.U_S)}};
    out << j.dump() << '\n';
  }
}

inline void export_trace_jsonl(const std::string& path, const SolverTrace& trace) {
  auto out = detail::open_out(path);
  write_trace_jsonl(out, trace);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// JSON configs. Keys match the struct fields; unknown keys are rejected.

namespace detail {

class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j.is_object()) throw std::invalid_argument(what_ + ": expected a JSON object");
  }
  template <class T>
  void get(const char* key, T& field, bool required = false) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      if (required) throw std::invalid_argument(what_ + ": missing '" + key + "'");
      return;
    }
    try {
      field = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(what_ + ": bad value for '" + key + "': " + e.what());
    }
  }
  template <class T>
  void get(const char* key, std::optional<T>& field) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    get(key, v);
    field = v;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw std::invalid_argument(what_ + ": unknown key '" + k + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline void from_json(const nlohmann::json& j, ConstrainedConfig& c) {
  detail::JsonReader r(j, "ConstrainedConfig");
  r.get("tau_L", c.tau_L, true);
  r.get("tau_S", c.tau_S, true);
  r.get("max_iter", c.max_iter);
  r.get("gap_tol", c.gap_tol);
  r.get("record_gap_every", c.record_gap_every);
  r.get("seed", c.seed);
  r.finish();
}

inline void to_json(nlohmann::json& j, const ConstrainedConfig& c) {
  j = {{"tau_L", c.tau_L}, {"tau_S", c.tau_S}, {"max_iter", c.max_iter}, {"record_gap_every", c.record_gap_every},
       {"seed", c.seed}};
  j["gap_tol"] = c.gap_tol ? nlohmann::json(*c.gap_tol) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, PenalizedConfig& c) {
  detail::JsonReader r(j, "PenalizedConfig");
  r.get("lambda_L", c.lambda_L, true);
  r.get("lambda_S", c.lambda_S, true);
  r.get("max_iter", c.max_iter);
  r.get("epsilon", c.epsilon);
  r.get("stall_window", c.stall_window);
  r.get("stop_on_stall", c.stop_on_stall);
  r.get("seed", c.seed);
  r.finish();
}

inline void to_json(nlohmann::json& j, const PenalizedConfig& c) {
  j = {{"lambda_L", c.lambda_L}, {"lambda_S", c.lambda_S}, {"max_iter", c.max_iter}, {"epsilon", c.epsilon},
       {"stall_window", c.stall_window}, {"stop_on_stall", c.stop_on_stall}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, IstaConfig& c) {
  detail::JsonReader r(j, "IstaConfig");
  r.get("lambda_L", c.lambda_L, true);
  r.get("lambda_S", c.lambda_S, true);
  r.get("max_iter", c.max_iter);
  r.get("target_objective", c.target_objective);
  r.get("memory_budget_entries", c.memory_budget_entries);
  r.get("seed", c.seed);
  r.finish();
}

inline void to_json(nlohmann::json& j, const IstaConfig& c) {
  j = {{"lambda_L", c.lambda_L}, {"lambda_S", c.lambda_S}, {"max_iter", c.max_iter},
       {"memory_budget_entries", c.memory_budget_entries}, {"seed", c.seed}};
  j["target_objective"] = c.target_objective ? nlohmann::json(*c.target_objective) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  detail::JsonReader r(j, "SyntheticSpec");
  r.get("m", s.m, true);
  r.get("n", s.n, true);
  r.get("r", s.r, true);
  r.get("sparse_fraction", s.sparse_fraction);
  r.get("sparse_amplitude", s.sparse_amplitude);
  r.get("noise_std", s.noise_std);
  r.get("rho", s.rho);
  r.get("seed", s.seed);
  r.finish();
}

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"m", s.m},
       {"n", s.n},
       {"r", s.r},
       {"sparse_fraction", s.sparse_fraction},
       {"sparse_amplitude", s.sparse_amplitude},
       {"noise_std", s.noise_std},
       {"rho", s.rho},
       {"seed", s.seed}};
}

inline nlohmann::json load_json(const std::string& path) {
  auto in = detail::open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 0, e.what());
  }
}

// ---------------------------------------------------------------------------
// Problem directories: observed.mtx (coordinate), L0.mtx (array), S0.mtx
// (coordinate, may be absent when S0 is empty), truth.json.

inline void save_ground_truth(const std::string& dir, const SyntheticSpec& spec, const GroundTruth& gt) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  save_masked((d / "observed.mtx").string(), gt.mask, gt.observed);
  save_dense((d / "L0.mtx").string(), gt.L0);
  if (!gt.S0.empty()) {
    std::vector<std::pair<Index, Index>> idx;
    std::vector<double> vals;
    for (const auto& e : gt.S0) {
      idx.push_back({e.i, e.j});
      vals.push_back(e.value);
    }
    save_masked((d / "S0.mtx").string(), ObservationMask(gt.L0.rows(), gt.L0.cols(), idx), vals);
  }
  nlohmann::json meta = {{"spec", spec}, {"tau_L_true", gt.tau_L_true}, {"tau_S_true", gt.tau_S_true}};
  auto out = detail::open_out((d / "truth.json").string());
  out << meta.dump(2) << '\n';
}

}  // namespace cpcp
