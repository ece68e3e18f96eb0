#pragma once

/**
 * @file
 * @brief Problem configuration files.
 *
 * A small TOML subset: `[table]` headers (dotted names allowed), `key = value`
 * with numbers (including inf and nan), booleans, double-quoted strings and
 * arrays (nested, may span lines), `#` comments. Matrices are row-major arrays
 * of arrays; a weight matrix may also be a scalar s meaning s I. Errors name
 * the line of the offending token when there is one.
 */

#include "nlsls/benchmark.hpp"
#include "nlsls/curvature.hpp"
#include "nlsls/robust_ocp.hpp"
#include "nlsls/sqp.hpp"

#include <Eigen/Core>

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nlsls {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& msg)
      : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + msg),
        line_(line) {}
  /// 0 when the error is not tied to a line (e.g. a missing key).
  int line() const { return line_; }

 private:
  int line_;
};

namespace config {

struct Value {
  enum class Kind { number, boolean, string, array };
  Kind kind = Kind::number;
  double number = 0.0;
  bool boolean = false;
  std::string text;
  std::vector<Value> items;
  int line = 0;
};

inline const char* kind_name(Value::Kind k) {
  switch (k) {
    case Value::Kind::number: return "number";
    case Value::Kind::boolean: return "boolean";
    case Value::Kind::string: return "string";
    case Value::Kind::array: return "array";
  }
  return "value";
}

struct Document {
  std::string source;
  std::map<std::string, Value> entries;  ///< full dotted key -> value
};

class Parser {
 public:
  Parser(std::string_view text, std::string source) : s_(text), src_(std::move(source)) {}

  Document parse() {
    Document doc;
    doc.source = src_;
    std::string table;
    std::set<std::string> tables;
    for (;;) {
      skip_blank(true);
      if (eof()) break;
      if (peek() == '[') {
        ++pos_;
        skip_blank(false);
        table = key();
        skip_blank(false);
        expect(']');
        if (!tables.insert(table).second) fail("table [" + table + "] defined twice");
      } else {
        const int at = line_;
        std::string k = key();
        if (!table.empty()) k = table + "." + k;
        skip_blank(false);
        expect('=');
        skip_blank(false);
        Value v = value();
        if (!doc.entries.emplace(k, std::move(v)).second) throw ConfigError(src_, at, "duplicate key '" + k + "'");
      }
      skip_blank(false);
      if (!eof() && peek() != '\n') fail(std::string("unexpected '") + peek() + "' after value");
    }
    return doc;
  }

 private:
  std::string_view s_;
  std::string src_;
  std::size_t pos_ = 0;
  int line_ = 1;

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return s_[pos_]; }
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(src_, line_, msg); }

  void expect(char c) {
    if (eof() || peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  // Spaces, tabs and comments; newlines too when @p newlines.
  void skip_blank(bool newlines) {
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r') {
        ++pos_;
      } else if (c == '#') {
        while (!eof() && peek() != '\n') ++pos_;
      } else if (c == '\n' && newlines) {
        ++pos_;
        ++line_;
      } else {
        break;
      }
    }
  }

  static bool bare(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  }

  std::string key() {
    std::string k;
    for (;;) {
      const std::size_t start = pos_;
      while (!eof() && bare(peek())) ++pos_;
      if (pos_ == start) fail("expected a key");
      k.append(s_.substr(start, pos_ - start));
      if (eof() || peek() != '.') break;
      k.push_back('.');
      ++pos_;
    }
    return k;
  }

  Value value() {
    if (eof()) fail("expected a value");
    Value v;
    v.line = line_;
    const char c = peek();
    if (c == '"') {
      v.kind = Value::Kind::string;
      v.text = string();
    } else if (c == '[') {
      v.kind = Value::Kind::array;
      ++pos_;
      for (;;) {
        skip_blank(true);
        if (eof()) throw ConfigError(src_, v.line, "unterminated array");
        if (peek() == ']') break;
        v.items.push_back(value());
        skip_blank(true);
        if (!eof() && peek() == ',') {
          ++pos_;
          continue;
        }
        if (eof()) throw ConfigError(src_, v.line, "unterminated array");
        if (peek() != ']') fail("expected ',' or ']' in array");
      }
      ++pos_;
    } else {
      const std::size_t start = pos_;
      while (!eof() && (bare(peek()) || peek() == '.' || peek() == '+')) ++pos_;
      const std::string tok(s_.substr(start, pos_ - start));
      if (tok.empty()) fail(std::string("unexpected '") + c + "'");
      if (tok == "true" || tok == "false") {
        v.kind = Value::Kind::boolean;
        v.boolean = tok == "true";
      } else {
        v.number = number(tok);
      }
    }
    return v;
  }

  std::string string() {
    ++pos_;
    std::string out;
    for (;;) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (eof()) fail("unterminated string");
      switch (s_[pos_++]) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        default: fail("unsupported escape in string");
      }
    }
    return out;
  }

  double number(std::string tok) const {
    std::string t;
    for (std::size_t i = 0; i < tok.size(); ++i) {
      if (tok[i] != '_') {
        t.push_back(tok[i]);
      } else if (i == 0 || i + 1 == tok.size() || !std::isdigit(static_cast<unsigned char>(tok[i - 1])) ||
                 !std::isdigit(static_cast<unsigned char>(tok[i + 1]))) {
        fail("misplaced '_' in number '" + tok + "'");
      }
    }
    double sign = 1.0;
    std::string_view body = t;
    if (!body.empty() && (body[0] == '+' || body[0] == '-')) {
      sign = body[0] == '-' ? -1.0 : 1.0;
      body.remove_prefix(1);
    }
    if (body == "inf") return sign * std::numeric_limits<double>::infinity();
    if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
    double x = 0.0;
    const auto [end, ec] = std::from_chars(body.data(), body.data() + body.size(), x);
    if (body.empty() || body[0] == '+' || body[0] == '-' || ec != std::errc() || end != body.data() + body.size()) {
      fail("invalid value '" + tok + "'");
    }
    return sign * x;
  }
};

inline Document parse(std::string_view text, std::string source = "<config>") {
  return Parser(text, std::move(source)).parse();
}

/// Typed access to a Document; remembers which keys were read so leftovers can be reported.
class Reader {
 public:
  explicit Reader(const Document& doc) : doc_(doc) {}

  bool has(const std::string& k) const { return doc_.entries.count(k) > 0; }

  const Value& get(const std::string& k) {
    const auto it = doc_.entries.find(k);
    if (it == doc_.entries.end()) throw ConfigError(doc_.source, 0, "missing key '" + k + "'");
    used_.insert(k);
    return it->second;
  }

  [[noreturn]] void fail(const std::string& k, const std::string& msg) const {
    const auto it = doc_.entries.find(k);
    throw ConfigError(doc_.source, it == doc_.entries.end() ? 0 : it->second.line, "'" + k + "': " + msg);
  }

  const Value& typed(const std::string& k, Value::Kind kind) {
    const Value& v = get(k);
    if (v.kind != kind) fail(k, std::string("expected ") + kind_name(kind) + ", got " + kind_name(v.kind));
    return v;
  }

  double number(const std::string& k) { return typed(k, Value::Kind::number).number; }
  double number(const std::string& k, double def) { return has(k) ? number(k) : def; }

  long long integer(const std::string& k, long long def) {
    if (!has(k)) return def;
    const double x = number(k);
    if (!(std::abs(x) < 9.0e15) || std::floor(x) != x) fail(k, "expected an integer");
    return static_cast<long long>(x);
  }

  std::string string(const std::string& k) { return typed(k, Value::Kind::string).text; }
  std::string string(const std::string& k, const std::string& def) { return has(k) ? string(k) : def; }

  bool boolean(const std::string& k, bool def) { return has(k) ? typed(k, Value::Kind::boolean).boolean : def; }

  VectorXd vector(const std::string& k, Eigen::Index n = -1) {
    const Value& v = typed(k, Value::Kind::array);
    VectorXd out(static_cast<Eigen::Index>(v.items.size()));
    for (std::size_t i = 0; i < v.items.size(); ++i) {
      if (v.items[i].kind != Value::Kind::number) fail(k, "expected an array of numbers");
      out[static_cast<Eigen::Index>(i)] = v.items[i].number;
    }
    if (n >= 0 && out.size() != n) fail(k, "expected " + std::to_string(n) + " entries, got " + std::to_string(out.size()));
    return out;
  }

  /// Array of equal-length rows; @p rows / @p cols < 0 leave that size free.
  MatrixXd matrix(const std::string& k, Eigen::Index rows = -1, Eigen::Index cols = -1) {
    const Value& v = typed(k, Value::Kind::array);
    const auto r = static_cast<Eigen::Index>(v.items.size());
    Eigen::Index c = cols;
    if (r > 0) {
      if (v.items[0].kind != Value::Kind::array) fail(k, "expected an array of rows");
      c = static_cast<Eigen::Index>(v.items[0].items.size());
    }
    if (c < 0) c = 0;
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      const Value& row = v.items[static_cast<std::size_t>(i)];
      if (row.kind != Value::Kind::array || static_cast<Eigen::Index>(row.items.size()) != c) {
        fail(k, "row " + std::to_string(i) + " has the wrong length");
      }
      for (Eigen::Index j = 0; j < c; ++j) {
        const Value& x = row.items[static_cast<std::size_t>(j)];
        if (x.kind != Value::Kind::number) fail(k, "expected numbers");
        m(i, j) = x.number;
      }
    }
    if ((rows >= 0 && m.rows() != rows) || (cols >= 0 && m.cols() != cols)) {
      fail(k, "expected a " + std::to_string(rows) + "x" + std::to_string(cols) + " matrix, got " +
                  std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    return m;
  }

  /// n x n matrix, or a scalar s meaning s I.
  MatrixXd weight(const std::string& k, Eigen::Index n) {
    const Value& v = get(k);
    if (v.kind == Value::Kind::number) return v.number * MatrixXd::Identity(n, n);
    return matrix(k, n, n);
  }

  /// Keys present in the document that were never read.
  void reject_unused() const {
    for (const auto& [k, v] : doc_.entries) {
      if (!used_.count(k)) throw ConfigError(doc_.source, v.line, "unknown key '" + k + "'");
    }
  }

 private:
  const Document& doc_;
  std::set<std::string> used_;
};

}  // namespace config

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 0xF];
  return s;
}

struct CurvatureSettings {
  bool estimate = false;  ///< true: mu comes from mu_monte_carlo before solving
  long long samples = 10000;
  std::uint64_t seed = 0;
  SampleDomain domain;
};

struct ProblemConfig {
  std::string source;
  std::string model_kind;
  RobustProblem problem;
  SqpOptions sqp;
  CurvatureSettings curvature;
  std::uint64_t seed = 0;
  std::uint64_t hash = 0;  ///< fnv1a64 of the file text
};

/**
 * Builds a problem from config text. Tables: top level (horizon, mode, seed),
 * [model], [initial_state], [constraints], [disturbance], [curvature], [cost],
 * [sqp]. With estimated curvature, problem.mu is left at zero until
 * resolve_curvature runs.
 */
inline ProblemConfig parse_config(std::string_view text, const std::string& source = "<config>") {
  const auto doc = config::parse(text, source);
  config::Reader in(doc);
  ProblemConfig cfg;
  cfg.source = source;
  cfg.hash = fnv1a64(text);
  auto& p = cfg.problem;

  const long long horizon = in.integer("horizon", -1);
  if (horizon < 1) {
    if (!in.has("horizon")) throw ConfigError(source, 0, "missing key 'horizon'");
    in.fail("horizon", "must be >= 1");
  }
  p.horizon = static_cast<int>(horizon);
  try {
    p.mode = response_mode_from_string(in.string("mode", "closed_loop"));
  } catch (const std::invalid_argument& e) {
    in.fail("mode", e.what());
  }
  const long long seed = in.integer("seed", 0);
  if (seed < 0) in.fail("seed", "must be nonnegative");
  cfg.seed = static_cast<std::uint64_t>(seed);

  cfg.model_kind = in.string("model.kind");
  if (cfg.model_kind == "satellite") {
    const Eigen::Vector3d inertia = in.has("model.inertia") ? Eigen::Vector3d(in.vector("model.inertia", 3))
                                                            : Eigen::Vector3d(5.0, 2.0, 1.0);
    if ((inertia.array() <= 0.0).any()) in.fail("model.inertia", "entries must be positive");
    const double dt = in.number("model.dt", 1.0);
    if (!(dt > 0.0)) in.fail("model.dt", "must be positive");
    p.model = make_satellite_model(inertia, dt);
  } else if (cfg.model_kind == "linear") {
    const MatrixXd a = in.matrix("model.A");
    if (a.rows() != a.cols() || a.rows() == 0) in.fail("model.A", "must be square and nonempty");
    const MatrixXd b = in.matrix("model.B", a.rows());
    p.model = std::make_shared<LinearModel>(a, b);
  } else {
    in.fail("model.kind", "unknown model '" + cfg.model_kind + "' (expected satellite or linear)");
  }
  const int nx = p.nx(), nu = p.nu();

  if (in.has("initial_state.x0")) {
    p.x0 = in.vector("initial_state.x0", nx);
  } else if (cfg.model_kind == "satellite" && in.has("initial_state.euler_deg")) {
    constexpr double deg = 3.14159265358979323846 / 180.0;
    const VectorXd angles = in.vector("initial_state.euler_deg", 3) * deg;
    p.x0.resize(7);
    p.x0.head(4) = quaternion_from_euler(angles[0], angles[1], angles[2]);
    p.x0.tail(3) = in.vector("initial_state.rates_deg", 3) * deg;
  } else {
    throw ConfigError(source, 0, "missing key 'initial_state.x0'");
  }

  const Eigen::Index n = nx + nu;
  std::vector<MatrixXd> c_blocks;
  std::vector<VectorXd> b_blocks;
  if (in.has("constraints.lower") || in.has("constraints.upper")) {
    const double inf = std::numeric_limits<double>::infinity();
    const VectorXd lo = in.has("constraints.lower") ? in.vector("constraints.lower", n) : VectorXd::Constant(n, -inf);
    const VectorXd hi = in.has("constraints.upper") ? in.vector("constraints.upper", n) : VectorXd::Constant(n, inf);
    const auto box = Polytope::from_bounds(lo, hi);
    c_blocks.push_back(box.C);
    b_blocks.push_back(box.b);
  }
  if (in.has("constraints.C")) {
    c_blocks.push_back(in.matrix("constraints.C", -1, n));
    b_blocks.push_back(in.vector("constraints.b", c_blocks.back().rows()));
  }
  Eigen::Index rows = 0;
  for (const auto& c : c_blocks) rows += c.rows();
  p.polytope.C.resize(rows, n);
  p.polytope.b.resize(rows);
  rows = 0;
  for (std::size_t i = 0; i < c_blocks.size(); ++i) {
    p.polytope.C.middleRows(rows, c_blocks[i].rows()) = c_blocks[i];
    p.polytope.b.segment(rows, b_blocks[i].size()) = b_blocks[i];
    rows += c_blocks[i].rows();
  }
  if (in.has("constraints.box_lower") || in.has("constraints.box_upper")) {
    p.polytope.box_lower = in.vector("constraints.box_lower", n);
    p.polytope.box_upper = in.vector("constraints.box_upper", n);
  }

  p.dist.E = in.matrix("disturbance.E", nx);

  const std::string mu_source = in.string("curvature.source", "inline");
  if (mu_source == "inline") {
    const VectorXd mu = in.vector("curvature.mu", nx);
    if ((mu.array() < 0.0).any() || !mu.allFinite()) in.fail("curvature.mu", "entries must be finite and nonnegative");
    p.mu = CurvatureBound::user(mu);
  } else if (mu_source == "estimate") {
    cfg.curvature.estimate = true;
    p.mu = CurvatureBound::zero(nx);
  } else {
    in.fail("curvature.source", "expected inline or estimate");
  }
  cfg.curvature.samples = in.integer("curvature.samples", 10000);
  if (cfg.curvature.samples < 1) in.fail("curvature.samples", "must be >= 1");
  const long long mu_seed = in.integer("curvature.seed", seed);
  if (mu_seed < 0) in.fail("curvature.seed", "must be nonnegative");
  cfg.curvature.seed = static_cast<std::uint64_t>(mu_seed);
  if (in.has("curvature.lower") || in.has("curvature.upper")) {
    cfg.curvature.domain.lower = in.vector("curvature.lower", n);
    cfg.curvature.domain.upper = in.vector("curvature.upper", n);
    if (in.has("curvature.unit_norm_blocks")) {
      const MatrixXd blocks = in.matrix("curvature.unit_norm_blocks", -1, 2);
      for (Eigen::Index i = 0; i < blocks.rows(); ++i) {
        cfg.curvature.domain.unit_norm_blocks.push_back({static_cast<int>(blocks(i, 0)), static_cast<int>(blocks(i, 1))});
      }
    }
    try {
      cfg.curvature.domain.validate(n);
    } catch (const std::invalid_argument& e) {
      in.fail("curvature.lower", e.what());
    }
  } else if (cfg.model_kind == "satellite") {
    cfg.curvature.domain = satellite_sample_domain();
  } else if (cfg.curvature.estimate) {
    throw ConfigError(source, 0, "curvature estimation needs 'curvature.lower' and 'curvature.upper'");
  }

  p.cost.Q = in.weight("cost.Q", nx);
  p.cost.R = in.weight("cost.R", nu);
  if (in.has("cost.Q_terminal")) p.cost.Q_terminal = in.weight("cost.Q_terminal", nx);
  p.cost.z_ref = in.has("cost.z_ref") ? in.vector("cost.z_ref", nx) : VectorXd::Zero(nx);
  p.cost.v_ref = in.has("cost.v_ref") ? in.vector("cost.v_ref", nu) : VectorXd::Zero(nu);
  p.cost.alpha = in.number("cost.alpha", p.cost.alpha);

  auto& o = cfg.sqp;
  o.gamma = in.number("sqp.gamma", o.gamma);
  o.conv_tol = in.number("sqp.conv_tol", o.conv_tol);
  o.max_iters = static_cast<int>(in.integer("sqp.max_iters", o.max_iters));
  const std::string ls = in.string("sqp.line_search", "full_step");
  if (ls == "full_step") {
    o.line_search = LineSearch::full_step;
  } else if (ls == "backtracking") {
    o.line_search = LineSearch::backtracking;
  } else {
    in.fail("sqp.line_search", "expected full_step or backtracking");
  }
  o.qp_tol = in.number("sqp.qp_tol", o.qp_tol);
  o.cert_tol = in.number("sqp.cert_tol", o.cert_tol);
  o.tau_cap = in.number("sqp.tau_cap", o.tau_cap);
  o.elastic_penalty = in.number("sqp.elastic_penalty", o.elastic_penalty);

  in.reject_unused();
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 0, e.what());
  }
  return cfg;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline ProblemConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path), path.string());
}

/// Runs the Monte-Carlo curvature estimate when the config asks for it.
inline void resolve_curvature(ProblemConfig& cfg, unsigned threads = 0) {
  if (!cfg.curvature.estimate) return;
  cfg.problem.mu = mu_monte_carlo(*cfg.problem.model, cfg.curvature.domain, cfg.curvature.samples,
                                  cfg.curvature.seed, threads);
}

}  // namespace nlsls
