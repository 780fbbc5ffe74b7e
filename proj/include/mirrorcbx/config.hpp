// Experiment configuration: strict JSON schema, parsing and serialization.
//
// Unknown keys are rejected with their dotted path. Matrices and vectors are
// inline arrays or the path of a CSV file relative to the config file.

#pragma once

#include "mirrorcbx/core.hpp"
#include "mirrorcbx/mirror_maps.hpp"
#include "mirrorcbx/objectives.hpp"
#include "mirrorcbx/optimizer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

namespace mirrorcbx {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config types

struct ProblemConfig {
  std::string kind = "ackley";
  int dim = 1;
  // ackley, stiefel_ackley
  AckleyParams ackley;
  // ackley, holder_table, quadratic: shift or center
  Vector shift;
  std::optional<Vector> target;
  // linear
  Matrix a;
  Vector b;
  std::string fidelity = "quadratic";
  // deconvolution, simplex_regression, phase_retrieval
  int kernel_size = 10;
  double sigma_kappa = 2.5;
  int n_peaks = 3;
  double noise_factor = 0.0;
  int n_measurements = 1;
  // stiefel_ackley
  int n = 1;
  int p = 1;
};

inline const std::vector<std::string>& problem_kinds() {
  static const std::vector<std::string> kinds = {"ackley",        "holder_table",       "quadratic",
                                                  "linear",        "deconvolution",      "simplex_regression",
                                                  "phase_retrieval", "stiefel_ackley"};
  return kinds;
}

/// Consensus optimizers plus the two gradient baselines the harness can run.
enum class MethodKind { consensus, wirtinger_flow, mirror_descent };

struct OptimizerConfig {
  MethodKind method = MethodKind::consensus;
  OptimizerSpec spec;
  int n_particles = 50;
  InitSpec init = init::Normal{};
};

struct ExperimentConfig {
  std::string experiment = "experiment";
  std::uint64_t seed = 0;
  int n_runs = 1;
  int stride = 1;
  ProblemConfig problem;
  OptimizerConfig optimizer;
  SuccessNorm success_norm = SuccessNorm::l2;
  double success_tol = 0.1;
  double zero_tol = 0.0;
  bool record_lyapunov = false;
  bool record_mass_in_ball = false;
  std::string output_dir;
  std::filesystem::path base_dir;  // directory CSV references resolve against
};

// ---------------------------------------------------------------------------
// Reading helpers

namespace cfg {

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void check_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected an object");
}

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  check_object(j, path);
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ConfigError("unknown key '" + join(path, item.key()) + "'");
  }
}

inline double to_double(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "Infinity") return kInf;
    if (s == "-inf" || s == "-Infinity") return -kInf;
  }
  throw ConfigError(path + ": expected a number");
}

inline json from_double(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

inline double number(const json& j, const std::string& path, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  return to_double(j.at(key), join(path, key));
}

inline double required_number(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError("missing required key '" + join(path, key) + "'");
  return to_double(j.at(key), join(path, key));
}

inline int integer(const json& j, const std::string& path, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key) + ": expected an integer");
  return v.get<int>();
}

inline bool boolean(const json& j, const std::string& path, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(join(path, key) + ": expected true or false");
  return v.get<bool>();
}

inline std::string string(const json& j, const std::string& path, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_string()) throw ConfigError(join(path, key) + ": expected a string");
  return v.get<std::string>();
}

inline std::string required_string(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError("missing required key '" + join(path, key) + "'");
  return string(j, path, key, "");
}

inline Matrix read_csv_matrix(const std::filesystem::path& file, const std::string& path) {
  std::ifstream in(file);
  if (!in) throw ConfigError(path + ": cannot open '" + file.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError(path + ": non-numeric CSV cell '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw ConfigError(path + ": ragged CSV rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(path + ": empty CSV file");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

inline Matrix matrix(const json& v, const std::string& path, const std::filesystem::path& base) {
  if (v.is_string()) return read_csv_matrix(base / v.get<std::string>(), path);
  if (!v.is_array() || v.empty()) throw ConfigError(path + ": expected a nonempty array of rows or a CSV path");
  const std::size_t cols = v.front().is_array() ? v.front().size() : 0;
  if (cols == 0) throw ConfigError(path + ": expected an array of rows");
  Matrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_array() || v[i].size() != cols) throw ConfigError(path + ": ragged matrix rows");
    for (std::size_t j = 0; j < cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          to_double(v[i][j], path + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
  }
  return m;
}

/// Array, CSV path (single row or column), or a scalar broadcast to `dim`.
inline Vector vector(const json& v, const std::string& path, const std::filesystem::path& base, int dim = -1) {
  if (v.is_number() && dim >= 0) return Vector::Constant(dim, v.get<double>());
  if (v.is_string()) {
    const Matrix m = read_csv_matrix(base / v.get<std::string>(), path);
    if (m.rows() != 1 && m.cols() != 1) throw ConfigError(path + ": CSV vector must be a single row or column");
    return Eigen::Map<const Vector>(m.data(), m.size());
  }
  if (!v.is_array()) throw ConfigError(path + ": expected an array");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = to_double(v[i], path + "[" + std::to_string(i) + "]");
  return out;
}

inline json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(from_double(v[i]));
  return out;
}

inline json matrix_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(m.row(i).transpose()));
  return out;
}

}  // namespace cfg

// ---------------------------------------------------------------------------
// Parsing

inline ConstraintSet parse_constraint(const json& j, const std::string& path, const std::filesystem::path& base) {
  cfg::check_object(j, path);
  const std::string kind = cfg::required_string(j, path, "kind");
  if (kind == "whole_space") {
    cfg::check_keys(j, path, {"kind"});
    return sets::WholeSpace{};
  }
  if (kind == "hyperplane") {
    cfg::check_keys(j, path, {"kind", "normal", "offset"});
    if (!j.contains("normal")) throw ConfigError("missing required key '" + cfg::join(path, "normal") + "'");
    sets::Hyperplane h{cfg::vector(j.at("normal"), cfg::join(path, "normal"), base), cfg::number(j, path, "offset", 0.0)};
    if (!(h.normal.norm() > 0.0)) throw ConfigError(cfg::join(path, "normal") + ": must be nonzero");
    return h;
  }
  if (kind == "sphere") {
    cfg::check_keys(j, path, {"kind"});
    return sets::UnitSphere{};
  }
  if (kind == "quadric") {
    cfg::check_keys(j, path, {"kind", "Q", "n", "c", "tol", "max_iter"});
    if (!j.contains("Q") || !j.contains("n")) throw ConfigError(path + ": quadric needs Q and n");
    return Quadric(cfg::matrix(j.at("Q"), cfg::join(path, "Q"), base), cfg::vector(j.at("n"), cfg::join(path, "n"), base),
                   cfg::number(j, path, "c", 0.0), cfg::number(j, path, "tol", 1e-8), cfg::integer(j, path, "max_iter", 50));
  }
  if (kind == "linf_sphere") {
    cfg::check_keys(j, path, {"kind"});
    return sets::LinfSphere{};
  }
  if (kind == "stiefel") {
    cfg::check_keys(j, path, {"kind", "n", "p"});
    sets::Stiefel s{cfg::integer(j, path, "n", 1), cfg::integer(j, path, "p", 1)};
    if (s.n < s.p || s.p < 1) throw ConfigError(path + ": stiefel needs n >= p >= 1");
    return s;
  }
  if (kind == "ball") {
    cfg::check_keys(j, path, {"kind"});
    return sets::UnitBall{};
  }
  throw ConfigError(cfg::join(path, "kind") + ": unknown constraint kind '" + kind + "'");
}

inline json constraint_json(const ConstraintSet& set) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, sets::WholeSpace>) {
          return {{"kind", "whole_space"}};
        } else if constexpr (std::is_same_v<T, sets::Hyperplane>) {
          return {{"kind", "hyperplane"}, {"normal", cfg::vector_json(s.normal)}, {"offset", s.offset}};
        } else if constexpr (std::is_same_v<T, sets::UnitSphere>) {
          return {{"kind", "sphere"}};
        } else if constexpr (std::is_same_v<T, Quadric>) {
          return {{"kind", "quadric"}, {"Q", cfg::matrix_json(s.q())}, {"n", cfg::vector_json(s.n())},
                  {"c", s.c()},        {"tol", s.tol()},               {"max_iter", s.max_iter()}};
        } else if constexpr (std::is_same_v<T, sets::LinfSphere>) {
          return {{"kind", "linf_sphere"}};
        } else if constexpr (std::is_same_v<T, sets::Stiefel>) {
          return {{"kind", "stiefel"}, {"n", s.n}, {"p", s.p}};
        } else {
          return {{"kind", "ball"}};
        }
      },
      set);
}

inline MirrorMap parse_map(const json& j, const std::string& path, const std::filesystem::path& base) {
  cfg::check_object(j, path);
  const std::string kind = cfg::required_string(j, path, "kind");
  if (kind == "quadratic") {
    cfg::check_keys(j, path, {"kind"});
    return maps::Quadratic{};
  }
  if (kind == "preconditioned") {
    cfg::check_keys(j, path, {"kind", "H"});
    if (!j.contains("H")) throw ConfigError("missing required key '" + cfg::join(path, "H") + "'");
    return maps::Preconditioned(cfg::matrix(j.at("H"), cfg::join(path, "H"), base));
  }
  if (kind == "elastic_net") {
    cfg::check_keys(j, path, {"kind", "lambda"});
    const double lambda = cfg::number(j, path, "lambda", 1.0);
    if (!(lambda >= 0.0)) throw ConfigError(cfg::join(path, "lambda") + ": must be >= 0");
    return maps::ElasticNet{lambda};
  }
  if (kind == "neg_log_entropy") {
    cfg::check_keys(j, path, {"kind"});
    return maps::NegLogEntropy{};
  }
  if (kind == "indicator") {
    cfg::check_keys(j, path, {"kind", "set"});
    if (!j.contains("set")) throw ConfigError("missing required key '" + cfg::join(path, "set") + "'");
    return maps::Indicator{parse_constraint(j.at("set"), cfg::join(path, "set"), base)};
  }
  if (kind == "ball") {
    cfg::check_keys(j, path, {"kind"});
    return maps::Ball{};
  }
  throw ConfigError(cfg::join(path, "kind") + ": unknown mirror map kind '" + kind + "'");
}

inline json map_json(const MirrorMap& map) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, maps::Quadratic>) {
          return {{"kind", "quadratic"}};
        } else if constexpr (std::is_same_v<T, maps::Preconditioned>) {
          return {{"kind", "preconditioned"}, {"H", cfg::matrix_json(m.h)}};
        } else if constexpr (std::is_same_v<T, maps::ElasticNet>) {
          return {{"kind", "elastic_net"}, {"lambda", m.lambda}};
        } else if constexpr (std::is_same_v<T, maps::NegLogEntropy>) {
          return {{"kind", "neg_log_entropy"}};
        } else if constexpr (std::is_same_v<T, maps::Indicator>) {
          return {{"kind", "indicator"}, {"set", constraint_json(m.set)}};
        } else {
          return {{"kind", "ball"}};
        }
      },
      map);
}

inline InitSpec parse_init(const json& j, const std::string& path, const std::filesystem::path& base = {}) {
  cfg::check_object(j, path);
  const std::string kind = cfg::required_string(j, path, "kind");
  if (kind == "normal") {
    cfg::check_keys(j, path, {"kind", "mean", "std"});
    return init::Normal{cfg::number(j, path, "mean", 0.0), cfg::number(j, path, "std", 1.0)};
  }
  if (kind == "uniform") {
    cfg::check_keys(j, path, {"kind", "lo", "hi"});
    return init::Uniform{cfg::number(j, path, "lo", 0.0), cfg::number(j, path, "hi", 1.0)};
  }
  if (kind == "simplex") {
    cfg::check_keys(j, path, {"kind"});
    return init::Simplex{};
  }
  if (kind == "sphere") {
    cfg::check_keys(j, path, {"kind", "center", "radius"});
    return init::Sphere{cfg::number(j, path, "center", 0.0), cfg::number(j, path, "radius", 1.0)};
  }
  if (kind == "stiefel") {
    cfg::check_keys(j, path, {"kind", "n", "p"});
    return init::Stiefel{cfg::integer(j, path, "n", 1), cfg::integer(j, path, "p", 1)};
  }
  if (kind == "annulus") {
    cfg::check_keys(j, path, {"kind", "r_min", "r_max", "antithetic"});
    return init::Annulus{cfg::number(j, path, "r_min", 1.0), cfg::number(j, path, "r_max", 2.0),
                         cfg::boolean(j, path, "antithetic", true)};
  }
  if (kind == "explicit") {
    // One row per particle, inline or as a CSV path.
    cfg::check_keys(j, path, {"kind", "points"});
    if (!j.contains("points")) throw ConfigError(cfg::join(path, "points") + ": required");
    return init::Explicit{cfg::matrix(j.at("points"), cfg::join(path, "points"), base)};
  }
  throw ConfigError(cfg::join(path, "kind") + ": unknown init kind '" + kind + "'");
}

inline json init_json(const InitSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, init::Normal>) {
          return {{"kind", "normal"}, {"mean", s.mean}, {"std", s.std}};
        } else if constexpr (std::is_same_v<T, init::Uniform>) {
          return {{"kind", "uniform"}, {"lo", s.lo}, {"hi", s.hi}};
        } else if constexpr (std::is_same_v<T, init::Simplex>) {
          return {{"kind", "simplex"}};
        } else if constexpr (std::is_same_v<T, init::Sphere>) {
          return {{"kind", "sphere"}, {"center", s.center}, {"radius", s.radius}};
        } else if constexpr (std::is_same_v<T, init::Stiefel>) {
          return {{"kind", "stiefel"}, {"n", s.n}, {"p", s.p}};
        } else if constexpr (std::is_same_v<T, init::Annulus>) {
          return {{"kind", "annulus"}, {"r_min", s.r_min}, {"r_max", s.r_max}, {"antithetic", s.antithetic}};
        } else {
          return {{"kind", "explicit"}, {"points", cfg::matrix_json(s.data)}};
        }
      },
      spec);
}

inline ProblemConfig parse_problem(const json& j, const std::string& path, const std::filesystem::path& base) {
  cfg::check_object(j, path);
  ProblemConfig p;
  p.kind = cfg::required_string(j, path, "kind");
  auto target = [&](int dim) {
    if (j.contains("target")) p.target = cfg::vector(j.at("target"), cfg::join(path, "target"), base, dim);
  };
  if (p.kind == "ackley") {
    cfg::check_keys(j, path, {"kind", "dim", "a", "b", "c", "shift", "target"});
    p.dim = cfg::integer(j, path, "dim", 1);
    p.ackley = {cfg::number(j, path, "a", 20.0), cfg::number(j, path, "b", 0.1), cfg::number(j, path, "c", 1.0)};
    p.shift = j.contains("shift") ? cfg::vector(j.at("shift"), cfg::join(path, "shift"), base, p.dim) : Vector::Zero(p.dim);
    target(p.dim);
  } else if (p.kind == "holder_table") {
    cfg::check_keys(j, path, {"kind", "shift", "target"});
    p.dim = 2;
    p.shift = j.contains("shift") ? cfg::vector(j.at("shift"), cfg::join(path, "shift"), base, 2) : Vector::Zero(2);
    target(2);
  } else if (p.kind == "quadratic") {
    cfg::check_keys(j, path, {"kind", "dim", "center", "target"});
    p.dim = cfg::integer(j, path, "dim", 1);
    p.shift = j.contains("center") ? cfg::vector(j.at("center"), cfg::join(path, "center"), base, p.dim) : Vector::Zero(p.dim);
    target(p.dim);
  } else if (p.kind == "linear") {
    cfg::check_keys(j, path, {"kind", "A", "b", "fidelity", "target"});
    if (!j.contains("A") || !j.contains("b")) throw ConfigError(path + ": linear problem needs A and b");
    p.a = cfg::matrix(j.at("A"), cfg::join(path, "A"), base);
    p.b = cfg::vector(j.at("b"), cfg::join(path, "b"), base);
    p.dim = static_cast<int>(p.a.cols());
    p.fidelity = cfg::string(j, path, "fidelity", "quadratic");
    if (p.fidelity != "quadratic" && p.fidelity != "l1") throw ConfigError(cfg::join(path, "fidelity") + ": expected quadratic or l1");
    target(p.dim);
  } else if (p.kind == "deconvolution") {
    cfg::check_keys(j, path, {"kind", "dim", "kernel_size", "sigma_kappa", "n_peaks", "noise_factor"});
    p.dim = cfg::integer(j, path, "dim", 100);
    p.kernel_size = cfg::integer(j, path, "kernel_size", 10);
    p.sigma_kappa = cfg::number(j, path, "sigma_kappa", 2.5);
    p.n_peaks = cfg::integer(j, path, "n_peaks", 3);
    p.noise_factor = cfg::number(j, path, "noise_factor", 0.0);
  } else if (p.kind == "simplex_regression") {
    cfg::check_keys(j, path, {"kind", "dim", "n_measurements", "noise_factor"});
    p.dim = cfg::integer(j, path, "dim", 100);
    p.n_measurements = cfg::integer(j, path, "n_measurements", 200);
    p.noise_factor = cfg::number(j, path, "noise_factor", 0.0);
  } else if (p.kind == "phase_retrieval") {
    cfg::check_keys(j, path, {"kind", "dim", "n_measurements", "noise_factor"});
    p.dim = cfg::integer(j, path, "dim", 32);
    p.n_measurements = cfg::integer(j, path, "n_measurements", 128);
    p.noise_factor = cfg::number(j, path, "noise_factor", 0.0);
  } else if (p.kind == "stiefel_ackley") {
    cfg::check_keys(j, path, {"kind", "n", "p", "a", "b", "c"});
    p.n = cfg::integer(j, path, "n", 10);
    p.p = cfg::integer(j, path, "p", 5);
    if (p.n < p.p || p.p < 1) throw ConfigError(path + ": stiefel_ackley needs n >= p >= 1");
    p.dim = p.n * p.p;
    p.ackley = {cfg::number(j, path, "a", 20.0), cfg::number(j, path, "b", 0.1), cfg::number(j, path, "c", 1.0)};
  } else {
    throw ConfigError(cfg::join(path, "kind") + ": unknown problem kind '" + p.kind + "'");
  }
  if (p.dim < 1) throw ConfigError(cfg::join(path, "dim") + ": must be >= 1");
  if (p.target && p.target->size() != p.dim) throw ConfigError(cfg::join(path, "target") + ": wrong dimension");
  if (p.shift.size() != 0 && p.shift.size() != p.dim) throw ConfigError(path + ": shift has the wrong dimension");
  return p;
}

inline json problem_json(const ProblemConfig& p) {
  json j = {{"kind", p.kind}};
  if (p.kind == "ackley") {
    j["dim"] = p.dim;
    j["a"] = p.ackley.a;
    j["b"] = p.ackley.b;
    j["c"] = p.ackley.c;
    j["shift"] = cfg::vector_json(p.shift);
  } else if (p.kind == "holder_table") {
    j["shift"] = cfg::vector_json(p.shift);
  } else if (p.kind == "quadratic") {
    j["dim"] = p.dim;
    j["center"] = cfg::vector_json(p.shift);
  } else if (p.kind == "linear") {
    j["A"] = cfg::matrix_json(p.a);
    j["b"] = cfg::vector_json(p.b);
    j["fidelity"] = p.fidelity;
  } else if (p.kind == "deconvolution") {
    j["dim"] = p.dim;
    j["kernel_size"] = p.kernel_size;
    j["sigma_kappa"] = p.sigma_kappa;
    j["n_peaks"] = p.n_peaks;
    j["noise_factor"] = p.noise_factor;
  } else if (p.kind == "simplex_regression" || p.kind == "phase_retrieval") {
    j["dim"] = p.dim;
    j["n_measurements"] = p.n_measurements;
    j["noise_factor"] = p.noise_factor;
  } else if (p.kind == "stiefel_ackley") {
    j["n"] = p.n;
    j["p"] = p.p;
    j["a"] = p.ackley.a;
    j["b"] = p.ackley.b;
    j["c"] = p.ackley.c;
  }
  if (p.target) j["target"] = cfg::vector_json(*p.target);
  return j;
}

inline Scheduler parse_scheduler(const json& j, const std::string& path) {
  if (j.is_null()) return std::monostate{};
  cfg::check_object(j, path);
  const std::string kind = cfg::required_string(j, path, "kind");
  if (kind == "none") {
    cfg::check_keys(j, path, {"kind"});
    return std::monostate{};
  }
  if (kind == "multiply") {
    cfg::check_keys(j, path, {"kind", "factor", "alpha_max"});
    return MultiplyScheduler{cfg::number(j, path, "factor", 1.05), cfg::number(j, path, "alpha_max", 1e12)};
  }
  if (kind == "ess") {
    cfg::check_keys(j, path, {"kind", "eta", "alpha_max", "bracket_lo", "tol", "max_iter"});
    return EssScheduler{cfg::number(j, path, "eta", 0.5), cfg::number(j, path, "alpha_max", 1e7),
                        cfg::number(j, path, "bracket_lo", 1e-8), cfg::number(j, path, "tol", 1e-10),
                        cfg::integer(j, path, "max_iter", 100)};
  }
  throw ConfigError(cfg::join(path, "kind") + ": unknown scheduler kind '" + kind + "'");
}

inline json scheduler_json(const Scheduler& s) {
  if (const auto* m = std::get_if<MultiplyScheduler>(&s))
    return {{"kind", "multiply"}, {"factor", m->factor}, {"alpha_max", cfg::from_double(m->alpha_max)}};
  if (const auto* e = std::get_if<EssScheduler>(&s))
    return {{"kind", "ess"},       {"eta", e->eta},  {"alpha_max", cfg::from_double(e->alpha_max)},
            {"bracket_lo", e->bracket_lo}, {"tol", e->tol}, {"max_iter", e->max_iter}};
  return {{"kind", "none"}};
}

inline OptimizerConfig parse_optimizer(const json& j, const std::string& path, const std::filesystem::path& base) {
  cfg::check_keys(j, path,
                  {"kind", "n_particles", "tau", "alpha", "sigma", "noise", "k_max", "scheduler", "resampling", "batching",
                   "discrepancy", "l0_weight", "argmin_switch", "kernel_width", "mirror_map", "constraint", "penalty",
                   "init", "init_space"});
  OptimizerConfig o;
  const std::string kind = cfg::required_string(j, path, "kind");
  if (kind == "wirtinger_flow") {
    o.method = MethodKind::wirtinger_flow;
  } else if (kind == "mirror_descent") {
    o.method = MethodKind::mirror_descent;
  } else {
    o.spec.kind = parse_kind(kind);
  }
  OptimizerParams& p = o.spec.params;
  o.n_particles = cfg::integer(j, path, "n_particles", 50);
  p.tau = cfg::number(j, path, "tau", 0.1);
  p.alpha = cfg::number(j, path, "alpha", 1.0);
  p.sigma = cfg::number(j, path, "sigma", 1.0);
  const std::string noise = cfg::string(j, path, "noise", "isotropic");
  if (noise == "isotropic")
    p.noise = NoiseKind::isotropic;
  else if (noise == "anisotropic")
    p.noise = NoiseKind::anisotropic;
  else
    throw ConfigError(cfg::join(path, "noise") + ": expected isotropic or anisotropic");
  p.k_max = cfg::integer(j, path, "k_max", 100);
  if (j.contains("scheduler")) p.scheduler = parse_scheduler(j.at("scheduler"), cfg::join(path, "scheduler"));
  if (j.contains("resampling") && !j.at("resampling").is_null()) {
    const auto& r = j.at("resampling");
    const auto rp = cfg::join(path, "resampling");
    cfg::check_keys(r, rp, {"sigma", "patience", "factor", "tol"});
    p.resampling = ResamplingConfig{cfg::number(r, rp, "sigma", 1.0), cfg::integer(r, rp, "patience", 10),
                                    cfg::number(r, rp, "factor", 1.0), cfg::number(r, rp, "tol", 1e-4)};
  }
  if (j.contains("batching") && !j.at("batching").is_null()) {
    const auto& b = j.at("batching");
    const auto bp = cfg::join(path, "batching");
    cfg::check_keys(b, bp, {"batch_size"});
    p.batching = BatchingConfig{cfg::integer(b, bp, "batch_size", 1)};
  }
  if (j.contains("discrepancy") && !j.at("discrepancy").is_null()) {
    const auto& d = j.at("discrepancy");
    const auto dp = cfg::join(path, "discrepancy");
    cfg::check_keys(d, dp, {"delta", "eta_incr", "eta_decr", "lambda_min", "lambda_max", "target"});
    DiscrepancyConfig dc;
    dc.delta = cfg::required_number(d, dp, "delta");
    dc.eta_incr = cfg::number(d, dp, "eta_incr", 0.9);
    dc.eta_decr = cfg::number(d, dp, "eta_decr", 1.1);
    dc.lambda_min = cfg::number(d, dp, "lambda_min", 0.0);
    dc.lambda_max = cfg::number(d, dp, "lambda_max", kInf);
    const std::string target = cfg::string(d, dp, "target", "map_lambda");
    if (target == "map_lambda")
      dc.target = DiscrepancyTarget::map_lambda;
    else if (target == "l0_weight")
      dc.target = DiscrepancyTarget::l0_weight;
    else
      throw ConfigError(cfg::join(dp, "target") + ": expected map_lambda or l0_weight");
    p.discrepancy = dc;
  }
  p.l0_weight = cfg::number(j, path, "l0_weight", 0.0);
  p.argmin_switch = cfg::boolean(j, path, "argmin_switch", false);
  if (j.contains("kernel_width") && !j.at("kernel_width").is_null())
    p.kernel_width = cfg::number(j, path, "kernel_width", 1.0);
  if (j.contains("mirror_map")) o.spec.map = parse_map(j.at("mirror_map"), cfg::join(path, "mirror_map"), base);
  if (j.contains("constraint"))
    o.spec.set = parse_constraint(j.at("constraint"), cfg::join(path, "constraint"), base);
  if (j.contains("penalty")) {
    const auto& pen = j.at("penalty");
    const auto pp = cfg::join(path, "penalty");
    cfg::check_keys(pen, pp, {"power", "lambda", "lambda1", "lambda2", "schedule"});
    o.spec.penalty_power = cfg::integer(pen, pp, "power", 2);
    o.spec.lambda = cfg::number(pen, pp, "lambda", 0.0);
    o.spec.lambda1 = cfg::number(pen, pp, "lambda1", 0.0);
    o.spec.lambda2 = cfg::number(pen, pp, "lambda2", 0.0);
    if (pen.contains("schedule") && !pen.at("schedule").is_null()) {
      const auto& s = pen.at("schedule");
      const auto sp = cfg::join(pp, "schedule");
      cfg::check_keys(s, sp, {"factor", "tol", "lambda_max"});
      o.spec.penalty_schedule =
          PenaltySchedule{cfg::number(s, sp, "factor", 1.5), cfg::number(s, sp, "tol", 1e-3), cfg::number(s, sp, "lambda_max", 1e8)};
    }
  }
  if (j.contains("init")) o.init = parse_init(j.at("init"), cfg::join(path, "init"), base);
  const std::string space = cfg::string(j, path, "init_space", "primal");
  if (space != "primal" && space != "dual") throw ConfigError(cfg::join(path, "init_space") + ": expected primal or dual");
  o.spec.init_in_dual = space == "dual";
  if (o.n_particles < 1) throw ConfigError(cfg::join(path, "n_particles") + ": must be >= 1");
  if (o.method == MethodKind::consensus) {
    o.spec.validate();
  } else {
    if (!(p.tau > 0.0)) throw ConfigError(cfg::join(path, "tau") + ": must be > 0");
    if (p.k_max < 0) throw ConfigError(cfg::join(path, "k_max") + ": must be >= 0");
  }
  return o;
}

inline json optimizer_json(const OptimizerConfig& o) {
  const OptimizerParams& p = o.spec.params;
  json j;
  j["kind"] = o.method == MethodKind::wirtinger_flow   ? std::string("wirtinger_flow")
              : o.method == MethodKind::mirror_descent ? std::string("mirror_descent")
                                                       : std::string(kind_name(o.spec.kind));
  j["n_particles"] = o.n_particles;
  j["tau"] = p.tau;
  j["alpha"] = p.alpha;
  j["sigma"] = p.sigma;
  j["noise"] = p.noise == NoiseKind::isotropic ? "isotropic" : "anisotropic";
  j["k_max"] = p.k_max;
  j["scheduler"] = scheduler_json(p.scheduler);
  if (p.resampling)
    j["resampling"] = {{"sigma", p.resampling->sigma_indep},
                       {"patience", p.resampling->patience},
                       {"factor", p.resampling->factor},
                       {"tol", cfg::from_double(p.resampling->tol)}};
  if (p.batching) j["batching"] = {{"batch_size", p.batching->batch_size}};
  if (p.discrepancy)
    j["discrepancy"] = {{"delta", p.discrepancy->delta},
                        {"eta_incr", p.discrepancy->eta_incr},
                        {"eta_decr", p.discrepancy->eta_decr},
                        {"lambda_min", cfg::from_double(p.discrepancy->lambda_min)},
                        {"lambda_max", cfg::from_double(p.discrepancy->lambda_max)},
                        {"target", p.discrepancy->target == DiscrepancyTarget::map_lambda ? "map_lambda" : "l0_weight"}};
  j["l0_weight"] = p.l0_weight;
  j["argmin_switch"] = p.argmin_switch;
  if (p.kernel_width) j["kernel_width"] = *p.kernel_width;
  j["mirror_map"] = map_json(o.spec.map);
  j["constraint"] = constraint_json(o.spec.set);
  json pen = {{"power", o.spec.penalty_power},
              {"lambda", o.spec.lambda},
              {"lambda1", o.spec.lambda1},
              {"lambda2", o.spec.lambda2}};
  if (o.spec.penalty_schedule)
    pen["schedule"] = {{"factor", o.spec.penalty_schedule->factor},
                       {"tol", o.spec.penalty_schedule->tol},
                       {"lambda_max", cfg::from_double(o.spec.penalty_schedule->lambda_max)}};
  j["penalty"] = pen;
  j["init"] = init_json(o.init);
  j["init_space"] = o.spec.init_in_dual ? "dual" : "primal";
  return j;
}

inline ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir = {}) {
  cfg::check_keys(j, "", {"experiment", "seed", "n_runs", "stride", "problem", "optimizer", "success", "record", "output_dir"});
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.experiment = cfg::string(j, "", "experiment", "experiment");
  if (j.contains("seed")) {
    const auto& s = j.at("seed");
    if (!s.is_number_integer() || s.get<long long>() < 0) throw ConfigError("seed: expected a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }
  c.n_runs = cfg::integer(j, "", "n_runs", 1);
  if (c.n_runs < 1) throw ConfigError("n_runs: must be >= 1");
  c.stride = cfg::integer(j, "", "stride", 1);
  if (c.stride < 1) throw ConfigError("stride: must be >= 1");
  if (!j.contains("problem")) throw ConfigError("missing required key 'problem'");
  if (!j.contains("optimizer")) throw ConfigError("missing required key 'optimizer'");
  c.problem = parse_problem(j.at("problem"), "problem", base_dir);
  c.optimizer = parse_optimizer(j.at("optimizer"), "optimizer", base_dir);
  if (j.contains("success")) {
    const auto& s = j.at("success");
    cfg::check_keys(s, "success", {"norm", "tol", "zero_tol"});
    const std::string norm = cfg::string(s, "success", "norm", "l2");
    if (norm == "l2")
      c.success_norm = SuccessNorm::l2;
    else if (norm == "linf")
      c.success_norm = SuccessNorm::linf;
    else
      throw ConfigError("success.norm: expected l2 or linf");
    c.success_tol = cfg::number(s, "success", "tol", 0.1);
    c.zero_tol = cfg::number(s, "success", "zero_tol", 0.0);
    if (!(c.success_tol > 0.0)) throw ConfigError("success.tol: must be > 0");
    if (!(c.zero_tol >= 0.0)) throw ConfigError("success.zero_tol: must be >= 0");
  }
  if (j.contains("record")) {
    const auto& r = j.at("record");
    cfg::check_keys(r, "record", {"lyapunov", "mass_in_ball"});
    c.record_lyapunov = cfg::boolean(r, "record", "lyapunov", false);
    c.record_mass_in_ball = cfg::boolean(r, "record", "mass_in_ball", false);
  }
  c.output_dir = cfg::string(j, "", "output_dir", "");
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["seed"] = c.seed;
  j["n_runs"] = c.n_runs;
  j["stride"] = c.stride;
  j["problem"] = problem_json(c.problem);
  j["optimizer"] = optimizer_json(c.optimizer);
  j["success"] = {{"norm", c.success_norm == SuccessNorm::l2 ? "l2" : "linf"},
                  {"tol", cfg::from_double(c.success_tol)},
                  {"zero_tol", c.zero_tol}};
  j["record"] = {{"lyapunov", c.record_lyapunov}, {"mass_in_ball", c.record_mass_in_ball}};
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
  return j;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("parse error in '" + path.string() + "': " + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_json_file(path), path.parent_path());
}

/// Sets the value at a dotted path; the parent object must exist.
inline void set_json_path(json& j, const std::string& dotted, const json& value) {
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("invalid parameter path '" + dotted + "'");
    if (!node->is_object()) throw ConfigError("parameter path '" + dotted + "' does not resolve");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) throw ConfigError("parameter path '" + dotted + "' does not resolve");
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace mirrorcbx
