#pragma once

// File formats: model JSON, fit report JSON, dataset CSV with a metadata
// sidecar, constraint-system dump, benchmark CSV. Uses nlohmann/json.

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stabid/constraints.hpp"
#include "stabid/error.hpp"
#include "stabid/fitters.hpp"
#include "stabid/models.hpp"

namespace stabid::io {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// 17 significant digits, round-trip exact.
inline std::string real(double v) {
  if (!std::isfinite(v)) throw Error("io: cannot serialize a non-finite real");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path + "'");
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

// ---- model ----------------------------------------------------------------

inline std::string model_to_json(const Model& m) {
  const auto& spec = m.structure.spec();
  if (!spec) throw Error("model_to_json: only structures built from degree specs can be serialized");
  std::ostringstream o;
  o << "{\n  \"structure\": {\"n_x\": " << spec->n_x << ", \"n_u\": " << spec->n_u << ", \"n_y\": " << spec->n_y
    << ", \"degrees\": {\"e\": " << spec->deg_e << ", \"fx\": " << spec->deg_fx << ", \"fu\": " << spec->deg_fu
    << ", \"g\": " << spec->deg_g << "}, \"separable_f\": " << (spec->separable_f ? "true" : "false")
    << ", \"constants\": " << (spec->constants ? "true" : "false") << "},\n";
  o << "  \"rho\": [";
  for (Eigen::Index i = 0; i < m.rho.size(); ++i) o << (i ? ", " : "") << real(m.rho(i));
  o << "],\n  \"P\": [";
  for (Eigen::Index i = 0; i < m.P.rows(); ++i) {
    o << (i ? ", " : "") << "[";
    for (Eigen::Index j = 0; j < m.P.cols(); ++j) o << (j ? ", " : "") << real(m.P(i, j));
    o << "]";
  }
  o << "],\n  \"mu\": " << real(m.mu) << ",\n  \"method\": \"" << m.method << "\"\n}\n";
  return o.str();
}

inline StructureSpec spec_from_json(const json& s) {
  try {
    StructureSpec sp;
    sp.n_x = s.at("n_x").get<int>();
    sp.n_u = s.at("n_u").get<int>();
    sp.n_y = s.at("n_y").get<int>();
    const json& d = s.at("degrees");
    sp.deg_e = d.at("e").get<int>();
    sp.deg_fx = d.at("fx").get<int>();
    sp.deg_fu = d.at("fu").get<int>();
    sp.deg_g = d.at("g").get<int>();
    sp.separable_f = s.value("separable_f", true);
    sp.constants = s.value("constants", true);
    return sp;
  } catch (const json::exception& e) {
    throw ParseError(std::string("structure: ") + e.what());
  }
}

inline Model model_from_json(const std::string& text) {
  const json j = parse_json(text, "model");
  Model m;
  try {
    m.structure = ModelStructure::standard(spec_from_json(j.at("structure")));
    const auto rho = j.at("rho").get<std::vector<double>>();
    if (static_cast<int>(rho.size()) != m.structure.n_rho())
      throw ParseError("model: rho has " + std::to_string(rho.size()) + " entries, structure needs " +
                       std::to_string(m.structure.n_rho()));
    m.rho = Eigen::Map<const Vec>(rho.data(), static_cast<Eigen::Index>(rho.size()));
    const auto p = j.value("P", std::vector<std::vector<double>>{});
    m.P.resize(static_cast<Eigen::Index>(p.size()), static_cast<Eigen::Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i].size() != p.size()) throw ParseError("model: P is not square");
      for (std::size_t k = 0; k < p.size(); ++k)
        m.P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = p[i][k];
    }
    m.mu = j.value("mu", 0.0);
    m.method = j.value("method", std::string());
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
  return m;
}

inline void save_model(const std::string& path, const Model& m) { write_file(path, model_to_json(m)); }
inline Model load_model(const std::string& path) { return model_from_json(read_file(path)); }

// ---- reports ---------------------------------------------------------------

inline ordered_json vec_json(const Vec& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline ordered_json options_json(const SolverOptions& o) {
  ordered_json j;
  j["tau0"] = o.tau0;
  j["beta"] = o.beta;
  j["delta_f"] = o.delta_f;
  j["delta_g"] = o.delta_g;
  j["delta_J"] = o.delta_J;
  j["maxit"] = o.maxit;
  j["tau_min"] = o.tau_min;
  j["c1"] = o.c1;
  j["c2"] = o.c2;
  j["backtrack"] = o.backtrack;
  j["max_backtracks"] = o.max_backtracks;
  j["hess_mod_floor"] = o.hess_mod_floor;
  j["time_budget"] = o.time_budget ? ordered_json(*o.time_budget) : ordered_json(nullptr);
  j["feas_margin"] = o.feas_margin;
  j["radius"] = o.radius;
  return j;
}

/// Reads solver overrides; unknown keys are rejected.
inline SolverOptions options_from_json(const json& j, SolverOptions o = {}) {
  if (!j.is_object()) throw ParseError("solver options must be an object");
  for (const auto& [k, v] : j.items()) {
    try {
      if (k == "tau0") o.tau0 = v.get<double>();
      else if (k == "beta") o.beta = v.get<double>();
      else if (k == "delta_f") o.delta_f = v.get<double>();
      else if (k == "delta_g") o.delta_g = v.get<double>();
      else if (k == "delta_J") o.delta_J = v.get<double>();
      else if (k == "maxit") o.maxit = v.get<long>();
      else if (k == "tau_min") o.tau_min = v.get<double>();
      else if (k == "c1") o.c1 = v.get<double>();
      else if (k == "c2") o.c2 = v.get<double>();
      else if (k == "backtrack") o.backtrack = v.get<double>();
      else if (k == "max_backtracks") o.max_backtracks = v.get<int>();
      else if (k == "hess_mod_floor") o.hess_mod_floor = v.get<double>();
      else if (k == "time_budget") o.time_budget = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      else if (k == "feas_margin") o.feas_margin = v.get<double>();
      else if (k == "radius") o.radius = v.get<double>();
      else throw ParseError("unknown solver option '" + k + "'");
    } catch (const json::exception& e) {
      throw ParseError("solver option '" + k + "': " + e.what());
    }
  }
  o.check();
  return o;
}

inline ordered_json report_json(const SolveReport& r) {
  ordered_json j;
  j["theta"] = vec_json(r.theta);
  j["objective_trace"] = r.objective_trace;
  j["newton_steps"] = r.newton_steps;
  j["step_wall_times_us"] = r.step_wall_times_us;
  j["termination"] = r.termination;
  j["options_echo"] = options_json(r.options);
  j["initial_objective"] = r.initial_objective;
  j["final_objective"] = r.final_objective;
  j["tau_trace"] = r.tau_trace;
  j["inner_exits"] = r.inner_exits;
  j["total_newton_steps"] = r.total_newton_steps();
  j["final_margin"] = r.final_margin;
  j["tau_min_reached"] = r.tau_min_reached;
  j["hess_mod_max"] = r.hess_mod_max;
  return j;
}

inline ordered_json fit_json(const FitResult& f) {
  ordered_json j;
  j["method"] = f.model.method;
  j["report"] = report_json(f.report);
  ordered_json m;
  m["objective"] = f.objective;
  m["training_nse"] = f.training.diverged ? ordered_json("inf") : ordered_json(f.training.nse);
  m["training_diverged"] = f.training.diverged;
  m["phase_one_newton_steps"] = f.start.newton_steps;
  m["phase_one_margin"] = f.start.margin;
  m["phase_one_seconds"] = f.phase_one_seconds;
  m["solve_seconds"] = f.solve_seconds;
  m["n_theta"] = f.theta.size();
  m["n_nu"] = f.constraints ? f.constraints->n_nu() : 0;
  j["metrics"] = m;
  return j;
}

// ---- datasets --------------------------------------------------------------

/// CSV with header t,u1..,y1..,x1.. (x optional).
inline std::string dataset_to_csv(const Dataset& d) {
  d.validate();
  std::ostringstream o;
  o << "t";
  for (Eigen::Index j = 0; j < d.u.cols(); ++j) o << ",u" << j + 1;
  for (Eigen::Index j = 0; j < d.y.cols(); ++j) o << ",y" << j + 1;
  if (d.x)
    for (Eigen::Index j = 0; j < d.x->cols(); ++j) o << ",x" << j + 1;
  o << "\n";
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    o << buf;
  };
  for (Eigen::Index t = 0; t < d.T(); ++t) {
    std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(t) * d.sample_time);
    o << buf;
    for (Eigen::Index j = 0; j < d.u.cols(); ++j) put(d.u(t, j));
    for (Eigen::Index j = 0; j < d.y.cols(); ++j) put(d.y(t, j));
    if (d.x)
      for (Eigen::Index j = 0; j < d.x->cols(); ++j) put((*d.x)(t, j));
    o << "\n";
  }
  return o.str();
}

inline Dataset dataset_from_csv(const std::string& text, std::optional<double> sample_time = std::nullopt) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> head;
  {
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) head.push_back(cell);
  }
  if (head.empty() || head[0] != "t") throw ParseError("csv: header must start with 't'");
  int nu = 0, ny = 0, nx = 0;
  for (std::size_t c = 1; c < head.size(); ++c) {
    const std::string& h = head[c];
    const char k = h.empty() ? '?' : h[0];
    int* cnt = k == 'u' ? &nu : k == 'y' ? &ny : k == 'x' ? &nx : nullptr;
    if (!cnt || h.substr(1) != std::to_string(*cnt + 1))
      throw ParseError("csv: header column " + std::to_string(c + 1) + " '" + h +
                       "' out of order (expected t,u1..,y1..,x1..)");
    if ((k == 'u' && (ny || nx)) || (k == 'y' && nx)) throw ParseError("csv: header groups out of order");
    ++*cnt;
  }
  if (ny == 0) throw ParseError("csv: no output columns");
  const std::size_t ncol = head.size();
  std::vector<std::vector<double>> rows;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end == cell.c_str() || *end != '\0' || !std::isfinite(v))
        throw ParseError("csv: row " + std::to_string(lineno) + ", column " + std::to_string(row.size() + 1) +
                         ": not a finite number ('" + cell + "')");
      row.push_back(v);
    }
    if (row.size() != ncol)
      throw ParseError("csv: row " + std::to_string(lineno) + " has " + std::to_string(row.size()) +
                       " columns, header has " + std::to_string(ncol));
    rows.push_back(std::move(row));
  }
  const Eigen::Index T = static_cast<Eigen::Index>(rows.size());
  if (T < 2) throw ParseError("csv: need at least 2 data rows");
  Dataset d;
  d.u.resize(T, nu);
  d.y.resize(T, ny);
  if (nx) d.x = Mat(T, nx);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& r = rows[static_cast<std::size_t>(t)];
    for (int j = 0; j < nu; ++j) d.u(t, j) = r[static_cast<std::size_t>(1 + j)];
    for (int j = 0; j < ny; ++j) d.y(t, j) = r[static_cast<std::size_t>(1 + nu + j)];
    for (int j = 0; j < nx; ++j) (*d.x)(t, j) = r[static_cast<std::size_t>(1 + nu + ny + j)];
  }
  d.sample_time = sample_time ? *sample_time : rows[1][0] - rows[0][0];
  if (!(d.sample_time > 0)) throw ParseError("csv: sample time must be positive");
  d.validate();
  return d;
}

/// Sidecar path: data.csv -> data.meta.json.
inline std::string sidecar_path(const std::string& csv) {
  const auto dot = csv.rfind('.');
  const auto slash = csv.find_last_of('/');
  const bool ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
  return (ext ? csv.substr(0, dot) : csv) + ".meta.json";
}

inline void save_dataset(const std::string& path, const Dataset& d, const ordered_json& meta) {
  write_file(path, dataset_to_csv(d));
  ordered_json m;
  m["sample_time"] = d.sample_time;
  for (const auto& [k, v] : meta.items()) m[k] = v;
  write_file(sidecar_path(path), m.dump(2) + "\n");
}

/// Loads a CSV; the sidecar, when present, supplies the sample time.
inline Dataset load_dataset(const std::string& path) {
  std::optional<double> ts;
  std::ifstream side(sidecar_path(path));
  if (side) {
    std::ostringstream ss;
    ss << side.rdbuf();
    const json m = parse_json(ss.str(), "dataset metadata");
    if (m.contains("sample_time")) ts = m.at("sample_time").get<double>();
  }
  return dataset_from_csv(read_file(path), ts);
}

// ---- constraint dump --------------------------------------------------------

inline ordered_json constraints_json(const ConstraintSystem& cs) {
  ordered_json j;
  j["kind"] = cs.kind == ConstraintKind::sos ? "sos" : cs.kind == ConstraintKind::lti ? "lti" : "custom";
  j["mu"] = cs.mu;
  j["n_theta"] = cs.n_theta();
  j["n_S"] = cs.n_S;
  ordered_json ae = ordered_json::array();
  for (Eigen::Index r = 0; r < cs.A_e.rows(); ++r)
    for (Eigen::Index c = 0; c < cs.A_e.cols(); ++c)
      if (cs.A_e(r, c) != 0.0) ae.push_back(ordered_json::array({r, c, cs.A_e(r, c)}));
  j["A_e"] = ae;
  j["b_e"] = vec_json(cs.b_e);
  ordered_json om = ordered_json::array();
  for (const auto& m : cs.omega) {
    ordered_json f = ordered_json::array();
    for (const auto& [v, e] : m.factors()) f.push_back(ordered_json::array({v, e}));
    om.push_back(f);
  }
  j["omega"] = om;
  ordered_json as = ordered_json::array();
  for (int k = 0; k < cs.n_theta(); ++k)
    for (const auto& e : cs.A_s[static_cast<std::size_t>(k)]) as.push_back(ordered_json::array({k, e.p, e.q, e.w}));
  j["A_s"] = as;
  ordered_json s0 = ordered_json::array();
  for (Eigen::Index r = 0; r < cs.s0.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < cs.s0.cols(); ++c) row.push_back(cs.s0(r, c));
    s0.push_back(row);
  }
  j["s0"] = s0;
  return j;
}

// ---- benchmark --------------------------------------------------------------

struct BenchRow {
  int T = 0;
  std::uint64_t seed = 0;
  int newton_steps = 0;
  double mean_step_us = 0.0;
  double total_s = 0.0;
  double final_objective = 0.0;
};

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream o;
  o << "T,seed,newton_steps,mean_step_us,total_s,final_objective\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%llu,%d,%.6f,%.6f,%.17g\n", r.T, static_cast<unsigned long long>(r.seed),
                  r.newton_steps, r.mean_step_us, r.total_s, r.final_objective);
    o << buf;
  }
  return o.str();
}

}  // namespace stabid::io
