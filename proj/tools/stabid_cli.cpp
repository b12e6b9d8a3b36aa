// stabid: data generation, fitting, validation and the scaling benchmark.
//
// Exit codes: 0 success, 2 usage/input, 3 generator, 4 infeasible,
// 5 solver/runtime.

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <iostream>
#include <limits>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "stabid.hpp"
#include "stabid/io.hpp"

namespace {

using namespace stabid;
using io::json;
using io::ordered_json;

enum Exit { ok = 0, usage = 2, generator = 3, infeasible = 4, runtime = 5 };

struct CliError {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& msg) { throw CliError{code, msg}; }

/// Maps library exceptions onto exit codes.
int classify(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const DimensionMismatch*>(&e) ||
      dynamic_cast<const MissingStates*>(&e) || dynamic_cast<const json::exception*>(&e))
    return usage;
  if (dynamic_cast<const Infeasible*>(&e) || dynamic_cast<const InfeasibleEqualities*>(&e)) return infeasible;
  return runtime;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string nse_text(const ValidationResult& v) { return v.diverged ? "inf" : fmt(v.nse); }

// ---- gen-data ---------------------------------------------------------------

struct GenArgs {
  std::string generator;
  std::uint64_t seed = 1;
  int T = 1000;
  std::string out;
  int nx = 4, nu = 1, ny = 1;
  double snr = std::numeric_limits<double>::infinity();
  double rho_bar = 0.95;
  std::string states = "oracle";
  bool paper_exact_divisor = false;
  bool no_noise = false;
};

/// data.csv -> data<suffix>
std::string with_suffix(const std::string& csv, const std::string& suffix) {
  const std::string side = io::sidecar_path(csv);
  return side.substr(0, side.size() - std::string(".meta.json").size()) + suffix;
}

std::string oracle_path(const std::string& csv) { return with_suffix(csv, ".oracle.csv"); }

int cmd_gen_data(const GenArgs& a) {
  if (a.T < 3) fail(usage, "gen-data: --T must be at least 3");
  Dataset data, oracle;
  ordered_json meta;
  double snr = 0.0;
  std::uint64_t used = a.seed;
  try {
    if (a.generator == "msd") {
      MsdParams p;
      p.samples = a.T;
      p.paper_exact_divisor = a.paper_exact_divisor;
      p.noise = !a.no_noise;
      const MsdRun run = simulate_msd(p, InputSpec{}, a.seed);
      data = run.data;
      oracle.u = run.data.u;
      oracle.y = run.clean.col(1);
      oracle.x = run.clean;
      oracle.sample_time = p.sample_time;
      snr = run.snr_db;
      used = run.seed_used;
      meta["generator"] = "msd";
      meta["params"] = {{"m1", p.m1},       {"m2", p.m2},         {"c1", p.c1},
                        {"c2", p.c2},       {"k1", p.k1},         {"k2", p.k2},
                        {"limit", p.limit}, {"noise_var", p.noise_var}, {"rk4_step", p.rk4_step},
                        {"paper_exact_divisor", p.paper_exact_divisor}, {"noise", p.noise}};
      meta["reseeds"] = run.reseeds;
    } else if (a.generator == "random-lti") {
      StatePolicy pol;
      if (a.states == "oracle") pol = StatePolicy::oracle;
      else if (a.states == "noisy-oracle") pol = StatePolicy::noisy_oracle;
      else fail(usage, "gen-data: --states must be oracle or noisy-oracle");
      const RandomLti sys = gen_random_lti(a.nx, a.nu, a.ny, a.rho_bar, a.seed);
      const LtiRun run = make_lti_dataset(sys.sys, a.T, a.snr, pol, a.seed + 1);
      data = run.data;
      oracle.u = run.data.u;
      oracle.y = run.y_clean;
      oracle.x = run.x_clean;
      snr = run.snr_db;
      meta["generator"] = "random-lti";
      const LtiMatrices m = sys.sys.implicit();
      meta["params"] = {{"n_x", a.nx},          {"n_u", a.nu},
                        {"n_y", a.ny},          {"rho_bar", a.rho_bar},
                        {"snr_db", std::isfinite(a.snr) ? ordered_json(a.snr) : ordered_json("inf")},
                        {"states", a.states},   {"spectral_radius", sys.spectral_radius},
                        {"true_rho", io::vec_json(m.to_rho())}};
    } else {
      fail(usage, "gen-data: generator must be msd or random-lti");
    }
  } catch (const CliError&) {
    throw;
  } catch (const std::exception& e) {
    fail(generator, std::string("gen-data: ") + e.what());
  }
  meta["seed"] = a.seed;
  meta["seed_used"] = used;
  meta["T"] = a.T;
  meta["snr_db"] = std::isfinite(snr) ? ordered_json(snr) : ordered_json("inf");
  const std::string opath = oracle_path(a.out);
  const auto slash = opath.find_last_of('/');
  meta["oracle_states"] = slash == std::string::npos ? opath : opath.substr(slash + 1);
  io::save_dataset(a.out, data, meta);
  io::write_file(opath, io::dataset_to_csv(oracle));
  std::cout << "T " << a.T << "\nsnr_db " << (std::isfinite(snr) ? fmt(snr) : "inf") << "\nseed " << a.seed
            << "\nwrote " << a.out << "\n";
  return ok;
}

// ---- fit --------------------------------------------------------------------

struct FitConfig {
  Method method = Method::lr;
  StructureSpec spec;
  FitOptions opts;
  std::string state_policy = "file";
  bool paper_exact_divisor = false;
};

FitConfig parse_config(const json& j) {
  if (!j.is_object()) throw ParseError("config: expected a JSON object");
  static const std::set<std::string> keys{"method",       "n_x",       "degrees", "separable_f",
                                          "constants",    "mu",        "mu_wp",   "state_policy",
                                          "solver",       "paper_exact_divisor"};
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw ParseError("config: unknown key '" + k + "'");
  FitConfig c;
  try {
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    c.spec.n_x = j.at("n_x").get<int>();
    if (j.contains("degrees")) {
      const json& d = j.at("degrees");
      if (!d.is_object()) throw ParseError("config: degrees must be an object");
      for (const auto& [k, v] : d.items()) {
        if (k == "e") c.spec.deg_e = v.get<int>();
        else if (k == "fx") c.spec.deg_fx = v.get<int>();
        else if (k == "fu") c.spec.deg_fu = v.get<int>();
        else if (k == "g") c.spec.deg_g = v.get<int>();
        else throw ParseError("config: unknown degree '" + k + "'");
      }
    }
    c.spec.separable_f = j.value("separable_f", true);
    c.spec.constants = j.value("constants", true);
    if (j.contains("mu")) c.opts.mu = j.at("mu").get<double>();
    if (j.contains("mu_wp")) c.opts.mu_wp = j.at("mu_wp").get<double>();
    c.state_policy = j.value("state_policy", std::string("file"));
    c.paper_exact_divisor = j.value("paper_exact_divisor", false);
    if (j.contains("solver")) c.opts.solver = io::options_from_json(j.at("solver"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (c.spec.n_x < 1) throw ParseError("config: n_x must be positive");
  if (!(c.opts.mu > 0) || (c.opts.mu_wp && !(*c.opts.mu_wp > 0))) throw ParseError("config: mu must be positive");
  if (c.state_policy != "file" && c.state_policy != "central-diff" && c.state_policy != "oracle")
    throw ParseError("config: state_policy must be file, central-diff or oracle");
  if (c.method == Method::stable_subspace &&
      (c.spec.deg_e != 1 || c.spec.deg_fx != 1 || c.spec.deg_fu != 1 || c.spec.deg_g != 1))
    throw ParseError("config: stable-subspace needs all degrees equal to 1");
  return c;
}

/// Attaches surrogate states per the configured policy.
void apply_state_policy(const FitConfig& c, const std::string& data_path, Dataset& d) {
  const int nx = c.spec.n_x;
  if (c.state_policy == "file") {
    if (!d.x) throw MissingStates("state_policy 'file': the dataset has no x columns");
  } else if (c.state_policy == "central-diff") {
    // Displacements are the first n_x/2 state columns, else the outputs.
    if (nx % 2) throw ParseError("state_policy 'central-diff' needs an even n_x");
    const int k = nx / 2;
    Mat s;
    if (d.x && d.x->cols() >= k) s = d.x->leftCols(k);
    else if (d.y.cols() == k) s = d.y;
    else throw DimensionMismatch("state_policy 'central-diff': no " + std::to_string(k) + " displacement columns");
    d.x = central_diff_states(s, d.sample_time, c.paper_exact_divisor);
  } else {
    const std::string p = oracle_path(data_path);
    const Dataset o = io::dataset_from_csv(io::read_file(p));
    if (!o.x || o.T() != d.T()) throw DimensionMismatch("state_policy 'oracle': '" + p + "' does not match the data");
    d.x = o.x;
  }
  if (d.x->cols() != nx)
    throw DimensionMismatch("dataset has " + std::to_string(d.x->cols()) + " state columns, config n_x is " +
                            std::to_string(nx));
}

int cmd_fit(const std::string& config_path, const std::string& data_path, const std::string& model_out,
            const std::string& report_out) {
  FitConfig c;
  Dataset d;
  try {
    c = parse_config(io::parse_json(io::read_file(config_path), "config"));
    d = io::load_dataset(data_path);
    c.spec.n_u = static_cast<int>(d.u.cols());
    c.spec.n_y = static_cast<int>(d.y.cols());
    apply_state_policy(c, data_path, d);
  } catch (const std::exception& e) {
    const int code = classify(e);
    fail(code == runtime ? usage : code, std::string("fit: ") + e.what());
  }
  const ModelStructure ms = c.method == Method::stable_subspace
                                ? ModelStructure::linear(c.spec.n_x, c.spec.n_u, c.spec.n_y)
                                : ModelStructure::standard(c.spec);
  FitResult fr;
  try {
    fr = fit(c.method, ms, d, c.opts);
  } catch (const std::exception& e) {
    fail(classify(e) == usage ? usage : classify(e), std::string("fit: ") + e.what());
  }
  io::save_model(model_out, fr.model);
  io::write_file(report_out, io::fit_json(fr).dump(2) + "\n");
  std::cout << "method " << method_name(c.method) << "\nobjective " << fmt(fr.objective) << "\ntraining_nse "
            << nse_text(fr.training) << "\nnewton_steps " << fr.report.total_newton_steps()
            << "\nphase_one_newton_steps " << fr.start.newton_steps << "\ntermination " << fr.report.termination
            << "\n";
  return ok;
}

// ---- validate ---------------------------------------------------------------

int cmd_validate(const std::string& model_path, const std::string& data_path, const std::string& json_out,
                 bool zero_start) {
  Model m;
  Dataset d;
  ValidationResult v;
  try {
    m = io::load_model(model_path);
    d = io::load_dataset(data_path);
    if (d.x && d.x->cols() != m.structure.n_x()) d.x.reset();
    std::optional<Vec> x1;
    if (zero_start) x1 = Vec::Zero(m.structure.n_x());
    v = validate(m, d, x1);
  } catch (const std::exception& e) {
    const int code = classify(e);
    fail(code == runtime ? usage : code, std::string("validate: ") + e.what());
  }
  std::cout << nse_text(v) << "\n";
  if (!json_out.empty()) {
    ordered_json j;
    j["nse"] = v.diverged ? ordered_json("inf") : ordered_json(v.nse);
    j["diverged"] = v.diverged;
    j["fail_index"] = v.fail_index;
    j["message"] = v.message;
    io::write_file(json_out, j.dump(2) + "\n");
  }
  return ok;
}

// ---- bench-scaling ----------------------------------------------------------

struct BenchArgs {
  std::vector<int> Ts{200, 400, 800, 1600, 3200};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int jobs = 1;
  int nx = 4, deg_e = 3, deg_fx = 3, deg_g = 1;
  std::string out = "bench.csv";
  std::string summary;
};

int cmd_bench(const BenchArgs& a) {
  if (std::set<int>(a.Ts.begin(), a.Ts.end()).size() < 3) fail(usage, "bench-scaling: need at least 3 distinct T values");
  if (a.seeds.empty()) fail(usage, "bench-scaling: need at least one seed");
  if (a.jobs < 1) fail(usage, "bench-scaling: --jobs must be positive");
  for (int T : a.Ts)
    if (T < 3) fail(usage, "bench-scaling: T values must be at least 3");
  const StructureSpec spec = bench_structure(a.nx, a.deg_e, a.deg_fx, a.deg_g);

  struct Task {
    int T;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (int T : a.Ts)
    for (auto s : a.seeds) tasks.push_back({T, s});
  std::vector<std::optional<BenchTrial>> results(tasks.size());
  std::vector<std::string> errors;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) {
      try {
        results[i] = bench_trial(spec, tasks[i].T, tasks[i].seed);
        std::lock_guard<std::mutex> lk(mu);
        std::cerr << "T " << tasks[i].T << " seed " << tasks[i].seed << ": " << results[i]->newton_steps
                  << " steps, " << fmt(results[i]->mean_step_us) << " us/step\n";
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(mu);
        errors.push_back("T " + std::to_string(tasks[i].T) + " seed " + std::to_string(tasks[i].seed) + ": " + e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (int k = 0; k < std::min<int>(a.jobs, static_cast<int>(tasks.size())); ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::vector<io::BenchRow> rows;
  std::vector<BenchTrial> done;
  for (const auto& r : results)
    if (r) {
      rows.push_back({r->T, r->seed, r->newton_steps, r->mean_step_us, r->total_s, r->final_objective});
      done.push_back(*r);
    }
  io::write_file(a.out, io::bench_csv(rows));
  const std::string summary = a.summary.empty() ? with_suffix(a.out, ".summary.json") : a.summary;
  ordered_json j;
  j["structure"] = {{"n_x", a.nx}, {"deg_e", a.deg_e}, {"deg_fx", a.deg_fx}, {"deg_g", a.deg_g}};
  j["trials"] = rows.size();
  j["failures"] = errors;
  try {
    const BenchSummary s = summarize(done);
    j["T"] = s.Ts;
    j["mean_step_us"] = s.mean_step_us;
    j["mean_newton_steps"] = s.mean_newton_steps;
    j["slope"] = s.slope;
    j["newton_ratio"] = s.newton_ratio;
    std::cout << "slope " << fmt(s.slope) << "\nnewton_ratio " << fmt(s.newton_ratio) << "\n";
  } catch (const Error& e) {
    j["slope"] = nullptr;
    std::cout << "slope unavailable: " << e.what() << "\n";
  }
  io::write_file(summary, j.dump(2) + "\n");
  std::cout << "wrote " << a.out << " and " << summary << "\n";
  if (!errors.empty()) {
    for (const auto& e : errors) std::cerr << "trial failed: " << e << "\n";
    return runtime;
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stable state-space model identification"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  GenArgs g;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset (CSV + metadata sidecar)");
  gen->add_option("generator", g.generator, "msd or random-lti")->required();
  gen->add_option("--seed", g.seed, "Random seed");
  gen->add_option("--T", g.T, "Number of samples");
  gen->add_option("--out", g.out, "Output CSV path")->required();
  gen->add_option("--nx", g.nx, "random-lti: state dimension");
  gen->add_option("--nu", g.nu, "random-lti: inputs");
  gen->add_option("--ny", g.ny, "random-lti: outputs");
  gen->add_option("--snr", g.snr, "random-lti: output SNR in dB (default: noiseless)");
  gen->add_option("--rho-bar", g.rho_bar, "random-lti: spectral radius bound");
  gen->add_option("--states", g.states, "random-lti: oracle or noisy-oracle");
  gen->add_flag("--paper-exact-divisor", g.paper_exact_divisor, "msd: divide central differences by T_s");
  gen->add_flag("--no-noise", g.no_noise, "msd: noiseless measurements");

  std::string config, data, model_out = "model.json", report_out = "report.json";
  auto* fitc = app.add_subcommand("fit", "Fit a model from a JSON config and a dataset");
  fitc->add_option("--config", config, "Fit configuration JSON")->required();
  fitc->add_option("--data", data, "Dataset CSV")->required();
  fitc->add_option("--model", model_out, "Model JSON output");
  fitc->add_option("--report", report_out, "Report JSON output");

  std::string model_in, vdata, json_out;
  bool zero_start = false;
  auto* val = app.add_subcommand("validate", "Normalized simulation error of a model on a dataset");
  val->add_option("--model", model_in, "Model JSON")->required();
  val->add_option("--data", vdata, "Dataset CSV")->required();
  val->add_option("--json", json_out, "Also write the result as JSON");
  val->add_flag("--zero-start", zero_start, "Simulate from x = 0 instead of the first state sample");

  BenchArgs b;
  auto* bench = app.add_subcommand("bench-scaling", "Per-Newton-step time against data length");
  bench->add_option("--T", b.Ts, "Data lengths")->delimiter(',');
  bench->add_option("--seeds", b.seeds, "Seeds")->delimiter(',');
  bench->add_option("--jobs", b.jobs, "Concurrent trials");
  bench->add_option("--nx", b.nx, "State dimension");
  bench->add_option("--deg-e", b.deg_e, "Degree of e");
  bench->add_option("--deg-fx", b.deg_fx, "Degree of f in x");
  bench->add_option("--deg-g", b.deg_g, "Degree of g");
  bench->add_option("--out", b.out, "Benchmark CSV output");
  bench->add_option("--summary", b.summary, "Summary JSON output (default: <out>.summary.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : usage;
  }

  try {
    if (*gen) return cmd_gen_data(g);
    if (*fitc) return cmd_fit(config, data, model_out, report_out);
    if (*val) return cmd_validate(model_in, vdata, json_out, zero_start);
    if (*bench) return cmd_bench(b);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify(e) == usage ? usage : runtime;
  }
  return usage;
}
