#include "mubsde/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>

#include "mubsde/identify.hpp"
#include "mubsde/stats.hpp"

namespace mubsde {

namespace {

std::string fmt17(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct ResolvedSetup {
  Benchmark bench;
  bool has_oracle = false;
  bool has_sigma = false;
  bool has_jumps = false;
};

ResolvedSetup resolve_setup(const ExperimentConfig& cfg) {
  ResolvedSetup r;
  if (!cfg.benchmark.empty()) {
    r.bench = get_benchmark(cfg.benchmark);
  } else if (cfg.has_pdmp) {
    r.bench.id = "custom-pdmp";
    r.bench.is_pdmp = true;
    r.bench.pdmp = cfg.pdmp;
    r.bench.horizon = cfg.horizon;
    r.bench.generator_oracle = true;
  } else if (cfg.has_jumpdiff) {
    r.bench.id = "custom-jumpdiff";
    r.bench.jumpdiff = cfg.jumpdiff;
    r.bench.horizon = cfg.horizon;
  } else {
    throw std::invalid_argument("config declares no model");
  }
  // A terminal or driver override changes the problem, so any closed-form
  // value attached to the original problem no longer applies; a piecewise
  // deterministic model falls back to the dense generator solution.
  const bool override_problem = !cfg.g_name.empty() || !cfg.f_name.empty();
  if (!cfg.g_name.empty()) r.bench.problem.g = builtin_terminal(cfg.g_name);
  if (!cfg.f_name.empty()) r.bench.problem.f = builtin_driver(cfg.f_name);
  if (override_problem) {
    r.bench.has_closed_oracle = false;
    r.bench.v = nullptr;
    r.bench.dv = nullptr;
    if (r.bench.is_pdmp) r.bench.generator_oracle = true;
  }
  r.has_oracle = r.bench.has_closed_oracle || r.bench.generator_oracle;
  r.has_sigma = !r.bench.is_pdmp && static_cast<bool>(r.bench.jumpdiff.sigma);
  r.has_jumps = r.bench.is_pdmp || r.bench.jumpdiff.rate_max > 0.0 ||
                !r.bench.jumpdiff.atoms.empty();
  return r;
}

bool check_available(const std::string& name, const ResolvedSetup& s) {
  if (s.bench.is_scripted) return name == "transfer" || name == "classify";
  if (name == "transfer" || name == "isometry" || name == "terminal" ||
      name == "classify")
    return true;
  if (name == "z" || name == "orthogonality") return s.has_sigma && s.has_oracle;
  if (name == "u" || name == "martingale") return s.has_jumps && s.has_oracle;
  return false;
}

double robust_zscore(double mean, double se) {
  if (std::abs(mean) <= 1e-12) return 0.0;
  if (se > 0.0) return std::abs(mean) / se;
  return std::numeric_limits<double>::infinity();
}

CheckRow make_row(std::string check, std::string statistic, double value,
                  double threshold, std::string comparator = "<=") {
  CheckRow row;
  row.check = std::move(check);
  row.statistic = std::move(statistic);
  row.value = value;
  row.threshold = threshold;
  row.pass = comparator == ">=" ? value >= threshold : value <= threshold;
  row.comparator = std::move(comparator);
  return row;
}

void check_transfer(const Ensemble& ens, std::vector<CheckRow>& rows) {
  // Both transforms are Lipschitz: the X-side jump sizes are reconstructed
  // as floating-point differences, so a transform with a discontinuity at a
  // realized jump size (an indicator cut at a unit mark, say) would flip on
  // a one-ulp reconstruction error. The clamp keeps the small-jump/large-jump
  // split of the squared transform without the discontinuity.
  const PredictableField phi_sq = make_jump_transform(
      [](double, double x) { return std::min(x * x, 1.0); });
  const PredictableField phi_min =
      make_jump_transform([](double, double x) { return std::min(std::abs(x), 1.0); });
  double worst = 0.0;
  for (const SimulatedScenario& s : ens.paths)
    for (const PredictableField* phi : {&phi_sq, &phi_min}) {
      const TransferReport tr = verify_measure_transfer(*phi, s);
      worst = std::max(worst, tr.compensated_sup);
      if (tr.raw_sup) worst = std::max(worst, *tr.raw_sup);
    }
  rows.push_back(make_row("transfer", "sup_gap", worst, 1e-9));
}

void check_isometry(const Ensemble& ens, std::vector<CheckRow>& rows) {
  const PredictableField W =
      make_field([](double, double, double e) { return std::clamp(e, -1.0, 1.0); });
  std::vector<double> gaps;
  gaps.reserve(ens.paths.size());
  for (const SimulatedScenario& s : ens.paths) gaps.push_back(isometry_gap(W, s));
  const MeanSE ms = mean_se(gaps);
  rows.push_back(make_row("isometry", "zscore", robust_zscore(ms.mean, ms.se), 3.0));
}

void check_terminal(const Ensemble& ens, const Benchmark& bench,
                    const BsdeSolution& sol, std::vector<CheckRow>& rows) {
  double worst = 0.0;
  for (std::size_t p = 0; p < ens.paths.size(); ++p) {
    const double x_t = ens.paths[p].x.values.back();
    worst = std::max(worst, std::abs(sol.y[p].back() - bench.problem.g(x_t)));
  }
  rows.push_back(make_row("terminal", "max_abs_gap", worst, 0.0));
}

void check_classify(const Ensemble& ens, const Benchmark& bench,
                    std::vector<CheckRow>& rows) {
  std::size_t consistent = 0;
  for (const SimulatedScenario& s : ens.paths) {
    const SupportClassification cls = classify_supports(s.nu);
    bool good;
    if (ens.is_pdmp) {
      // every certain-jump atom is a recorded boundary hit and vice versa
      good = cls.j_times.size() == s.boundary_hits.size() && cls.j_equals_k;
    } else {
      // realized atoms match the model declaration inside the horizon
      std::size_t declared = 0;
      bool all_mass_one = true;
      for (const auto& a : bench.jumpdiff.atoms) {
        if (a.time > 1e-12 && a.time <= bench.horizon + 1e-12) {
          ++declared;
          all_mass_one = all_mass_one && std::abs(a.mass - 1.0) <= 1e-12;
        }
      }
      good = cls.j_times.size() == declared && cls.j_equals_k == all_mass_one;
    }
    if (good) ++consistent;
  }
  const double frac = ens.paths.empty()
                          ? 0.0
                          : static_cast<double>(consistent) /
                                static_cast<double>(ens.paths.size());
  rows.push_back(make_row("classify", "consistent_fraction", frac, 1.0, ">="));
}

void check_z(const Ensemble& ens, const BsdeSolution& sol, const ValueOracle& oracle,
             std::vector<CheckRow>& rows) {
  const ZIdentificationReport zr = identify_Z(ens, sol, oracle.dv);
  rows.push_back(make_row("z", "rel_error", zr.rel_error, 0.05));
}

double safe_ratio(double num, double den) {
  if (num == 0.0) return 0.0;
  if (den > 0.0) return num / den;
  return std::numeric_limits<double>::infinity();
}

void check_u(const Ensemble& ens, const Benchmark& bench, const BsdeSolution& sol,
             const ValueOracle& oracle, std::vector<CheckRow>& rows) {
  const PredictableField U =
      u_field_from_solution(sol, ens.paths.front().dyn, bench.u_tamper);
  const UIdentificationReport ur = identify_U(U, oracle.v, ens);
  rows.push_back(
      make_row("u", "h_off_k_over_u", safe_ratio(ur.h_off_k_l2, ur.u_l2), 0.05));
  rows.push_back(make_row("u", "post_fit_residual_over_u",
                          safe_ratio(ur.post_fit_residual, ur.u_l2), 0.05));
}

void check_martingale(const Ensemble& fit, const Ensemble& eval,
                      const Benchmark& bench, const BsdeSolution& sol,
                      const ValueOracle& oracle, std::vector<CheckRow>& rows) {
  const auto dyn = fit.paths.front().dyn;
  // Exact-field control: the candidate read off the oracle itself must give
  // a compensated integral that vanishes pathwise (up to the per-atom
  // constants the compensated measure cannot see, which cancel exactly).
  const PredictableField u_or = u_field_from_oracle(oracle.v, dyn, bench.u_tamper);
  const PredictableField h_or = compute_H(u_or, oracle.v, dyn);
  double sup = 0.0;
  for (const SimulatedScenario& s : fit.paths)
    sup = std::max(sup, compensated_path_stats(h_or, s).sup_abs);
  rows.push_back(make_row("martingale", "oracle_sup", sup, 1e-9));

  // Regression field, evaluated on fresh paths: in-sample evaluation would
  // correlate the fitted field with the very noise the mean test measures.
  const PredictableField u_ls =
      u_field_from_solution(sol, eval.paths.front().dyn, bench.u_tamper);
  const PredictableField h_ls = compute_H(u_ls, oracle.v, eval.paths.front().dyn);
  std::vector<double> terminals, sups;
  terminals.reserve(eval.paths.size());
  sups.reserve(eval.paths.size());
  for (const SimulatedScenario& s : eval.paths) {
    const PathMartingaleStat st = compensated_path_stats(h_ls, s);
    terminals.push_back(st.terminal);
    sups.push_back(st.sup_abs);
  }
  const MartingaleNullReport rep = martingale_null_test(terminals, sups);
  CheckRow row = make_row("martingale", "lsmc_zscore", rep.zscore, 3.29);
  row.pass = rep.mean_pass;
  rows.push_back(std::move(row));
}

void check_orthogonality(const Ensemble& ens, const ValueOracle& oracle,
                         std::vector<CheckRow>& rows) {
  const OrthogonalityReport rep = orthogonality_test(oracle.v, oracle.dv, ens);
  CheckRow row = make_row("orthogonality", "zscore", rep.zscore, 3.29);
  row.pass = rep.pass;
  rows.push_back(std::move(row));
}

const char* kind_name(AtomKind k) {
  return k == AtomKind::predictable ? "predictable" : "inaccessible";
}

void write_scenario_files(const std::filesystem::path& out, const Ensemble& ens,
                          std::size_t count, std::vector<std::string>& written) {
  for (std::size_t i = 0; i < count; ++i) {
    const SimulatedScenario& s = ens.paths[i];
    const std::string atoms_name = "scenario_" + std::to_string(i) + ".tsv";
    {
      std::ofstream os(out / atoms_name, std::ios::trunc);
      for (const MeasureAtom& a : s.mu.atoms)
        os << fmt17(a.time) << '\t' << fmt17(a.mark) << '\t' << kind_name(a.kind)
           << '\t' << fmt17(1.0) << '\n';
      for (const CompensatorAtom& a : s.nu.atoms)
        os << fmt17(a.time) << '\t' << fmt17(a.kernel.mean()) << '\t'
           << "compensator" << '\t' << fmt17(a.mass) << '\n';
      if (!os) throw std::runtime_error("cannot write " + atoms_name);
    }
    written.push_back(atoms_name);
    const std::string path_name = "scenario_" + std::to_string(i) + "_path.csv";
    {
      std::ofstream os(out / path_name, std::ios::trunc);
      os << "t,value\n";
      for (std::size_t k = 0; k < s.x.grid->size(); ++k)
        os << fmt17(s.x.grid->node(k)) << ',' << fmt17(s.x.values[k]) << '\n';
      if (!os) throw std::runtime_error("cannot write " + path_name);
    }
    written.push_back(path_name);
  }
}

void write_manifest(const std::filesystem::path& out, const ExperimentConfig& cfg,
                    const Benchmark& bench, const Ensemble& ens, std::size_t dumped,
                    std::vector<std::string>& written) {
  nlohmann::json m;
  m["model"] = bench.id;
  m["horizon"] = bench.horizon;
  m["paths"] = cfg.paths;
  m["steps"] = cfg.steps;
  m["seed"] = cfg.seed;
  m["degree"] = cfg.degree;
  nlohmann::json scenarios = nlohmann::json::array();
  for (std::size_t i = 0; i < dumped; ++i) {
    const SimulatedScenario& s = ens.paths[i];
    nlohmann::json sc;
    sc["path_index"] = s.path_index;
    sc["seed"] = s.seed;
    sc["boundary_hits"] = s.boundary_hits;
    nlohmann::json cj = nlohmann::json::array();
    for (const auto& [t, dc] : s.clock_jumps) cj.push_back({t, dc});
    sc["clock_jumps"] = std::move(cj);
    nlohmann::json events = nlohmann::json::array();
    for (const MeasureAtom& a : s.mu.atoms) {
      nlohmann::json ev;
      ev["time"] = a.time;
      ev["mark"] = a.mark;
      ev["kind"] = kind_name(a.kind);
      events.push_back(std::move(ev));
    }
    sc["events"] = std::move(events);
    scenarios.push_back(std::move(sc));
  }
  m["scenarios"] = std::move(scenarios);
  std::ofstream os(out / "manifest.json", std::ios::trunc);
  os << m.dump(2) << '\n';
  if (!os) throw std::runtime_error("cannot write manifest.json");
  written.push_back("manifest.json");
}

void write_solution_files(const std::filesystem::path& out, const Ensemble& ens,
                          const BsdeSolution& sol, std::vector<std::string>& written) {
  {
    std::ofstream os(out / "solution_mean.csv", std::ios::trunc);
    os << "t,mean_Y,mean_Z,regression_residual\n";
    const std::size_t intervals = ens.base.intervals();
    for (std::size_t k = 0; k < ens.base.size(); ++k) {
      os << fmt17(ens.base.node(k)) << ',' << fmt17(sol.mean_y[k]) << ',';
      if (k < intervals && sol.has_z) os << fmt17(sol.mean_z[k]);
      os << ',';
      if (k < intervals) os << fmt17(sol.regression_residual[k]);
      os << '\n';
    }
    if (!os) throw std::runtime_error("cannot write solution_mean.csv");
  }
  written.push_back("solution_mean.csv");
  {
    const SimulatedScenario& s = ens.paths.front();
    const PredictableField U = u_field_from_solution(sol, s.dyn);
    std::ofstream os(out / "solution_atoms_0.csv", std::ios::trunc);
    os << "t,mark,U_value\n";
    for (std::size_t a = 0; a < s.mu.atoms.size(); ++a) {
      const MeasureAtom& atom = s.mu.atoms[a];
      const double x_left = s.x.lefts[s.mu.atom_nodes[a]];
      os << fmt17(atom.time) << ',' << fmt17(atom.mark) << ','
         << fmt17(U.eval(atom.time, x_left, atom.mark)) << '\n';
    }
    if (!os) throw std::runtime_error("cannot write solution_atoms_0.csv");
  }
  written.push_back("solution_atoms_0.csv");
}

void write_report(const std::filesystem::path& out, const ExperimentResult& res,
                  std::vector<std::string>& written) {
  std::ofstream os(out / "report.csv", std::ios::trunc);
  os << "check,statistic,value,threshold,comparator,pass\n";
  for (const CheckRow& r : res.rows)
    os << r.check << ',' << r.statistic << ',' << fmt17(r.value) << ','
       << fmt17(r.threshold) << ',' << r.comparator << ',' << (r.pass ? 1 : 0)
       << '\n';
  if (!os) throw std::runtime_error("cannot write report.csv");
  written.push_back("report.csv");
}

void write_summary(const std::filesystem::path& out, const ExperimentConfig& cfg,
                   const Benchmark& bench, const ExperimentResult& res,
                   std::vector<std::string>& written) {
  std::ofstream os(out / "summary.txt", std::ios::trunc);
  os << "setup: " << bench.id << '\n';
  os << "paths: " << cfg.paths << '\n';
  os << "steps: " << cfg.steps << '\n';
  os << "seed: " << cfg.seed << '\n';
  os << "degree: " << cfg.degree << '\n';
  for (const CheckRow& r : res.rows)
    os << r.check << '.' << r.statistic << ": " << (r.pass ? "PASS" : "FAIL")
       << " (" << fmt6(r.value) << ' ' << r.comparator << ' ' << fmt6(r.threshold)
       << ")\n";
  if (!res.fault_category.empty())
    os << "fault: " << res.fault_category << ": " << res.fault_message << '\n';
  os << "overall: " << (res.all_pass ? "PASS" : "FAIL") << '\n';
  if (!os) throw std::runtime_error("cannot write summary.txt");
  written.push_back("summary.txt");
}

}  // namespace

std::vector<std::string> available_checks(const ExperimentConfig& cfg) {
  const ResolvedSetup setup = resolve_setup(cfg);
  std::vector<std::string> out;
  for (const std::string& k : known_checks())
    if (check_available(k, setup)) out.push_back(k);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult res;
  ResolvedSetup setup;
  try {
    setup = resolve_setup(cfg);
  } catch (const std::exception& e) {
    res.config_errors.push_back(e.what());
    return res;
  }

  // Enabled checks, always in canonical report order.
  std::vector<std::string> enabled;
  for (const std::string& k : known_checks()) {
    const bool requested =
        cfg.checks.empty() ||
        std::find(cfg.checks.begin(), cfg.checks.end(), k) != cfg.checks.end();
    if (!requested) continue;
    if (check_available(k, setup)) {
      enabled.push_back(k);
    } else if (!cfg.checks.empty()) {
      res.config_errors.push_back("check '" + k + "' is not available for model '" +
                                  setup.bench.id + "'");
    }
  }
  if (!res.config_errors.empty()) return res;

  const auto on = [&enabled](const char* name) {
    return std::find(enabled.begin(), enabled.end(), name) != enabled.end();
  };
  const bool need_solve = on("terminal") || on("z") || on("u") || on("martingale");
  const bool need_oracle = on("z") || on("u") || on("martingale") || on("orthogonality");

  const std::filesystem::path out = cfg.out_dir;
  try {
    std::filesystem::create_directories(out);
  } catch (const std::exception& e) {
    res.fault_category = "io";
    res.fault_message = e.what();
    return res;
  }

  Ensemble ens;
  BsdeSolution sol;
  try {
    ens = simulate_ensemble(setup.bench, cfg.steps, cfg.paths, cfg.seed);
    const std::size_t dumped = std::min(cfg.dump_scenarios, ens.paths.size());
    write_scenario_files(out, ens, dumped, res.written);
    write_manifest(out, cfg, setup.bench, ens, dumped, res.written);

    if (need_solve) {
      LsmcOptions opts;
      opts.degree = cfg.degree;
      opts.fixed_point_tol = cfg.fixed_point_tol;
      sol = solve_bsde(ens, setup.bench.problem, opts);
      write_solution_files(out, ens, sol, res.written);
    }

    ValueOracle oracle;
    if (need_oracle) oracle = benchmark_oracle(setup.bench);

    if (on("transfer")) check_transfer(ens, res.rows);
    if (on("isometry")) check_isometry(ens, res.rows);
    if (on("terminal")) check_terminal(ens, setup.bench, sol, res.rows);
    if (on("classify")) check_classify(ens, setup.bench, res.rows);
    if (on("z")) check_z(ens, sol, oracle, res.rows);
    if (on("u")) check_u(ens, setup.bench, sol, oracle, res.rows);
    if (on("martingale")) {
      // fresh evaluation paths; the xor keeps the stream disjoint from the
      // fitting ensemble for every seed
      const Ensemble eval = simulate_ensemble(setup.bench, cfg.steps, cfg.paths,
                                              cfg.seed ^ 0x9e3779b97f4a7c15ULL);
      check_martingale(ens, eval, setup.bench, sol, oracle, res.rows);
    }
    if (on("orthogonality")) check_orthogonality(ens, oracle, res.rows);
  } catch (const SimulationFault& e) {
    res.fault_category = "simulation";
    res.fault_message = e.what();
  } catch (const ModelViolation& e) {
    res.fault_category = "model-violation";
    res.fault_message = e.what();
  } catch (const NonIntegrableField& e) {
    res.fault_category = "non-integrable";
    res.fault_message = e.what();
  } catch (const std::exception& e) {
    res.fault_category = "internal";
    res.fault_message = e.what();
  }

  bool all = res.fault_category.empty() && !res.rows.empty();
  for (const CheckRow& r : res.rows) all = all && r.pass;
  res.all_pass = all;

  try {
    write_report(out, res, res.written);
    write_summary(out, cfg, setup.bench, res, res.written);
  } catch (const std::exception& e) {
    if (res.fault_category.empty()) {
      res.fault_category = "io";
      res.fault_message = e.what();
    }
    res.all_pass = false;
  }
  return res;
}

}  // namespace mubsde
