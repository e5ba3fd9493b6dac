#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mubsde/processes.hpp"

namespace mubsde {

// A batch of independently simulated paths sharing one base grid. Each path
// keeps its own refined grid; base_index maps base nodes into it.
struct Ensemble {
  TimeGrid base{std::vector<double>{0.0, 1.0}};
  std::vector<SimulatedScenario> paths;
  bool is_pdmp = false;
};

// Terminal condition g and driver f(t, x, y, z, u). z is the diffusion
// coefficient of the solution (zero for pure-jump models); u is the
// rate-weighted kernel average of the jump field at (t, x). f may be null.
struct BsdeProblem {
  std::function<double(double)> g;
  std::function<double(double, double, double, double, double)> f;
};

struct LsmcOptions {
  int degree = 3;
  // When set, a rank-deficient regression matrix is an error instead of
  // being handled by truncating to the revealed rank.
  bool strict_regression = false;
  double fixed_point_tol = 1e-10;
  int fixed_point_max_iter = 50;
};

// Piecewise polynomial approximation of the value function: one polynomial
// per base interval (stage k is used for times in [t_k, t_{k+1})), with the
// exact terminal condition taking over at stage = stages.size(). Outside the
// state range a stage was fitted on, the polynomial continues linearly from
// the nearer edge, so extrapolation stays first-order accurate but can never
// feed a high-degree tail back into the backward sweep.
struct PolySurrogate {
  struct Stage {
    double mean = 0.0;
    double sd = 1.0;
    double lo = -1e300;  // sample range of the fit
    double hi = 1e300;
    bool collapsed = false;  // fitted on a single state: constant only
    std::vector<double> coef;
  };
  TimeGrid base{std::vector<double>{0.0, 1.0}};
  std::vector<Stage> stages;
  std::function<double(double)> terminal;
  int degree = 0;

  double eval(std::size_t stage, double x) const;
  // Largest k with t_k <= t (up to the grid tolerance); stages.size() at the
  // terminal time.
  std::size_t stage_of(double t) const;
  // First stage at or after `stage` that can distinguish states (a collapsed
  // stage was fitted on a single state, so its increments are identically
  // zero); falls through to the exact terminal condition. State increments
  // such as jump fields must be read at this stage.
  std::size_t spread_stage(std::size_t stage) const;
};

struct BsdeSolution {
  PolySurrogate surrogate;
  double y0 = 0.0;
  bool has_z = false;
  std::vector<double> mean_y;               // per base node
  std::vector<double> mean_z;               // per base interval (empty if !has_z)
  std::vector<double> regression_residual;  // RMS fit residual per base interval
  std::vector<std::vector<double>> y;       // [path][base node]
  std::vector<std::vector<double>> z;       // [path][base interval]
};

// Backward least-squares regression sweep. Dispatches on ensemble.is_pdmp:
// diffusive paths get a z-regression and an implicit driver step against the
// process clock, piecewise-deterministic paths get the jump identification
// with the driver integrated against the compensator clock.
BsdeSolution solve_bsde(const Ensemble& ens, const BsdeProblem& problem,
                        const LsmcOptions& opts);

// Jump field read off a solved surrogate: at an interior atom the surrogate
// increment v(x + jump) - v(x), at a boundary atom of a piecewise
// deterministic path the increment is centred so its kernel average
// vanishes. tamper is added at every interior atom (negative-control hook).
PredictableField u_field_from_solution(
    const BsdeSolution& sol, std::shared_ptr<const ScenarioDynamics> dyn,
    double tamper = 0.0);

// Same field built from an exact value function v(t, x).
PredictableField u_field_from_oracle(
    std::function<double(double, double)> v,
    std::shared_ptr<const ScenarioDynamics> dyn, double tamper = 0.0);

struct ValueOracle {
  std::function<double(double, double)> v;
  std::function<double(double, double)> dv;  // spatial derivative
};

// Dense backward solution of the generator equation for a piecewise
// deterministic model: first order in time along characteristics, linear
// interpolation in space, boundary values pinned to the kernel average
// wherever the flow exits. Used as a reference when no closed form exists.
struct ValueTable {
  std::vector<double> times;  // ascending, times.front() == 0
  std::vector<double> xs;     // uniform on [0, 1]
  std::vector<std::vector<double>> v;  // [time][x]

  double eval(double t, double x) const;
  double dx(double t, double x) const;
};

ValueTable pdmp_generator_oracle(const PdmpModel& model,
                                 const BsdeProblem& problem, double horizon,
                                 std::size_t nt, std::size_t nx);

// Named, reproducible model + problem setups used by the demos and checks.
struct Benchmark {
  std::string id;
  bool is_pdmp = false;
  bool is_scripted = false;
  PdmpModel pdmp;
  JumpDiffusionModel jumpdiff;
  double horizon = 1.0;
  std::size_t default_steps = 50;
  BsdeProblem problem;
  bool has_closed_oracle = false;
  std::function<double(double, double)> v;
  std::function<double(double, double)> dv;
  bool generator_oracle = false;
  double u_tamper = 0.0;       // corruption injected into reported jump fields
  double nu_rate_tamper = 1.0;  // factor corrupting the declared jump intensity
};

std::vector<std::string> benchmark_ids();
const Benchmark& get_benchmark(const std::string& id);

// Closed-form value functions, available for exactly four ids:
// brownian-linear, poisson-linear, heat-quadratic, pdmp-deterministic.
// Throws std::out_of_range for every other id.
ValueOracle closed_form_oracle(const std::string& id);

// Oracle for any benchmark that declares one (closed form or generator
// table). Throws std::out_of_range if the benchmark has none.
ValueOracle benchmark_oracle(const Benchmark& b,
                             std::size_t nt = 3000, std::size_t nx = 1201);

Ensemble simulate_ensemble(const Benchmark& b, std::size_t steps,
                           std::size_t n_paths, std::uint64_t seed);

}  // namespace mubsde
