#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mubsde/grid.hpp"
#include "mubsde/kernel.hpp"
#include "mubsde/measures.hpp"

namespace mubsde {

class SimulationFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ModelViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Piecewise deterministic process on [0, 1]: deterministic flow x' = h(x)
/// between jumps, state-dependent jump intensity lambda (extended by 0 on the
/// boundary) with mark kernel q, and a forced jump whenever the flow reaches
/// the boundary {0, 1}. Marks are jump sizes.
struct PdmpModel {
  std::string name;
  std::function<double(double)> h;
  std::function<double(double)> lambda;
  double lambda_max = 0.0;  // thinning majorant, must dominate lambda
  std::function<MarkKernel(double x)> jump_kernel;
  double x0 = 0.5;
  std::size_t max_jumps = 100000;
};

/// Jump diffusion dX = b dC + sigma dN + gamma d(mu - nu); the driving
/// measure has an absolutely continuous part (intensity `rate`, kernel
/// `mark_kernel`, simulated by thinning against rate_max) plus declared
/// predictable atoms at fixed times. The clock C has slope `clock_slope`
/// plus the declared atoms' clock jumps. gamma must vanish at the declared
/// atom times (checked on sampled marks).
struct JumpDiffusionModel {
  struct DeclaredAtom {
    double time;
    double mass = 1.0;   // measure atom mass in (0, 1]
    MarkKernel kernel;
    double clock_jump = 0.0;
  };

  std::string name;
  double x0 = 0.0;
  std::function<double(double, double)> b;          // (t, x)
  std::function<double(double, double)> sigma;      // (t, x)
  std::function<double(double, double, double)> gamma;  // (t, x, e)
  std::function<double(double, double)> rate;       // ac intensity (t, x)
  double rate_max = 0.0;
  std::function<MarkKernel(double, double)> mark_kernel;  // (t, x)
  std::vector<DeclaredAtom> atoms;
  std::function<double(double)> clock_slope;        // default 1
};

/// Model facts shared by every path of an ensemble.
struct ScenarioDynamics {
  std::string model_name;
  bool is_pdmp = false;
  // jump of X produced by a driving-measure atom with mark e
  std::function<double(double t, double x_left, double e)> gamma_tilde;
  std::function<double(double, double)> b;      // empty for PDMP
  std::function<double(double, double)> sigma;  // empty for PDMP or pure-jump
  std::function<double(double)> clock_slope;    // empty for PDMP
  std::function<MarkKernel(double x)> pdmp_kernel;  // empty for jump diffusions
  std::function<double(double)> pdmp_h;             // PDMP flow field
};

struct SimulatedScenario {
  std::shared_ptr<const ScenarioDynamics> dyn;
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
  GridPath x;
  MarkedPointMeasure mu;   // driving measure
  CompensatorSpec nu;      // realized compensator of mu
  std::vector<double> brownian;          // N at every grid node (empty if none)
  std::vector<double> boundary_hits;     // PDMP forced-jump times
  std::vector<std::pair<double, double>> clock_jumps;  // (time, dC), jump diffusion
  std::vector<std::size_t> base_index;   // base-grid node -> path node index
};

/// Counting path of forced boundary jumps (the predictable point process).
GridPath pstar_path(const SimulatedScenario& s);

/// Exact simulation (thinning for interior jumps, adaptive 4th-order flow
/// integration, bisection to 1e-12 for boundary hit times). Event times are
/// inserted into the base grid as extra nodes.
SimulatedScenario simulate_pdmp(const PdmpModel& model, const TimeGrid& base,
                                std::uint64_t seed, std::uint64_t path_index);

/// Recomputes the realized compensator from a scenario's path; rejects a
/// scenario that was not produced by `model`.
CompensatorSpec pdmp_compensator(const PdmpModel& model, const SimulatedScenario& s);

/// Euler scheme on the base grid with thinning candidate times and declared
/// atom times inserted as extra nodes. Faults on |X| > 1e8.
SimulatedScenario simulate_jumpdiff(const JumpDiffusionModel& model, const TimeGrid& base,
                                    std::uint64_t seed, std::uint64_t path_index);

struct PathDecomposition {
  GridPath xi;      // compensated-jump part, quasi-left-continuous by design
  GridPath xp;      // predictable remainder
  double max_gap;   // sup over nodes of |x - xi - xp|
  bool xi_jumps_only_at_inaccessible;  // jump-location audit of xi
};

/// Splits X into its compensated-jump part and predictable remainder, reusing
/// the simulator's own increments so the sum reproduces X to rounding.
PathDecomposition decompose_path(const SimulatedScenario& s);

struct TransferReport {
  double compensated_sup;           // sup-node gap of the compensated identity
  std::optional<double> raw_sup;    // raw-measure identity (jump diffusions only)
};

/// Checks, pathwise and node by node, that integrating phi(s, x) against the
/// compensated jump measure of X equals integrating phi(s, gamma_tilde(s, e))
/// against the compensated driving measure; phi(s, 0) = 0 is required and is
/// probed along the path. The raw (uncompensated) identity, which also needs
/// the predictable-increment sum, is evaluated for jump diffusions.
TransferReport verify_measure_transfer(const PredictableField& phi,
                                       const SimulatedScenario& s);

/// Jump measure of X itself: atoms wherever the path moves at a node, with
/// the realized displacement as mark.
MarkedPointMeasure jump_measure_of_x(const SimulatedScenario& s);

/// Fixed, RNG-free jump-diffusion scenario with two interior jumps, one
/// declared mass-one atom with a clock jump, and known bookkeeping.
SimulatedScenario scripted_three_jump_scenario();

}  // namespace mubsde
