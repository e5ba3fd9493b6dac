#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mubsde/grid.hpp"
#include "mubsde/kernel.hpp"

namespace mubsde {

enum class AtomKind { inaccessible, predictable };

struct MeasureAtom {
  double time;
  double mark;
  AtomKind kind;
};

/// Integer-valued random measure realized along one path: finitely many
/// atoms, at most one per time, every atom time on the grid.
struct MarkedPointMeasure {
  GridPtr grid;
  std::vector<MeasureAtom> atoms;           // sorted by time
  std::vector<std::size_t> atom_nodes;      // grid node index per atom

  /// Atom sitting at grid node k, or nullptr.
  const MeasureAtom* atom_at_node(std::size_t k) const;
};

/// Validates and indexes an atom log. Rejects off-grid times, zero marks,
/// duplicate times and times outside (0, T].
MarkedPointMeasure build_jump_measure(GridPtr grid, std::vector<MeasureAtom> atom_log);

struct CompensatorAtom {
  double time;
  double mass;        // in [0, 1]; 1 means the jump is certain given the past
  MarkKernel kernel;  // probability kernel for the mark
};

/// Realized compensator along one path. The absolutely continuous part
/// charges each interval (t_k, t_{k+1}] with rate ac_rate[k] * dt and mark
/// kernel ac_kernel(t_k, x_k); integrals use the left endpoint. Atoms sit at
/// predictable times with mass <= 1. The clock aggregates both parts.
struct CompensatorSpec {
  GridPtr grid;
  std::vector<double> ac_rate;  // per interval, size grid->intervals()
  std::function<MarkKernel(double t, double x)> ac_kernel;
  std::vector<CompensatorAtom> atoms;  // sorted by time, times on grid
  std::vector<std::size_t> atom_nodes;

  const CompensatorAtom* atom_at_node(std::size_t k) const;
  void index_atoms();  // fills atom_nodes from times; validates
};

/// Clock A: cumulative ac mass plus atom masses, as a cadlag grid path.
GridPath compensator_clock(const CompensatorSpec& nu);

/// Integrand W(t, X_{t-}, e) known one instant ahead.
struct PredictableField {
  std::function<double(double t, double x_left, double mark)> eval;
  bool zero_at_zero_mark = false;
};

PredictableField make_field(std::function<double(double, double, double)> f);

/// Field built from a jump transform phi(t, x); enforces phi(t, 0) = 0 on a
/// probe set at construction.
PredictableField make_jump_transform(std::function<double(double, double)> phi);

class NonIntegrableField : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Running value of the compensated integral W * (mu - nu) at grid nodes.
/// Atom contributions are exact; the ac part uses the left-endpoint rule.
/// Throws NonIntegrableField when a quadrature term is not finite.
GridPath stochastic_integral(const PredictableField& W, const MarkedPointMeasure& mu,
                             const CompensatorSpec& nu, const GridPath& x);

struct HatTilde {
  double hat;    // integral of W against the compensator's atom at t
  double tilde;  // W summed over mu's atom at t, minus hat
};

/// nullopt encodes the "undefined" outcome (kernel integral not finite);
/// no float infinity is ever returned.
std::optional<HatTilde> hat_tilde(const PredictableField& W, const MarkedPointMeasure& mu,
                                  const CompensatorSpec& nu, const GridPath& x, double t);

/// Predictable bracket of W * (mu - nu): the ac part integrates |W|^2, each
/// atom contributes its kernel variance-like term plus the sub-probability
/// correction (1 - mass) * hat^2 when mass < 1. nullopt marks an infinite
/// bracket.
std::optional<GridPath> bracket_C(const PredictableField& W, const MarkedPointMeasure& mu,
                                  const CompensatorSpec& nu, const GridPath& x);

struct PathNorms {
  double g2;  // terminal bracket value (squared norm)
  double l2;  // integral of |W|^2 against the compensator (squared norm)
};

/// Pathwise g2 <= l2 holds exactly. nullopt when either diverges.
std::optional<PathNorms> field_norms(const PredictableField& W, const MarkedPointMeasure& mu,
                                     const CompensatorSpec& nu, const GridPath& x);

struct SupportClassification {
  std::vector<double> j_times;  // atom times with positive mass
  std::vector<double> k_times;  // atom times with mass 1 (within tolerance)
  bool j_equals_k = true;
};

SupportClassification classify_supports(const CompensatorSpec& nu, double mass_tol = 1e-12);

struct KernelDecomposition {
  std::vector<std::pair<double, double>> l_at_k;  // (time, kernel mean of W) per K-atom
  double residual_sq;  // squared L2(nu) distance between W and l * 1_K
};

/// L2-optimal constant-per-atom fit of W on the mass-one atoms. The residual
/// integrates |W - l|^2 on K-atoms and |W|^2 everywhere else (ac part and
/// sub-probability atoms), so residual_sq = 0 iff terminal bracket = 0.
KernelDecomposition kernel_decompose(const PredictableField& W, const CompensatorSpec& nu,
                                     const GridPath& x);

struct IntegrabilityReport {
  double quad_small;   // sum of |dx| ^ 1 and |dx|^2 capped: min(|dx|, dx^2)
  double alpha_small;  // min(|dx|, |dx|^(1+alpha))
  double taylor_tail;  // first-order Taylor remainder of v over jumps with |dx| > 1
};

/// Pathwise truncated sums diagnosing the two-piece integrability splits.
IntegrabilityReport check_integrability(const GridPath& x, const MarkedPointMeasure& mu_x,
                                        const std::function<double(double, double)>& v,
                                        const std::function<double(double, double)>& dv,
                                        double alpha);

}  // namespace mubsde
