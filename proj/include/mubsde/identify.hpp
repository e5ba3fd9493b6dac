#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mubsde/bsde.hpp"

namespace mubsde {

// Difference between a candidate jump field and the value increment it is
// supposed to represent: H(t, x, e) = U(t, x, e) - (v(t, x + jump) - v(t, x)),
// the jump being gamma_tilde(t, x, e) (the mark itself for piecewise
// deterministic paths). When U is exact the compensated integral of H is the
// zero process, up to a per-atom constant on the mass-one atoms that the
// compensated measure cannot see.
PredictableField compute_H(const PredictableField& U,
                           std::function<double(double, double)> v,
                           std::shared_ptr<const ScenarioDynamics> dyn);

// Terminal value and running sup of |W * (mu - nu)| along one path. The
// absolutely continuous part is corrected to second order (trapezoid between
// the post-jump left state and the stored pre-jump right state of each
// interval): the left-endpoint rule alone misses the within-interval motion
// of the kernel average at first order in the step, a bias that survives
// ensemble averaging.
struct PathMartingaleStat {
  double terminal = 0.0;
  double sup_abs = 0.0;
};
PathMartingaleStat compensated_path_stats(const PredictableField& W,
                                          const SimulatedScenario& s);

// Terminal isometry gap I_T^2 - C_T for one path, where I is the compensated
// integral of W and C its predictable bracket, both with the second-order
// compensator quadrature correction described above applied to the
// absolutely continuous part (W for the integral, W^2 for the bracket). The
// left-endpoint objects alone would leave the gap a first-order mean drift.
double isometry_gap(const PredictableField& W, const SimulatedScenario& s);

// Two-sided test that a batch of per-path statistics has mean zero. The
// z-score uses the sample standard error; mean_pass is |mean| <= 3.29 se
// (the two-sided 0.1% normal band) with a tiny absolute floor so an
// identically zero sample passes. sup_pathwise is the largest running sup
// seen in the batch.
struct MartingaleNullReport {
  double mean = 0.0;
  double se = 0.0;
  double zscore = 0.0;
  double sup_pathwise = 0.0;
  std::size_t n_paths = 0;
  bool mean_pass = false;
};
MartingaleNullReport martingale_null_test(const std::vector<double>& terminals,
                                          const std::vector<double>& sups);

// Relative L2(dP x dt) error of the regression z against the reference
// sigma(t, x) dv(t, x) read along the ensemble paths. Rejects solutions
// without a diffusion component.
struct ZIdentificationReport {
  double rel_error = 0.0;
  double num = 0.0;  // squared error mass
  double den = 0.0;  // squared reference mass
  std::size_t n_paths = 0;
};
ZIdentificationReport identify_Z(const Ensemble& ens, const BsdeSolution& sol,
                                 const std::function<double(double, double)>& dv);

// L2(nu) decomposition of H = U - value increment accumulated over an
// ensemble. u_l2 and h_l2 are the field norms, h_off_k_l2 integrates H^2
// away from the mass-one atoms only, and post_fit_residual additionally
// removes the optimal constant on each mass-one atom before measuring what
// is left, so it is blind to the direction those atoms cannot determine.
// l_fit samples the fitted constants of the first path, labelled by the
// event that produced the atom.
struct UIdentificationReport {
  double u_l2 = 0.0;
  double h_l2 = 0.0;
  double h_off_k_l2 = 0.0;
  double post_fit_residual = 0.0;
  std::size_t n_paths = 0;
  std::vector<std::pair<std::string, double>> l_fit;
};
UIdentificationReport identify_U(const PredictableField& U,
                                 const std::function<double(double, double)>& v,
                                 const Ensemble& ens);

// Discrete covariation over one path between the Brownian driver and the
// finite-variation part of v(t, X_t): the value path minus its integral
// against the continuous moves of X and minus its jumps integrated against
// the compensated measure. Mean zero when v solves the terminal problem.
// A time-dependent gradient couples the time decay of v to the Brownian
// increment hidden in the state move; the summands subtract that cross term,
// which keeps the statistic centered instead of drifting at order dt.
double orthogonality_stat(const std::function<double(double, double)>& v,
                          const std::function<double(double, double)>& dv,
                          const SimulatedScenario& s);

struct OrthogonalityReport {
  double mean = 0.0;
  double se = 0.0;
  double zscore = 0.0;
  std::size_t n_paths = 0;
  bool pass = false;
};
OrthogonalityReport orthogonality_test(
    const std::function<double(double, double)>& v,
    const std::function<double(double, double)>& dv, const Ensemble& ens);

}  // namespace mubsde
