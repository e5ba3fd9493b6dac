#include "mubsde/bsde.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace mubsde {

namespace {

constexpr double state_tol = 1e-9;  // "is this state on the PDMP boundary"

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// One normalized polynomial design matrix, factored once, solved per target.
// A degenerate state column (all paths at the same point) collapses the basis
// to the constant, so a deterministic state is a plain mean and not a rank
// error even under strict regression.
class StepRegression {
 public:
  StepRegression(const std::vector<double>& xs, int degree, bool strict) {
    n_ = xs.size();
    mean_ = mean_of(xs);
    lo_ = xs.front();
    hi_ = xs.front();
    double var = 0.0;
    for (double x : xs) {
      var += (x - mean_) * (x - mean_);
      lo_ = std::min(lo_, x);
      hi_ = std::max(hi_, x);
    }
    var /= static_cast<double>(n_);
    sd_ = std::sqrt(var);
    if (sd_ < 1e-12) {
      sd_ = 1.0;
      cols_ = 1;
      collapsed_ = degree > 0;
    } else {
      cols_ = static_cast<std::size_t>(degree) + 1;
    }
    phi_.resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(cols_));
    for (std::size_t i = 0; i < n_; ++i) {
      const double z = (xs[i] - mean_) / sd_;
      double p = 1.0;
      for (std::size_t j = 0; j < cols_; ++j) {
        phi_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p;
        p *= z;
      }
    }
    // Lattice-valued states (counting processes) give duplicate rows, so the
    // basis can be exactly singular up to rounding; a plain pivoted QR solve
    // keeps such a direction and feeds 1e12-scale coefficients into the
    // surrogate. The complete orthogonal decomposition honors the prescribed
    // rank threshold and returns the minimum-norm solution on the revealed
    // subspace; pivots below 1e-9 of the leading one carry no statistical
    // signal at ensemble sizes and are truncated.
    qr_.setThreshold(1e-9);
    qr_.compute(phi_);
    if (strict && static_cast<std::size_t>(qr_.rank()) < cols_)
      throw std::runtime_error(
          "regression basis is rank deficient under strict regression; lower "
          "the degree or add paths");
  }

  // Fits one target; returns the stage and the fitted values at the sample.
  PolySurrogate::Stage fit(const std::vector<double>& target,
                           std::vector<double>* fitted,
                           double* rms_residual) const {
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i)
      rhs(static_cast<Eigen::Index>(i)) = target[i];
    const Eigen::VectorXd c = qr_.solve(rhs);
    PolySurrogate::Stage st;
    st.mean = mean_;
    st.sd = sd_;
    st.lo = lo_;
    st.hi = hi_;
    st.collapsed = collapsed_;
    st.coef.assign(c.data(), c.data() + cols_);
    const Eigen::VectorXd fit = phi_ * c;
    if (fitted) fitted->assign(fit.data(), fit.data() + n_);
    if (rms_residual)
      *rms_residual = std::sqrt((fit - rhs).squaredNorm() / static_cast<double>(n_));
    return st;
  }

 private:
  std::size_t n_ = 0;
  std::size_t cols_ = 1;
  double mean_ = 0.0;
  double sd_ = 1.0;
  double lo_ = 0.0;
  double hi_ = 0.0;
  bool collapsed_ = false;
  Eigen::MatrixXd phi_;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> qr_;
};

// Per-path data resampled onto the base grid.
struct PathFrame {
  std::vector<double> xb;  // state at base nodes
  std::vector<double> dn;  // Brownian increment per base interval (may be empty)
  std::vector<double> da;  // driver clock increment per base interval
};

// Base interval (t_k, t_{k+1}] containing t; atoms sitting exactly on a base
// node belong to the interval ending there.
std::size_t interval_ending_at(const TimeGrid& base, double t) {
  const auto& nd = base.nodes();
  auto it = std::lower_bound(nd.begin(), nd.end(), t - TimeGrid::node_tol);
  std::size_t k = static_cast<std::size_t>(it - nd.begin());
  if (k == 0) throw std::invalid_argument("event time at or before the time origin");
  return std::min(k - 1, base.intervals() - 1);
}

PathFrame build_frame(const TimeGrid& base, const SimulatedScenario& s,
                      bool is_pdmp) {
  PathFrame f;
  const std::size_t m = base.intervals();
  const auto& bi = s.base_index;
  if (bi.size() != base.size())
    throw std::invalid_argument("scenario was not simulated on the ensemble base grid");
  f.xb.resize(m + 1);
  for (std::size_t k = 0; k <= m; ++k) f.xb[k] = s.x.values[bi[k]];
  if (!s.brownian.empty()) {
    f.dn.resize(m);
    for (std::size_t k = 0; k < m; ++k)
      f.dn[k] = s.brownian[bi[k + 1]] - s.brownian[bi[k]];
  }
  f.da.assign(m, 0.0);
  if (is_pdmp) {
    const GridPath clock = compensator_clock(s.nu);
    for (std::size_t k = 0; k < m; ++k)
      f.da[k] = clock.values[bi[k + 1]] - clock.values[bi[k]];
  } else {
    const auto& g = *s.x.grid;
    const auto& slope = s.dyn->clock_slope;
    for (std::size_t k = 0; k < m; ++k) {
      double acc = 0.0;
      for (std::size_t j = bi[k]; j < bi[k + 1]; ++j)
        acc += (slope ? slope(g.node(j)) : 1.0) * g.dt(j);
      f.da[k] = acc;
    }
    for (const auto& [tj, cj] : s.clock_jumps)
      f.da[interval_ending_at(base, tj)] += cj;
  }
  return f;
}

}  // namespace

double PolySurrogate::eval(std::size_t stage, double x) const {
  if (stage >= stages.size()) {
    if (!terminal) throw std::logic_error("surrogate has no terminal condition");
    return terminal(x);
  }
  const Stage& s = stages[stage];
  const double z = (std::clamp(x, s.lo, s.hi) - s.mean) / s.sd;
  double acc = 0.0;
  for (std::size_t j = s.coef.size(); j-- > 0;) acc = acc * z + s.coef[j];
  return acc;
}

std::size_t PolySurrogate::stage_of(double t) const {
  const auto& nd = base.nodes();
  auto it = std::upper_bound(nd.begin(), nd.end(), t + TimeGrid::node_tol);
  if (it == nd.begin()) return 0;
  const std::size_t k = static_cast<std::size_t>(it - nd.begin()) - 1;
  return std::min(k, stages.size());
}

std::size_t PolySurrogate::spread_stage(std::size_t stage) const {
  while (stage < stages.size() && stages[stage].collapsed) ++stage;
  return stage;
}

BsdeSolution solve_bsde(const Ensemble& ens, const BsdeProblem& problem,
                        const LsmcOptions& opts) {
  if (ens.paths.size() < 2)
    throw std::invalid_argument("at least two paths are required for regression");
  if (!problem.g) throw std::invalid_argument("terminal condition g is required");
  if (opts.degree < 0) throw std::invalid_argument("degree must be nonnegative");

  const std::size_t P = ens.paths.size();
  const std::size_t M = ens.base.intervals();
  const auto dyn = ens.paths.front().dyn;

  std::vector<PathFrame> frames;
  frames.reserve(P);
  for (const auto& s : ens.paths) frames.push_back(build_frame(ens.base, s, ens.is_pdmp));

  BsdeSolution sol;
  sol.surrogate.base = ens.base;
  sol.surrogate.stages.resize(M);
  sol.surrogate.terminal = problem.g;
  sol.surrogate.degree = opts.degree;
  sol.has_z = !ens.is_pdmp && !frames.front().dn.empty();
  sol.mean_y.assign(M + 1, 0.0);
  sol.mean_z.assign(sol.has_z ? M : 0, 0.0);
  sol.regression_residual.assign(M, 0.0);
  sol.y.assign(P, std::vector<double>(M + 1, 0.0));
  if (sol.has_z) sol.z.assign(P, std::vector<double>(M, 0.0));

  std::vector<double> y_cur(P), xk(P), ztarget(P);
  for (std::size_t p = 0; p < P; ++p) {
    y_cur[p] = problem.g(frames[p].xb[M]);
    sol.y[p][M] = y_cur[p];
  }
  sol.mean_y[M] = mean_of(y_cur);

  // The driver's jump-average term reads state increments from a first-order
  // companion fit: a high-degree polynomial evaluated out in the sparse tail
  // of the state sample has enough leverage to feed its own noise back
  // through the backward sweep and blow it up. The reported surrogate and
  // everything downstream keep the full degree.
  PolySurrogate lin;
  lin.base = ens.base;
  lin.stages.resize(M);
  lin.terminal = problem.g;
  lin.degree = 1;

  std::vector<double> cfit(P), zfit(P);
  for (std::size_t k = M; k-- > 0;) {
    const double t = ens.base.node(k);
    const double dt = ens.base.dt(k);
    for (std::size_t p = 0; p < P; ++p) xk[p] = frames[p].xb[k];

    const StepRegression reg(xk, opts.degree, opts.strict_regression);
    sol.surrogate.stages[k] = reg.fit(y_cur, &cfit, &sol.regression_residual[k]);

    if (sol.has_z) {
      // Centring by the fitted conditional mean keeps the expectation (the
      // Brownian increment has mean zero given the state) and removes the
      // 1/dt variance blowup of the raw product target.
      for (std::size_t p = 0; p < P; ++p)
        ztarget[p] = (y_cur[p] - cfit[p]) * frames[p].dn[k] / dt;
      reg.fit(ztarget, &zfit, nullptr);
    }
    if (problem.f) {
      const StepRegression linreg(xk, 1, false);
      lin.stages[k] = linreg.fit(y_cur, nullptr, nullptr);
    }

    for (std::size_t p = 0; p < P; ++p) {
      const double x = xk[p];
      const double z = sol.has_z ? zfit[p] : 0.0;
      double y = cfit[p];
      if (problem.f) {
        // rate-weighted kernel average of the surrogate jump at (t, x)
        double uint = 0.0;
        const double r = ens.paths[p].nu.ac_rate[ens.paths[p].base_index[k]];
        if (r > 0.0) {
          const MarkKernel kern = ens.is_pdmp ? dyn->pdmp_kernel(x)
                                              : ens.paths[p].nu.ac_kernel(t, x);
          const std::size_t ks = lin.spread_stage(k);
          const double vx = lin.eval(ks, x);
          uint = r * kern.integrate([&](double e) {
            const double j = ens.is_pdmp ? e : dyn->gamma_tilde(t, x, e);
            return lin.eval(ks, x + j) - vx;
          });
        }
        const double da = frames[p].da[k];
        bool converged = da == 0.0;
        for (int it = 0; !converged && it < opts.fixed_point_max_iter; ++it) {
          const double ynew = cfit[p] + problem.f(t, x, y, z, uint) * da;
          if (!std::isfinite(ynew))
            throw std::runtime_error("implicit driver step diverged");
          converged =
              std::abs(ynew - y) <= opts.fixed_point_tol * std::max(1.0, std::abs(ynew));
          y = ynew;
        }
        if (!converged)
          throw std::runtime_error(
              "implicit driver step did not converge; refine the time grid");
      }
      y_cur[p] = y;
      sol.y[p][k] = y;
      if (sol.has_z) sol.z[p][k] = zfit[p];
    }
    sol.mean_y[k] = mean_of(y_cur);
    if (sol.has_z) sol.mean_z[k] = mean_of(zfit);
  }
  sol.y0 = sol.mean_y[0];
  return sol;
}

namespace {

// Shared shape of the two jump-field builders: the value function is either
// a surrogate stage lookup or an exact v(t, x).
PredictableField jump_field(std::function<double(double, double)> value,
                            std::shared_ptr<const ScenarioDynamics> dyn,
                            double tamper) {
  if (!dyn) throw std::invalid_argument("dynamics are required to build a jump field");
  PredictableField f;
  f.zero_at_zero_mark = true;
  const bool is_pdmp = dyn->is_pdmp;
  // The centring average depends on (t, boundary) only; quadratures evaluate
  // the field at one (t, x) for many marks, so remembering the last average
  // removes a nested kernel integration from every such sweep.
  auto memo = std::make_shared<std::array<double, 3>>(
      std::array<double, 3>{std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0});
  f.eval = [value, dyn, is_pdmp, tamper, memo](double t, double xl, double e) {
    if (is_pdmp && (xl <= state_tol || xl >= 1.0 - state_tol)) {
      // Forced jump from the boundary: centre the increment so its kernel
      // average vanishes; the centring constant is the degenerate direction
      // of the identification on certain atoms.
      const double bnd = xl <= state_tol ? 0.0 : 1.0;
      if ((*memo)[0] != t || (*memo)[1] != bnd) {
        const MarkKernel q = dyn->pdmp_kernel(bnd);
        *memo = {t, bnd, q.integrate([&](double ee) { return value(t, bnd + ee); })};
      }
      return value(t, bnd + e) - (*memo)[2];
    }
    const double j = is_pdmp ? e : dyn->gamma_tilde(t, xl, e);
    return value(t, xl + j) - value(t, xl) + tamper;
  };
  return f;
}

}  // namespace

PredictableField u_field_from_solution(const BsdeSolution& sol,
                                       std::shared_ptr<const ScenarioDynamics> dyn,
                                       double tamper) {
  PolySurrogate sur = sol.surrogate;
  return jump_field(
      [sur](double t, double x) {
        return sur.eval(sur.spread_stage(sur.stage_of(t)), x);
      },
      std::move(dyn), tamper);
}

PredictableField u_field_from_oracle(std::function<double(double, double)> v,
                                     std::shared_ptr<const ScenarioDynamics> dyn,
                                     double tamper) {
  if (!v) throw std::invalid_argument("value function is required");
  return jump_field(std::move(v), std::move(dyn), tamper);
}

double ValueTable::eval(double t, double x) const {
  const double T = times.back();
  t = std::clamp(t, times.front(), T);
  x = std::clamp(x, xs.front(), xs.back());
  const double dt = (T - times.front()) / static_cast<double>(times.size() - 1);
  const double dx = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
  std::size_t j = static_cast<std::size_t>((t - times.front()) / dt);
  j = std::min(j, times.size() - 2);
  std::size_t i = static_cast<std::size_t>((x - xs.front()) / dx);
  i = std::min(i, xs.size() - 2);
  const double ft = (t - times[j]) / dt;
  const double fx = (x - xs[i]) / dx;
  const double a = v[j][i] * (1.0 - fx) + v[j][i + 1] * fx;
  const double b = v[j + 1][i] * (1.0 - fx) + v[j + 1][i + 1] * fx;
  return a * (1.0 - ft) + b * ft;
}

double ValueTable::dx(double t, double x) const {
  const double h = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
  const double lo = xs.front(), hi = xs.back();
  const double a = std::max(lo, x - h), b = std::min(hi, x + h);
  return (eval(t, b) - eval(t, a)) / (b - a);
}

ValueTable pdmp_generator_oracle(const PdmpModel& model, const BsdeProblem& problem,
                                 double horizon, std::size_t nt, std::size_t nx) {
  if (!model.h || !model.jump_kernel)
    throw std::invalid_argument("flow field and jump kernel are required");
  if (!problem.g) throw std::invalid_argument("terminal condition g is required");
  if (nt < 2 || nx < 3) throw std::invalid_argument("grid is too coarse");
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");

  ValueTable tab;
  tab.times.resize(nt + 1);
  for (std::size_t j = 0; j <= nt; ++j)
    tab.times[j] = horizon * static_cast<double>(j) / static_cast<double>(nt);
  tab.xs.resize(nx);
  const double dx = 1.0 / static_cast<double>(nx - 1);
  for (std::size_t i = 0; i < nx; ++i) tab.xs[i] = static_cast<double>(i) * dx;
  tab.v.assign(nt + 1, std::vector<double>(nx, 0.0));
  for (std::size_t i = 0; i < nx; ++i) tab.v[nt][i] = problem.g(tab.xs[i]);

  const auto interp = [&](const std::vector<double>& row, double x) {
    x = std::clamp(x, 0.0, 1.0);
    std::size_t i = static_cast<std::size_t>(x / dx);
    i = std::min(i, nx - 2);
    const double f = (x - tab.xs[i]) / dx;
    return row[i] * (1.0 - f) + row[i + 1] * f;
  };
  const auto rk4 = [&](double x, double step) {
    const double k1 = model.h(x);
    const double k2 = model.h(x + 0.5 * step * k1);
    const double k3 = model.h(x + 0.5 * step * k2);
    const double k4 = model.h(x + step * k3);
    return x + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  };
  const bool exit_hi = model.h(1.0) > 0.0;
  const bool exit_lo = model.h(0.0) < 0.0;
  const double dt = horizon / static_cast<double>(nt);

  for (std::size_t j = nt; j-- > 0;) {
    const double t = tab.times[j];
    const auto& next = tab.v[j + 1];
    auto& cur = tab.v[j];
    for (std::size_t i = 0; i < nx; ++i) {
      const double x = tab.xs[i];
      double phi = x;
      for (int ss = 0; ss < 4; ++ss) phi = rk4(phi, 0.25 * dt);
      phi = std::clamp(phi, 0.0, 1.0);
      const double carried = interp(next, phi);
      const bool interior = i > 0 && i + 1 < nx;
      const double lam = interior && model.lambda ? model.lambda(x) : 0.0;
      double uarg = 0.0;
      if (lam > 0.0) {
        const MarkKernel q = model.jump_kernel(x);
        const double qv = q.integrate([&](double e) { return interp(next, x + e); });
        uarg = lam * (qv - interp(next, x));
      }
      const double fterm =
          problem.f ? problem.f(t, x, carried, 0.0, uarg) * lam * dt : 0.0;
      cur[i] = carried + dt * uarg + fterm;
    }
    if (exit_hi) {
      const MarkKernel q = model.jump_kernel(1.0);
      const double avg = q.integrate([&](double e) { return interp(cur, 1.0 + e); });
      cur[nx - 1] = avg + (problem.f ? problem.f(t, 1.0, avg, 0.0, 0.0) : 0.0);
    }
    if (exit_lo) {
      const MarkKernel q = model.jump_kernel(0.0);
      const double avg = q.integrate([&](double e) { return interp(cur, e); });
      cur[0] = avg + (problem.f ? problem.f(t, 0.0, avg, 0.0, 0.0) : 0.0);
    }
  }
  return tab;
}

}  // namespace mubsde
