#include "mubsde/processes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mubsde/rng.hpp"

namespace mubsde {

namespace {

constexpr double time_tol = 1e-12;

double draw_nonzero_mark(const MarkKernel& k, std::mt19937_64& rng) {
  for (int i = 0; i < 100; ++i) {
    const double e = k.sample(rng);
    if (e != 0.0) return e;
  }
  throw SimulationFault("mark kernel keeps producing zero jumps");
}

// Deterministic flow x' = h(x), integrated by adaptive classical RK4 with
// step doubling and Richardson extrapolation.
class Flow {
 public:
  explicit Flow(const std::function<double(double)>& h) : h_(h) {}

  double rk4(double x, double dt) const {
    const double k1 = h_(x);
    const double k2 = h_(x + 0.5 * dt * k1);
    const double k3 = h_(x + 0.5 * dt * k2);
    const double k4 = h_(x + dt * k3);
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

  // Advance by duration dt without boundary checks.
  double advance(double x, double dt) const {
    double remaining = dt;
    double step = dt;
    int guard = 0;
    while (remaining > 0.0) {
      if (++guard > 1000000) throw SimulationFault("flow integration stalled");
      step = std::min(step, remaining);
      const double full = rk4(x, step);
      const double half = rk4(rk4(x, 0.5 * step), 0.5 * step);
      const double err = std::abs(half - full) / 15.0;
      const double tol = 1e-12 * std::max(1.0, std::abs(x));
      if (err <= tol || step <= 1e-14) {
        x = half + (half - full) / 15.0;
        remaining -= step;
        if (err < 0.25 * tol) step *= 2.0;
      } else {
        step *= 0.5;
      }
    }
    return x;
  }

  struct Advance {
    bool hit = false;
    double t_end = 0.0;
    double x_end = 0.0;
    int boundary = 0;  // 0 or 1 when hit
  };

  // Advance from (t, x) by dt, stopping at the first exit from (0, 1).
  Advance advance_watch(double t, double x, double dt) const {
    Advance out;
    if (dt <= 0.0) {
      out.t_end = t;
      out.x_end = x;
      return out;
    }
    double done = 0.0;
    double step = dt;
    int guard = 0;
    while (done < dt) {
      if (++guard > 1000000) throw SimulationFault("flow integration stalled");
      step = std::min(step, dt - done);
      const double full = rk4(x, step);
      const double half = rk4(rk4(x, 0.5 * step), 0.5 * step);
      const double err = std::abs(half - full) / 15.0;
      const double tol = 1e-12 * std::max(1.0, std::abs(x));
      if (err > tol && step > 1e-14) {
        step *= 0.5;
        continue;
      }
      const double x_new = half + (half - full) / 15.0;
      if (x_new <= 0.0 || x_new >= 1.0) {
        // first exit inside (done, done + step]: bisect the sub-flow
        double a = 0.0, b = step;
        const double x_from = x;
        while (b - a > time_tol) {
          const double m = 0.5 * (a + b);
          const double xm = advance(x_from, m);
          if (xm > 0.0 && xm < 1.0)
            a = m;
          else
            b = m;
        }
        const double tau = 0.5 * (a + b);
        const double x_at = advance(x_from, b);
        out.hit = true;
        out.t_end = t + done + tau;
        out.boundary = x_at >= 0.5 ? 1 : 0;
        out.x_end = out.boundary ? 1.0 : 0.0;
        return out;
      }
      x = x_new;
      done += step;
      if (err < 0.25 * tol) step *= 2.0;
    }
    out.t_end = t + dt;
    out.x_end = x;
    return out;
  }

 private:
  const std::function<double(double)>& h_;
};

struct PathBuilder {
  std::vector<double> nodes{0.0};
  std::vector<double> values;
  std::vector<double> lefts;

  explicit PathBuilder(double x0) : values{x0}, lefts{x0} {}

  void push(double t, double xleft, double xval) {
    if (t <= nodes.back() + time_tol)
      throw SimulationFault("coincident event times on one path (" +
                            std::to_string(nodes.back()) + " then " + std::to_string(t) +
                            ")");
    nodes.push_back(t);
    lefts.push_back(xleft);
    values.push_back(xval);
  }
};

std::vector<std::size_t> base_indices(const TimeGrid& base, const TimeGrid& fine) {
  std::vector<std::size_t> idx(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) idx[k] = fine.index_of(base.node(k));
  return idx;
}

}  // namespace

GridPath pstar_path(const SimulatedScenario& s) {
  GridPath p = GridPath::zeros(s.x.grid);
  if (s.boundary_hits.empty()) return p;
  const TimeGrid& g = *s.x.grid;
  std::size_t h = 0;
  double count = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    p.lefts[k] = count;
    while (h < s.boundary_hits.size() &&
           std::abs(s.boundary_hits[h] - g.node(k)) <= time_tol) {
      count += 1.0;
      ++h;
    }
    p.values[k] = count;
    if (k == 0) p.lefts[k] = p.values[k];
  }
  return p;
}

SimulatedScenario simulate_pdmp(const PdmpModel& model, const TimeGrid& base,
                                std::uint64_t seed, std::uint64_t path_index) {
  if (!model.h || !model.jump_kernel)
    throw std::invalid_argument("PDMP needs a flow field and a jump kernel");
  if (!(model.x0 >= 0.0 && model.x0 <= 1.0))
    throw std::invalid_argument("PDMP initial state must lie in [0, 1]");
  if (model.lambda_max > 0.0 && !model.lambda)
    throw std::invalid_argument("positive intensity majorant but no intensity");
  if (!(model.lambda_max >= 0.0))
    throw std::invalid_argument("intensity majorant must be nonnegative");

  std::mt19937_64 rng = path_rng(seed, path_index);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  const auto next_gap = [&]() { return expo(rng) / model.lambda_max; };

  Flow flow(model.h);
  PathBuilder pb(model.x0);
  std::vector<MeasureAtom> atoms;
  std::vector<double> hits;

  const double inf = std::numeric_limits<double>::infinity();
  double t = 0.0, x = model.x0;
  double candidate = model.lambda_max > 0.0 ? next_gap() : inf;
  std::size_t base_pos = 1;
  std::size_t jumps = 0;

  while (base_pos < base.size()) {
    const double t_base = base.node(base_pos);
    const bool cand_due = candidate <= t_base + time_tol;
    const bool cand_on_base = cand_due && std::abs(candidate - t_base) <= time_tol;
    const double t_target = (cand_due && !cand_on_base) ? candidate : t_base;

    const Flow::Advance adv = flow.advance_watch(t, x, t_target - t);
    if (adv.hit) {
      double th = adv.t_end;
      if (th <= time_tol) throw SimulationFault("flow exits the state space at time zero");
      const double bnd = adv.x_end;  // exactly 0.0 or 1.0
      const double mark = draw_nonzero_mark(model.jump_kernel(bnd), rng);
      const double post = bnd + mark;
      if (!(post > 0.0 && post < 1.0))
        throw ModelViolation("boundary kernel must map back into the interior");
      if (th <= pb.nodes.back() + time_tol) {
        // the crossing lies within the snap tolerance of the node just
        // created (the state there was a rounding step short of the
        // boundary): fold the hit into that node
        if (pb.values.back() != pb.lefts.back())
          throw SimulationFault("boundary hit collides with another jump");
        th = pb.nodes.back();
        pb.lefts.back() = bnd;
        pb.values.back() = post;
      } else {
        const bool consume_base = std::abs(th - t_base) <= time_tol;
        if (consume_base) th = t_base;
        pb.push(th, bnd, post);
        if (consume_base) ++base_pos;
      }
      atoms.push_back({th, mark, AtomKind::predictable});
      hits.push_back(th);
      if (++jumps > model.max_jumps) throw SimulationFault("maximum jump count exceeded");
      if (std::abs(candidate - th) <= 2.0 * time_tol) candidate = th + next_gap();
      t = th;
      x = post;
      continue;
    }

    t = t_target;
    double xleft = adv.x_end;
    if (!(xleft > -1e-9 && xleft < 1.0 + 1e-9))
      throw SimulationFault("flow escaped the state space without a registered hit");
    x = xleft;

    bool jumped = false;
    double mark = 0.0;
    const bool at_cand = cand_due;
    if (at_cand) {
      const double lam = (xleft > 0.0 && xleft < 1.0) ? model.lambda(xleft) : 0.0;
      if (lam > model.lambda_max * (1.0 + 1e-9))
        throw ModelViolation("intensity exceeds its declared majorant");
      if (unif(rng) * model.lambda_max <= lam) {
        mark = draw_nonzero_mark(model.jump_kernel(xleft), rng);
        const double post = xleft + mark;
        if (!(post > 0.0 && post < 1.0))
          throw ModelViolation("jump kernel must keep the state interior");
        x = post;
        jumped = true;
        if (++jumps > model.max_jumps) throw SimulationFault("maximum jump count exceeded");
      }
      candidate = t + next_gap();
    }

    const bool at_base = !cand_due || cand_on_base;
    if (at_base || jumped) {
      pb.push(t, xleft, x);
      if (jumped) atoms.push_back({t, mark, AtomKind::inaccessible});
    }
    if (at_base) ++base_pos;
  }

  SimulatedScenario s;
  auto dyn = std::make_shared<ScenarioDynamics>();
  dyn->model_name = model.name;
  dyn->is_pdmp = true;
  dyn->gamma_tilde = [](double, double, double e) { return e; };
  dyn->pdmp_kernel = model.jump_kernel;
  dyn->pdmp_h = model.h;
  s.dyn = std::move(dyn);
  s.seed = seed;
  s.path_index = path_index;
  auto grid = std::make_shared<const TimeGrid>(std::move(pb.nodes));
  s.x.grid = grid;
  s.x.values = std::move(pb.values);
  s.x.lefts = std::move(pb.lefts);
  s.mu = build_jump_measure(grid, std::move(atoms));
  s.boundary_hits = std::move(hits);
  s.base_index = base_indices(base, *grid);
  s.nu = pdmp_compensator(model, s);
  return s;
}

CompensatorSpec pdmp_compensator(const PdmpModel& model, const SimulatedScenario& s) {
  if (!s.dyn || !s.dyn->is_pdmp || s.dyn->model_name != model.name)
    throw std::invalid_argument("scenario was not produced by this PDMP model");
  const TimeGrid& g = *s.x.grid;
  CompensatorSpec nu;
  nu.grid = s.x.grid;
  nu.ac_rate.resize(g.intervals());
  for (std::size_t k = 0; k < g.intervals(); ++k) {
    const double xs = s.x.values[k];
    nu.ac_rate[k] = (xs > 0.0 && xs < 1.0 && model.lambda) ? model.lambda(xs) : 0.0;
  }
  nu.ac_kernel = [q = model.jump_kernel](double, double x) { return q(x); };
  for (const double th : s.boundary_hits) {
    const std::size_t node = g.index_of(th);
    const double bnd = s.x.lefts[node];
    if (!(std::abs(bnd) <= 1e-9 || std::abs(bnd - 1.0) <= 1e-9))
      throw std::invalid_argument("boundary hit does not sit on the boundary");
    nu.atoms.push_back({g.node(node), 1.0, model.jump_kernel(bnd)});
  }
  nu.index_atoms();
  return nu;
}

SimulatedScenario simulate_jumpdiff(const JumpDiffusionModel& model, const TimeGrid& base,
                                    std::uint64_t seed, std::uint64_t path_index) {
  if (!model.b || !model.gamma)
    throw std::invalid_argument("jump diffusion needs drift and jump coefficients");
  if (model.rate_max > 0.0 && (!model.rate || !model.mark_kernel))
    throw std::invalid_argument("positive thinning majorant needs rate and mark kernel");
  for (const auto& a : model.atoms) {
    if (!base.has_node(a.time))
      throw std::invalid_argument("declared atom times must be base grid nodes");
    if (!(a.mass > 0.0 && a.mass <= 1.0))
      throw std::invalid_argument("declared atom mass must lie in (0, 1]");
  }

  std::mt19937_64 rng = path_rng(seed, path_index);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  const auto next_gap = [&]() { return expo(rng) / model.rate_max; };
  const auto slope = model.clock_slope ? model.clock_slope
                                       : std::function<double(double)>([](double) { return 1.0; });
  const bool has_sigma = static_cast<bool>(model.sigma);

  PathBuilder pb(model.x0);
  std::vector<double> brown{0.0};
  std::vector<MeasureAtom> atoms;
  std::vector<std::pair<double, double>> clock_jumps;
  std::vector<double> ac_rates;      // one per created interval
  std::vector<CompensatorAtom> nu_atoms;

  std::vector<JumpDiffusionModel::DeclaredAtom> declared = model.atoms;
  std::sort(declared.begin(), declared.end(),
            [](const auto& a, const auto& b) { return a.time < b.time; });

  const double inf = std::numeric_limits<double>::infinity();
  double t = 0.0, x = model.x0, n_level = 0.0;
  double candidate = model.rate_max > 0.0 ? next_gap() : inf;
  std::size_t base_pos = 1, decl_pos = 0;

  while (base_pos < base.size()) {
    const double t_base = base.node(base_pos);
    const bool cand_due = candidate <= t_base + time_tol;
    const bool cand_on_base = cand_due && std::abs(candidate - t_base) <= time_tol;
    const double t_next = (cand_due && !cand_on_base) ? candidate : t_base;
    const bool at_base = !cand_due || cand_on_base;

    const double dt = t_next - t;
    const double dn = has_sigma ? normal(rng) * std::sqrt(dt) : 0.0;
    const double r = model.rate_max > 0.0 ? model.rate(t, x) : 0.0;
    if (!(r >= 0.0)) throw ModelViolation("driving rate must be nonnegative");
    double corr = 0.0;
    if (r > 0.0) {
      const MarkKernel kern = model.mark_kernel(t, x);
      const double tl = t, xl0 = x;
      corr = r * dt * kern.integrate([&](double e) { return model.gamma(tl, xl0, e); });
      if (!std::isfinite(corr))
        throw SimulationFault("jump coefficient is not integrable against the compensator");
    }
    double xleft = x + model.b(t, x) * slope(t) * dt - corr;
    if (has_sigma) xleft += model.sigma(t, x) * dn;
    ac_rates.push_back(r);
    n_level += dn;

    t = t_next;
    double xnew = xleft;

    if (cand_due) {
      const double r_here = model.rate(t, xleft);
      if (r_here > model.rate_max * (1.0 + 1e-9))
        throw ModelViolation("driving rate exceeds its declared majorant");
      if (unif(rng) * model.rate_max <= r_here) {
        const double e = draw_nonzero_mark(model.mark_kernel(t, xleft), rng);
        xnew += model.gamma(t, xleft, e);
        atoms.push_back({t, e, AtomKind::inaccessible});
      }
      candidate = t + next_gap();
    }

    if (at_base && decl_pos < declared.size() &&
        std::abs(declared[decl_pos].time - t_base) <= time_tol) {
      const auto& a = declared[decl_pos];
      const bool fired = a.mass >= 1.0 - 1e-12 || unif(rng) < a.mass;
      if (fired) {
        const double e = draw_nonzero_mark(a.kernel, rng);
        if (std::abs(model.gamma(t, xleft, e)) > 1e-12)
          throw ModelViolation("jump coefficient must vanish at declared atom times");
        xnew += model.gamma(t, xleft, e);
        atoms.push_back({t, e, AtomKind::predictable});
      }
      if (a.clock_jump != 0.0) {
        xnew += model.b(t, xleft) * a.clock_jump;
        clock_jumps.emplace_back(t, a.clock_jump);
      }
      nu_atoms.push_back({t, a.mass, a.kernel});
      ++decl_pos;
    }

    if (std::abs(xnew) > 1e8) throw SimulationFault("state exploded beyond 1e8");
    pb.push(t, xleft, xnew);
    brown.push_back(n_level);
    x = xnew;
    if (at_base) ++base_pos;
  }

  SimulatedScenario s;
  auto dyn = std::make_shared<ScenarioDynamics>();
  dyn->model_name = model.name;
  dyn->is_pdmp = false;
  dyn->gamma_tilde = model.gamma;
  dyn->b = model.b;
  dyn->sigma = model.sigma;
  dyn->clock_slope = slope;
  s.dyn = std::move(dyn);
  s.seed = seed;
  s.path_index = path_index;
  auto grid = std::make_shared<const TimeGrid>(std::move(pb.nodes));
  s.x.grid = grid;
  s.x.values = std::move(pb.values);
  s.x.lefts = std::move(pb.lefts);
  s.mu = build_jump_measure(grid, std::move(atoms));
  if (has_sigma) s.brownian = std::move(brown);
  s.clock_jumps = std::move(clock_jumps);
  s.base_index = base_indices(base, *grid);
  s.nu.grid = grid;
  s.nu.ac_rate = std::move(ac_rates);
  if (model.rate_max > 0.0) s.nu.ac_kernel = model.mark_kernel;
  s.nu.atoms = std::move(nu_atoms);
  s.nu.index_atoms();
  return s;
}

PathDecomposition decompose_path(const SimulatedScenario& s) {
  if (!s.dyn || !s.dyn->gamma_tilde)
    throw std::invalid_argument("scenario carries no jump map for decomposition");
  const TimeGrid& g = *s.x.grid;
  const PredictableField gam = make_field(s.dyn->gamma_tilde);
  PathDecomposition out;
  out.xi = stochastic_integral(gam, s.mu, s.nu, s.x);

  GridPath xp = GridPath::zeros(s.x.grid);
  xp.values[0] = xp.lefts[0] = s.x.values[0];
  if (s.dyn->is_pdmp) {
    // predictable part: flow increments plus the compensator of the marks
    double acc = xp.values[0];
    for (std::size_t k = 1; k < g.size(); ++k) {
      const double flow_inc = s.x.lefts[k] - s.x.values[k - 1];
      // same ac quadrature the compensated integral subtracts
      double q = 0.0;
      const double rate = s.nu.ac_rate[k - 1];
      if (rate > 0.0) {
        const double tl = g.node(k - 1);
        const double xl = s.x.values[k - 1];
        q = rate * g.dt(k - 1) *
            s.nu.ac_kernel(tl, xl).integrate(
                [&](double e) { return gam.eval(tl, xl, e); });
      }
      acc += flow_inc + q;
      xp.lefts[k] = acc;
      if (const CompensatorAtom* a = s.nu.atom_at_node(k)) {
        const double xleft = s.x.lefts[k];
        acc += a->mass * a->kernel.integrate(
                             [&](double e) { return gam.eval(g.node(k), xleft, e); });
      }
      xp.values[k] = acc;
    }
  } else {
    const auto& slope = s.dyn->clock_slope;
    const bool has_sigma = static_cast<bool>(s.dyn->sigma) && !s.brownian.empty();
    double acc = xp.values[0];
    std::size_t cj = 0;
    for (std::size_t k = 1; k < g.size(); ++k) {
      const double tl = g.node(k - 1);
      const double xl = s.x.values[k - 1];
      const double dt = g.dt(k - 1);
      acc += s.dyn->b(tl, xl) * (slope ? slope(tl) : 1.0) * dt;
      if (has_sigma) acc += s.dyn->sigma(tl, xl) * (s.brownian[k] - s.brownian[k - 1]);
      xp.lefts[k] = acc;
      while (cj < s.clock_jumps.size() &&
             std::abs(s.clock_jumps[cj].first - g.node(k)) <= time_tol) {
        acc += s.dyn->b(g.node(k), s.x.lefts[k]) * s.clock_jumps[cj].second;
        ++cj;
      }
      xp.values[k] = acc;
    }
  }
  out.xp = std::move(xp);

  out.max_gap = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    out.max_gap = std::max(out.max_gap,
                           std::abs(s.x.values[k] - out.xi.values[k] - out.xp.values[k]));
    out.max_gap = std::max(out.max_gap,
                           std::abs(s.x.lefts[k] - out.xi.lefts[k] - out.xp.lefts[k]));
  }

  out.xi_jumps_only_at_inaccessible = true;
  for (std::size_t k = 1; k < g.size(); ++k) {
    const double jump = out.xi.values[k] - out.xi.lefts[k];
    if (std::abs(jump) <= 1e-9) continue;
    const MeasureAtom* a = s.mu.atom_at_node(k);
    if (!a || a->kind != AtomKind::inaccessible) {
      out.xi_jumps_only_at_inaccessible = false;
      break;
    }
  }
  return out;
}

MarkedPointMeasure jump_measure_of_x(const SimulatedScenario& s) {
  const TimeGrid& g = *s.x.grid;
  std::vector<MeasureAtom> atoms;
  std::size_t cj = 0;
  for (std::size_t k = 1; k < g.size(); ++k) {
    const double dx = s.x.values[k] - s.x.lefts[k];
    bool clock_here = false;
    while (cj < s.clock_jumps.size() && s.clock_jumps[cj].first < g.node(k) - time_tol) ++cj;
    if (cj < s.clock_jumps.size() && std::abs(s.clock_jumps[cj].first - g.node(k)) <= time_tol)
      clock_here = true;
    if (dx == 0.0) continue;
    AtomKind kind = AtomKind::inaccessible;
    const MeasureAtom* a = s.mu.atom_at_node(k);
    if (s.dyn && s.dyn->is_pdmp) {
      kind = a ? a->kind : AtomKind::inaccessible;
    } else {
      kind = (clock_here && (!a || a->kind == AtomKind::predictable))
                 ? AtomKind::predictable
                 : AtomKind::inaccessible;
    }
    atoms.push_back({g.node(k), dx, kind});
  }
  return build_jump_measure(s.x.grid, std::move(atoms));
}

TransferReport verify_measure_transfer(const PredictableField& phi,
                                       const SimulatedScenario& s) {
  if (!phi.eval) throw std::invalid_argument("transform missing");
  if (!s.dyn || !s.dyn->gamma_tilde)
    throw std::invalid_argument("scenario carries no jump map");
  const TimeGrid& g = *s.x.grid;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!(std::abs(phi.eval(g.node(k), s.x.lefts[k], 0.0)) <= 1e-12))
      throw std::invalid_argument("transform must vanish at zero jump size");
  }
  const auto& gam = s.dyn->gamma_tilde;
  const bool pdmp = s.dyn->is_pdmp;

  double lhs = 0.0, rhs = 0.0, raw_lhs = 0.0, raw_rhs = 0.0;
  double sup = 0.0, raw_sup = 0.0;
  std::size_t cj = 0;
  for (std::size_t k = 1; k < g.size(); ++k) {
    const double t = g.node(k);
    const double tl = g.node(k - 1);
    const double xl_prev = s.x.values[k - 1];
    const double xleft = s.x.lefts[k];

    // shared ac quadrature of phi(s, gamma(s, e))
    const double rate = s.nu.ac_rate[k - 1];
    if (rate > 0.0) {
      const double q = rate * g.dt(k - 1) *
                       s.nu.ac_kernel(tl, xl_prev).integrate([&](double e) {
                         return phi.eval(tl, xl_prev, gam(tl, xl_prev, e));
                       });
      if (!std::isfinite(q)) throw NonIntegrableField("transform not integrable");
      lhs -= q;
      rhs -= q;
    }

    // jump-measure side of X
    const double dx = s.x.values[k] - s.x.lefts[k];
    if (dx != 0.0) {
      lhs += phi.eval(t, xleft, dx);
      raw_lhs += phi.eval(t, xleft, dx);
    }

    // driving-measure side
    if (const MeasureAtom* a = s.mu.atom_at_node(k)) {
      rhs += phi.eval(t, xleft, gam(t, xleft, a->mark));
      raw_rhs += phi.eval(t, xleft, gam(t, xleft, a->mark));
    }
    if (const CompensatorAtom* a = s.nu.atom_at_node(k)) {
      rhs -= a->mass * a->kernel.integrate([&](double e) {
        return phi.eval(t, xleft, gam(t, xleft, e));
      });
      if (pdmp) {
        // nu is the compensator of the jump measure of X itself
        lhs -= a->mass * a->kernel.integrate(
                             [&](double e) { return phi.eval(t, xleft, e); });
      }
    }
    if (!pdmp) {
      while (cj < s.clock_jumps.size() && s.clock_jumps[cj].first < t - time_tol) ++cj;
      if (cj < s.clock_jumps.size() && std::abs(s.clock_jumps[cj].first - t) <= time_tol) {
        const double dxp = s.dyn->b(t, xleft) * s.clock_jumps[cj].second;
        if (dxp != 0.0) {
          lhs -= phi.eval(t, xleft, dxp);  // the predictable atom of nu^X
          raw_rhs += phi.eval(t, xleft, dxp);
        }
      }
    }
    sup = std::max(sup, std::abs(lhs - rhs));
    raw_sup = std::max(raw_sup, std::abs(raw_lhs - raw_rhs));
  }

  TransferReport r;
  r.compensated_sup = sup;
  if (!pdmp) r.raw_sup = raw_sup;
  return r;
}

SimulatedScenario scripted_three_jump_scenario() {
  const double x0 = 1.0;
  const auto b = [](double, double) { return 0.2; };
  const auto gamma = [](double t, double, double e) {
    return std::abs(t - 0.5) <= time_tol ? 0.0 : e;
  };
  const auto slope = [](double) { return 1.0; };
  const MarkKernel ac_kern = MarkKernel::discrete({{0.8, 0.5}, {-0.5, 0.5}});
  const MarkKernel atom_kern = MarkKernel::point(0.6);
  const double rate = 0.4;

  auto grid = std::make_shared<const TimeGrid>(TimeGrid::uniform(1.0, 10));
  const TimeGrid& g = *grid;

  struct Scripted {
    double time;
    double mark;
    AtomKind kind;
  };
  const std::vector<Scripted> fired = {{0.3, 0.8, AtomKind::inaccessible},
                                       {0.5, 0.6, AtomKind::predictable},
                                       {0.7, -0.5, AtomKind::inaccessible}};

  GridPath x;
  x.grid = grid;
  x.values.assign(g.size(), 0.0);
  x.lefts.assign(g.size(), 0.0);
  x.values[0] = x.lefts[0] = x0;
  std::vector<double> rates(g.intervals(), rate);
  double cur = x0;
  for (std::size_t k = 1; k < g.size(); ++k) {
    const double tl = g.node(k - 1);
    const double dt = g.dt(k - 1);
    const double corr =
        rate * dt * ac_kern.integrate([&](double e) { return gamma(tl, cur, e); });
    double xleft = cur + b(tl, cur) * slope(tl) * dt - corr;
    x.lefts[k] = xleft;
    double xnew = xleft;
    for (const auto& f : fired) {
      if (std::abs(f.time - g.node(k)) <= time_tol) {
        xnew += gamma(g.node(k), xleft, f.mark);
        if (f.kind == AtomKind::predictable) xnew += b(g.node(k), xleft) * 0.25;
      }
    }
    x.values[k] = xnew;
    cur = xnew;
  }

  SimulatedScenario s;
  auto dyn = std::make_shared<ScenarioDynamics>();
  dyn->model_name = "scripted-3jump";
  dyn->is_pdmp = false;
  dyn->gamma_tilde = gamma;
  dyn->b = b;
  dyn->clock_slope = slope;
  s.dyn = std::move(dyn);
  s.x = std::move(x);
  std::vector<MeasureAtom> atoms;
  for (const auto& f : fired) atoms.push_back({f.time, f.mark, f.kind});
  s.mu = build_jump_measure(grid, std::move(atoms));
  s.nu.grid = grid;
  s.nu.ac_rate = std::move(rates);
  s.nu.ac_kernel = [ac_kern](double, double) { return ac_kern; };
  s.nu.atoms = {{0.5, 1.0, atom_kern}};
  s.nu.index_atoms();
  s.clock_jumps = {{0.5, 0.25}};
  auto base_idx = std::vector<std::size_t>(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) base_idx[k] = k;
  s.base_index = std::move(base_idx);
  return s;
}

}  // namespace mubsde
