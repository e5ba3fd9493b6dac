#include "mubsde/measures.hpp"

#include <algorithm>
#include <cmath>

namespace mubsde {

namespace {

constexpr double k_mass_tol = 1e-12;

bool is_k_atom(const CompensatorAtom& a, double tol = k_mass_tol) {
  return std::abs(a.mass - 1.0) <= tol;
}

void require_same_grid(const GridPtr& a, const GridPtr& b, const char* what) {
  if (a == b) return;
  if (a && b && a->nodes() == b->nodes()) return;
  throw std::invalid_argument(std::string("grid mismatch between ") + what);
}

// node -> atom index, or npos
std::vector<std::size_t> node_map(std::size_t n_nodes, const std::vector<std::size_t>& atom_nodes) {
  std::vector<std::size_t> m(n_nodes, static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < atom_nodes.size(); ++i) m[atom_nodes[i]] = i;
  return m;
}

}  // namespace

const MeasureAtom* MarkedPointMeasure::atom_at_node(std::size_t k) const {
  for (std::size_t i = 0; i < atom_nodes.size(); ++i)
    if (atom_nodes[i] == k) return &atoms[i];
  return nullptr;
}

const CompensatorAtom* CompensatorSpec::atom_at_node(std::size_t k) const {
  for (std::size_t i = 0; i < atom_nodes.size(); ++i)
    if (atom_nodes[i] == k) return &atoms[i];
  return nullptr;
}

void CompensatorSpec::index_atoms() {
  if (!grid) throw std::invalid_argument("compensator has no grid");
  if (ac_rate.size() != grid->intervals())
    throw std::invalid_argument("compensator rate vector must have one entry per interval");
  for (double r : ac_rate)
    if (!(r >= 0.0) || !std::isfinite(r))
      throw std::invalid_argument("compensator rates must be finite and nonnegative");
  bool any_positive = false;
  for (double r : ac_rate) any_positive = any_positive || r > 0.0;
  if (any_positive && !ac_kernel)
    throw std::invalid_argument("positive ac rate requires an ac mark kernel");
  std::sort(atoms.begin(), atoms.end(),
            [](const CompensatorAtom& a, const CompensatorAtom& b) { return a.time < b.time; });
  atom_nodes.clear();
  atom_nodes.reserve(atoms.size());
  std::size_t prev = 0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    auto& a = atoms[i];
    if (!(a.mass >= 0.0) || a.mass > 1.0 + k_mass_tol)
      throw std::invalid_argument("compensator atom mass must lie in [0, 1]");
    a.mass = std::min(a.mass, 1.0);
    const std::size_t node = grid->index_of(a.time);
    if (node == 0) throw std::invalid_argument("compensator atom at time 0");
    if (i > 0 && node == prev) throw std::invalid_argument("duplicate compensator atom time");
    a.time = grid->node(node);
    atom_nodes.push_back(node);
    prev = node;
  }
}

MarkedPointMeasure build_jump_measure(GridPtr grid, std::vector<MeasureAtom> atom_log) {
  if (!grid) throw std::invalid_argument("jump measure needs a grid");
  std::sort(atom_log.begin(), atom_log.end(),
            [](const MeasureAtom& a, const MeasureAtom& b) { return a.time < b.time; });
  MarkedPointMeasure mu;
  mu.grid = grid;
  mu.atoms = std::move(atom_log);
  mu.atom_nodes.reserve(mu.atoms.size());
  std::size_t prev = 0;
  for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
    auto& a = mu.atoms[i];
    if (!std::isfinite(a.mark) || a.mark == 0.0)
      throw std::invalid_argument("measure atoms must carry a nonzero finite mark");
    if (!grid->has_node(a.time))
      throw std::invalid_argument("atom time is not a grid node");
    const std::size_t node = grid->index_of(a.time);
    if (node == 0) throw std::invalid_argument("atom at time 0 is not allowed");
    if (i > 0 && node == prev)
      throw std::invalid_argument("at most one atom per time instant");
    a.time = grid->node(node);
    mu.atom_nodes.push_back(node);
    prev = node;
  }
  return mu;
}

GridPath compensator_clock(const CompensatorSpec& nu) {
  if (!nu.grid) throw std::invalid_argument("compensator has no grid");
  if (nu.ac_rate.size() != nu.grid->intervals())
    throw std::invalid_argument("compensator rate vector must have one entry per interval");
  const auto nu_map = node_map(nu.grid->size(), nu.atom_nodes);
  GridPath a = GridPath::zeros(nu.grid);
  double acc = 0.0;
  for (std::size_t k = 1; k < nu.grid->size(); ++k) {
    acc += nu.ac_rate[k - 1] * nu.grid->dt(k - 1);
    a.lefts[k] = acc;
    if (nu_map[k] != static_cast<std::size_t>(-1)) acc += nu.atoms[nu_map[k]].mass;
    a.values[k] = acc;
  }
  return a;
}

PredictableField make_field(std::function<double(double, double, double)> f) {
  if (!f) throw std::invalid_argument("field needs an evaluator");
  PredictableField w;
  w.eval = std::move(f);
  return w;
}

PredictableField make_jump_transform(std::function<double(double, double)> phi) {
  if (!phi) throw std::invalid_argument("jump transform needs an evaluator");
  for (double t : {0.0, 0.31, 0.5, 0.77, 1.0, 1.5}) {
    const double v = phi(t, 0.0);
    if (!(std::abs(v) <= 1e-12))
      throw std::invalid_argument("jump transform must vanish at zero jump size");
  }
  PredictableField w;
  w.eval = [p = std::move(phi)](double t, double, double e) { return p(t, e); };
  w.zero_at_zero_mark = true;
  return w;
}

namespace {

struct SweepTerms {
  // per node k: ac quadrature over (t_{k-1}, t_k], atom terms at t_k
  double ac = 0.0;          // integral of W against the ac part
  double ac_sq = 0.0;       // integral of W^2 against the ac part
  double hat = 0.0;         // mass * kernel integral of W at the atom
  double hat_sq = 0.0;      // mass * kernel integral of W^2 at the atom
  double mass = 0.0;        // atom mass (0 if none)
  bool has_atom = false;
  double mu_w = 0.0;        // W at mu's atom
  bool has_mu_atom = false;
  bool finite = true;
};

// Shared evaluation of every term the operations below need at node k.
SweepTerms sweep_node(const PredictableField& W, const MarkedPointMeasure& mu,
                      const CompensatorSpec& nu, const GridPath& x, std::size_t k,
                      const std::vector<std::size_t>& mu_map,
                      const std::vector<std::size_t>& nu_map, bool need_sq) {
  SweepTerms s;
  const TimeGrid& g = *x.grid;
  const double tl = g.node(k - 1);
  const double dt = g.dt(k - 1);
  const double rate = nu.ac_rate[k - 1];
  if (rate > 0.0) {
    const MarkKernel kern = nu.ac_kernel(tl, x.values[k - 1]);
    const double xl = x.values[k - 1];
    s.ac = rate * dt * kern.integrate([&](double e) { return W.eval(tl, xl, e); });
    if (need_sq)
      s.ac_sq = rate * dt * kern.integrate([&](double e) {
        const double w = W.eval(tl, xl, e);
        return w * w;
      });
    if (!std::isfinite(s.ac) || (need_sq && !std::isfinite(s.ac_sq))) s.finite = false;
  }
  const double t = g.node(k);
  const double xleft = x.lefts[k];
  if (nu_map[k] != static_cast<std::size_t>(-1)) {
    const CompensatorAtom& a = nu.atoms[nu_map[k]];
    s.has_atom = true;
    s.mass = a.mass;
    s.hat = a.mass * a.kernel.integrate([&](double e) { return W.eval(t, xleft, e); });
    if (need_sq)
      s.hat_sq = a.mass * a.kernel.integrate([&](double e) {
        const double w = W.eval(t, xleft, e);
        return w * w;
      });
    if (!std::isfinite(s.hat) || (need_sq && !std::isfinite(s.hat_sq))) s.finite = false;
  }
  if (mu_map[k] != static_cast<std::size_t>(-1)) {
    const MeasureAtom& a = mu.atoms[mu_map[k]];
    s.has_mu_atom = true;
    s.mu_w = W.eval(t, xleft, a.mark);
    if (!std::isfinite(s.mu_w)) s.finite = false;
  }
  return s;
}

void check_inputs(const MarkedPointMeasure& mu, const CompensatorSpec& nu, const GridPath& x) {
  x.validate();
  require_same_grid(x.grid, mu.grid, "path and measure");
  require_same_grid(x.grid, nu.grid, "path and compensator");
  if (nu.ac_rate.size() != x.grid->intervals())
    throw std::invalid_argument("compensator rate vector must have one entry per interval");
}

}  // namespace

GridPath stochastic_integral(const PredictableField& W, const MarkedPointMeasure& mu,
                             const CompensatorSpec& nu, const GridPath& x) {
  check_inputs(mu, nu, x);
  const std::size_t n = x.grid->size();
  const auto mu_map = node_map(n, mu.atom_nodes);
  const auto nu_map = node_map(n, nu.atom_nodes);
  GridPath out = GridPath::zeros(x.grid);
  double acc = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    const SweepTerms s = sweep_node(W, mu, nu, x, k, mu_map, nu_map, false);
    if (!s.finite)
      throw NonIntegrableField("integrand is not integrable against the compensator");
    acc -= s.ac;
    out.lefts[k] = acc;
    if (s.has_mu_atom) acc += s.mu_w;
    if (s.has_atom) acc -= s.hat;
    out.values[k] = acc;
  }
  return out;
}

std::optional<HatTilde> hat_tilde(const PredictableField& W, const MarkedPointMeasure& mu,
                                  const CompensatorSpec& nu, const GridPath& x, double t) {
  check_inputs(mu, nu, x);
  HatTilde r{0.0, 0.0};
  if (!x.grid->has_node(t)) return r;  // no atom can live off the grid
  const std::size_t k = x.grid->index_of(t);
  const double tt = x.grid->node(k);
  const double xleft = x.lefts[k];
  for (std::size_t i = 0; i < nu.atom_nodes.size(); ++i) {
    if (nu.atom_nodes[i] != k) continue;
    const CompensatorAtom& a = nu.atoms[i];
    const double hat = a.mass * a.kernel.integrate([&](double e) { return W.eval(tt, xleft, e); });
    if (!std::isfinite(hat)) return std::nullopt;
    r.hat = hat;
  }
  double mu_sum = 0.0;
  for (std::size_t i = 0; i < mu.atom_nodes.size(); ++i) {
    if (mu.atom_nodes[i] != k) continue;
    mu_sum += W.eval(tt, xleft, mu.atoms[i].mark);
  }
  if (!std::isfinite(mu_sum)) return std::nullopt;
  r.tilde = mu_sum - r.hat;
  return r;
}

std::optional<GridPath> bracket_C(const PredictableField& W, const MarkedPointMeasure& mu,
                                  const CompensatorSpec& nu, const GridPath& x) {
  check_inputs(mu, nu, x);
  const std::size_t n = x.grid->size();
  const auto mu_map = node_map(n, mu.atom_nodes);
  const auto nu_map = node_map(n, nu.atom_nodes);
  GridPath out = GridPath::zeros(x.grid);
  double acc = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    const SweepTerms s = sweep_node(W, mu, nu, x, k, mu_map, nu_map, true);
    if (!s.finite) return std::nullopt;
    acc += s.ac_sq;
    out.lefts[k] = acc;
    if (s.has_atom) {
      // int |W - hat|^2 dnu_atom plus the sub-probability correction
      // (1 - mass) * hat^2 collapses to int W^2 dnu_atom - hat^2 for every
      // mass in [0, 1]; nonnegative by Cauchy-Schwarz.
      double term = s.hat_sq - s.hat * s.hat;
      if (term < 0.0 && term > -1e-15 * std::max(1.0, s.hat_sq)) term = 0.0;
      acc += term;
      if (!std::isfinite(acc)) return std::nullopt;
    }
    out.values[k] = acc;
  }
  return out;
}

std::optional<PathNorms> field_norms(const PredictableField& W, const MarkedPointMeasure& mu,
                                     const CompensatorSpec& nu, const GridPath& x) {
  const auto c = bracket_C(W, mu, nu, x);
  if (!c) return std::nullopt;
  check_inputs(mu, nu, x);
  const std::size_t n = x.grid->size();
  const auto mu_map = node_map(n, mu.atom_nodes);
  const auto nu_map = node_map(n, nu.atom_nodes);
  double l2 = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    const SweepTerms s = sweep_node(W, mu, nu, x, k, mu_map, nu_map, true);
    if (!s.finite) return std::nullopt;
    l2 += s.ac_sq + s.hat_sq;
  }
  if (!std::isfinite(l2)) return std::nullopt;
  return PathNorms{c->values.back(), l2};
}

SupportClassification classify_supports(const CompensatorSpec& nu, double mass_tol) {
  SupportClassification r;
  for (const auto& a : nu.atoms) {
    if (a.mass > 0.0) {
      r.j_times.push_back(a.time);
      if (std::abs(a.mass - 1.0) <= mass_tol) r.k_times.push_back(a.time);
    }
  }
  r.j_equals_k = r.j_times.size() == r.k_times.size();
  return r;
}

KernelDecomposition kernel_decompose(const PredictableField& W, const CompensatorSpec& nu,
                                     const GridPath& x) {
  x.validate();
  require_same_grid(x.grid, nu.grid, "path and compensator");
  KernelDecomposition r;
  r.residual_sq = 0.0;
  const TimeGrid& g = *x.grid;
  // ac part: W is fit by nothing there, the residual integrates |W|^2
  for (std::size_t k = 0; k < g.intervals(); ++k) {
    const double rate = nu.ac_rate[k];
    if (rate <= 0.0) continue;
    const double tl = g.node(k);
    const double xl = x.values[k];
    const MarkKernel kern = nu.ac_kernel(tl, xl);
    const double q = rate * g.dt(k) * kern.integrate([&](double e) {
      const double w = W.eval(tl, xl, e);
      return w * w;
    });
    if (!std::isfinite(q)) throw NonIntegrableField("field is not square integrable (ac part)");
    r.residual_sq += q;
  }
  for (std::size_t i = 0; i < nu.atoms.size(); ++i) {
    const CompensatorAtom& a = nu.atoms[i];
    if (!(a.mass > 0.0)) continue;
    const std::size_t node = nu.atom_nodes[i];
    const double t = g.node(node);
    const double xleft = x.lefts[node];
    const double m1 = a.kernel.integrate([&](double e) { return W.eval(t, xleft, e); });
    const double m2 = a.kernel.integrate([&](double e) {
      const double w = W.eval(t, xleft, e);
      return w * w;
    });
    if (!std::isfinite(m1) || !std::isfinite(m2))
      throw NonIntegrableField("field is not square integrable at a compensator atom");
    if (is_k_atom(a)) {
      // L2-optimal constant on this atom is the kernel mean
      r.l_at_k.emplace_back(a.time, m1);
      double term = a.mass * (m2 - m1 * m1);
      if (term < 0.0 && term > -1e-15 * std::max(1.0, m2)) term = 0.0;
      r.residual_sq += term;
    } else {
      r.residual_sq += a.mass * m2;
    }
  }
  return r;
}

IntegrabilityReport check_integrability(const GridPath& x, const MarkedPointMeasure& mu_x,
                                        const std::function<double(double, double)>& v,
                                        const std::function<double(double, double)>& dv,
                                        double alpha) {
  x.validate();
  require_same_grid(x.grid, mu_x.grid, "path and jump measure");
  if (!(alpha > 0.0) || !(alpha <= 1.0))
    throw std::invalid_argument("alpha must lie in (0, 1]");
  IntegrabilityReport r{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < mu_x.atoms.size(); ++i) {
    const MeasureAtom& a = mu_x.atoms[i];
    const double dx = a.mark;
    const double ax = std::abs(dx);
    r.quad_small += std::min(ax, dx * dx);
    r.alpha_small += std::min(ax, std::pow(ax, 1.0 + alpha));
    if (ax > 1.0) {
      const std::size_t node = mu_x.atom_nodes[i];
      const double t = a.time;
      const double xl = x.lefts[node];
      r.taylor_tail += std::abs(v(t, xl + dx) - v(t, xl) - dx * dv(t, xl));
    }
  }
  return r;
}

}  // namespace mubsde
