#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>

#include "mubsde/bsde.hpp"

namespace mubsde {

namespace {

// Horizons used by the closed forms below; the registry entries must agree.
constexpr double kHorizonDefault = 1.0;
constexpr double kHorizonPdmpDet = 1.5;

// pdmp-deterministic: unit flow on [0, 1], no interior jumps, forced jump to
// 0.25 whenever the boundary 1 is reached. The value of g(x) = x is the
// terminal point of the deterministic trajectory.
double pdmp_det_terminal(double t, double x) {
  while (true) {
    const double th = t + (1.0 - x);
    if (th > kHorizonPdmpDet) return x + (kHorizonPdmpDet - t);
    t = th;
    x = 0.25;
  }
}

std::function<double(double, double)> zero2() {
  return [](double, double) { return 0.0; };
}

std::function<double(double, double, double)> zero3() {
  return [](double, double, double) { return 0.0; };
}

JumpDiffusionModel brownian_model(const std::string& name) {
  JumpDiffusionModel m;
  m.name = name;
  m.x0 = 0.0;
  m.b = zero2();
  m.sigma = [](double, double) { return 1.0; };
  m.gamma = zero3();
  return m;
}

void add_unit_poisson(JumpDiffusionModel& m) {
  m.gamma = [](double, double, double e) { return e; };
  m.rate = [](double, double) { return 1.0; };
  m.rate_max = 1.0;
  m.mark_kernel = [](double, double) { return MarkKernel::point(1.0); };
}

Benchmark make_brownian_linear() {
  Benchmark b;
  b.id = "brownian-linear";
  b.jumpdiff = brownian_model(b.id);
  b.horizon = kHorizonDefault;
  b.default_steps = 50;
  b.problem.g = [](double x) { return x; };
  b.has_closed_oracle = true;
  const ValueOracle o = closed_form_oracle(b.id);
  b.v = o.v;
  b.dv = o.dv;
  return b;
}

Benchmark make_brownian_discount() {
  Benchmark b;
  b.id = "brownian-discount";
  b.jumpdiff = brownian_model(b.id);
  b.horizon = kHorizonDefault;
  b.default_steps = 50;
  b.problem.g = [](double x) { return x; };
  b.problem.f = [](double, double, double y, double, double) { return -0.5 * y; };
  b.has_closed_oracle = true;
  b.v = [](double t, double x) { return std::exp(-0.5 * (kHorizonDefault - t)) * x; };
  b.dv = [](double t, double) { return std::exp(-0.5 * (kHorizonDefault - t)); };
  return b;
}

Benchmark make_poisson_linear() {
  Benchmark b;
  b.id = "poisson-linear";
  JumpDiffusionModel m;
  m.name = b.id;
  m.x0 = 0.0;
  m.b = zero2();
  m.gamma = zero3();
  add_unit_poisson(m);
  b.jumpdiff = m;
  b.horizon = kHorizonDefault;
  b.default_steps = 50;
  b.problem.g = [](double x) { return x; };
  b.has_closed_oracle = true;
  const ValueOracle o = closed_form_oracle(b.id);
  b.v = o.v;
  b.dv = o.dv;
  return b;
}

Benchmark make_bp_linear() {
  Benchmark b;
  b.id = "bp-linear";
  JumpDiffusionModel m = brownian_model(b.id);
  add_unit_poisson(m);
  b.jumpdiff = m;
  b.horizon = kHorizonDefault;
  b.default_steps = 50;
  b.problem.g = [](double x) { return x; };
  b.has_closed_oracle = true;
  b.v = [](double, double x) { return x; };
  b.dv = [](double, double) { return 1.0; };
  return b;
}

Benchmark make_heat_quadratic() {
  Benchmark b;
  b.id = "heat-quadratic";
  b.jumpdiff = brownian_model(b.id);
  b.horizon = kHorizonDefault;
  b.default_steps = 50;
  b.problem.g = [](double x) { return x * x; };
  b.has_closed_oracle = true;
  const ValueOracle o = closed_form_oracle(b.id);
  b.v = o.v;
  b.dv = o.dv;
  return b;
}

// Declared mass-one atom at t = 0.5 whose only effect is a clock jump of
// 0.25 entering the driver; gamma is gated off at the atom, the drift is
// zero so the state does not see the clock jump, and f = 1 keeps the value
// function affine with a downward time-jump of 0.25 at the atom.
Benchmark make_kclock_linear() {
  Benchmark b;
  b.id = "kclock-linear";
  JumpDiffusionModel m;
  m.name = b.id;
  m.x0 = 0.0;
  m.b = zero2();
  m.sigma = [](double, double) { return 0.5; };
  m.gamma = [](double t, double, double e) {
    return std::abs(t - 0.5) <= 1e-12 ? 0.0 : e;
  };
  m.rate = [](double, double) { return 0.4; };
  m.rate_max = 0.4;
  m.mark_kernel = [](double, double) {
    return MarkKernel::discrete({{0.8, 0.5}, {-0.5, 0.5}});
  };
  m.atoms.push_back({0.5, 1.0, MarkKernel::point(0.6), 0.25});
  b.jumpdiff = m;
  b.horizon = kHorizonDefault;
  b.default_steps = 50;
  b.problem.g = [](double x) { return x; };
  b.problem.f = [](double, double, double, double, double) { return 1.0; };
  b.has_closed_oracle = true;
  b.v = [](double t, double x) {
    return x + (kHorizonDefault - t) + (t < 0.5 - 1e-12 ? 0.25 : 0.0);
  };
  b.dv = [](double, double) { return 1.0; };
  return b;
}

Benchmark make_pdmp_deterministic() {
  Benchmark b;
  b.id = "pdmp-deterministic";
  b.is_pdmp = true;
  PdmpModel m;
  m.name = b.id;
  m.h = [](double) { return 1.0; };
  m.jump_kernel = [](double x) { return MarkKernel::point(0.25 - x); };
  m.x0 = 0.0;
  b.pdmp = m;
  b.horizon = kHorizonPdmpDet;
  b.default_steps = 150;
  b.problem.g = [](double x) { return x; };
  b.has_closed_oracle = true;
  const ValueOracle o = closed_form_oracle(b.id);
  b.v = o.v;
  b.dv = o.dv;
  return b;
}

// Flow attracted to 0.5, interior jumps only: the certain-jump set stays
// empty and every atom of the driving measure is totally inaccessible.
Benchmark make_pdmp_interior() {
  Benchmark b;
  b.id = "pdmp-interior";
  b.is_pdmp = true;
  PdmpModel m;
  m.name = b.id;
  m.h = [](double x) { return 0.25 * (0.5 - x); };
  m.lambda = [](double) { return 2.0; };
  m.lambda_max = 2.0;
  m.jump_kernel = [](double x) {
    std::vector<std::pair<double, double>> mw;
    mw.reserve(17);
    for (int i = 0; i <= 16; ++i) {
      const double post = 0.25 + 0.5 * static_cast<double>(i) / 16.0;
      mw.emplace_back(post - x, 1.0);
    }
    return MarkKernel::discrete(std::move(mw));
  };
  m.x0 = 0.4;
  b.pdmp = m;
  b.horizon = kHorizonDefault;
  b.default_steps = 200;
  b.problem.g = [](double x) { return x * x; };
  b.generator_oracle = true;
  return b;
}

// Steady upward flow, so paths reach the boundary and jump back in through a
// density kernel; the terminal condition is centred so its kernel average at
// the boundary matches its boundary value, keeping the value function
// continuous up to the horizon.
Benchmark make_pdmp_boundary() {
  Benchmark b;
  b.id = "pdmp-boundary";
  b.is_pdmp = true;
  PdmpModel m;
  m.name = b.id;
  m.h = [](double) { return 0.8; };
  m.lambda = [](double) { return 1.5; };
  m.lambda_max = 1.5;
  m.jump_kernel = [](double x) {
    if (x >= 1.0 - 1e-9)
      return MarkKernel::density([](double) { return 1.0; }, -0.5, -0.1, 1.0);
    std::vector<std::pair<double, double>> mw;
    mw.reserve(7);
    for (int i = 0; i <= 6; ++i) {
      const double post = 0.15 + 0.05 * static_cast<double>(i);
      mw.emplace_back(post - x, 1.0);
    }
    return MarkKernel::discrete(std::move(mw));
  };
  m.x0 = 0.3;
  b.pdmp = m;
  b.horizon = kHorizonPdmpDet;
  b.default_steps = 200;
  const double c = 0.85 - 1.0 / 45.0;
  b.problem.g = [c](double x) { return (x - c) * (x - c); };
  b.generator_oracle = true;
  return b;
}

Benchmark make_violating_h() {
  Benchmark b = make_pdmp_interior();
  b.id = "violating-h";
  b.pdmp.name = b.id;
  b.u_tamper = 0.3;
  // An additive field corruption alone stays mean-zero under the compensated
  // integral, so the positive control also mis-declares the intensity: the
  // ensemble-mean test then fails deterministically, not just the sup test.
  b.nu_rate_tamper = 1.3;
  return b;
}

Benchmark make_scripted() {
  Benchmark b;
  b.id = "scripted-3jump";
  b.is_scripted = true;
  JumpDiffusionModel m;
  m.name = b.id;
  m.x0 = 1.0;
  m.b = [](double, double) { return 0.2; };
  m.gamma = [](double t, double, double e) {
    return std::abs(t - 0.5) <= 1e-12 ? 0.0 : e;
  };
  m.rate = [](double, double) { return 0.4; };
  m.rate_max = 0.4;
  m.mark_kernel = [](double, double) {
    return MarkKernel::discrete({{0.8, 0.5}, {-0.5, 0.5}});
  };
  m.atoms.push_back({0.5, 1.0, MarkKernel::point(0.6), 0.25});
  b.jumpdiff = m;
  b.horizon = 1.0;
  b.default_steps = 10;
  b.problem.g = [](double x) { return x; };
  return b;
}

std::vector<Benchmark> build_registry() {
  std::vector<Benchmark> out;
  out.push_back(make_brownian_linear());
  out.push_back(make_brownian_discount());
  out.push_back(make_poisson_linear());
  out.push_back(make_bp_linear());
  out.push_back(make_heat_quadratic());
  out.push_back(make_kclock_linear());
  out.push_back(make_pdmp_deterministic());
  out.push_back(make_pdmp_interior());
  out.push_back(make_pdmp_boundary());
  out.push_back(make_violating_h());
  out.push_back(make_scripted());
  return out;
}

const std::vector<Benchmark>& registry() {
  static const std::vector<Benchmark> reg = build_registry();
  return reg;
}

}  // namespace

std::vector<std::string> benchmark_ids() {
  std::vector<std::string> ids;
  ids.reserve(registry().size());
  for (const auto& b : registry()) ids.push_back(b.id);
  return ids;
}

const Benchmark& get_benchmark(const std::string& id) {
  for (const auto& b : registry())
    if (b.id == id) return b;
  std::string known;
  for (const auto& b : registry()) {
    if (!known.empty()) known += ", ";
    known += b.id;
  }
  throw std::out_of_range("unknown benchmark '" + id + "'; known ids: " + known);
}

ValueOracle closed_form_oracle(const std::string& id) {
  if (id == "brownian-linear" || id == "poisson-linear") {
    return {[](double, double x) { return x; }, [](double, double) { return 1.0; }};
  }
  if (id == "heat-quadratic") {
    return {[](double t, double x) { return x * x + (kHorizonDefault - t); },
            [](double, double x) { return 2.0 * x; }};
  }
  if (id == "pdmp-deterministic") {
    return {&pdmp_det_terminal, [](double t, double x) {
              return t + (1.0 - x) > kHorizonPdmpDet ? 1.0 : 0.0;
            }};
  }
  throw std::out_of_range("no closed-form value function for '" + id + "'");
}

ValueOracle benchmark_oracle(const Benchmark& b, std::size_t nt, std::size_t nx) {
  if (b.has_closed_oracle) return {b.v, b.dv};
  if (b.generator_oracle) {
    auto tab = std::make_shared<ValueTable>(
        pdmp_generator_oracle(b.pdmp, b.problem, b.horizon, nt, nx));
    return {[tab](double t, double x) { return tab->eval(t, x); },
            [tab](double t, double x) { return tab->dx(t, x); }};
  }
  throw std::out_of_range("benchmark '" + b.id + "' has no value oracle");
}

Ensemble simulate_ensemble(const Benchmark& b, std::size_t steps,
                           std::size_t n_paths, std::uint64_t seed) {
  if (n_paths == 0) throw std::invalid_argument("at least one path is required");
  Ensemble ens;
  ens.is_pdmp = b.is_pdmp;
  if (b.is_scripted) {
    const SimulatedScenario s0 = scripted_three_jump_scenario();
    ens.base = TimeGrid(s0.x.grid->nodes());
    ens.paths.assign(n_paths, s0);
    return ens;
  }
  if (b.is_pdmp) {
    ens.base = TimeGrid::uniform(b.horizon, steps);
  } else {
    std::vector<double> events;
    for (const auto& a : b.jumpdiff.atoms) events.push_back(a.time);
    ens.base = TimeGrid::with_events(b.horizon, steps, std::move(events));
  }
  ens.paths.reserve(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) {
    ens.paths.push_back(b.is_pdmp ? simulate_pdmp(b.pdmp, ens.base, seed, p)
                                  : simulate_jumpdiff(b.jumpdiff, ens.base, seed, p));
    if (p > 0) ens.paths.back().dyn = ens.paths.front().dyn;
    if (b.nu_rate_tamper != 1.0)
      for (double& r : ens.paths.back().nu.ac_rate) r *= b.nu_rate_tamper;
  }
  return ens;
}

}  // namespace mubsde
