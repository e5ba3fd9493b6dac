#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mubsde/processes.hpp"
#include "mubsde/stats.hpp"

using namespace mubsde;

namespace {

PdmpModel stationary_pdmp(double lambda, double lambda_max) {
  PdmpModel m;
  m.name = "stationary";
  m.h = [](double) { return 0.0; };
  m.lambda = [lambda](double) { return lambda; };
  m.lambda_max = lambda_max;
  // jump to 0.45 or 0.55 regardless of the current state
  m.jump_kernel = [](double x) {
    return MarkKernel::discrete({{0.45 - x, 0.5}, {0.55 - x, 0.5}});
  };
  m.x0 = 0.5;
  return m;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("thinned interior jumps have exponential waiting times") {
  const TimeGrid base = TimeGrid::uniform(8.0, 16);
  for (const double majorant : {2.0, 5.0}) {
    const PdmpModel m = stationary_pdmp(2.0, majorant);
    std::vector<double> first;
    for (std::uint64_t p = 0; p < 10000; ++p) {
      const SimulatedScenario s = simulate_pdmp(m, base, 91, p);
      CHECK(s.boundary_hits.empty());
      if (!s.mu.atoms.empty()) first.push_back(s.mu.atoms.front().time);
    }
    CHECK(first.size() > 9990);  // P(no jump in [0,8]) = e^{-16}
    const double d = ks_statistic(first, [](double t) { return 1.0 - std::exp(-2.0 * t); });
    const double n = static_cast<double>(first.size());
    CHECK(kolmogorov_tail(std::sqrt(n) * d) > 0.001);
  }
}

TEST_CASE("interior jump counts have the right mean") {
  const TimeGrid base = TimeGrid::uniform(1.0, 10);
  JumpDiffusionModel m;
  m.name = "poisson";
  m.x0 = 0.0;
  m.b = [](double, double) { return 0.0; };
  m.gamma = [](double, double, double e) { return e; };
  m.rate = [](double, double) { return 1.0; };
  m.rate_max = 4.0;  // deliberately loose majorant
  m.mark_kernel = [](double, double) { return MarkKernel::point(1.0); };

  const std::size_t n = 100000;
  std::vector<double> counts(n);
  for (std::uint64_t p = 0; p < n; ++p)
    counts[p] = static_cast<double>(simulate_jumpdiff(m, base, 17, p).mu.atoms.size());
  const MeanSE ms = mean_se(counts);
  CHECK(std::abs(ms.mean - 1.0) < 3.0 * ms.se);
}

TEST_CASE("same seed reproduces a path bitwise, other seeds do not") {
  const TimeGrid base = TimeGrid::uniform(1.0, 8);
  const PdmpModel m = stationary_pdmp(3.0, 3.0);
  const SimulatedScenario a = simulate_pdmp(m, base, 7, 5);
  const SimulatedScenario b = simulate_pdmp(m, base, 7, 5);
  REQUIRE_EQ(a.x.grid->nodes(), b.x.grid->nodes());
  CHECK_EQ(a.x.values, b.x.values);
  CHECK_EQ(a.x.lefts, b.x.lefts);
  REQUIRE_EQ(a.mu.atoms.size(), b.mu.atoms.size());
  for (std::size_t i = 0; i < a.mu.atoms.size(); ++i) {
    CHECK_EQ(a.mu.atoms[i].time, b.mu.atoms[i].time);
    CHECK_EQ(a.mu.atoms[i].mark, b.mu.atoms[i].mark);
  }
  const SimulatedScenario c = simulate_pdmp(m, base, 7, 6);
  CHECK(a.x.grid->nodes() != c.x.grid->nodes());
}

TEST_CASE("boundary hits are located to machine tolerance") {
  // constant flow: from 0.3 at unit speed the boundary is reached at 0.7,
  // then from 0.25 again 0.75 later
  PdmpModel m;
  m.name = "ramp";
  m.h = [](double) { return 1.0; };
  m.lambda_max = 0.0;
  m.jump_kernel = [](double x) { return MarkKernel::point(0.25 - x); };
  m.x0 = 0.3;
  const TimeGrid base = TimeGrid::uniform(1.5, 6);
  const SimulatedScenario s = simulate_pdmp(m, base, 1, 0);

  REQUIRE_EQ(s.boundary_hits.size(), 2);
  CHECK(std::abs(s.boundary_hits[0] - 0.7) <= 1e-11);
  CHECK(std::abs(s.boundary_hits[1] - 1.45) <= 1e-11);
  for (const double th : s.boundary_hits) {
    const std::size_t k = s.x.grid->index_of(th);
    CHECK_EQ(s.x.lefts[k], 1.0);    // exactly on the boundary
    CHECK_EQ(s.x.values[k], 0.25);  // exactly the kernel target
  }
  REQUIRE_EQ(s.nu.atoms.size(), 2);
  CHECK_EQ(s.nu.atoms[0].mass, 1.0);
  CHECK_EQ(s.nu.atoms[1].mass, 1.0);
  CHECK_EQ(s.mu.atoms[0].kind, AtomKind::predictable);

  const GridPath p = pstar_path(s);
  CHECK_EQ(p.values.back(), 2.0);
  CHECK_EQ(p.values[0], 0.0);
  const std::size_t k0 = s.x.grid->index_of(s.boundary_hits[0]);
  CHECK_EQ(p.lefts[k0], 0.0);
  CHECK_EQ(p.values[k0], 1.0);
}

TEST_CASE("adaptive flow integration matches a closed-form exit time") {
  // x' = 0.5 + x from 0.25 reaches 1 at log(2)
  PdmpModel m;
  m.name = "exp-flow";
  m.h = [](double x) { return 0.5 + x; };
  m.lambda_max = 0.0;
  m.jump_kernel = [](double x) { return MarkKernel::point(0.5 - x); };
  m.x0 = 0.25;
  const TimeGrid base = TimeGrid::uniform(0.8, 4);
  const SimulatedScenario s = simulate_pdmp(m, base, 1, 0);
  REQUIRE_EQ(s.boundary_hits.size(), 1);
  CHECK(std::abs(s.boundary_hits[0] - std::log(2.0)) <= 1e-9);
}

TEST_CASE("hits landing on a base node are snapped onto it") {
  PdmpModel m;
  m.name = "snap";
  m.h = [](double) { return 1.0; };
  m.lambda_max = 0.0;
  m.jump_kernel = [](double x) { return MarkKernel::point(0.25 - x); };
  m.x0 = 0.25;  // hits 1 exactly at t = 0.75, a base node
  const TimeGrid base = TimeGrid::uniform(1.0, 4);
  const SimulatedScenario s = simulate_pdmp(m, base, 1, 0);
  REQUIRE_EQ(s.boundary_hits.size(), 1);
  CHECK_EQ(s.boundary_hits[0], 0.75);
  CHECK_EQ(s.x.grid->size(), base.size());  // no extra node created
}

TEST_CASE("model violations and faults are reported as such") {
  // intensity above its declared majorant
  PdmpModel bad = stationary_pdmp(3.0, 2.0);
  const TimeGrid base = TimeGrid::uniform(5.0, 10);
  CHECK_THROWS_AS((void)simulate_pdmp(bad, base, 3, 0), ModelViolation);

  // jump kernel leaving the state space
  PdmpModel out = stationary_pdmp(2.0, 2.0);
  out.jump_kernel = [](double x) { return MarkKernel::point(1.7 - x); };
  CHECK_THROWS_AS((void)simulate_pdmp(out, base, 3, 0), ModelViolation);

  // a boundary start is allowed only when the flow moves inward
  PdmpModel edge = stationary_pdmp(1.0, 1.0);
  edge.x0 = 1.0;
  CHECK_THROWS_AS((void)simulate_pdmp(edge, base, 3, 0), SimulationFault);
  PdmpModel inward;
  inward.name = "inward";
  inward.h = [](double) { return 1.0; };
  inward.lambda_max = 0.0;
  inward.jump_kernel = [](double x) { return MarkKernel::point(0.25 - x); };
  inward.x0 = 0.0;
  const SimulatedScenario si = simulate_pdmp(inward, TimeGrid::uniform(1.5, 6), 3, 0);
  REQUIRE_EQ(si.boundary_hits.size(), 1);
  CHECK_EQ(si.boundary_hits[0], 1.0);  // unit flow from 0 reaches 1 at t = 1

  // jump coefficient that fails to vanish at a declared atom time
  JumpDiffusionModel jd;
  jd.name = "bad-gate";
  jd.b = [](double, double) { return 0.0; };
  jd.gamma = [](double, double, double e) { return e; };
  jd.atoms = {{0.5, 1.0, MarkKernel::point(1.0), 0.0}};
  const TimeGrid b2 = TimeGrid::uniform(1.0, 4);
  CHECK_THROWS_AS((void)simulate_jumpdiff(jd, b2, 3, 0), ModelViolation);

  // declared atom off the base grid
  JumpDiffusionModel off = jd;
  off.atoms = {{0.3, 1.0, MarkKernel::point(1.0), 0.0}};
  CHECK_THROWS_AS((void)simulate_jumpdiff(off, b2, 3, 0), std::invalid_argument);

  // exploding drift
  JumpDiffusionModel boom;
  boom.name = "boom";
  boom.b = [](double, double) { return 4e8; };
  boom.gamma = [](double, double, double) { return 0.0; };
  CHECK_THROWS_AS((void)simulate_jumpdiff(boom, b2, 3, 0), SimulationFault);

  // driving rate above its majorant
  JumpDiffusionModel hot;
  hot.name = "hot";
  hot.b = [](double, double) { return 0.0; };
  hot.gamma = [](double, double, double e) { return e; };
  hot.rate = [](double, double) { return 3.0; };
  hot.rate_max = 2.0;
  hot.mark_kernel = [](double, double) { return MarkKernel::point(1.0); };
  CHECK_THROWS_AS((void)simulate_jumpdiff(hot, TimeGrid::uniform(5.0, 10), 3, 0),
                  ModelViolation);
}

TEST_CASE("a pure diffusion reproduces its driving noise exactly") {
  const TimeGrid base = TimeGrid::uniform(1.0, 10);
  JumpDiffusionModel m;
  m.name = "bm";
  m.x0 = 0.0;
  m.b = [](double, double) { return 0.0; };
  m.sigma = [](double, double) { return 1.0; };
  m.gamma = [](double, double, double) { return 0.0; };

  std::vector<double> terminals;
  for (std::uint64_t p = 0; p < 2000; ++p) {
    const SimulatedScenario s = simulate_jumpdiff(m, base, 5, p);
    REQUIRE_EQ(s.brownian.size(), s.x.values.size());
    for (std::size_t k = 0; k < s.x.values.size(); ++k)
      CHECK_EQ(s.x.values[k], s.brownian[k]);
    terminals.push_back(s.x.terminal());
  }
  const double d = ks_statistic(terminals, normal_cdf);
  CHECK(kolmogorov_tail(std::sqrt(2000.0) * d) > 0.001);
}

TEST_CASE("declared atoms fire with their declared mass") {
  const TimeGrid base = TimeGrid::uniform(1.0, 4);
  JumpDiffusionModel m;
  m.name = "partial";
  m.b = [](double, double) { return 0.0; };
  m.gamma = [](double t, double, double e) {
    return std::abs(t - 0.5) <= 1e-12 ? 0.0 : e;
  };
  m.atoms = {{0.5, 0.25, MarkKernel::point(1.0), 0.0}};

  const std::size_t n = 100000;
  std::vector<double> fired(n);
  for (std::uint64_t p = 0; p < n; ++p)
    fired[p] = simulate_jumpdiff(m, base, 23, p).mu.atoms.empty() ? 0.0 : 1.0;
  const MeanSE ms = mean_se(fired);
  CHECK(std::abs(ms.mean - 0.25) < 3.29 * ms.se);
}

TEST_CASE("scripted scenario matches its hand enumeration") {
  const SimulatedScenario s = scripted_three_jump_scenario();
  const TimeGrid& g = *s.x.grid;
  REQUIRE_EQ(g.size(), 11);

  // independent re-enumeration: drift 0.02 per step, ac correction
  // 0.4 * 0.1 * (0.5*0.8 - 0.5*0.5) = 0.006 except on the interval whose left
  // endpoint gates the jump coefficient to zero
  std::vector<double> expect_values(11), expect_lefts(11);
  double cur = 1.0;
  expect_values[0] = expect_lefts[0] = cur;
  for (std::size_t k = 1; k <= 10; ++k) {
    const double tl = 0.1 * static_cast<double>(k - 1);
    const double corr = std::abs(tl - 0.5) <= 1e-12 ? 0.0 : 0.006;
    double xl = cur + 0.02 - corr;
    expect_lefts[k] = xl;
    double xv = xl;
    if (k == 3) xv += 0.8;
    if (k == 5) xv += 0.2 * 0.25;  // gated jump contributes nothing, clock does
    if (k == 7) xv -= 0.5;
    expect_values[k] = xv;
    cur = xv;
  }
  for (std::size_t k = 0; k <= 10; ++k) {
    CHECK_EQ(s.x.values[k], doctest::Approx(expect_values[k]).epsilon(1e-13));
    CHECK_EQ(s.x.lefts[k], doctest::Approx(expect_lefts[k]).epsilon(1e-13));
  }
  CHECK_EQ(s.x.terminal(), doctest::Approx(1.496).epsilon(1e-12));

  REQUIRE_EQ(s.mu.atoms.size(), 3);
  CHECK_EQ(s.mu.atoms[1].kind, AtomKind::predictable);
  REQUIRE_EQ(s.nu.atoms.size(), 1);
  CHECK_EQ(s.nu.atoms[0].mass, 1.0);
  REQUIRE_EQ(s.clock_jumps.size(), 1);
  CHECK_EQ(s.clock_jumps[0].second, 0.25);
}

TEST_CASE("jumps of x inherit time and kind bookkeeping") {
  const SimulatedScenario s = scripted_three_jump_scenario();
  const MarkedPointMeasure mx = jump_measure_of_x(s);
  REQUIRE_EQ(mx.atoms.size(), 3);
  CHECK_EQ(mx.atoms[0].time, 0.3);
  CHECK_EQ(mx.atoms[0].mark, doctest::Approx(0.8).epsilon(1e-13));
  CHECK_EQ(mx.atoms[0].kind, AtomKind::inaccessible);
  CHECK_EQ(mx.atoms[1].time, 0.5);
  CHECK_EQ(mx.atoms[1].mark, doctest::Approx(0.05).epsilon(1e-13));
  CHECK_EQ(mx.atoms[1].kind, AtomKind::predictable);
  CHECK_EQ(mx.atoms[2].mark, doctest::Approx(-0.5).epsilon(1e-13));
  CHECK_EQ(mx.atoms[2].kind, AtomKind::inaccessible);
}

TEST_CASE("path splits into compensated-jump and predictable parts") {
  // scripted jump diffusion
  const SimulatedScenario sc = scripted_three_jump_scenario();
  const PathDecomposition dc = decompose_path(sc);
  CHECK(dc.max_gap <= 1e-9);
  CHECK(dc.xi_jumps_only_at_inaccessible);
  CHECK_EQ(dc.xi.values[0], 0.0);

  // simulated jump diffusion with drift, noise, jumps and a declared atom
  const TimeGrid base = TimeGrid::uniform(1.0, 20);
  JumpDiffusionModel m;
  m.name = "full";
  m.x0 = 0.3;
  m.b = [](double t, double x) { return 0.5 - 0.2 * x + 0.1 * t; };
  m.sigma = [](double, double x) { return 0.4 + 0.1 * std::sin(x); };
  m.gamma = [](double t, double x, double e) {
    return std::abs(t - 0.5) <= 1e-12 ? 0.0 : e * (1.0 + 0.25 * std::cos(x));
  };
  m.rate = [](double, double x) { return 1.0 + 0.5 / (1.0 + x * x); };
  m.rate_max = 1.5;
  m.mark_kernel = [](double, double) {
    return MarkKernel::discrete({{0.5, 0.25}, {-0.25, 0.75}});
  };
  m.atoms = {{0.5, 1.0, MarkKernel::point(1.0), 0.2}};
  m.clock_slope = [](double t) { return 1.0 + 0.5 * t; };
  for (std::uint64_t p = 0; p < 50; ++p) {
    const SimulatedScenario s = simulate_jumpdiff(m, base, 11, p);
    const PathDecomposition d = decompose_path(s);
    CHECK(d.max_gap <= 1e-9);
    CHECK(d.xi_jumps_only_at_inaccessible);
  }

  // PDMP with a deterministic boundary kernel: the split is exact and the
  // compensated part never moves at the predictable hits
  PdmpModel pm;
  pm.name = "flow-jump";
  pm.h = [](double) { return 0.6; };
  pm.lambda = [](double x) { return 1.0 + x; };
  pm.lambda_max = 2.0;
  pm.jump_kernel = [](double x) { return MarkKernel::point(0.4 - x); };
  pm.x0 = 0.5;
  const TimeGrid pbase = TimeGrid::uniform(2.0, 20);
  for (std::uint64_t p = 0; p < 50; ++p) {
    const SimulatedScenario s = simulate_pdmp(pm, pbase, 13, p);
    const PathDecomposition d = decompose_path(s);
    CHECK(d.max_gap <= 1e-9);
    CHECK(d.xi_jumps_only_at_inaccessible);
  }

  // random boundary kernel: the compensated part does move at hits, and the
  // audit flag reports it
  PdmpModel rnd = pm;
  rnd.name = "random-post";
  rnd.jump_kernel = [](double x) {
    return MarkKernel::discrete({{0.3 - x, 0.5}, {0.6 - x, 0.5}});
  };
  bool saw_flagged = false;
  for (std::uint64_t p = 0; p < 50; ++p) {
    const SimulatedScenario s = simulate_pdmp(rnd, pbase, 29, p);
    const PathDecomposition d = decompose_path(s);
    CHECK(d.max_gap <= 1e-9);
    if (!s.boundary_hits.empty()) saw_flagged = saw_flagged || !d.xi_jumps_only_at_inaccessible;
  }
  CHECK(saw_flagged);
}

TEST_CASE("measure transfer holds on scripted and simulated paths") {
  const PredictableField sq =
      make_jump_transform([](double, double y) { return std::min(y * y, 1.0); });
  const PredictableField am =
      make_jump_transform([](double, double y) { return std::min(std::abs(y), 1.0); });

  const SimulatedScenario sc = scripted_three_jump_scenario();
  for (const PredictableField* phi : {&sq, &am}) {
    const TransferReport r = verify_measure_transfer(*phi, sc);
    CHECK(r.compensated_sup <= 1e-9);
    REQUIRE(r.raw_sup.has_value());
    CHECK(*r.raw_sup <= 1e-9);
  }

  // tampering with a driving mark (without touching the path) must surface
  SimulatedScenario bad = scripted_three_jump_scenario();
  bad.mu.atoms[0].mark = 0.9;
  const TransferReport rb = verify_measure_transfer(am, bad);
  CHECK(rb.compensated_sup > 0.05);
  REQUIRE(rb.raw_sup.has_value());
  CHECK(*rb.raw_sup > 0.05);

  // simulated jump diffusion
  const TimeGrid base = TimeGrid::uniform(1.0, 10);
  JumpDiffusionModel m;
  m.name = "jd";
  m.x0 = 0.1;
  m.b = [](double, double x) { return -0.3 * x; };
  m.sigma = [](double, double) { return 0.3; };
  m.gamma = [](double, double x, double e) { return e * (1.0 + 0.25 * std::cos(x)); };
  m.rate = [](double, double) { return 1.2; };
  m.rate_max = 1.2;
  m.mark_kernel = [](double, double) {
    return MarkKernel::discrete({{0.7, 0.5}, {-0.4, 0.5}});
  };
  for (std::uint64_t p = 0; p < 50; ++p) {
    const SimulatedScenario s = simulate_jumpdiff(m, base, 37, p);
    const TransferReport r = verify_measure_transfer(sq, s);
    CHECK(r.compensated_sup <= 1e-9);
    REQUIRE(r.raw_sup.has_value());
    CHECK(*r.raw_sup <= 1e-9);
  }

  // PDMP: the driving measure is the jump measure, raw bookkeeping is not
  // separable, only the compensated identity is reported
  const PdmpModel pm = stationary_pdmp(2.0, 2.0);
  const TimeGrid pbase = TimeGrid::uniform(2.0, 10);
  for (std::uint64_t p = 0; p < 25; ++p) {
    const SimulatedScenario s = simulate_pdmp(pm, pbase, 41, p);
    const TransferReport r = verify_measure_transfer(sq, s);
    CHECK(r.compensated_sup <= 1e-9);
    CHECK_FALSE(r.raw_sup.has_value());
  }

  // transforms that do not vanish at zero jump size are refused
  const PredictableField off =
      make_field([](double, double, double e) { return e + 0.1; });
  CHECK_THROWS_AS((void)verify_measure_transfer(off, sc), std::invalid_argument);
}

TEST_CASE("compensator rebuild rejects a foreign scenario") {
  const PdmpModel m = stationary_pdmp(2.0, 2.0);
  const TimeGrid base = TimeGrid::uniform(1.0, 4);
  const SimulatedScenario s = simulate_pdmp(m, base, 1, 0);
  PdmpModel other = m;
  other.name = "someone-else";
  CHECK_THROWS_AS((void)pdmp_compensator(other, s), std::invalid_argument);
  const CompensatorSpec again = pdmp_compensator(m, s);
  CHECK_EQ(again.ac_rate, s.nu.ac_rate);
}
