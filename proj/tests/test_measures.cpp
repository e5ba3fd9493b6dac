#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <vector>

#include "mubsde/measures.hpp"
#include "mubsde/rng.hpp"
#include "mubsde/stats.hpp"

#include "brute_oracle.hpp"

using namespace mubsde;

namespace {

GridPtr make_grid(std::vector<double> nodes) {
  return std::make_shared<const TimeGrid>(std::move(nodes));
}

GridPtr uniform_grid(double horizon, std::size_t steps) {
  return std::make_shared<const TimeGrid>(TimeGrid::uniform(horizon, steps));
}

PredictableField const_field(double v) {
  return make_field([v](double, double, double) { return v; });
}

PredictableField mark_field() {
  return make_field([](double, double, double e) { return e; });
}

}  // namespace

TEST_CASE("time grid construction and lookup") {
  const TimeGrid g = TimeGrid::uniform(1.5, 3);
  CHECK_EQ(g.size(), 4);
  CHECK_EQ(g.node(0), 0.0);
  CHECK_EQ(g.node(2), 1.0);
  CHECK_EQ(g.horizon(), 1.5);
  CHECK(g.has_node(0.5));
  CHECK(g.has_node(0.5 + 5e-13));
  CHECK_FALSE(g.has_node(0.6));
  CHECK_EQ(g.index_of(1.0 - 5e-13), 2);
  CHECK_EQ(g.snap(0.5 + 5e-13), 0.5);
  CHECK_EQ(g.snap(0.61), 0.61);
  CHECK_THROWS_AS((void)g.index_of(0.6), std::invalid_argument);

  const TimeGrid e = TimeGrid::with_events(1.0, 4, {0.3, 0.25 + 1e-13, 0.95});
  CHECK_EQ(e.size(), 7);  // 0.25 swallowed the nearby event
  CHECK(e.has_node(0.3));
  CHECK(e.has_node(0.95));

  CHECK_THROWS_AS(TimeGrid({0.0}), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid({0.1, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid({0.0, 0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid::with_events(1.0, 4, {1.2}), std::invalid_argument);
}

TEST_CASE("cadlag path validation") {
  auto g = uniform_grid(1.0, 2);
  GridPath p = GridPath::zeros(g);
  CHECK_EQ(p.values.size(), 3);
  p.values.pop_back();
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.values.push_back(0.0);
  p.lefts[0] = 1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("discrete kernels normalize and integrate exactly") {
  const MarkKernel k = MarkKernel::discrete({{1.0, 2.0}, {-1.0, 2.0}, {3.0, 0.0}});
  CHECK(k.is_discrete());
  CHECK_EQ(k.atoms().size(), 2);  // zero-weight atom dropped
  CHECK_EQ(k.integrate([](double e) { return e * e; }), 1.0);
  CHECK_EQ(k.mean(), 0.0);
  CHECK_EQ(MarkKernel::point(0.75).mean(), 0.75);

  CHECK_THROWS_AS(MarkKernel::discrete({{1.0, -0.5}}), std::invalid_argument);
  CHECK_THROWS_AS(MarkKernel::discrete({{1.0, 0.0}}), std::invalid_argument);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(MarkKernel::discrete({{inf, 1.0}}), std::invalid_argument);
}

TEST_CASE("density kernels: quadrature accuracy and sampling") {
  const MarkKernel u = MarkKernel::density([](double) { return 3.0; }, 0.0, 2.0, 3.5);
  CHECK_EQ(u.mean(), doctest::Approx(1.0).epsilon(1e-13));
  CHECK_EQ(u.integrate([](double e) { return e * e; }),
           doctest::Approx(4.0 / 3.0).epsilon(1e-13));
  CHECK_EQ(u.integrate([](double) { return 1.0; }), doctest::Approx(1.0).epsilon(1e-15));

  const MarkKernel n = MarkKernel::density(
      [](double e) { return std::exp(-8.0 * e * e); }, -1.0, 1.0, 1.1);
  CHECK_EQ(n.mean(), doctest::Approx(0.0).epsilon(1e-13));

  std::mt19937_64 rng = path_rng(7, 0);
  double acc = 0.0;
  const int m = 20000;
  for (int i = 0; i < m; ++i) acc += u.sample(rng);
  // uniform on [0,2]: mean 1, sd 1/sqrt(3)
  CHECK(std::abs(acc / m - 1.0) < 4.0 / std::sqrt(3.0 * m));

  CHECK_THROWS_AS(MarkKernel::density(nullptr, 0.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(MarkKernel::density([](double) { return 1.0; }, 1.0, 0.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(MarkKernel::density([](double) { return 0.0; }, 0.0, 1.0, 1.0),
                  std::invalid_argument);
}

TEST_CASE("summation and sample statistics helpers") {
  std::vector<double> xs(1000);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(i + 1);
  CHECK_EQ(pairwise_sum(xs), 500500.0);

  const MeanSE ms = mean_se({1.0, 2.0, 3.0, 4.0});
  CHECK_EQ(ms.mean, 2.5);
  CHECK_EQ(ms.se, doctest::Approx(std::sqrt(5.0 / 12.0)).epsilon(1e-14));
  CHECK_EQ(ms.n, 4);

  const double d = ks_statistic({0.25, 0.75}, [](double t) { return t; });
  CHECK_EQ(d, doctest::Approx(0.25).epsilon(1e-14));
  CHECK(kolmogorov_tail(0.05) > 0.999);
  CHECK(kolmogorov_tail(3.0) < 1e-6);
}

TEST_CASE("path rng substreams are reproducible and distinct") {
  std::mt19937_64 a = path_rng(42, 3), b = path_rng(42, 3);
  for (int i = 0; i < 8; ++i) CHECK_EQ(a(), b());
  std::mt19937_64 c = path_rng(42, 4), d = path_rng(43, 3);
  bool all_same_c = true, all_same_d = true;
  std::mt19937_64 a2 = path_rng(42, 3);
  for (int i = 0; i < 8; ++i) {
    const std::uint64_t r = a2();
    all_same_c = all_same_c && (c() == r);
    all_same_d = all_same_d && (d() == r);
  }
  CHECK_FALSE(all_same_c);
  CHECK_FALSE(all_same_d);
}

TEST_CASE("compensated counting integral is exact for a constant rate") {
  // dyadic grid, rate 2, unit marks: integral of 1 d(mu - nu) = count - 2t
  auto g = uniform_grid(1.0, 4);
  const GridPath x = GridPath::zeros(g);
  const MarkedPointMeasure mu = build_jump_measure(
      g, {{0.5, 1.0, AtomKind::inaccessible}, {0.75, 1.0, AtomKind::inaccessible}});
  CompensatorSpec nu;
  nu.grid = g;
  nu.ac_rate.assign(4, 2.0);
  nu.ac_kernel = [](double, double) { return MarkKernel::point(1.0); };
  nu.index_atoms();

  const GridPath i1 = stochastic_integral(const_field(1.0), mu, nu, x);
  CHECK_EQ(i1.values[0], 0.0);
  CHECK_EQ(i1.lefts[1], -0.5);
  CHECK_EQ(i1.values[1], -0.5);
  CHECK_EQ(i1.lefts[2], -1.0);
  CHECK_EQ(i1.values[2], 0.0);   // first atom
  CHECK_EQ(i1.lefts[3], -0.5);
  CHECK_EQ(i1.values[3], 0.5);   // second atom
  CHECK_EQ(i1.values[4], 0.0);   // exact cancellation at T

  const auto norms = field_norms(const_field(1.0), mu, nu, x);
  REQUIRE(norms.has_value());
  CHECK_EQ(norms->g2, 2.0);  // no compensator atoms: bracket = square norm
  CHECK_EQ(norms->l2, 2.0);
}

TEST_CASE("atom averages and the centered residual at a jump time") {
  auto g = make_grid({0.0, 0.5, 1.0});
  const GridPath x = GridPath::zeros(g);
  const MarkedPointMeasure mu =
      build_jump_measure(g, {{0.5, 2.0, AtomKind::predictable}});
  CompensatorSpec nu;
  nu.grid = g;
  nu.ac_rate.assign(2, 0.0);
  nu.atoms = {{0.5, 0.5, MarkKernel::discrete({{1.0, 0.5}, {2.0, 0.5}})}};
  nu.index_atoms();

  const PredictableField w2 = make_field([](double, double, double e) { return e * e; });
  const auto ht = hat_tilde(w2, mu, nu, x, 0.5);
  REQUIRE(ht.has_value());
  CHECK_EQ(ht->hat, 1.25);   // 0.5 * (0.5*1 + 0.5*4)
  CHECK_EQ(ht->tilde, 2.75);  // 4 - 1.25

  // off the grid and at atom-free nodes both sides vanish
  const auto off = hat_tilde(w2, mu, nu, x, 0.33);
  REQUIRE(off.has_value());
  CHECK_EQ(off->hat, 0.0);
  CHECK_EQ(off->tilde, 0.0);
  const auto at_t = hat_tilde(w2, mu, nu, x, 1.0);
  REQUIRE(at_t.has_value());
  CHECK_EQ(at_t->hat, 0.0);
  CHECK_EQ(at_t->tilde, 0.0);

  // a non-integrable field reports "undefined", never an infinity
  const double inf = std::numeric_limits<double>::infinity();
  const PredictableField bad =
      make_field([inf](double, double, double e) { return e == 2.0 ? inf : e; });
  CHECK_FALSE(hat_tilde(bad, mu, nu, x, 0.5).has_value());
}

TEST_CASE("bracket of a single sub-probability atom matches hand values") {
  auto g = make_grid({0.0, 0.5, 1.0});
  const GridPath x = GridPath::zeros(g);
  const MarkedPointMeasure mu = build_jump_measure(g, {});
  CompensatorSpec nu;
  nu.grid = g;
  nu.ac_rate.assign(2, 0.0);
  nu.atoms = {{0.5, 0.75, MarkKernel::discrete({{1.0, 0.5}, {-1.0, 0.5}})}};
  nu.index_atoms();

  // symmetric marks: the average vanishes, the bracket is mass * second moment
  const auto b1 = bracket_C(mark_field(), mu, nu, x);
  REQUIRE(b1.has_value());
  CHECK_EQ(b1->lefts[1], 0.0);
  CHECK_EQ(b1->values[1], 0.75);
  CHECK_EQ(b1->values[2], 0.75);

  // constant field: the atom term is mass * (1 - mass), the indicator variance
  const auto b2 = bracket_C(const_field(1.0), mu, nu, x);
  REQUIRE(b2.has_value());
  CHECK_EQ(b2->values.back(), 0.1875);
}

TEST_CASE("terminal bracket never exceeds the compensator square norm") {
  std::mt19937_64 rng = path_rng(2024, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = uniform_grid(1.0, 8);
    const GridPath x = GridPath::zeros(g);
    const MarkedPointMeasure mu = build_jump_measure(g, {});
    CompensatorSpec nu;
    nu.grid = g;
    const double rate = 2.0 * unif(rng);
    nu.ac_rate.assign(8, rate);
    std::vector<std::pair<double, double>> ac_marks;
    const int n_ac = 1 + static_cast<int>(3.0 * unif(rng));
    for (int i = 0; i < n_ac; ++i)
      ac_marks.emplace_back(4.0 * unif(rng) - 2.0 + 0.01, 0.1 + unif(rng));
    const MarkKernel ac_kern = MarkKernel::discrete(ac_marks);
    nu.ac_kernel = [ac_kern](double, double) { return ac_kern; };
    const int n_atoms = static_cast<int>(4.0 * unif(rng));
    for (int i = 0; i < n_atoms; ++i) {
      std::vector<std::pair<double, double>> am;
      const int n_m = 1 + static_cast<int>(3.0 * unif(rng));
      for (int j = 0; j < n_m; ++j)
        am.emplace_back(4.0 * unif(rng) - 2.0 + 0.01, 0.1 + unif(rng));
      nu.atoms.push_back({0.125 * (1 + 2 * i), unif(rng), MarkKernel::discrete(am)});
    }
    nu.index_atoms();

    const PredictableField W = make_field(
        [](double t, double, double e) { return std::sin(3.0 * e + t) + 0.5 * e; });
    const auto norms = field_norms(W, mu, nu, x);
    REQUIRE(norms.has_value());
    CHECK(norms->g2 <= norms->l2 * (1.0 + 1e-12) + 1e-12);

    const auto br = bracket_C(W, mu, nu, x);
    REQUIRE(br.has_value());
    for (std::size_t k = 1; k < br->values.size(); ++k) {
      CHECK(br->lefts[k] >= br->values[k - 1] - 1e-12);
      CHECK(br->values[k] >= br->lefts[k] - 1e-12);
    }
    CHECK_EQ(br->values.back(), norms->g2);
  }
}

TEST_CASE("support classification separates certain from uncertain atoms") {
  auto g = uniform_grid(1.0, 4);
  CompensatorSpec nu;
  nu.grid = g;
  nu.ac_rate.assign(4, 0.0);
  nu.atoms = {{0.25, 1.0, MarkKernel::point(1.0)},
              {0.5, 0.5, MarkKernel::point(1.0)},
              {0.75, 1e-13, MarkKernel::point(1.0)}};
  nu.index_atoms();
  const SupportClassification c = classify_supports(nu);
  CHECK_EQ(c.j_times.size(), 3);
  CHECK_EQ(c.k_times.size(), 1);
  CHECK_EQ(c.k_times[0], 0.25);
  CHECK_FALSE(c.j_equals_k);

  CompensatorSpec all_k;
  all_k.grid = g;
  all_k.ac_rate.assign(4, 1.0);
  all_k.ac_kernel = [](double, double) { return MarkKernel::point(1.0); };
  all_k.atoms = {{0.5, 1.0, MarkKernel::point(1.0)}};
  all_k.index_atoms();
  CHECK(classify_supports(all_k).j_equals_k);
}

TEST_CASE("constant fit on certain atoms: averages and residual") {
  auto g = uniform_grid(1.0, 4);
  const GridPath x = GridPath::zeros(g);
  CompensatorSpec nu;
  nu.grid = g;
  nu.ac_rate.assign(4, 1.0);
  nu.ac_kernel = [](double, double) { return MarkKernel::point(5.0); };
  nu.atoms = {{0.25, 1.0, MarkKernel::discrete({{1.0, 0.5}, {3.0, 0.5}})},
              {0.5, 0.5, MarkKernel::point(2.0)}};
  nu.index_atoms();

  const KernelDecomposition kd = kernel_decompose(mark_field(), nu, x);
  REQUIRE_EQ(kd.l_at_k.size(), 1);
  CHECK_EQ(kd.l_at_k[0].first, 0.25);
  CHECK_EQ(kd.l_at_k[0].second, 2.0);  // average of {1, 3}
  // ac: 25 per unit time; certain atom: variance 1; uncertain atom: 0.5 * 4
  CHECK_EQ(kd.residual_sq, 28.0);
}

TEST_CASE("exhaustive dyadic sweep agrees with the reference bitwise") {
  const brute::EnumerationResult r = brute::run_enumeration();
  CHECK_EQ(r.cases, 20u * 20u * 20u * 2u * brute::tables().size());
  CHECK_EQ(r.mismatches, 0);
  CHECK_EQ(r.equivalence_breaks, 0);
  CHECK(r.zero_bracket > 0);
  CHECK(r.nonzero_bracket > 0);
}

TEST_CASE("pathwise integrability diagnostics") {
  auto g = uniform_grid(1.0, 4);
  GridPath x = GridPath::zeros(g);
  x.lefts = {0.0, 1.0, 1.0, 2.0, -1.0};
  x.values = {0.0, 1.5, 1.0, 0.0, 2.0};
  const MarkedPointMeasure mu_x = build_jump_measure(
      g, {{0.25, 0.5, AtomKind::inaccessible},
          {0.75, -2.0, AtomKind::inaccessible},
          {1.0, 3.0, AtomKind::inaccessible}});
  const auto v = [](double, double y) { return y * y; };
  const auto dv = [](double, double y) { return 2.0 * y; };

  const IntegrabilityReport r = check_integrability(x, mu_x, v, dv, 0.5);
  CHECK_EQ(r.quad_small, 5.25);  // 0.25 + 2 + 3
  CHECK_EQ(r.alpha_small, doctest::Approx(std::pow(0.5, 1.5) + 5.0).epsilon(1e-14));
  CHECK_EQ(r.taylor_tail, 13.0);  // second-order terms 4 + 9

  CHECK_THROWS_AS(check_integrability(x, mu_x, v, dv, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(check_integrability(x, mu_x, v, dv, 1.5), std::invalid_argument);
}

TEST_CASE("jump transforms must vanish at zero jump size") {
  const PredictableField ok =
      make_jump_transform([](double, double y) { return std::min(std::abs(y), 1.0); });
  CHECK(ok.zero_at_zero_mark);
  CHECK_EQ(ok.eval(0.3, 99.0, -3.0), 1.0);
  CHECK_THROWS_AS(make_jump_transform([](double, double y) { return y + 0.1; }),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_jump_transform(nullptr), std::invalid_argument);
  CHECK_THROWS_AS(make_field(nullptr), std::invalid_argument);
}

TEST_CASE("atom log and compensator validation") {
  auto g = uniform_grid(1.0, 4);
  CHECK_THROWS_AS(build_jump_measure(g, {{0.25, 0.0, AtomKind::inaccessible}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_jump_measure(g, {{0.3, 1.0, AtomKind::inaccessible}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_jump_measure(g, {{0.0, 1.0, AtomKind::inaccessible}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_jump_measure(g, {{0.25, 1.0, AtomKind::inaccessible},
                                         {0.25, 2.0, AtomKind::inaccessible}}),
                  std::invalid_argument);

  CompensatorSpec nu;
  nu.grid = g;
  nu.ac_rate.assign(4, 0.0);
  nu.atoms = {{0.25, 1.5, MarkKernel::point(1.0)}};
  CHECK_THROWS_AS(nu.index_atoms(), std::invalid_argument);
  nu.atoms = {{0.0, 1.0, MarkKernel::point(1.0)}};
  CHECK_THROWS_AS(nu.index_atoms(), std::invalid_argument);
  nu.atoms.clear();
  nu.ac_rate[1] = -0.5;
  CHECK_THROWS_AS(nu.index_atoms(), std::invalid_argument);
  nu.ac_rate[1] = 1.0;  // positive rate without a kernel
  CHECK_THROWS_AS(nu.index_atoms(), std::invalid_argument);
}

TEST_CASE("non square integrable fields are refused, not silently kept") {
  auto g = uniform_grid(1.0, 2);
  const GridPath x = GridPath::zeros(g);
  const MarkedPointMeasure mu = build_jump_measure(g, {});
  CompensatorSpec nu;
  nu.grid = g;
  nu.ac_rate.assign(2, 1.0);
  nu.ac_kernel = [](double, double) { return MarkKernel::point(1.0); };
  nu.index_atoms();

  const double inf = std::numeric_limits<double>::infinity();
  const PredictableField bad =
      make_field([inf](double, double, double e) { return e == 1.0 ? inf : 0.0; });
  CHECK_THROWS_AS((void)stochastic_integral(bad, mu, nu, x), NonIntegrableField);
  CHECK_THROWS_AS((void)kernel_decompose(bad, nu, x), NonIntegrableField);
  CHECK_FALSE(bracket_C(bad, mu, nu, x).has_value());
  CHECK_FALSE(field_norms(bad, mu, nu, x).has_value());
}

TEST_CASE("compensator clock aggregates both parts") {
  auto g = uniform_grid(1.0, 4);
  CompensatorSpec nu;
  nu.grid = g;
  nu.ac_rate.assign(4, 2.0);
  nu.ac_kernel = [](double, double) { return MarkKernel::point(1.0); };
  nu.atoms = {{0.5, 0.25, MarkKernel::point(1.0)}};
  nu.index_atoms();
  const GridPath a = compensator_clock(nu);
  CHECK_EQ(a.values[0], 0.0);
  CHECK_EQ(a.lefts[2], 1.0);    // 2 * 0.5
  CHECK_EQ(a.values[2], 1.25);  // atom mass
  CHECK_EQ(a.values[4], 2.25);
}
