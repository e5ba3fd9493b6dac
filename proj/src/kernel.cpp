#include "mubsde/kernel.hpp"

#include <cmath>
#include <stdexcept>

namespace mubsde {

namespace detail {

namespace {

struct GlTable {
  std::array<double, 256> x{};
  std::array<double, 256> w{};
};

// Nodes are the roots of the degree-n Legendre polynomial, found by Newton
// iteration from the Chebyshev-like initial guess.
GlTable compute_gl() {
  constexpr int n = 256;
  GlTable t;
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    t.x[i] = -x;
    t.w[i] = w;
    t.x[n - 1 - i] = x;
    t.w[n - 1 - i] = w;
  }
  return t;
}

const GlTable& table() {
  static const GlTable t = compute_gl();
  return t;
}

}  // namespace

const std::array<double, 256>& gl_nodes() { return table().x; }
const std::array<double, 256>& gl_weights() { return table().w; }

}  // namespace detail

MarkKernel MarkKernel::discrete(std::vector<std::pair<double, double>> mw) {
  MarkKernel k;
  k.discrete_ = true;
  double total = 0.0;
  for (const auto& a : mw) {
    if (!std::isfinite(a.first)) throw std::invalid_argument("non-finite mark");
    if (!(a.second >= 0.0)) throw std::invalid_argument("negative kernel weight");
    total += a.second;
  }
  if (!(total > 0.0)) throw std::invalid_argument("kernel has no mass");
  k.atoms_.reserve(mw.size());
  double run = 0.0;
  for (const auto& a : mw) {
    if (a.second == 0.0) continue;
    const double w = a.second / total;
    run += w;
    k.atoms_.emplace_back(a.first, w);
    k.cdf_.push_back(run);
  }
  k.cdf_.back() = 1.0;
  k.lo_ = k.hi_ = k.atoms_.front().first;
  for (const auto& a : k.atoms_) {
    k.lo_ = std::min(k.lo_, a.first);
    k.hi_ = std::max(k.hi_, a.first);
  }
  return k;
}

MarkKernel MarkKernel::density(std::function<double(double)> f, double lo, double hi,
                               double sup_bound) {
  if (!f) throw std::invalid_argument("kernel density missing");
  if (!(lo < hi)) throw std::invalid_argument("kernel window is empty");
  if (!(sup_bound > 0.0) || !std::isfinite(sup_bound))
    throw std::invalid_argument("kernel density bound must be positive and finite");
  MarkKernel k;
  k.discrete_ = false;
  k.f_ = std::move(f);
  k.lo_ = lo;
  k.hi_ = hi;
  k.bound_ = sup_bound;
  const auto& xs = detail::gl_nodes();
  const auto& ws = detail::gl_weights();
  const double c = 0.5 * (hi + lo);
  const double hw = 0.5 * (hi - lo);
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) s += ws[i] * k.f_(c + hw * xs[i]);
  if (!(s > 0.0) || !std::isfinite(s))
    throw std::invalid_argument("kernel density does not integrate to positive mass");
  k.norm_ = s;
  return k;
}

double MarkKernel::sample(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (discrete_) {
    const double u = unif(rng);
    std::size_t i = 0;
    while (i + 1 < cdf_.size() && u > cdf_[i]) ++i;
    return atoms_[i].first;
  }
  for (int it = 0; it < 100000; ++it) {
    const double x = lo_ + (hi_ - lo_) * unif(rng);
    if (unif(rng) * bound_ <= f_(x)) return x;
  }
  throw std::runtime_error("kernel rejection sampling failed; density bound too loose");
}

}  // namespace mubsde
