#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace mubsde {

namespace detail {
// 256-point Gauss-Legendre rule on [-1, 1]; computed once.
const std::array<double, 256>& gl_nodes();
const std::array<double, 256>& gl_weights();
}  // namespace detail

/// Probability measure on marks. Declared at construction as either a
/// discrete measure (weighted atoms) or a density on a window; densities are
/// integrated with the fixed 256-point Gauss-Legendre rule and sampled by
/// rejection against a declared bound, discrete kernels sample by
/// inverse-CDF. Weights/densities are normalized internally, so integrals of
/// constants are exact up to rounding.
class MarkKernel {
 public:
  static MarkKernel discrete(std::vector<std::pair<double, double>> marks_and_weights);
  static MarkKernel point(double mark) { return discrete({{mark, 1.0}}); }
  static MarkKernel density(std::function<double(double)> unnormalized, double lo,
                            double hi, double sup_bound);

  bool is_discrete() const { return discrete_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<std::pair<double, double>>& atoms() const { return atoms_; }

  template <class G>
  double integrate(G&& g) const {
    if (discrete_) {
      double s = 0.0;
      for (const auto& a : atoms_) s += a.second * g(a.first);
      return s;
    }
    const auto& xs = detail::gl_nodes();
    const auto& ws = detail::gl_weights();
    const double c = 0.5 * (hi_ + lo_);
    const double hw = 0.5 * (hi_ - lo_);
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double e = c + hw * xs[i];
      s += ws[i] * f_(e) * g(e);
    }
    return s / norm_;
  }

  double mean() const {
    return integrate([](double e) { return e; });
  }

  double sample(std::mt19937_64& rng) const;

 private:
  MarkKernel() = default;

  bool discrete_ = true;
  std::vector<std::pair<double, double>> atoms_;  // normalized weights
  std::vector<double> cdf_;
  std::function<double(double)> f_;
  double lo_ = 0.0, hi_ = 0.0;
  double bound_ = 0.0;
  double norm_ = 1.0;  // GL sum of f_ without the half-width factor
};

}  // namespace mubsde
