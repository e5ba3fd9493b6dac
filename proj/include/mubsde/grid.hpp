#pragma once

#include <cstddef>
#include <memory>
#include <vector>

namespace mubsde {

/// Strictly increasing time nodes spanning [0, T].
///
/// Every atom time used by measures, compensators and simulated paths must
/// coincide with a node; lookups snap within an absolute tolerance of 1e-12.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> nodes);

  static TimeGrid uniform(double horizon, std::size_t n_steps);

  /// Uniform base grid with extra event nodes merged in. Events within the
  /// snap tolerance of an existing node are dropped (the node wins).
  static TimeGrid with_events(double horizon, std::size_t n_steps,
                              std::vector<double> events);

  double horizon() const { return nodes_.back(); }
  std::size_t size() const { return nodes_.size(); }
  std::size_t intervals() const { return nodes_.size() - 1; }
  double node(std::size_t k) const { return nodes_[k]; }
  double dt(std::size_t k) const { return nodes_[k + 1] - nodes_[k]; }
  const std::vector<double>& nodes() const { return nodes_; }

  bool has_node(double t) const;
  /// Index of the node matching t (within tolerance); throws otherwise.
  std::size_t index_of(double t) const;
  /// t itself, or the exact node value if one lies within tolerance.
  double snap(double t) const;

  static constexpr double node_tol = 1e-12;

 private:
  std::vector<double> nodes_;
};

using GridPtr = std::shared_ptr<const TimeGrid>;

/// Cadlag path sampled on a grid. values[k] is the state at node k (after
/// any jump at that node), lefts[k] the left limit.
struct GridPath {
  GridPtr grid;
  std::vector<double> values;
  std::vector<double> lefts;

  static GridPath continuous(GridPtr g, std::vector<double> v);
  static GridPath zeros(GridPtr g);

  double terminal() const { return values.back(); }
  void validate() const;
};

/// True when both paths are sampled on grids with identical nodes.
bool same_grid(const GridPath& a, const GridPath& b);

}  // namespace mubsde
