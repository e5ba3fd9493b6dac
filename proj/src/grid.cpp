#include "mubsde/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mubsde {

namespace {

bool close(double a, double b) { return std::abs(a - b) <= TimeGrid::node_tol; }

}  // namespace

TimeGrid::TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) throw std::invalid_argument("time grid needs at least two nodes");
  if (nodes_.front() != 0.0) throw std::invalid_argument("time grid must start at 0");
  for (std::size_t k = 0; k + 1 < nodes_.size(); ++k) {
    if (!(nodes_[k + 1] > nodes_[k]))
      throw std::invalid_argument("time grid nodes must be strictly increasing");
  }
  if (!std::isfinite(nodes_.back())) throw std::invalid_argument("non-finite horizon");
}

TimeGrid TimeGrid::uniform(double horizon, std::size_t n_steps) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (n_steps < 1) throw std::invalid_argument("need at least one step");
  std::vector<double> nodes(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k)
    nodes[k] = horizon * static_cast<double>(k) / static_cast<double>(n_steps);
  nodes.back() = horizon;
  return TimeGrid(std::move(nodes));
}

TimeGrid TimeGrid::with_events(double horizon, std::size_t n_steps,
                               std::vector<double> events) {
  TimeGrid base = uniform(horizon, n_steps);
  std::vector<double> nodes = base.nodes_;
  std::sort(events.begin(), events.end());
  for (double e : events) {
    if (!(e > 0.0) || e > horizon + node_tol)
      throw std::invalid_argument("event time outside (0, horizon]");
    e = std::min(e, horizon);
    auto it = std::lower_bound(nodes.begin(), nodes.end(), e);
    if (it != nodes.end() && close(*it, e)) continue;
    if (it != nodes.begin() && close(*(it - 1), e)) continue;
    nodes.insert(it, e);
  }
  return TimeGrid(std::move(nodes));
}

bool TimeGrid::has_node(double t) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - node_tol);
  return it != nodes_.end() && close(*it, t);
}

std::size_t TimeGrid::index_of(double t) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - node_tol);
  if (it == nodes_.end() || !close(*it, t))
    throw std::invalid_argument("time is not a grid node");
  return static_cast<std::size_t>(it - nodes_.begin());
}

double TimeGrid::snap(double t) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - node_tol);
  if (it != nodes_.end() && close(*it, t)) return *it;
  return t;
}

GridPath GridPath::continuous(GridPtr g, std::vector<double> v) {
  GridPath p;
  p.grid = std::move(g);
  p.values = std::move(v);
  p.lefts = p.values;
  p.validate();
  return p;
}

GridPath GridPath::zeros(GridPtr g) {
  std::vector<double> v(g ? g->size() : 0, 0.0);
  return continuous(std::move(g), std::move(v));
}

void GridPath::validate() const {
  if (!grid) throw std::invalid_argument("path has no grid");
  if (values.size() != grid->size() || lefts.size() != grid->size())
    throw std::invalid_argument("path length does not match grid");
  if (lefts.front() != values.front())
    throw std::invalid_argument("left limit at 0 must equal the value at 0");
}

bool same_grid(const GridPath& a, const GridPath& b) {
  if (a.grid == b.grid) return true;
  if (!a.grid || !b.grid) return false;
  return a.grid->nodes() == b.grid->nodes();
}

}  // namespace mubsde
