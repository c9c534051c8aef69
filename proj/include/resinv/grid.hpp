#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace resinv {

// Structured node-centered lattice: nx*ny nodes at (i*dx, j*dy) with
// idx(i,j) = j*nx + i. Immutable after build_grid.
struct GridSpec {
  int nx = 0;
  int ny = 0;
  double lx = 0.0;  // m
  double ly = 0.0;  // m
  double dx = 0.0;  // m, lx/(nx-1)
  double dy = 0.0;  // m, ly/(ny-1)

  int n_nodes() const { return nx * ny; }
  int n_interior() const { return (nx - 2) * (ny - 2); }
  int idx(int i, int j) const { return j * nx + i; }
  int node_i(int node) const { return node % nx; }
  int node_j(int node) const { return node / nx; }
  double x_of(int i) const { return i * dx; }
  double y_of(int j) const { return j * dy; }
  bool on_boundary(int i, int j) const {
    return i == 0 || i == nx - 1 || j == 0 || j == ny - 1;
  }
};

// Dirichlet pressures in MPa on the four edges. Left/right values win at the
// corner nodes: the dominant left-right gradient drives the flow.
struct BoundaryConditions {
  double p_left = 0.0;
  double p_right = 0.0;
  double p_top = 0.0;
  double p_bottom = 0.0;
};

// Fixed monitoring nodes: unique, strictly interior, sorted ascending.
struct ObservationSet {
  std::vector<int> node_indices;
  std::uint64_t seed = 0;

  int n_obs() const { return static_cast<int>(node_indices.size()); }
};

// Per-node optional Dirichlet value; nullopt marks an interior node.
using DirichletMap = std::vector<std::optional<double>>;

// Throws std::invalid_argument if nx or ny < 3 or a side length is not
// positive.
GridSpec build_grid(int nx, int ny, double lx, double ly);

// Every boundary node receives exactly one value; corners resolve to the
// left/right value.
DirichletMap boundary_mask(const GridSpec& grid, const BoundaryConditions& bc);

// Draws n_obs distinct interior nodes, reproducible for a fixed seed.
// Throws std::invalid_argument when n_obs exceeds the interior node count.
ObservationSet sample_observation_nodes(const GridSpec& grid, int n_obs,
                                        std::uint64_t seed);

}  // namespace resinv
