#include "resinv/grid.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "resinv/rng.hpp"

namespace resinv {

GridSpec build_grid(int nx, int ny, double lx, double ly) {
  if (nx < 3 || ny < 3)
    throw std::invalid_argument("grid dimensions too small: need nx,ny >= 3, got " +
                                std::to_string(nx) + "x" + std::to_string(ny));
  if (!(lx > 0.0) || !(ly > 0.0))
    throw std::invalid_argument("grid side lengths must be positive");
  GridSpec g;
  g.nx = nx;
  g.ny = ny;
  g.lx = lx;
  g.ly = ly;
  g.dx = lx / (nx - 1);
  g.dy = ly / (ny - 1);
  return g;
}

DirichletMap boundary_mask(const GridSpec& grid, const BoundaryConditions& bc) {
  DirichletMap mask(grid.n_nodes());
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      if (!grid.on_boundary(i, j)) continue;
      double value;
      if (i == 0)
        value = bc.p_left;
      else if (i == grid.nx - 1)
        value = bc.p_right;
      else if (j == 0)
        value = bc.p_bottom;
      else
        value = bc.p_top;
      mask[grid.idx(i, j)] = value;
    }
  }
  return mask;
}

ObservationSet sample_observation_nodes(const GridSpec& grid, int n_obs,
                                        std::uint64_t seed) {
  const int n_int = grid.n_interior();
  if (n_obs < 1 || n_obs > n_int)
    throw std::invalid_argument("requested " + std::to_string(n_obs) +
                                " observation nodes but grid has " +
                                std::to_string(n_int) + " interior nodes");

  std::vector<int> interior;
  interior.reserve(n_int);
  for (int j = 1; j < grid.ny - 1; ++j)
    for (int i = 1; i < grid.nx - 1; ++i) interior.push_back(grid.idx(i, j));

  // Partial Fisher-Yates over the interior nodes.
  Rng rng(seed);
  for (int k = 0; k < n_obs; ++k) {
    const int pick = k + static_cast<int>(rng.below(interior.size() - k));
    std::swap(interior[k], interior[pick]);
  }
  ObservationSet set;
  set.seed = seed;
  set.node_indices.assign(interior.begin(), interior.begin() + n_obs);
  std::sort(set.node_indices.begin(), set.node_indices.end());
  return set;
}

}  // namespace resinv
