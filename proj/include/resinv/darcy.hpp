#pragma once

#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "resinv/grid.hpp"
#include "resinv/random_field.hpp"

namespace resinv {

// Discrete 5-point-stencil operator over interior nodes; A is symmetric
// positive definite for positive permeability. b collects Dirichlet
// contributions minus the source term q (q = 0 throughout: boundary-driven
// flow, no wells).
struct LinearSystem {
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  std::vector<int> interior_of_node;  // node -> interior row, -1 on boundary
  std::vector<int> node_of_interior;  // interior row -> node
};

// Per-node pressure in MPa; Dirichlet nodes carry their imposed values.
struct PressureField {
  Eigen::VectorXd p;
};

// Everything the forward model knows: geometry, boundary values, field
// parameterization and monitoring nodes. Built once per experiment and
// shared read-only.
struct ModelContext {
  GridSpec grid;
  BoundaryConditions bc;
  KLBasis basis;
  ObservationSet obs;
  DirichletMap dirichlet;  // derived from grid+bc at construction

  ModelContext() = default;
  ModelContext(GridSpec g, BoundaryConditions b, KLBasis kl, ObservationSet o)
      : grid(g), bc(b), basis(std::move(kl)), obs(std::move(o)),
        dirichlet(boundary_mask(grid, bc)) {}

  int n_obs() const { return obs.n_obs(); }
  int n_modes() const { return basis.n_modes; }
};

// Edge transmissibility: harmonic permeability mean over squared spacing.
inline double transmissibility(double ka, double kb, double h2) {
  return 2.0 * ka * kb / ((ka + kb) * h2);
}

LinearSystem assemble_system(const GridSpec& grid,
                             const PermeabilityField& field,
                             const DirichletMap& dirichlet);
LinearSystem assemble_system(const GridSpec& grid,
                             const PermeabilityField& field,
                             const BoundaryConditions& bc);

// Direct sparse Cholesky with a Jacobi-preconditioned CG fallback; enforces
// ||A p - b|| <= 1e-10 ||b||. Returns the full field with Dirichlet values
// filled in.
PressureField solve_pressure(const LinearSystem& system, const GridSpec& grid,
                             const DirichletMap& dirichlet);

// One forward evaluation: realize -> assemble -> factorize -> solve, keeping
// the factorization so adjoint solves reuse it (A is symmetric). Never
// shared across evaluations.
class DarcySolve {
 public:
  DarcySolve(const CoeffVector& coeffs, const ModelContext& ctx);
  DarcySolve(const GridSpec& grid, PermeabilityField field,
             const DirichletMap& dirichlet);

  const Eigen::VectorXd& pressure() const { return p_full_; }
  const PermeabilityField& field() const { return field_; }
  Eigen::VectorXd observed(const ObservationSet& obs) const;

  // dL/d(log k) per node for a loss with the given seed dL/dp on interior
  // nodes (length = number of interior nodes).
  Eigen::VectorXd grad_log_k(const Eigen::VectorXd& seed_interior) const;
  // Seed restricted to the observation nodes.
  Eigen::VectorXd grad_log_k_observed(const ObservationSet& obs,
                                      const Eigen::VectorXd& grad_wrt_observed) const;
  // Seed of weight w on a single interior node (rare-event QoI).
  Eigen::VectorXd grad_log_k_at_node(int node, double w = 1.0) const;

  // Chains a per-node log-permeability gradient through the KL basis.
  static CoeffVector chain_to_coeffs(const KLBasis& basis,
                                     const Eigen::VectorXd& grad_log_k);

  const LinearSystem& system() const { return sys_; }

 private:
  Eigen::VectorXd solve_interior(const Eigen::VectorXd& rhs) const;

  GridSpec grid_;
  PermeabilityField field_;
  DirichletMap dirichlet_;
  std::vector<bool> clamped_;  // nodes where the log_k clamp was active
  LinearSystem sys_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
  bool direct_ok_ = false;
  Eigen::VectorXd p_full_;
};

struct ForwardResult {
  PressureField pressure;
  Eigen::VectorXd observed;
  std::shared_ptr<const DarcySolve> solve;  // reusable for the adjoint
};

ForwardResult forward(const CoeffVector& coeffs, const ModelContext& ctx);

// dL/d(coeffs) for any scalar L with dL/d(observed) = grad_wrt_observed,
// via one adjoint solve on the same operator.
CoeffVector adjoint_gradient(const CoeffVector& coeffs,
                             const Eigen::VectorXd& grad_wrt_observed,
                             const ModelContext& ctx);

}  // namespace resinv
