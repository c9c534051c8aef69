#include "resinv/darcy.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/IterativeLinearSolvers>

#include "resinv/errors.hpp"

namespace resinv {

namespace {

constexpr double kResidualTol = 1e-10;

void check_field(const GridSpec& grid, const PermeabilityField& field) {
  if (field.k.size() != grid.n_nodes())
    throw std::invalid_argument("permeability field does not match grid");
  if ((field.k.array() <= 0.0).any())
    throw std::invalid_argument("permeability must be strictly positive at every node");
}

// Visits every lattice edge touching at least one interior node.
template <typename Fn>
void for_each_edge(const GridSpec& grid, Fn&& fn) {
  const double dx2 = grid.dx * grid.dx;
  const double dy2 = grid.dy * grid.dy;
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const int a = grid.idx(i, j);
      if (i + 1 < grid.nx) fn(a, grid.idx(i + 1, j), dx2);
      if (j + 1 < grid.ny) fn(a, grid.idx(i, j + 1), dy2);
    }
  }
}

}  // namespace

LinearSystem assemble_system(const GridSpec& grid,
                             const PermeabilityField& field,
                             const DirichletMap& dirichlet) {
  check_field(grid, field);
  if (static_cast<int>(dirichlet.size()) != grid.n_nodes())
    throw std::invalid_argument("dirichlet map does not match grid");

  LinearSystem sys;
  sys.interior_of_node.assign(grid.n_nodes(), -1);
  for (int node = 0; node < grid.n_nodes(); ++node) {
    if (!dirichlet[node]) {
      sys.interior_of_node[node] = static_cast<int>(sys.node_of_interior.size());
      sys.node_of_interior.push_back(node);
    }
  }
  const int n_int = static_cast<int>(sys.node_of_interior.size());
  sys.b = Eigen::VectorXd::Zero(n_int);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n_int) * 5);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n_int);

  for_each_edge(grid, [&](int a, int b, double h2) {
    const int ia = sys.interior_of_node[a];
    const int ib = sys.interior_of_node[b];
    if (ia < 0 && ib < 0) return;
    const double t = transmissibility(field.k[a], field.k[b], h2);
    if (ia >= 0) diag[ia] += t;
    if (ib >= 0) diag[ib] += t;
    if (ia >= 0 && ib >= 0) {
      triplets.emplace_back(ia, ib, -t);
      triplets.emplace_back(ib, ia, -t);
    } else if (ia >= 0) {
      sys.b[ia] += t * *dirichlet[b];
    } else {
      sys.b[ib] += t * *dirichlet[a];
    }
  });
  for (int r = 0; r < n_int; ++r) triplets.emplace_back(r, r, diag[r]);

  sys.A.resize(n_int, n_int);
  sys.A.setFromTriplets(triplets.begin(), triplets.end());
  sys.A.makeCompressed();
  return sys;
}

LinearSystem assemble_system(const GridSpec& grid,
                             const PermeabilityField& field,
                             const BoundaryConditions& bc) {
  return assemble_system(grid, field, boundary_mask(grid, bc));
}

namespace {

Eigen::VectorXd fill_full_field(const GridSpec& grid,
                                const DirichletMap& dirichlet,
                                const LinearSystem& sys,
                                const Eigen::VectorXd& p_int) {
  Eigen::VectorXd p(grid.n_nodes());
  for (int node = 0; node < grid.n_nodes(); ++node) {
    const int row = sys.interior_of_node[node];
    p[node] = row >= 0 ? p_int[row] : *dirichlet[node];
  }
  return p;
}

Eigen::VectorXd cg_solve(const Eigen::SparseMatrix<double>& A,
                         const Eigen::VectorXd& b) {
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                           Eigen::DiagonalPreconditioner<double>>
      cg;
  cg.setTolerance(kResidualTol);
  cg.setMaxIterations(20000);
  cg.compute(A);
  Eigen::VectorXd x = cg.solve(b);
  const double rel = (A * x - b).norm() / std::max(b.norm(), 1e-300);
  if (b.norm() > 0.0 && rel > kResidualTol)
    throw NumericError("pressure solve diverged: relative residual " +
                       std::to_string(rel) + " after CG fallback");
  return x;
}

}  // namespace

PressureField solve_pressure(const LinearSystem& system, const GridSpec& grid,
                             const DirichletMap& dirichlet) {
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(system.A);
  Eigen::VectorXd p_int;
  if (llt.info() == Eigen::Success) {
    p_int = llt.solve(system.b);
    const double rel =
        (system.A * p_int - system.b).norm() / std::max(system.b.norm(), 1e-300);
    if (system.b.norm() > 0.0 && rel > kResidualTol) p_int = cg_solve(system.A, system.b);
  } else {
    p_int = cg_solve(system.A, system.b);
  }
  return PressureField{fill_full_field(grid, dirichlet, system, p_int)};
}

DarcySolve::DarcySolve(const CoeffVector& coeffs, const ModelContext& ctx)
    : DarcySolve(ctx.grid, realize_log_permeability(ctx.basis, coeffs),
                 ctx.dirichlet) {}

DarcySolve::DarcySolve(const GridSpec& grid, PermeabilityField field,
                       const DirichletMap& dirichlet)
    : grid_(grid), field_(std::move(field)), dirichlet_(dirichlet) {
  check_field(grid_, field_);
  clamped_.assign(grid_.n_nodes(), false);
  for (int node : field_.clamped_nodes) clamped_[node] = true;
  sys_ = assemble_system(grid_, field_, dirichlet_);
  llt_.compute(sys_.A);
  direct_ok_ = llt_.info() == Eigen::Success;

  Eigen::VectorXd p_int;
  if (direct_ok_) {
    p_int = llt_.solve(sys_.b);
    const double rel =
        (sys_.A * p_int - sys_.b).norm() / std::max(sys_.b.norm(), 1e-300);
    if (sys_.b.norm() > 0.0 && rel > kResidualTol) {
      direct_ok_ = false;
      p_int = cg_solve(sys_.A, sys_.b);
    }
  } else {
    p_int = cg_solve(sys_.A, sys_.b);
  }
  p_full_ = fill_full_field(grid_, dirichlet_, sys_, p_int);
}

Eigen::VectorXd DarcySolve::observed(const ObservationSet& obs) const {
  Eigen::VectorXd out(obs.n_obs());
  for (int i = 0; i < obs.n_obs(); ++i) out[i] = p_full_[obs.node_indices[i]];
  return out;
}

Eigen::VectorXd DarcySolve::solve_interior(const Eigen::VectorXd& rhs) const {
  if (direct_ok_) return llt_.solve(rhs);
  return cg_solve(sys_.A, rhs);
}

Eigen::VectorXd DarcySolve::grad_log_k(const Eigen::VectorXd& seed_interior) const {
  const int n_int = static_cast<int>(sys_.node_of_interior.size());
  if (seed_interior.size() != n_int)
    throw std::invalid_argument("adjoint seed length does not match interior nodes");

  // A^T lambda = -O^T g; A is symmetric so the forward factorization is reused.
  const Eigen::VectorXd lambda_int = solve_interior(-seed_interior);

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(grid_.n_nodes());
  for (int r = 0; r < n_int; ++r) lambda[sys_.node_of_interior[r]] = lambda_int[r];

  // dL/dtheta = lambda^T (dA/dtheta p - db/dtheta); per edge this collapses to
  // dT/dtheta (lambda_a - lambda_b)(p_a - p_b) with lambda = 0 and p = bc on
  // Dirichlet nodes.
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(grid_.n_nodes());
  for_each_edge(grid_, [&](int a, int b, double h2) {
    if (sys_.interior_of_node[a] < 0 && sys_.interior_of_node[b] < 0) return;
    const double ka = field_.k[a];
    const double kb = field_.k[b];
    const double denom = (ka + kb) * (ka + kb) * h2;
    const double factor = (lambda[a] - lambda[b]) * (p_full_[a] - p_full_[b]);
    // Chain dk/dlog_k = k on the spot.
    grad[a] += (2.0 * kb * kb / denom) * ka * factor;
    grad[b] += (2.0 * ka * ka / denom) * kb * factor;
  });
  for (int node = 0; node < grid_.n_nodes(); ++node)
    if (clamped_[node]) grad[node] = 0.0;
  return grad;
}

Eigen::VectorXd DarcySolve::grad_log_k_observed(
    const ObservationSet& obs, const Eigen::VectorXd& grad_wrt_observed) const {
  if (grad_wrt_observed.size() != obs.n_obs())
    throw std::invalid_argument("observation gradient length mismatch");
  Eigen::VectorXd seed =
      Eigen::VectorXd::Zero(static_cast<int>(sys_.node_of_interior.size()));
  for (int i = 0; i < obs.n_obs(); ++i) {
    const int row = sys_.interior_of_node[obs.node_indices[i]];
    if (row < 0)
      throw std::invalid_argument("observation node " +
                                  std::to_string(obs.node_indices[i]) +
                                  " is not interior");
    seed[row] += grad_wrt_observed[i];
  }
  return grad_log_k(seed);
}

Eigen::VectorXd DarcySolve::grad_log_k_at_node(int node, double w) const {
  const int row = sys_.interior_of_node.at(node);
  if (row < 0)
    throw std::invalid_argument("QoI node must be interior");
  Eigen::VectorXd seed =
      Eigen::VectorXd::Zero(static_cast<int>(sys_.node_of_interior.size()));
  seed[row] = w;
  return grad_log_k(seed);
}

CoeffVector DarcySolve::chain_to_coeffs(const KLBasis& basis,
                                        const Eigen::VectorXd& grad_log_k) {
  if (grad_log_k.size() != basis.n_nodes())
    throw std::invalid_argument("gradient length does not match basis nodes");
  return basis.eigenvalues.cwiseSqrt().cwiseProduct(basis.modes.transpose() *
                                                    grad_log_k);
}

ForwardResult forward(const CoeffVector& coeffs, const ModelContext& ctx) {
  auto solve = std::make_shared<DarcySolve>(coeffs, ctx);
  ForwardResult result;
  result.pressure = PressureField{solve->pressure()};
  result.observed = solve->observed(ctx.obs);
  result.solve = std::move(solve);
  return result;
}

CoeffVector adjoint_gradient(const CoeffVector& coeffs,
                             const Eigen::VectorXd& grad_wrt_observed,
                             const ModelContext& ctx) {
  DarcySolve solve(coeffs, ctx);
  return DarcySolve::chain_to_coeffs(
      ctx.basis, solve.grad_log_k_observed(ctx.obs, grad_wrt_observed));
}

}  // namespace resinv
