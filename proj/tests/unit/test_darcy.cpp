#include <doctest.h>

#include <stdexcept>
#include <cmath>

#include <Eigen/Dense>

#include "resinv/darcy.hpp"
#include "resinv/rng.hpp"

using namespace resinv;

namespace {

PermeabilityField homogeneous_field(const GridSpec& g, double k = 1.0) {
  PermeabilityField field;
  field.log_k = Eigen::VectorXd::Constant(g.n_nodes(), std::log(k));
  field.k = Eigen::VectorXd::Constant(g.n_nodes(), k);
  return field;
}

PermeabilityField random_field(const GridSpec& g, std::uint64_t seed,
                               double amplitude = 1.0) {
  Rng rng(seed);
  PermeabilityField field;
  field.log_k.resize(g.n_nodes());
  for (int n = 0; n < g.n_nodes(); ++n) field.log_k[n] = amplitude * rng.normal();
  field.k = field.log_k.array().exp();
  return field;
}

ModelContext desk_context(int nx = 26, int n_modes = 20, int n_obs = 30,
                          double corr = 60.0) {
  const GridSpec grid = build_grid(nx, nx, 200.0, 200.0);
  KLBasis basis = build_kl_basis(grid, CovarianceSpec{1.0, corr}, n_modes, 0.0);
  const ObservationSet obs = sample_observation_nodes(grid, n_obs, 5);
  return ModelContext(grid, BoundaryConditions{10.0, 0.0, 0.5, 0.0},
                      std::move(basis), obs);
}

}  // namespace

TEST_CASE("homogeneous assembly gives the classic stencil") {
  const GridSpec g = build_grid(3, 3, 2.0, 2.0);  // unit spacing
  const LinearSystem sys =
      assemble_system(g, homogeneous_field(g), BoundaryConditions{});
  REQUIRE(sys.A.rows() == 1);  // single interior node
  CHECK(sys.A.coeff(0, 0) == doctest::Approx(4.0));

  const GridSpec g5 = build_grid(5, 5, 4.0, 4.0);  // unit spacing, 9 interior
  const LinearSystem sys5 =
      assemble_system(g5, homogeneous_field(g5), BoundaryConditions{});
  const int center = sys5.interior_of_node[g5.idx(2, 2)];
  REQUIRE(center >= 0);
  CHECK(sys5.A.coeff(center, center) == doctest::Approx(4.0));
  for (int neighbor :
       {g5.idx(1, 2), g5.idx(3, 2), g5.idx(2, 1), g5.idx(2, 3)}) {
    const int col = sys5.interior_of_node[neighbor];
    REQUIRE(col >= 0);
    CHECK(sys5.A.coeff(center, col) == doctest::Approx(-1.0));
  }
}

TEST_CASE("harmonic mean kills the conductance across a blocked edge") {
  CHECK(transmissibility(1.0, 1e-12, 1.0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(transmissibility(1.0, 1.0, 1.0) == doctest::Approx(1.0));
  // Harmonic mean is dominated by the smaller permeability.
  CHECK(transmissibility(1.0, 1e-3, 1.0) < 2.1e-3);
}

TEST_CASE("assembled operator is exactly symmetric and factorizable") {
  const GridSpec g = build_grid(12, 9, 10.0, 8.0);
  const LinearSystem sys = assemble_system(
      g, random_field(g, 99), BoundaryConditions{10.0, 0.0, 0.5, 0.0});
  const Eigen::SparseMatrix<double> diff =
      Eigen::SparseMatrix<double>(sys.A.transpose()) - sys.A;
  CHECK(diff.norm() == 0.0);
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(sys.A);
  CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("assembly rejects nonpositive permeability") {
  const GridSpec g = build_grid(4, 4, 3.0, 3.0);
  PermeabilityField field = homogeneous_field(g);
  field.k[5] = 0.0;
  CHECK_THROWS_AS(assemble_system(g, field, BoundaryConditions{}),
                  std::invalid_argument);
}

TEST_CASE("solver reproduces the linear profile exactly") {
  // Dirichlet data sampled from p(x) = 10 (1 - x/lx) on the whole boundary;
  // linear fields are in the null space of the discrete error.
  const GridSpec g = build_grid(17, 13, 200.0, 150.0);
  DirichletMap dirichlet(g.n_nodes());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (g.on_boundary(i, j))
        dirichlet[g.idx(i, j)] = 10.0 * (1.0 - g.x_of(i) / g.lx);

  const LinearSystem sys = assemble_system(g, homogeneous_field(g, 3.7), dirichlet);
  const PressureField p = solve_pressure(sys, g, dirichlet);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double expected = 10.0 * (1.0 - g.x_of(i) / g.lx);
      CHECK(std::fabs(p.p[g.idx(i, j)] - expected) < 1e-10);
    }
}

TEST_CASE("constant boundary data gives a constant solution for any field") {
  const GridSpec g = build_grid(9, 9, 40.0, 40.0);
  const BoundaryConditions bc{2.5, 2.5, 2.5, 2.5};
  const DarcySolve solve(g, random_field(g, 4), boundary_mask(g, bc));
  CHECK((solve.pressure().array() - 2.5).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("paper boundary values obey the discrete maximum principle") {
  const GridSpec g = build_grid(51, 51, 200.0, 200.0);
  const BoundaryConditions bc{10.0, 0.0, 0.5, 0.0};
  const DirichletMap dirichlet = boundary_mask(g, bc);
  const DarcySolve solve(g, homogeneous_field(g), dirichlet);
  CHECK(solve.pressure().maxCoeff() <= 10.0 + 1e-12);
  CHECK(solve.pressure().minCoeff() >= -1e-12);
  // The extremes sit on the left/right edges.
  CHECK(solve.pressure()[g.idx(0, 25)] == doctest::Approx(10.0));
  CHECK(solve.pressure()[g.idx(50, 25)] == doctest::Approx(0.0));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DarcySolve heterogeneous(build_grid(16, 16, 200.0, 200.0),
                                   random_field(build_grid(16, 16, 200.0, 200.0), seed),
                                   boundary_mask(build_grid(16, 16, 200.0, 200.0), bc));
    CHECK(heterogeneous.pressure().maxCoeff() <= 10.0 + 1e-10);
    CHECK(heterogeneous.pressure().minCoeff() >= -1e-10);
  }
}

TEST_CASE("forward composition and global-scale invariance") {
  ModelContext ctx = desk_context(16, 10, 12);

  SUBCASE("zero coefficients match the homogeneous solve") {
    const ForwardResult result = forward(Eigen::VectorXd::Zero(10), ctx);
    const DarcySolve reference(ctx.grid, homogeneous_field(ctx.grid),
                               ctx.dirichlet);
    CHECK((result.observed - reference.observed(ctx.obs)).cwiseAbs().maxCoeff() <
          1e-9);
    for (int i = 0; i < ctx.n_obs(); ++i)
      CHECK(result.observed[i] ==
            doctest::Approx(result.pressure.p[ctx.obs.node_indices[i]]));
  }

  SUBCASE("rescaling the field leaves pressures untouched") {
    Rng rng(11);
    const Eigen::VectorXd coeffs = sample_coefficients(10, rng);
    const Eigen::VectorXd base = forward(coeffs, ctx).observed;
    ModelContext shifted = ctx;
    shifted.basis.mean_log_k += std::log(10.0);
    const Eigen::VectorXd scaled = forward(coeffs, shifted).observed;
    CHECK((base - scaled).cwiseAbs().maxCoeff() < 1e-8);
  }

  SUBCASE("observed pressures stay inside the boundary range") {
    Rng rng(123);
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::VectorXd coeffs = sample_coefficients(10, rng);
      const Eigen::VectorXd observed = forward(coeffs, ctx).observed;
      CHECK(observed.maxCoeff() <= 10.0 + 1e-10);
      CHECK(observed.minCoeff() >= -1e-10);
    }
  }
}

TEST_CASE("adjoint gradient: zero seed and mirror symmetry") {
  ModelContext ctx = desk_context(12, 6, 8);

  SUBCASE("zero observation gradient gives a zero coefficient gradient") {
    Rng rng(5);
    const Eigen::VectorXd coeffs = sample_coefficients(6, rng);
    const Eigen::VectorXd grad =
        adjoint_gradient(coeffs, Eigen::VectorXd::Zero(ctx.n_obs()), ctx);
    CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("mirror-symmetric mode pair gets equal gradient components") {
    // Symmetric setup under x-mirror: equal left/right boundary pressures, a
    // hand-built basis whose second mode is the mirror image of the first,
    // and a mirror-symmetric observation pair with equal seed weights.
    const GridSpec g = build_grid(9, 9, 80.0, 80.0);
    KLBasis basis;
    basis.nx = g.nx;
    basis.ny = g.ny;
    basis.n_modes = 2;
    basis.mean_log_k = 0.0;
    basis.eigenvalues = Eigen::VectorXd::Constant(2, 0.5);
    basis.modes = Eigen::MatrixXd::Zero(g.n_nodes(), 2);
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        const double bump = std::exp(-0.5 * ((i - 2.0) * (i - 2.0) +
                                             (j - 4.0) * (j - 4.0)));
        basis.modes(g.idx(i, j), 0) = bump;
        basis.modes(g.idx(g.nx - 1 - i, j), 1) = bump;
      }
    basis.modes.col(0).normalize();
    basis.modes.col(1).normalize();

    ObservationSet obs;
    obs.node_indices = {g.idx(3, 4), g.idx(5, 4)};  // mirror pair
    const ModelContext sym_ctx(g, BoundaryConditions{7.0, 7.0, 0.0, 0.0},
                               std::move(basis), obs);
    const Eigen::VectorXd grad = adjoint_gradient(
        Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2), sym_ctx);
    CHECK(grad[0] == doctest::Approx(grad[1]).epsilon(1e-9));
  }
}

TEST_CASE("adjoint gradient matches central finite differences") {
  // Mandatory oracle: 26x26 grid, 20 modes.
  ModelContext ctx = desk_context();
  Rng rng(31);
  const Eigen::VectorXd coeffs = sample_coefficients(20, rng);
  Eigen::VectorXd weights(ctx.n_obs());
  for (int i = 0; i < ctx.n_obs(); ++i) weights[i] = rng.normal();

  const auto loss = [&](const Eigen::VectorXd& k) {
    return weights.dot(forward(k, ctx).observed);
  };
  const Eigen::VectorXd grad = adjoint_gradient(coeffs, weights, ctx);

  const double eps = 1e-5;
  SUBCASE("component-wise") {
    for (int m = 0; m < 20; ++m) {
      Eigen::VectorXd above = coeffs, below = coeffs;
      above[m] += eps;
      below[m] -= eps;
      const double fd = (loss(above) - loss(below)) / (2.0 * eps);
      CHECK(std::fabs(grad[m] - fd) <= 1e-5 * std::max(std::fabs(fd), 1e-10));
    }
  }

  SUBCASE("directional probes") {
    for (int probe = 0; probe < 20; ++probe) {
      const Eigen::VectorXd k = sample_coefficients(20, rng);
      Eigen::VectorXd direction = sample_coefficients(20, rng);
      direction.normalize();
      const Eigen::VectorXd g = adjoint_gradient(k, weights, ctx);
      const double analytic = g.dot(direction);
      const double fd =
          (loss(k + eps * direction) - loss(k - eps * direction)) / (2.0 * eps);
      CHECK(std::fabs(analytic - fd) <= 1e-5 * std::fabs(fd));
    }
  }
}
