#include "resinv/random_field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "resinv/errors.hpp"
#include "resinv/io_util.hpp"

namespace resinv {

Eigen::MatrixXd covariance_matrix(const GridSpec& grid,
                                  const CovarianceSpec& spec, int max_nodes) {
  if (!(spec.sigma2 > 0.0) || !(spec.corr_length > 0.0))
    throw std::invalid_argument("covariance requires sigma2 > 0 and corr_length > 0");
  const int n = grid.n_nodes();
  if (n > max_nodes)
    throw std::length_error(
        "covariance matrix would need " + std::to_string(n) + "^2 entries; "
        "budget is " + std::to_string(max_nodes) + " nodes — use a coarser grid");

  Eigen::MatrixXd cov(n, n);
  for (int b = 0; b < n; ++b) {
    const double xb = grid.x_of(grid.node_i(b));
    const double yb = grid.y_of(grid.node_j(b));
    for (int a = b; a < n; ++a) {
      const double dxab = grid.x_of(grid.node_i(a)) - xb;
      const double dyab = grid.y_of(grid.node_j(a)) - yb;
      const double r = std::sqrt(dxab * dxab + dyab * dyab);
      const double c = spec.sigma2 * std::exp(-r / spec.corr_length);
      cov(a, b) = c;
      cov(b, a) = c;
    }
  }
  return cov;
}

KLBasis compute_kl_basis(const Eigen::MatrixXd& cov, int n_modes,
                         double mean_log_k) {
  const Eigen::Index n = cov.rows();
  if (cov.cols() != n) throw std::invalid_argument("covariance must be square");
  if (n_modes < 1 || n_modes > n)
    throw std::invalid_argument("n_modes must be in [1, matrix dimension]");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw NumericError("eigendecomposition of the covariance did not converge");

  // Eigen returns eigenvalues ascending; take the top n_modes reversed.
  const Eigen::VectorXd& all_vals = solver.eigenvalues();
  const Eigen::MatrixXd& all_vecs = solver.eigenvectors();

  KLBasis basis;
  basis.n_modes = n_modes;
  basis.mean_log_k = mean_log_k;
  basis.eigenvalues.resize(n_modes);
  basis.modes.resize(n, n_modes);

  const double lambda1 = all_vals[n - 1];
  for (int m = 0; m < n_modes; ++m) {
    const Eigen::Index src = n - 1 - m;
    double lambda = all_vals[src];
    if (lambda < -1e-10 * lambda1)
      throw NumericError("retained KL eigenvalue " + std::to_string(m) +
                         " is negative: " + std::to_string(lambda));
    lambda = std::max(lambda, 0.0);
    Eigen::VectorXd phi = all_vecs.col(src);
    // Sign convention: make the largest-magnitude entry positive.
    Eigen::Index imax;
    phi.cwiseAbs().maxCoeff(&imax);
    if (phi[imax] < 0.0) phi = -phi;
    basis.eigenvalues[m] = lambda;
    basis.modes.col(m) = phi;
  }
  basis.energy_fraction = basis.eigenvalues.sum() / cov.trace();
  return basis;
}

KLBasis build_kl_basis(const GridSpec& grid, const CovarianceSpec& spec,
                       int n_modes, double mean_log_k) {
  KLBasis basis =
      compute_kl_basis(covariance_matrix(grid, spec), n_modes, mean_log_k);
  basis.nx = grid.nx;
  basis.ny = grid.ny;
  basis.sigma2 = spec.sigma2;
  basis.corr_length = spec.corr_length;
  return basis;
}

PermeabilityField realize_log_permeability(const KLBasis& basis,
                                           const CoeffVector& coeffs,
                                           double clamp_log_k) {
  if (coeffs.size() != basis.n_modes)
    throw std::invalid_argument("coefficient vector length " +
                                std::to_string(coeffs.size()) +
                                " does not match basis with " +
                                std::to_string(basis.n_modes) + " modes");
  PermeabilityField field;
  const Eigen::VectorXd amplitudes =
      basis.eigenvalues.cwiseSqrt().cwiseProduct(coeffs);
  field.log_k = (basis.modes * amplitudes).array() + basis.mean_log_k;
  // Clamp fluctuations so exp() stays finite for arbitrary coefficients.
  const double lo = basis.mean_log_k - clamp_log_k;
  const double hi = basis.mean_log_k + clamp_log_k;
  for (Eigen::Index node = 0; node < field.log_k.size(); ++node) {
    if (field.log_k[node] < lo) {
      field.log_k[node] = lo;
      field.clamped_nodes.push_back(static_cast<int>(node));
    } else if (field.log_k[node] > hi) {
      field.log_k[node] = hi;
      field.clamped_nodes.push_back(static_cast<int>(node));
    }
  }
  field.k = field.log_k.array().exp();
  return field;
}

CoeffVector sample_coefficients(int n_modes, Rng& rng) {
  CoeffVector coeffs(n_modes);
  for (int i = 0; i < n_modes; ++i) coeffs[i] = rng.normal();
  return coeffs;
}

void save_kl_basis(const KLBasis& basis, const std::string& path) {
  auto out = io::open_out(path);
  io::write_magic(out, "KLB1");
  io::write_u64(out, static_cast<std::uint64_t>(basis.nx));
  io::write_u64(out, static_cast<std::uint64_t>(basis.ny));
  io::write_u64(out, static_cast<std::uint64_t>(basis.n_modes));
  io::write_f64(out, basis.sigma2);
  io::write_f64(out, basis.corr_length);
  io::write_f64(out, basis.mean_log_k);
  io::write_vec(out, basis.eigenvalues);
  // phi matrix row-major: one row of nx*ny values per mode.
  for (int m = 0; m < basis.n_modes; ++m)
    for (int node = 0; node < basis.n_nodes(); ++node)
      io::write_f64(out, basis.modes(node, m));
  if (!out) throw IoError("failed writing KL basis to " + path);
}

KLBasis load_kl_basis(const std::string& path) {
  auto in = io::open_in(path);
  io::expect_magic(in, "KLB1", "KL basis");
  KLBasis basis;
  basis.nx = static_cast<int>(io::read_u64(in));
  basis.ny = static_cast<int>(io::read_u64(in));
  basis.n_modes = static_cast<int>(io::read_u64(in));
  if (basis.nx < 3 || basis.ny < 3 || basis.n_modes < 1)
    throw IoError("corrupt KL basis header in " + path);
  basis.sigma2 = io::read_f64(in);
  basis.corr_length = io::read_f64(in);
  basis.mean_log_k = io::read_f64(in);
  basis.eigenvalues = io::read_vec(in, basis.n_modes);
  basis.modes.resize(basis.n_nodes(), basis.n_modes);
  for (int m = 0; m < basis.n_modes; ++m)
    for (int node = 0; node < basis.n_nodes(); ++node)
      basis.modes(node, m) = io::read_f64(in);
  const double trace = basis.sigma2 * basis.n_nodes();
  basis.energy_fraction = basis.eigenvalues.sum() / trace;
  return basis;
}

}  // namespace resinv
