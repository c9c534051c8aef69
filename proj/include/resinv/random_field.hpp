#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "resinv/grid.hpp"
#include "resinv/rng.hpp"

namespace resinv {

using CoeffVector = Eigen::VectorXd;

// Exponential (Matern smoothness 1/2) covariance of the log-permeability
// field, C(r) = sigma2 * exp(-r / corr_length).
struct CovarianceSpec {
  double sigma2 = 1.0;       // (log-permeability units)^2
  double corr_length = 1.0;  // m
};

// Truncated KL basis of the log-permeability covariance. `modes` holds one
// orthonormal eigenvector per column (n_nodes x n_modes), eigenvalues sorted
// descending. energy_fraction = sum(retained eigenvalues) / trace(C).
struct KLBasis {
  int nx = 0;
  int ny = 0;
  int n_modes = 0;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd modes;
  double mean_log_k = 0.0;
  double sigma2 = 1.0;
  double corr_length = 1.0;
  double energy_fraction = 0.0;

  int n_nodes() const { return nx * ny; }
  // sqrt(lambda_i) * phi_i, the column that multiplies coefficient i.
  Eigen::VectorXd scaled_mode(int i) const {
    return std::sqrt(eigenvalues[i]) * modes.col(i);
  }
};

struct PermeabilityField {
  Eigen::VectorXd log_k;  // per node
  Eigen::VectorXd k;      // exp(log_k), strictly positive
  // Nodes where the realize-time clamp saturated (empty when none did);
  // their log_k subgradient is zero.
  std::vector<int> clamped_nodes;
};

// Dense eigendecomposition budget: grids above this need a coarser
// resolution rather than an iterative eigensolver.
inline constexpr int kDenseEigenNodeCap = 4096;

// Dense covariance over all node pairs. Throws std::length_error when
// nx*ny exceeds `max_nodes` (the dense-eigendecomposition budget).
Eigen::MatrixXd covariance_matrix(const GridSpec& grid,
                                  const CovarianceSpec& spec,
                                  int max_nodes = kDenseEigenNodeCap);

// Top n_modes eigenpairs of a symmetric covariance matrix, descending, with
// each eigenvector's largest-magnitude entry made positive so repeated runs
// produce identical bases. Throws NumericError if a retained eigenvalue is
// negative beyond 1e-10 * lambda_1.
KLBasis compute_kl_basis(const Eigen::MatrixXd& cov, int n_modes,
                         double mean_log_k);

// Convenience: covariance + eigendecomposition for a grid, recording the
// covariance parameters in the basis.
KLBasis build_kl_basis(const GridSpec& grid, const CovarianceSpec& spec,
                       int n_modes, double mean_log_k);

// log_k = mean_log_k + sum_i sqrt(lambda_i) phi_i k_i, k = exp(log_k).
// `clamp_log_k` bounds |log_k - mean| so wild network outputs during early
// training stay solvable: prior fields have O(1) fluctuations, so the bound
// is inactive for every legitimate sample, while e^20 is the largest
// permeability contrast the factorization tolerates reliably.
PermeabilityField realize_log_permeability(const KLBasis& basis,
                                           const CoeffVector& coeffs,
                                           double clamp_log_k = 10.0);

// i.i.d. standard normal coefficients.
CoeffVector sample_coefficients(int n_modes, Rng& rng);

// KLB1 binary file.
void save_kl_basis(const KLBasis& basis, const std::string& path);
KLBasis load_kl_basis(const std::string& path);

}  // namespace resinv
