#pragma once

// Generalized Wishart process over 3x3 tensors:
//   D(z) = sum_i L u_i(z) u_i(z)^T L^T,  u_id ~ GP(0, k), i = 1..nu, d = 1..3
// with a squared-exponential kernel. All 3*nu latent GPs share one Gram
// matrix, so the block-diagonal prior covariance is never formed.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gwpdti/spd.hpp"

namespace gwpdti {

struct KernelParams {
  double theta = 1.0;  // length-scale, coordinate units
};

/// exp(-0.5 |z - z'|^2 / theta^2).
double se_kernel(const Vec3& z, const Vec3& zp, double theta);

/// N x N kernel matrix with jitter on the diagonal and its lower Cholesky
/// factor.
class GramMatrix {
 public:
  /// Jitter starts at `jitter_start` times the mean diagonal and grows x10
  /// up to `jitter_max` before throwing ErrorKind::conditioning.
  static GramMatrix build(const std::vector<Vec3>& sites, double theta, double jitter_start = 1e-8,
                          double jitter_max = 1e-4);

  std::size_t size() const { return static_cast<std::size_t>(k_.rows()); }
  double theta() const { return theta_; }
  double jitter() const { return jitter_; }
  const Eigen::MatrixXd& matrix() const { return k_; }  // includes jitter
  const Eigen::MatrixXd& cholesky() const { return chol_; }
  double log_det() const { return log_det_; }

  /// K^{-1} b.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  /// L^{-1} b.
  Eigen::VectorXd solve_lower(const Eigen::VectorXd& b) const;
  /// b^T K^{-1} b.
  double quad_form(const Eigen::VectorXd& b) const;

 private:
  Eigen::MatrixXd k_;
  Eigen::MatrixXd chol_;
  double theta_ = 0.0;
  double jitter_ = 0.0;
  double log_det_ = 0.0;
};

/// Latent GP values u, 3 * nu * N reals in GP-major blocks of length N:
/// block (i, d) holds u_id at every site and starts at (3 * i + d) * N.
class LatentVector {
 public:
  LatentVector() = default;
  LatentVector(int nu, std::size_t n_sites);
  LatentVector(int nu, std::size_t n_sites, Eigen::VectorXd values);

  int nu() const { return nu_; }
  std::size_t n_sites() const { return n_; }
  std::size_t n_blocks() const { return 3 * static_cast<std::size_t>(nu_); }

  Eigen::VectorXd& values() { return v_; }
  const Eigen::VectorXd& values() const { return v_; }

  auto block(std::size_t b) { return v_.segment(static_cast<Eigen::Index>(b * n_), static_cast<Eigen::Index>(n_)); }
  auto block(std::size_t b) const {
    return v_.segment(static_cast<Eigen::Index>(b * n_), static_cast<Eigen::Index>(n_));
  }

  /// 3 x nu matrix whose column i is u_i at site n.
  Eigen::Matrix<double, 3, Eigen::Dynamic> at_site(std::size_t n) const;

 private:
  int nu_ = 0;
  std::size_t n_ = 0;
  Eigen::VectorXd v_;
};

struct GwpParams {
  int nu = 5;
  Mat3 chol_scale = Mat3::Identity();  // lower triangular, positive diagonal
  double sigma2 = 1.0;                 // likelihood variance
  KernelParams kernel;

  /// Throws ErrorKind::invalid_input when an invariant fails.
  void validate() const;
};

/// D = L (sum_i u_i u_i^T) L^T for a 3 x nu matrix of site values.
SymTensor3 construct_tensor(const Eigen::Ref<const Eigen::Matrix<double, 3, Eigen::Dynamic>>& u_site,
                            const Mat3& chol_scale);
/// Same, from 3*nu reals ordered (u_1x, u_1y, u_1z, u_2x, ...).
SymTensor3 construct_tensor(std::span<const double> u_site, const GwpParams& params);

/// -1/(2 sigma^2) * sum_n |S_n - D_n|_F^2 (additive constants dropped).
double log_likelihood(std::span<const SymTensor3> data, const LatentVector& u, const GwpParams& params);

/// Prior constants for theta and L.
struct Hyperpriors {
  double theta_log_median = 0.0;  // log of the prior median
  double theta_log_sd = 1.0;
  Mat3 chol_mean = Mat3::Identity();  // lower triangle used
  double chol_sd = 1.0;

  /// theta median = 2 * mean nearest-neighbour distance; L mean =
  /// chol(mean(S) / nu); L sd = 0.5 * |chol(mean(S) / nu)|_F.
  static Hyperpriors from_data(std::span<const SymTensor3> data, const std::vector<Vec3>& sites, int nu);
};

/// Log-normal density in theta, up to a constant. Throws ErrorKind::domain
/// for theta <= 0.
double log_prior_theta(double theta, const Hyperpriors& hp);
/// Independent Gaussians on the six free elements of L, up to a constant.
double log_prior_L(const Mat3& chol_scale, const Hyperpriors& hp);
/// Sum over the 3*nu blocks of log N(u_b | 0, K), normalized.
double log_prior_u(const LatentVector& u, const GramMatrix& gram);

double mean_nearest_neighbour_distance(const std::vector<Vec3>& sites);

}  // namespace gwpdti
