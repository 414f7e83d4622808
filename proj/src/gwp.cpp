#include "gwpdti/gwp.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "gwpdti/errors.hpp"

namespace gwpdti {

double se_kernel(const Vec3& z, const Vec3& zp, double theta) {
  return std::exp(-0.5 * (z - zp).squaredNorm() / (theta * theta));
}

GramMatrix GramMatrix::build(const std::vector<Vec3>& sites, double theta, double jitter_start,
                             double jitter_max) {
  if (!(theta > 0.0) || !std::isfinite(theta)) fail(ErrorKind::invalid_input, "length-scale must be positive");
  const auto n = static_cast<Eigen::Index>(sites.size());
  GramMatrix g;
  g.theta_ = theta;
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) k(i, j) = k(j, i) = se_kernel(sites[i], sites[j], theta);
  }

  // Unit diagonal, so the mean diagonal is 1.
  for (double jitter = jitter_start; jitter <= jitter_max * (1.0 + 1e-9); jitter *= 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd l = llt.matrixL();
    if (!l.allFinite() || (l.diagonal().array() <= 0.0).any()) continue;
    g.k_ = std::move(kj);
    g.chol_ = std::move(l);
    g.jitter_ = jitter;
    g.log_det_ = 2.0 * g.chol_.diagonal().array().log().sum();
    return g;
  }
  std::ostringstream msg;
  msg << "Gram matrix not positive definite for theta=" << theta << " with jitter up to " << jitter_max;
  fail(ErrorKind::conditioning, msg.str());
}

Eigen::VectorXd GramMatrix::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd y = chol_.triangularView<Eigen::Lower>().solve(b);
  return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::MatrixXd GramMatrix::solve(const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd y = chol_.triangularView<Eigen::Lower>().solve(b);
  return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::VectorXd GramMatrix::solve_lower(const Eigen::VectorXd& b) const {
  return chol_.triangularView<Eigen::Lower>().solve(b);
}

double GramMatrix::quad_form(const Eigen::VectorXd& b) const { return solve_lower(b).squaredNorm(); }

LatentVector::LatentVector(int nu, std::size_t n_sites)
    : LatentVector(nu, n_sites, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * nu * n_sites))) {}

LatentVector::LatentVector(int nu, std::size_t n_sites, Eigen::VectorXd values)
    : nu_(nu), n_(n_sites), v_(std::move(values)) {
  if (nu < 1) fail(ErrorKind::invalid_input, "nu must be at least 1");
  if (static_cast<std::size_t>(v_.size()) != 3 * static_cast<std::size_t>(nu) * n_sites)
    fail(ErrorKind::invalid_input, "latent vector length must be 3 * nu * N");
}

Eigen::Matrix<double, 3, Eigen::Dynamic> LatentVector::at_site(std::size_t n) const {
  Eigen::Matrix<double, 3, Eigen::Dynamic> m(3, nu_);
  for (int i = 0; i < nu_; ++i)
    for (int d = 0; d < 3; ++d) m(d, i) = v_[static_cast<Eigen::Index>((3 * i + d) * n_ + n)];
  return m;
}

void GwpParams::validate() const {
  if (nu < 3) fail(ErrorKind::invalid_input, "nu must be at least 3");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) fail(ErrorKind::invalid_input, "sigma2 must be positive");
  if (!(kernel.theta > 0.0) || !std::isfinite(kernel.theta))
    fail(ErrorKind::invalid_input, "length-scale must be positive");
  for (int i = 0; i < 3; ++i) {
    if (!(chol_scale(i, i) > 0.0)) fail(ErrorKind::invalid_input, "L must have a positive diagonal");
    for (int j = i + 1; j < 3; ++j)
      if (chol_scale(i, j) != 0.0) fail(ErrorKind::invalid_input, "L must be lower triangular");
  }
  if (!chol_scale.allFinite()) fail(ErrorKind::invalid_input, "L must be finite");
}

SymTensor3 construct_tensor(const Eigen::Ref<const Eigen::Matrix<double, 3, Eigen::Dynamic>>& u_site,
                            const Mat3& chol_scale) {
  const Eigen::Matrix<double, 3, Eigen::Dynamic> lu = chol_scale * u_site;
  return SymTensor3::from_matrix(lu * lu.transpose());
}

SymTensor3 construct_tensor(std::span<const double> u_site, const GwpParams& params) {
  if (u_site.size() != 3 * static_cast<std::size_t>(params.nu))
    fail(ErrorKind::invalid_input, "site latent vector must hold 3 * nu values");
  Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> m(u_site.data(), 3, params.nu);
  return construct_tensor(m, params.chol_scale);
}

double log_likelihood(std::span<const SymTensor3> data, const LatentVector& u, const GwpParams& params) {
  if (u.n_sites() != data.size() || u.nu() != params.nu)
    fail(ErrorKind::invalid_input, "latent vector does not match data size or nu");
  double ss = 0.0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    ss += (data[n] - construct_tensor(u.at_site(n), params.chol_scale)).frob_norm2();
  }
  return -0.5 * ss / params.sigma2;
}

double mean_nearest_neighbour_distance(const std::vector<Vec3>& sites) {
  if (sites.size() < 2) return 1.0;
  double total = 0.0;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < sites.size(); ++j) {
      if (i == j) continue;
      const double d = (sites[i] - sites[j]).norm();
      if (d > 0.0) best = std::min(best, d);
    }
    total += std::isfinite(best) ? best : 0.0;
  }
  const double mean = total / static_cast<double>(sites.size());
  return mean > 0.0 ? mean : 1.0;
}

Hyperpriors Hyperpriors::from_data(std::span<const SymTensor3> data, const std::vector<Vec3>& sites, int nu) {
  if (data.empty()) fail(ErrorKind::invalid_input, "no data for hyperpriors");
  Hyperpriors hp;
  hp.theta_log_median = std::log(2.0 * mean_nearest_neighbour_distance(sites));
  hp.theta_log_sd = 1.0;

  Mat3 mean = Mat3::Zero();
  for (const auto& s : data) mean += s.matrix();
  mean /= static_cast<double>(data.size()) * nu;
  Eigen::LLT<Mat3> llt(mean);
  if (llt.info() != Eigen::Success) fail(ErrorKind::domain, "mean data tensor is not positive definite");
  hp.chol_mean = llt.matrixL();
  hp.chol_sd = 0.5 * hp.chol_mean.norm();
  return hp;
}

double log_prior_theta(double theta, const Hyperpriors& hp) {
  if (!(theta > 0.0)) fail(ErrorKind::domain, "length-scale must be positive");
  const double z = (std::log(theta) - hp.theta_log_median) / hp.theta_log_sd;
  return -std::log(theta) - 0.5 * z * z;
}

double log_prior_L(const Mat3& chol_scale, const Hyperpriors& hp) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j) {
      const double z = (chol_scale(i, j) - hp.chol_mean(i, j)) / hp.chol_sd;
      s += -0.5 * z * z;
    }
  return s;
}

double log_prior_u(const LatentVector& u, const GramMatrix& gram) {
  if (gram.size() != u.n_sites()) fail(ErrorKind::invalid_input, "Gram size does not match latent vector");
  const double n = static_cast<double>(u.n_sites());
  const double per_block_const = -0.5 * gram.log_det() - 0.5 * n * std::log(2.0 * std::numbers::pi);
  double s = 0.0;
  for (std::size_t b = 0; b < u.n_blocks(); ++b) s += -0.5 * gram.quad_form(u.block(b)) + per_block_const;
  return s;
}

}  // namespace gwpdti
