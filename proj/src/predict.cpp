#include "gwpdti/predict.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "gwpdti/errors.hpp"

namespace gwpdti {

CrossCovariance CrossCovariance::at(const std::vector<Vec3>& sites, const Vec3& target, double theta) {
  CrossCovariance c;
  c.k.resize(static_cast<Eigen::Index>(sites.size()));
  for (std::size_t n = 0; n < sites.size(); ++n) c.k[static_cast<Eigen::Index>(n)] = se_kernel(target, sites[n], theta);
  return c;
}

double gp_conditional_variance_raw(const GramMatrix& gram, const CrossCovariance& kstar) {
  return 1.0 - gram.solve_lower(kstar.k).squaredNorm();
}

Conditional gp_conditional(const Eigen::VectorXd& u_block, const GramMatrix& gram, const CrossCovariance& kstar) {
  if (static_cast<std::size_t>(u_block.size()) != gram.size() || kstar.k.size() != u_block.size())
    fail(ErrorKind::invalid_input, "conditional: size mismatch");
  Conditional c;
  c.mean = kstar.k.dot(gram.solve(u_block));
  c.variance = std::clamp(gp_conditional_variance_raw(gram, kstar), 0.0, 1.0);
  return c;
}

SamplePredictor::SamplePredictor(const PosteriorSample& sample, int nu, std::shared_ptr<const GramMatrix> gram,
                                 const std::vector<Vec3>& sites)
    : nu_(nu), chol_scale_(sample.chol_scale), gram_(std::move(gram)), sites_(&sites) {
  const auto n = static_cast<Eigen::Index>(sites.size());
  if (sample.u.size() != 3 * nu * n) fail(ErrorKind::validation, "sample latent vector does not match sites");
  const Eigen::Map<const Eigen::MatrixXd> u(sample.u.data(), n, 3 * nu);
  alpha_ = gram_->solve(Eigen::MatrixXd(u));
}

Eigen::Matrix<double, 3, Eigen::Dynamic> SamplePredictor::latent_mean(const Vec3& site, double* variance) const {
  const auto kstar = CrossCovariance::at(*sites_, site, gram_->theta());
  const Eigen::VectorXd m = alpha_.transpose() * kstar.k;  // block-major: (3i + d)
  if (variance) *variance = std::clamp(gp_conditional_variance_raw(*gram_, kstar), 0.0, 1.0);
  return Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>>(m.data(), 3, nu_);
}

SymTensor3 SamplePredictor::reconstruct_at(const Vec3& site, PredictMode mode, Engine* eng) const {
  double var = 0.0;
  Eigen::Matrix<double, 3, Eigen::Dynamic> m = latent_mean(site, mode == PredictMode::sample ? &var : nullptr);
  if (mode == PredictMode::sample) {
    if (!eng) fail(ErrorKind::usage, "sample mode needs a random engine");
    const double sd = std::sqrt(var);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < 3; ++i) m(i, j) += sd * standard_normal(*eng);
  }
  return construct_tensor(m, chol_scale_);
}

PredictedField interpolate_gwp(const PosteriorSamples& archive, const TensorGrid& source,
                               const std::vector<Vec3>& targets, const PredictOptions& options) {
  if (archive.samples.empty()) fail(ErrorKind::usage, "posterior archive has no samples");
  if (!archive.data_checksum.empty() && archive.data_checksum != field_checksum(source))
    fail(ErrorKind::provenance, "posterior archive was fitted to a different field (checksum mismatch)");

  std::vector<Vec3> sites;
  for (auto i : source.valid_sites()) sites.push_back(site_coordinates(source, i));
  if (sites.size() != archive.n_sites) fail(ErrorKind::provenance, "archive site count does not match field");

  const std::size_t nt = targets.size();
  const double s = archive.scale;
  std::vector<Eigen::Matrix<double, 6, 1>> sum(nt, Eigen::Matrix<double, 6, 1>::Zero());
  std::vector<Eigen::Matrix<double, 6, 1>> sum_sq(nt, Eigen::Matrix<double, 6, 1>::Zero());

  PredictedField out;
  if (options.keep_per_sample) out.per_sample.emplace();

  std::shared_ptr<const GramMatrix> gram;
  for (std::size_t k = 0; k < archive.samples.size(); ++k) {
    const auto& sample = archive.samples[k];
    if (!gram || gram->theta() != sample.theta)
      gram = std::make_shared<const GramMatrix>(GramMatrix::build(sites, sample.theta));
    SamplePredictor pred(sample, archive.nu, gram, sites);

    std::vector<SymTensor3> row;
    if (out.per_sample) row.reserve(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      Engine eng = make_engine(options.seed, k, t);
      const SymTensor3 d = pred.reconstruct_at(targets[t], options.mode, &eng) * s;
      const Eigen::Map<const Eigen::Matrix<double, 6, 1>> c(d.components().data());
      sum[t] += c;
      sum_sq[t] += c.cwiseProduct(c);
      if (out.per_sample) row.push_back(d);
    }
    if (out.per_sample) out.per_sample->push_back(std::move(row));
  }

  const double ns = static_cast<double>(archive.samples.size());
  // Off-diagonal entries appear twice in the 3x3 matrix.
  const Eigen::Matrix<double, 6, 1> weight = (Eigen::Matrix<double, 6, 1>() << 1, 1, 1, 2, 2, 2).finished();
  out.mean.reserve(nt);
  out.uncertainty.reserve(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const Eigen::Matrix<double, 6, 1> mean = sum[t] / ns;
    const Eigen::Matrix<double, 6, 1> var = (sum_sq[t] / ns - mean.cwiseProduct(mean)).cwiseMax(0.0);
    out.mean.emplace_back(std::array<double, 6>{mean[0], mean[1], mean[2], mean[3], mean[4], mean[5]});
    out.uncertainty.push_back(weight.dot(var));
  }
  return out;
}

}  // namespace gwpdti
