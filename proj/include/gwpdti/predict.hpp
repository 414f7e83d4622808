#pragma once

// GP-conditional prediction of the latent values at new sites and tensor
// reconstruction from posterior samples.

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "gwpdti/field.hpp"
#include "gwpdti/gwp.hpp"
#include "gwpdti/inference.hpp"

namespace gwpdti {

/// Kernel evaluations k(z*, z_n) against the training sites. Shared by all
/// 3*nu GP blocks of a sample.
struct CrossCovariance {
  Eigen::VectorXd k;

  static CrossCovariance at(const std::vector<Vec3>& sites, const Vec3& target, double theta);
};

struct Conditional {
  double mean = 0.0;
  double variance = 1.0;
};

/// mean = k*^T K^{-1} u, variance = 1 - k*^T K^{-1} k* clamped to [0, 1].
Conditional gp_conditional(const Eigen::VectorXd& u_block, const GramMatrix& gram, const CrossCovariance& kstar);

/// Unclamped 1 - k*^T K^{-1} k*.
double gp_conditional_variance_raw(const GramMatrix& gram, const CrossCovariance& kstar);

enum class PredictMode { mean, sample };

/// One posterior sample prepared for prediction: caches K^{-1} u_b for every
/// block, so each target costs one kernel vector and one small product.
class SamplePredictor {
 public:
  SamplePredictor(const PosteriorSample& sample, int nu, std::shared_ptr<const GramMatrix> gram,
                  const std::vector<Vec3>& sites);

  /// 3 x nu conditional means (and the shared conditional variance).
  Eigen::Matrix<double, 3, Eigen::Dynamic> latent_mean(const Vec3& site, double* variance = nullptr) const;

  /// construct_tensor of the conditional latent values at `site`, in the
  /// model's rescaled units. Sample mode draws each latent value from its
  /// conditional Gaussian using `eng`.
  SymTensor3 reconstruct_at(const Vec3& site, PredictMode mode, Engine* eng = nullptr) const;

  const Mat3& chol_scale() const { return chol_scale_; }

 private:
  int nu_;
  Mat3 chol_scale_;
  std::shared_ptr<const GramMatrix> gram_;
  const std::vector<Vec3>* sites_;
  Eigen::MatrixXd alpha_;  // N x 3nu
};

struct PredictedField {
  std::vector<SymTensor3> mean;   // per target, physical units
  std::vector<double> uncertainty;  // per target: sum of per-entry sample variances
  std::optional<std::vector<std::vector<SymTensor3>>> per_sample;  // [sample][target]
};

struct PredictOptions {
  PredictMode mode = PredictMode::mean;
  std::uint64_t seed = 1;  // sample mode only
  bool keep_per_sample = false;
};

/// Average over archive samples of the reconstructed tensors at `targets`.
/// Throws ErrorKind::provenance if `source` is not the field the archive was
/// fitted to, ErrorKind::usage for an empty archive.
PredictedField interpolate_gwp(const PosteriorSamples& archive, const TensorGrid& source,
                               const std::vector<Vec3>& targets, const PredictOptions& options = {});

}  // namespace gwpdti
