#pragma once

// MCMC for the GWP field model. Each cycle runs elliptical slice sampling on
// the latent GP values, then random-walk Metropolis-Hastings on the kernel
// length-scale and on the Cholesky factor of the scale matrix.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gwpdti/field.hpp"
#include "gwpdti/gwp.hpp"
#include "gwpdti/rng.hpp"

namespace gwpdti {

/// Switches for diagnostic runs: with `likelihood` off the chain targets the
/// prior; with `latent_prior_in_theta` off the theta update ignores p(u|theta).
struct TargetTerms {
  bool likelihood = true;
  bool latent_prior_in_theta = true;
};

/// Starting point for u. `data` places every site's 3 x nu latent matrix at
/// (L^-1 S L^-T)^{1/2} Q for one fixed Q with orthonormal rows, so the chain
/// starts on the data instead of climbing to it from a prior draw.
enum class LatentInit { data, prior };

struct McmcConfig {
  std::size_t total = 2000;
  std::size_t burn_in = 500;
  std::size_t stride = 5;
  std::size_t ess_per_cycle = 1;
  double theta_step = 0.15;  // sd of the log-theta random walk
  double chol_step = 0.1;    // L proposal sd, as a multiple of the prior sd
  std::uint64_t seed = 1;
  int nu = 5;
  double sigma_rel = 0.005;      // sigma = sigma_rel * mean |S|_F (rescaled units)
  std::optional<double> sigma2;  // overrides sigma_rel; rescaled units
  TargetTerms terms;
  std::size_t check_every = 0;  // cache-coherence checks every k cycles; 0 = off
  LatentInit init = LatentInit::data;
  bool adapt = true;  // tune both MH step sizes towards ~30% acceptance during burn-in only

  void validate() const;
  std::size_t retained() const { return (total - burn_in) / stride; }
};

/// Data and hyperpriors the chain conditions on. Tensors are held divided
/// by `scale` (mean trace / 3 of the input) so the priors on L are O(1).
class GwpModel {
 public:
  GwpModel(std::vector<Vec3> sites, std::vector<SymTensor3> scaled_data, double scale, Hyperpriors hp,
           double sigma2, int nu, TargetTerms terms = {});

  /// Rescales the valid sites of `low_res` and derives hyperpriors and sigma2.
  static GwpModel from_grid(const TensorGrid& low_res, const McmcConfig& config);

  const std::vector<Vec3>& sites() const { return sites_; }
  const std::vector<SymTensor3>& data() const { return data_; }
  double scale() const { return scale_; }
  const Hyperpriors& hyperpriors() const { return hp_; }
  double sigma2() const { return sigma2_; }
  int nu() const { return nu_; }
  const TargetTerms& terms() const { return terms_; }

  double log_likelihood(const LatentVector& u, const GwpParams& params) const;

 private:
  std::vector<Vec3> sites_;
  std::vector<SymTensor3> data_;
  double scale_ = 1.0;
  Hyperpriors hp_;
  double sigma2_ = 1.0;
  int nu_ = 5;
  TargetTerms terms_;
};

struct ChainState {
  LatentVector u;
  GwpParams params;
  GramMatrix gram;  // built for params.kernel.theta
  double log_lik = 0.0;
};

/// theta at its prior median, L at chol(mean(S)/nu), u per `init`.
ChainState initial_state(const GwpModel& model, Engine& eng, LatentInit init = LatentInit::prior);

/// Throws ErrorKind::numerical if the cached Gram or log-likelihood differ
/// from a recomputation by more than 1e-9 (relative).
void verify_cache(const GwpModel& model, const ChainState& state);

double log_posterior(const GwpModel& model, const ChainState& state);

/// One elliptical slice sampling move on u. `proposals`, when given,
/// receives the number of likelihood evaluations.
ChainState ess_update(const GwpModel& model, ChainState state, Engine& eng, std::size_t* proposals = nullptr);

struct MhOutcome {
  ChainState state;
  bool accepted = false;
  bool conditioning_failure = false;
};

/// Random walk on log theta with sd `log_step`.
MhOutcome mh_update_theta(const GwpModel& model, ChainState state, double log_step, Engine& eng);

/// Joint random walk on the six free elements of L: off-diagonals with sd
/// step_factor * prior sd, diagonals in log space with sd
/// step_factor * prior sd / |prior mean diagonal|.
MhOutcome mh_update_L(const GwpModel& model, ChainState state, double step_factor, Engine& eng);

struct PosteriorSample {
  std::size_t iteration = 0;
  double theta = 0.0;
  Mat3 chol_scale = Mat3::Identity();
  double log_posterior = 0.0;
  Eigen::VectorXd u;
};

struct RunDiagnostics {
  double ess_mean_proposals = 0.0;
  double theta_acceptance = 0.0;
  double chol_acceptance = 0.0;
  std::size_t theta_conditioning_failures = 0;
  double theta_step = 0.0;  // proposal scales in use after burn-in
  double chol_step = 0.0;
  std::vector<double> log_posterior_trace;
};

struct PosteriorSamples {
  McmcConfig config;
  int nu = 5;
  double sigma2 = 1.0;
  double scale = 1.0;
  std::size_t n_sites = 0;
  std::string data_checksum;
  Hyperpriors hyperpriors;
  std::vector<PosteriorSample> samples;
  RunDiagnostics diagnostics;
};

/// Runs the chain on the valid sites of `low_res`. Deterministic in
/// config.seed.
PosteriorSamples run_chain(const TensorGrid& low_res, const McmcConfig& config);
PosteriorSamples run_chain(const GwpModel& model, const McmcConfig& config, const std::string& data_checksum = {});

/// Line-delimited archive: a JSON header line, then one JSON record per
/// retained sample.
std::string format_archive(const PosteriorSamples& archive);
PosteriorSamples parse_archive(const std::string& text);

/// SHA-256 (hex) of the canonical field serialization.
std::string field_checksum(const TensorGrid& grid);
std::string sha256_hex(const std::string& bytes);

}  // namespace gwpdti
