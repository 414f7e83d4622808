#include "gwpdti/inference.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "config_json.hpp"
#include "gwpdti/errors.hpp"

namespace gwpdti {

using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = ~0ULL;
constexpr std::uint64_t kEssStream = 16;
constexpr std::uint64_t kThetaStream = 1;
constexpr std::uint64_t kCholStream = 2;

// Per-block prior draws v_b = chol(K) z_b, laid out like LatentVector.
Eigen::VectorXd draw_prior(const GramMatrix& gram, std::size_t n_blocks, Engine& eng) {
  const auto n = static_cast<Eigen::Index>(gram.size());
  Eigen::MatrixXd z(n, static_cast<Eigen::Index>(n_blocks));
  for (Eigen::Index b = 0; b < z.cols(); ++b)
    for (Eigen::Index i = 0; i < n; ++i) z(i, b) = standard_normal(eng);
  const Eigen::MatrixXd v = gram.cholesky().triangularView<Eigen::Lower>() * z;
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

// Log of a uniform draw on (0, 1].
double log_uniform(Engine& eng) { return std::log1p(-uniform01(eng)); }

std::string state_dump(const ChainState& s) {
  std::ostringstream o;
  o << std::setprecision(17) << "theta=" << s.params.kernel.theta << " log_lik=" << s.log_lik << " L=[";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j) o << s.params.chol_scale(i, j) << (i == 2 && j == 2 ? "" : ",");
  o << "] |u|=" << s.u.values().norm();
  return o.str();
}

}  // namespace

void McmcConfig::validate() const {
  if (total == 0) fail(ErrorKind::usage, "mcmc: total iterations must be positive");
  if (burn_in >= total) fail(ErrorKind::usage, "mcmc: burn-in must be smaller than total");
  if (stride < 1) fail(ErrorKind::usage, "mcmc: stride must be at least 1");
  if (ess_per_cycle < 1) fail(ErrorKind::usage, "mcmc: ess_per_cycle must be at least 1");
  if (!(theta_step >= 0.0) || !(chol_step >= 0.0)) fail(ErrorKind::usage, "mcmc: proposal scales must be >= 0");
  if (nu < 3) fail(ErrorKind::usage, "mcmc: nu must be at least 3");
  if (!(sigma_rel > 0.0)) fail(ErrorKind::usage, "mcmc: sigma_rel must be positive");
  if (sigma2 && !(*sigma2 > 0.0)) fail(ErrorKind::usage, "mcmc: sigma2 must be positive");
}

GwpModel::GwpModel(std::vector<Vec3> sites, std::vector<SymTensor3> scaled_data, double scale, Hyperpriors hp,
                   double sigma2, int nu, TargetTerms terms)
    : sites_(std::move(sites)),
      data_(std::move(scaled_data)),
      scale_(scale),
      hp_(hp),
      sigma2_(sigma2),
      nu_(nu),
      terms_(terms) {
  if (sites_.size() != data_.size()) fail(ErrorKind::invalid_input, "sites and data differ in length");
  if (!(sigma2_ > 0.0)) fail(ErrorKind::invalid_input, "sigma2 must be positive");
  if (!(scale_ > 0.0)) fail(ErrorKind::invalid_input, "scale must be positive");
}

GwpModel GwpModel::from_grid(const TensorGrid& low_res, const McmcConfig& config) {
  config.validate();
  const auto valid = low_res.valid_sites();
  if (valid.size() < 2) fail(ErrorKind::validation, "need at least 2 valid sites to fit");

  double trace = 0.0;
  for (auto i : valid) trace += low_res.at(i).trace();
  const double scale = trace / (3.0 * static_cast<double>(valid.size()));
  if (!(scale > 0.0)) fail(ErrorKind::domain, "mean tensor trace must be positive");

  std::vector<Vec3> sites;
  std::vector<SymTensor3> data;
  double mean_norm = 0.0;
  for (auto i : valid) {
    sites.push_back(site_coordinates(low_res, i));
    data.push_back(low_res.at(i) * (1.0 / scale));
    mean_norm += std::sqrt(data.back().frob_norm2());
  }
  mean_norm /= static_cast<double>(valid.size());

  const double sigma2 = config.sigma2 ? *config.sigma2 : std::pow(config.sigma_rel * mean_norm, 2);
  auto hp = Hyperpriors::from_data(data, sites, config.nu);
  return GwpModel(std::move(sites), std::move(data), scale, hp, sigma2, config.nu, config.terms);
}

double GwpModel::log_likelihood(const LatentVector& u, const GwpParams& params) const {
  if (!terms_.likelihood) return 0.0;
  return gwpdti::log_likelihood(data_, u, params);
}

ChainState initial_state(const GwpModel& model, Engine& eng, LatentInit init) {
  const auto& hp = model.hyperpriors();
  GwpParams p;
  p.nu = model.nu();
  p.sigma2 = model.sigma2();
  p.kernel.theta = std::exp(hp.theta_log_median);
  p.chol_scale = hp.chol_mean.triangularView<Eigen::Lower>();
  p.validate();

  auto gram = GramMatrix::build(model.sites(), p.kernel.theta);
  const std::size_t n = model.sites().size();
  LatentVector u(p.nu, n);
  if (init == LatentInit::prior) {
    u.values() = draw_prior(gram, 3 * static_cast<std::size_t>(p.nu), eng);
  } else {
    Eigen::MatrixXd g(p.nu, 3);
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = standard_normal(eng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() *
                              Eigen::MatrixXd::Identity(p.nu, 3);  // nu x 3, orthonormal columns
    const Mat3 linv = p.chol_scale.triangularView<Eigen::Lower>().solve(Mat3::Identity());
    for (std::size_t s = 0; s < n; ++s) {
      const Mat3 m = linv * model.data()[s].matrix() * linv.transpose();
      Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (m + m.transpose()));
      const Vec3 root = es.eigenvalues().cwiseMax(1e-6).cwiseSqrt();
      const Mat3 sq = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
      const Eigen::MatrixXd us = sq * q.transpose();  // 3 x nu
      for (int i = 0; i < p.nu; ++i)
        for (int d = 0; d < 3; ++d) u.block(3 * static_cast<std::size_t>(i) + d)(static_cast<Eigen::Index>(s)) = us(d, i);
    }
  }
  ChainState s{std::move(u), p, std::move(gram), 0.0};
  s.log_lik = model.log_likelihood(s.u, s.params);
  return s;
}

void verify_cache(const GwpModel& model, const ChainState& state) {
  const auto fresh = GramMatrix::build(model.sites(), state.params.kernel.theta);
  const double dk = (fresh.matrix() - state.gram.matrix()).norm();
  const double ll = model.log_likelihood(state.u, state.params);
  const double dl = std::abs(ll - state.log_lik);
  if (dk > 1e-9 * std::max(1.0, fresh.matrix().norm()) || dl > 1e-9 * std::max(1.0, std::abs(ll))) {
    fail(ErrorKind::numerical, "chain cache incoherent: " + state_dump(state));
  }
}

double log_posterior(const GwpModel& model, const ChainState& state) {
  return state.log_lik + log_prior_u(state.u, state.gram) +
         log_prior_theta(state.params.kernel.theta, model.hyperpriors()) +
         log_prior_L(state.params.chol_scale, model.hyperpriors());
}

ChainState ess_update(const GwpModel& model, ChainState state, Engine& eng, std::size_t* proposals) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const Eigen::VectorXd v = draw_prior(state.gram, state.u.n_blocks(), eng);
  const double log_y = state.log_lik + log_uniform(eng);
  double angle = two_pi * uniform01(eng);
  double lo = angle - two_pi;
  double hi = angle;

  const Eigen::VectorXd u0 = state.u.values();
  LatentVector cand = state.u;
  std::size_t count = 0;
  while (true) {
    cand.values() = u0 * std::cos(angle) + v * std::sin(angle);
    const double ll = model.log_likelihood(cand, state.params);
    ++count;
    if (!std::isfinite(ll)) fail(ErrorKind::numerical, "non-finite likelihood in slice sampler: " + state_dump(state));
    if (ll > log_y) {
      state.u = std::move(cand);
      state.log_lik = ll;
      break;
    }
    if (angle < 0.0)
      lo = angle;
    else
      hi = angle;
    // The bracket shrinks towards the current point, which satisfies the
    // slice unless log_y sits exactly at the current level.
    if (hi - lo < 1e-14) break;
    angle = lo + (hi - lo) * uniform01(eng);
  }
  if (proposals) *proposals = count;
  return state;
}

MhOutcome mh_update_theta(const GwpModel& model, ChainState state, double log_step, Engine& eng) {
  const double theta = state.params.kernel.theta;
  const double theta_new = theta * std::exp(log_step * standard_normal(eng));
  const double log_u = log_uniform(eng);
  if (theta_new == theta) return {std::move(state), true, false};

  const auto& hp = model.hyperpriors();
  GramMatrix gram_new;
  try {
    gram_new = GramMatrix::build(model.sites(), theta_new);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::conditioning) throw;
    return {std::move(state), false, true};
  }

  // Symmetric in log theta, hence the theta'/theta factor.
  double log_ratio = log_prior_theta(theta_new, hp) - log_prior_theta(theta, hp) + std::log(theta_new / theta);
  if (model.terms().latent_prior_in_theta)
    log_ratio += log_prior_u(state.u, gram_new) - log_prior_u(state.u, state.gram);

  if (log_u < log_ratio) {
    state.params.kernel.theta = theta_new;
    state.gram = std::move(gram_new);
    return {std::move(state), true, false};
  }
  return {std::move(state), false, false};
}

MhOutcome mh_update_L(const GwpModel& model, ChainState state, double step_factor, Engine& eng) {
  const auto& hp = model.hyperpriors();
  const Mat3& cur = state.params.chol_scale;
  Mat3 prop = cur;
  double log_jacobian = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double eps = standard_normal(eng);
      if (i == j) {
        const double sd = step_factor * hp.chol_sd / std::abs(hp.chol_mean(i, i));
        prop(i, i) = cur(i, i) * std::exp(sd * eps);
        log_jacobian += std::log(prop(i, i) / cur(i, i));
      } else {
        prop(i, j) = cur(i, j) + step_factor * hp.chol_sd * eps;
      }
    }
  }
  const double log_u = log_uniform(eng);
  if (prop == cur) return {std::move(state), true, false};

  GwpParams params = state.params;
  params.chol_scale = prop;
  const double ll_new = model.log_likelihood(state.u, params);
  if (!std::isfinite(ll_new)) fail(ErrorKind::numerical, "non-finite likelihood in L update: " + state_dump(state));
  const double log_ratio = ll_new - state.log_lik + log_prior_L(prop, hp) - log_prior_L(cur, hp) + log_jacobian;
  if (log_u < log_ratio) {
    state.params = params;
    state.log_lik = ll_new;
    return {std::move(state), true, false};
  }
  return {std::move(state), false, false};
}

PosteriorSamples run_chain(const GwpModel& model, const McmcConfig& config, const std::string& data_checksum) {
  config.validate();
  if (model.sites().size() < 2) fail(ErrorKind::validation, "need at least 2 sites to fit");

  auto init_eng = make_engine(config.seed, kInitStream);
  ChainState state = initial_state(model, init_eng, config.init);
  double theta_step = config.theta_step;
  double chol_step = config.chol_step;
  constexpr std::size_t kWindow = 50;
  constexpr double kTarget = 0.3;
  std::size_t win_theta = 0, win_chol = 0;

  PosteriorSamples out;
  out.config = config;
  out.nu = model.nu();
  out.sigma2 = model.sigma2();
  out.scale = model.scale();
  out.n_sites = model.sites().size();
  out.data_checksum = data_checksum;
  out.hyperpriors = model.hyperpriors();
  out.samples.reserve(config.retained());
  auto& diag = out.diagnostics;
  diag.log_posterior_trace.reserve(config.total);

  std::size_t ess_props = 0, ess_calls = 0, theta_acc = 0, chol_acc = 0;
  for (std::size_t it = 0; it < config.total; ++it) {
    for (std::size_t k = 0; k < config.ess_per_cycle; ++k) {
      auto eng = make_engine(config.seed, it, kEssStream + k);
      std::size_t props = 0;
      state = ess_update(model, std::move(state), eng, &props);
      ess_props += props;
      ++ess_calls;
    }
    {
      auto eng = make_engine(config.seed, it, kThetaStream);
      auto r = mh_update_theta(model, std::move(state), theta_step, eng);
      state = std::move(r.state);
      theta_acc += r.accepted ? 1 : 0;
      win_theta += r.accepted ? 1 : 0;
      diag.theta_conditioning_failures += r.conditioning_failure ? 1 : 0;
    }
    {
      auto eng = make_engine(config.seed, it, kCholStream);
      auto r = mh_update_L(model, std::move(state), chol_step, eng);
      state = std::move(r.state);
      chol_acc += r.accepted ? 1 : 0;
      win_chol += r.accepted ? 1 : 0;
    }
    if ((it + 1) % kWindow == 0) {
      if (config.adapt && it < config.burn_in) {
        theta_step *= std::exp(2.0 * (static_cast<double>(win_theta) / kWindow - kTarget));
        chol_step *= std::exp(2.0 * (static_cast<double>(win_chol) / kWindow - kTarget));
      }
      win_theta = win_chol = 0;
    }
    if (config.check_every && (it + 1) % config.check_every == 0) verify_cache(model, state);

    const double lp = log_posterior(model, state);
    if (!std::isfinite(lp)) fail(ErrorKind::numerical, "non-finite log posterior at iteration " + std::to_string(it));
    diag.log_posterior_trace.push_back(lp);

    if (it >= config.burn_in && (it - config.burn_in + 1) % config.stride == 0) {
      out.samples.push_back({it, state.params.kernel.theta, state.params.chol_scale, lp, state.u.values()});
    }
  }
  diag.ess_mean_proposals = static_cast<double>(ess_props) / static_cast<double>(ess_calls);
  diag.theta_acceptance = static_cast<double>(theta_acc) / static_cast<double>(config.total);
  diag.chol_acceptance = static_cast<double>(chol_acc) / static_cast<double>(config.total);
  diag.theta_step = theta_step;
  diag.chol_step = chol_step;
  return out;
}

PosteriorSamples run_chain(const TensorGrid& low_res, const McmcConfig& config) {
  return run_chain(GwpModel::from_grid(low_res, config), config, field_checksum(low_res));
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::io, "sha256 failed");
  std::ostringstream o;
  for (unsigned int i = 0; i < len; ++i) o << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return o.str();
}

std::string field_checksum(const TensorGrid& grid) { return sha256_hex(format_field(grid)); }

namespace {

json lower6(const Mat3& l) { return {l(0, 0), l(1, 0), l(1, 1), l(2, 0), l(2, 1), l(2, 2)}; }

Mat3 from_lower6(const std::vector<double>& v) {
  if (v.size() != 6) fail(ErrorKind::parse, "archive: L needs 6 entries");
  Mat3 l = Mat3::Zero();
  l(0, 0) = v[0];
  l(1, 0) = v[1];
  l(1, 1) = v[2];
  l(2, 0) = v[3];
  l(2, 1) = v[4];
  l(2, 2) = v[5];
  return l;
}

}  // namespace

json mcmc_config_to_json(const McmcConfig& c) {
  json j{{"total", c.total},
         {"burn_in", c.burn_in},
         {"stride", c.stride},
         {"ess_per_cycle", c.ess_per_cycle},
         {"theta_step", c.theta_step},
         {"chol_step", c.chol_step},
         {"seed", c.seed},
         {"nu", c.nu},
         {"sigma_rel", c.sigma_rel}};
  if (c.sigma2) j["sigma2"] = *c.sigma2;
  if (!c.terms.likelihood || !c.terms.latent_prior_in_theta)
    j["terms"] = {{"likelihood", c.terms.likelihood}, {"latent_prior_in_theta", c.terms.latent_prior_in_theta}};
  if (c.check_every) j["check_every"] = c.check_every;
  j["init"] = c.init == LatentInit::data ? "data" : "prior";
  j["adapt"] = c.adapt;
  return j;
}

McmcConfig mcmc_config_from_json(const json& j, McmcConfig c) {
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "total") c.total = v.get<std::size_t>();
      else if (k == "burn_in") c.burn_in = v.get<std::size_t>();
      else if (k == "stride") c.stride = v.get<std::size_t>();
      else if (k == "ess_per_cycle") c.ess_per_cycle = v.get<std::size_t>();
      else if (k == "theta_step") c.theta_step = v.get<double>();
      else if (k == "chol_step") c.chol_step = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "nu") c.nu = v.get<int>();
      else if (k == "sigma_rel") c.sigma_rel = v.get<double>();
      else if (k == "sigma2") c.sigma2 = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      else if (k == "check_every") c.check_every = v.get<std::size_t>();
      else if (k == "adapt") c.adapt = v.get<bool>();
      else if (k == "init") {
        const auto name = v.get<std::string>();
        if (name == "data") c.init = LatentInit::data;
        else if (name == "prior") c.init = LatentInit::prior;
        else fail(ErrorKind::usage, "mcmc config: init must be \"data\" or \"prior\"");
      }
      else if (k == "terms") {
        c.terms.likelihood = v.value("likelihood", true);
        c.terms.latent_prior_in_theta = v.value("latent_prior_in_theta", true);
      } else {
        fail(ErrorKind::usage, "mcmc config: unknown key \"" + k + "\"");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::usage, std::string("mcmc config: ") + e.what());
  }
  return c;
}

std::string format_archive(const PosteriorSamples& a) {
  const auto& d = a.diagnostics;
  json h{{"format", "gwpdti-posterior"},
         {"version", 1},
         {"config", mcmc_config_to_json(a.config)},
         {"nu", a.nu},
         {"sigma2", a.sigma2},
         {"scale", a.scale},
         {"n_sites", a.n_sites},
         {"n_samples", a.samples.size()},
         {"data_checksum", a.data_checksum},
         {"hyperpriors",
          {{"theta_log_median", a.hyperpriors.theta_log_median},
           {"theta_log_sd", a.hyperpriors.theta_log_sd},
           {"chol_mean", lower6(a.hyperpriors.chol_mean)},
           {"chol_sd", a.hyperpriors.chol_sd}}},
         {"diagnostics",
          {{"ess_mean_proposals", d.ess_mean_proposals},
           {"theta_acceptance", d.theta_acceptance},
           {"chol_acceptance", d.chol_acceptance},
           {"theta_conditioning_failures", d.theta_conditioning_failures},
           {"theta_step", d.theta_step},
           {"chol_step", d.chol_step},
           {"log_posterior_trace", d.log_posterior_trace}}}};
  std::string out = h.dump() + "\n";
  for (const auto& s : a.samples) {
    json r{{"iteration", s.iteration},
           {"theta", s.theta},
           {"L", lower6(s.chol_scale)},
           {"log_posterior", s.log_posterior},
           {"u", std::vector<double>(s.u.data(), s.u.data() + s.u.size())}};
    out += r.dump();
    out += "\n";
  }
  return out;
}

PosteriorSamples parse_archive(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto parse_line = [&](const std::string& l) {
    try {
      return json::parse(l);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::parse, "archive line " + std::to_string(lineno) + ": " + e.what());
    }
  };

  if (!std::getline(in, line)) fail(ErrorKind::parse, "archive: empty file");
  ++lineno;
  const json h = parse_line(line);
  PosteriorSamples a;
  try {
    if (h.value("format", "") != "gwpdti-posterior" || h.value("version", 0) != 1)
      fail(ErrorKind::parse, "archive: unrecognized header");
    a.config = mcmc_config_from_json(h.at("config"), McmcConfig{});
    a.nu = h.at("nu").get<int>();
    a.sigma2 = h.at("sigma2").get<double>();
    a.scale = h.at("scale").get<double>();
    a.n_sites = h.at("n_sites").get<std::size_t>();
    a.data_checksum = h.at("data_checksum").get<std::string>();
    const auto& hp = h.at("hyperpriors");
    a.hyperpriors.theta_log_median = hp.at("theta_log_median").get<double>();
    a.hyperpriors.theta_log_sd = hp.at("theta_log_sd").get<double>();
    a.hyperpriors.chol_mean = from_lower6(hp.at("chol_mean").get<std::vector<double>>());
    a.hyperpriors.chol_sd = hp.at("chol_sd").get<double>();
    const auto& d = h.at("diagnostics");
    a.diagnostics.ess_mean_proposals = d.at("ess_mean_proposals").get<double>();
    a.diagnostics.theta_acceptance = d.at("theta_acceptance").get<double>();
    a.diagnostics.chol_acceptance = d.at("chol_acceptance").get<double>();
    a.diagnostics.theta_conditioning_failures = d.at("theta_conditioning_failures").get<std::size_t>();
    a.diagnostics.theta_step = d.at("theta_step").get<double>();
    a.diagnostics.chol_step = d.at("chol_step").get<double>();
    a.diagnostics.log_posterior_trace = d.at("log_posterior_trace").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("archive header: ") + e.what());
  }

  const std::size_t expect_u = 3 * static_cast<std::size_t>(a.nu) * a.n_sites;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json r = parse_line(line);
    PosteriorSample s;
    try {
      s.iteration = r.at("iteration").get<std::size_t>();
      s.theta = r.at("theta").get<double>();
      s.chol_scale = from_lower6(r.at("L").get<std::vector<double>>());
      s.log_posterior = r.at("log_posterior").get<double>();
      const auto u = r.at("u").get<std::vector<double>>();
      if (u.size() != expect_u)
        fail(ErrorKind::validation, "archive line " + std::to_string(lineno) + ": u has wrong length");
      s.u = Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, "archive line " + std::to_string(lineno) + ": " + e.what());
    }
    a.samples.push_back(std::move(s));
  }
  return a;
}

}  // namespace gwpdti
