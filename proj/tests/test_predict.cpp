#include <doctest.h>

#include <cmath>

#include "gwpdti/dmri.hpp"
#include "gwpdti/errors.hpp"
#include "gwpdti/predict.hpp"
#include "test_util.hpp"

using namespace gwpdti;

namespace {

struct Fixture {
  TensorGrid grid = synth_smooth_field({7, 7, 1}, 4, SmoothFieldParams{});
  PosteriorSamples archive;
  std::vector<Vec3> sites;

  Fixture() {
    McmcConfig c;
    c.total = 300;
    c.burn_in = 200;
    c.stride = 10;
    c.seed = 5;
    archive = run_chain(grid, c);
    for (std::size_t i = 0; i < grid.size(); ++i) sites.push_back(site_coordinates(grid, i));
  }
};

}  // namespace

TEST_SUITE("predict") {
  TEST_CASE("gp conditional at a kept site and in the far field") {
    Engine eng(6);
    std::vector<Vec3> sites;
    for (int i = 0; i < 12; ++i) sites.emplace_back(3 * uniform01(eng), 3 * uniform01(eng), 0);
    const auto gram = GramMatrix::build(sites, 1.0);
    // training latents are a GP draw: u = chol(K) z
    Eigen::VectorXd z(12);
    for (int i = 0; i < 12; ++i) z(i) = standard_normal(eng);
    const Eigen::VectorXd u = gram.cholesky() * z;
    for (std::size_t n = 0; n < sites.size(); ++n) {
      const auto c = gp_conditional(u, gram, CrossCovariance::at(sites, sites[n], 1.0));
      CHECK(std::abs(c.mean - u(static_cast<Eigen::Index>(n))) < 1e-4);
      CHECK(c.variance < 1e-4);
      CHECK(c.variance >= 0.0);
    }
    const auto far = gp_conditional(u, gram, CrossCovariance::at(sites, Vec3(1e3, 1e3, 0), 1.0));
    CHECK(std::abs(far.mean) < 1e-6);
    CHECK(std::abs(far.variance - 1.0) < 1e-6);

    for (int k = 0; k < 200; ++k) {
      const Vec3 t(4 * uniform01(eng) - 0.5, 4 * uniform01(eng) - 0.5, 0);
      const auto ks = CrossCovariance::at(sites, t, 1.0);
      for (Eigen::Index i = 0; i < ks.k.size(); ++i) {
        CHECK(ks.k(i) > 0.0);
        CHECK(ks.k(i) <= 1.0);
        CHECK(ks.k(i) == se_kernel(t, sites[static_cast<std::size_t>(i)], 1.0));
      }
      CHECK(gp_conditional_variance_raw(gram, ks) >= -1e-8);
      const auto c = gp_conditional(u, gram, ks);
      CHECK(c.variance >= 0.0);
      CHECK(c.variance <= 1.0);
    }
  }

  TEST_CASE("gp conditional scalar case") {
    const auto gram = GramMatrix::build({Vec3(0, 0, 0)}, 1.0);
    const double j = gram.jitter();
    Eigen::VectorXd u(1);
    u << 0.8;
    const auto ks = CrossCovariance::at({Vec3(0, 0, 0)}, Vec3(0.5, 0, 0), 1.0);
    const double k = std::exp(-0.125);
    const auto c = gp_conditional(u, gram, ks);
    CHECK(c.mean == doctest::Approx(k * 0.8 / (1 + j)).epsilon(1e-14));
    CHECK(c.variance == doctest::Approx(1 - k * k / (1 + j)).epsilon(1e-14));
  }

  TEST_CASE("reconstruction at kept and far sites") {
    Fixture f;
    const auto& sample = f.archive.samples.back();
    std::vector<Vec3> model_sites;
    for (auto i : f.grid.valid_sites()) model_sites.push_back(site_coordinates(f.grid, i));
    auto gram = std::make_shared<const GramMatrix>(GramMatrix::build(model_sites, sample.theta));
    SamplePredictor p(sample, f.archive.nu, gram, model_sites);
    const LatentVector u(f.archive.nu, model_sites.size(), sample.u);
    for (std::size_t n = 0; n < model_sites.size(); ++n) {
      const auto train = construct_tensor(u.at_site(n), sample.chol_scale);
      CHECK(test::rel_frob(p.reconstruct_at(model_sites[n], PredictMode::mean), train) < 1e-3);
    }
    CHECK(std::sqrt(p.reconstruct_at(Vec3(1e3, 0, 0), PredictMode::mean).frob_norm2()) < 1e-12);

    Engine a(1), b(1);
    CHECK(p.reconstruct_at(Vec3(0.5, 0.5, 0), PredictMode::sample, &a) ==
          p.reconstruct_at(Vec3(0.5, 0.5, 0), PredictMode::sample, &b));
  }

  TEST_CASE("interpolate_gwp") {
    Fixture f;
    const auto pred = interpolate_gwp(f.archive, f.grid, f.sites);
    REQUIRE(pred.mean.size() == f.sites.size());
    for (const auto& t : pred.mean) CHECK(is_spd(t));
    for (double v : pred.uncertainty) CHECK(v >= 0.0);

    // self-reconstruction on kept sites
    double err = 0, norm = 0;
    for (std::size_t i = 0; i < f.grid.size(); ++i) {
      err += frob_distance(pred.mean[i], f.grid.at(i));
      norm += std::sqrt(f.grid.at(i).frob_norm2());
    }
    CHECK(err / norm < 0.01);

    // one-sample archive equals that sample's reconstruction
    auto one = f.archive;
    one.samples.resize(1);
    PredictOptions keep;
    keep.keep_per_sample = true;
    const auto p1 = interpolate_gwp(one, f.grid, f.sites, keep);
    REQUIRE(p1.per_sample);
    for (std::size_t i = 0; i < f.sites.size(); ++i) CHECK(p1.mean[i] == (*p1.per_sample)[0][i]);

    // permutation and batching
    std::vector<Vec3> rev(f.sites.rbegin(), f.sites.rend());
    const auto pr = interpolate_gwp(f.archive, f.grid, rev);
    for (std::size_t i = 0; i < f.sites.size(); ++i) CHECK(pr.mean[i] == pred.mean[f.sites.size() - 1 - i]);
    for (std::size_t i = 0; i < f.sites.size(); i += 7) {
      const auto single = interpolate_gwp(f.archive, f.grid, {f.sites[i]});
      CHECK(single.mean[0] == pred.mean[i]);
    }

    PredictOptions sample_mode;
    sample_mode.mode = PredictMode::sample;
    sample_mode.seed = 3;
    const auto s1 = interpolate_gwp(f.archive, f.grid, f.sites, sample_mode);
    CHECK(s1.mean == interpolate_gwp(f.archive, f.grid, f.sites, sample_mode).mean);
  }

  TEST_CASE("provenance and empty archive") {
    Fixture f;
    const auto other = synth_smooth_field({7, 7, 1}, 99, SmoothFieldParams{});
    try {
      interpolate_gwp(f.archive, other, f.sites);
      FAIL("expected provenance error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::provenance);
    }
    auto empty = f.archive;
    empty.samples.clear();
    try {
      interpolate_gwp(empty, f.grid, f.sites);
      FAIL("expected usage error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::usage);
    }
  }
}
