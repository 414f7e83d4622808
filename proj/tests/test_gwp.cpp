#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gwpdti/errors.hpp"
#include "gwpdti/gwp.hpp"
#include "test_util.hpp"

using namespace gwpdti;

namespace {

std::vector<Vec3> random_sites(Engine& eng, std::size_t n, double extent = 5.0) {
  std::vector<Vec3> s;
  for (std::size_t i = 0; i < n; ++i) s.emplace_back(extent * uniform01(eng), extent * uniform01(eng), 0.0);
  return s;
}

Mat3 random_chol(Engine& eng) {
  Mat3 l = Mat3::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j) l(i, j) = i == j ? 0.5 + uniform01(eng) : 0.5 * standard_normal(eng);
  return l;
}

}  // namespace

TEST_SUITE("gwp") {
  TEST_CASE("squared exponential kernel") {
    const Vec3 z(1, 2, 3);
    CHECK(se_kernel(z, z, 0.7) == 1.0);
    CHECK(se_kernel(z, z + Vec3(0.7, 0, 0), 0.7) == doctest::Approx(0.6065306597126334).epsilon(1e-14));
    CHECK(se_kernel(z, z + Vec3(0, 0.7, 0.7), 0.7) == doctest::Approx(0.36787944117144233).epsilon(1e-14));
    CHECK(se_kernel(z, Vec3(0, 0, 0), 2.0) == se_kernel(Vec3(0, 0, 0), z, 2.0));
  }

  TEST_CASE("gram matrix") {
    const auto one = GramMatrix::build({Vec3(0, 0, 0)}, 1.0);
    CHECK(one.size() == 1);
    CHECK(one.matrix()(0, 0) == doctest::Approx(1.0 + one.jitter()));
    CHECK(one.jitter() > 0.0);

    // coincident sites: rank one plus jitter still factorizes
    const auto two = GramMatrix::build({Vec3(1, 1, 0), Vec3(1, 1, 0)}, 1.0);
    CHECK((two.cholesky() * two.cholesky().transpose() - two.matrix()).norm() < 1e-12);

    Engine eng(3);
    const auto sites = random_sites(eng, 30);
    const auto g = GramMatrix::build(sites, 1.3);
    for (std::size_t i = 0; i < sites.size(); ++i)
      for (std::size_t j = 0; j < sites.size(); ++j) {
        const double expected = se_kernel(sites[i], sites[j], 1.3) + (i == j ? g.jitter() : 0.0);
        CHECK(g.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) == doctest::Approx(expected).epsilon(1e-15));
      }
    // scale coordinates and theta together
    std::vector<Vec3> scaled;
    for (const auto& s : sites) scaled.push_back(3.7 * s);
    const auto gs = GramMatrix::build(scaled, 3.7 * 1.3);
    CHECK((gs.matrix() - g.matrix()).cwiseAbs().maxCoeff() < 1e-12);

    Eigen::VectorXd b = Eigen::VectorXd::Random(30);
    CHECK((g.matrix() * g.solve(b) - b).norm() < 1e-6 * b.norm());
    CHECK(g.quad_form(b) == doctest::Approx(b.dot(g.matrix().ldlt().solve(b))).epsilon(1e-6));
    CHECK(g.log_det() == doctest::Approx(std::log(g.matrix().determinant())).epsilon(1e-8));
  }

  TEST_CASE("gram conditioning failure") {
    // duplicated sites make K singular; a tiny jitter cap cannot rescue it
    std::vector<Vec3> dup(5, Vec3(0, 0, 0));
    try {
      GramMatrix::build(dup, 1.0, 1e-20, 1e-19);
      FAIL("expected conditioning error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::conditioning);
    }
  }

  TEST_CASE("latent vector layout") {
    LatentVector u(2, 4);
    CHECK(u.values().size() == 24);
    u.block(3)(2) = 7.0;  // i = 1, d = 0, site 2
    CHECK(u.values()(3 * 4 + 2) == 7.0);
    CHECK(u.at_site(2)(0, 1) == 7.0);
    CHECK_THROWS_AS(LatentVector(2, 4, Eigen::VectorXd::Zero(5)), Error);
  }

  TEST_CASE("construct tensor closed forms") {
    GwpParams p;
    p.nu = 1;
    const double e1[3] = {1, 0, 0};
    CHECK(construct_tensor(std::span<const double>(e1, 3), p) == SymTensor3::diagonal(1, 0, 0));
    p.nu = 3;
    const double id[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    CHECK(construct_tensor(std::span<const double>(id, 9), p) == SymTensor3::identity());
  }

  TEST_CASE("construct tensor is SPD for nu = 5 draws") {
    Engine eng(8);
    const Mat3 l = random_chol(eng);
    for (int k = 0; k < 10000; ++k) {
      Eigen::Matrix<double, 3, 5> u;
      for (int i = 0; i < 15; ++i) u(i) = standard_normal(eng);
      const auto d = construct_tensor(u, l);
      CHECK(eig(d).values[2] > 0.0);
    }
  }

  TEST_CASE("wishart mean of construct tensor") {
    Engine eng(31);
    const Mat3 l = random_chol(eng);
    const int nu = 5;
    const Mat3 expected = nu * l * l.transpose();
    const std::size_t n = 100000;
    std::array<double, 6> sum{}, sum2{};
    for (std::size_t k = 0; k < n; ++k) {
      Eigen::Matrix<double, 3, 5> u;
      for (int i = 0; i < 15; ++i) u(i) = standard_normal(eng);
      const auto c = construct_tensor(u, l).components();
      for (int j = 0; j < 6; ++j) {
        sum[j] += c[j];
        sum2[j] += c[j] * c[j];
      }
    }
    const auto ref = SymTensor3::from_matrix(expected).components();
    for (int j = 0; j < 6; ++j) {
      const double mean = sum[j] / n;
      const double se = std::sqrt((sum2[j] / n - mean * mean) / n);
      CHECK(std::abs(mean - ref[j]) < 3 * se);
    }
  }

  TEST_CASE("log likelihood") {
    Engine eng(4);
    GwpParams p;
    p.nu = 3;
    p.chol_scale = random_chol(eng);
    p.sigma2 = 0.3;
    LatentVector u(3, 4);
    for (Eigen::Index i = 0; i < u.values().size(); ++i) u.values()(i) = standard_normal(eng);
    std::vector<SymTensor3> exact;
    for (std::size_t n = 0; n < 4; ++n) exact.push_back(construct_tensor(u.at_site(n), p.chol_scale));
    CHECK(log_likelihood(exact, u, p) == 0.0);

    std::vector<SymTensor3> data;
    for (int n = 0; n < 4; ++n) data.push_back(test::random_spd(eng));
    const double a = log_likelihood(data, u, p);
    double f2 = 0;
    for (std::size_t n = 0; n < 4; ++n) f2 += std::pow(frob_distance(data[n], exact[n]), 2);
    CHECK(a == doctest::Approx(-f2 / (2 * 0.3)).epsilon(1e-12));
    GwpParams p2 = p;
    p2.sigma2 = 0.6;
    CHECK(log_likelihood(data, u, p2) == doctest::Approx(a / 2).epsilon(1e-14));

    // site permutation
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    LatentVector up(3, 4);
    std::vector<SymTensor3> dp;
    for (std::size_t n = 0; n < 4; ++n) {
      dp.push_back(data[perm[n]]);
      for (std::size_t b = 0; b < 9; ++b) up.block(b)(static_cast<Eigen::Index>(n)) = u.block(b)(static_cast<Eigen::Index>(perm[n]));
    }
    CHECK(log_likelihood(dp, up, p) == doctest::Approx(a).epsilon(1e-13));
  }

  TEST_CASE("params validation") {
    GwpParams p;
    CHECK_NOTHROW(p.validate());
    p.nu = 2;
    CHECK_THROWS_AS(p.validate(), Error);
    p.nu = 5;
    p.chol_scale(1, 1) = -1.0;
    CHECK_THROWS_AS(p.validate(), Error);
    p.chol_scale = Mat3::Identity();
    p.kernel.theta = 0.0;
    CHECK_THROWS_AS(p.validate(), Error);
  }

  TEST_CASE("priors") {
    Hyperpriors hp;
    hp.theta_log_median = std::log(2.0);
    hp.theta_log_sd = 0.5;
    // the quadratic term in log theta peaks at the median and is symmetric about it
    const double at_median = log_prior_theta(2.0, hp) + std::log(2.0);
    CHECK(at_median > log_prior_theta(2.2, hp) + std::log(2.2));
    CHECK(at_median > log_prior_theta(1.8, hp) + std::log(1.8));
    const double up = log_prior_theta(2.0 * std::exp(0.3), hp) + std::log(2.0 * std::exp(0.3));
    const double down = log_prior_theta(2.0 * std::exp(-0.3), hp) + std::log(2.0 * std::exp(-0.3));
    CHECK(up == doctest::Approx(down).epsilon(1e-12));
    try {
      log_prior_theta(0.0, hp);
      FAIL("expected domain error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::domain);
    }

    hp.chol_sd = 0.5;
    CHECK(log_prior_L(hp.chol_mean, hp) > log_prior_L(hp.chol_mean * 1.1, hp));

    // N = 1, K = [1 + jitter]: sum of scalar Gaussian log densities over 15 blocks
    const auto g = GramMatrix::build({Vec3(0, 0, 0)}, 1.0);
    LatentVector u(5, 1, Eigen::VectorXd::Constant(15, 0.3));
    CHECK(log_prior_u(u, g) == doctest::Approx(-14.459077998070091).epsilon(1e-7));
    LatentVector zero(5, 1);
    CHECK(log_prior_u(zero, g) == doctest::Approx(-15 * 0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-7));
  }

  TEST_CASE("hyperpriors from data") {
    std::vector<Vec3> sites{Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 2, 0), Vec3(2, 2, 0)};
    CHECK(mean_nearest_neighbour_distance(sites) == doctest::Approx(2.0));
    std::vector<SymTensor3> data(4, SymTensor3::diagonal(5, 5, 5));
    const auto hp = Hyperpriors::from_data(data, sites, 5);
    CHECK(std::exp(hp.theta_log_median) == doctest::Approx(4.0));
    CHECK(hp.theta_log_sd == 1.0);
    CHECK(hp.chol_mean.isApprox(Mat3::Identity()));
    CHECK(hp.chol_sd == doctest::Approx(0.5 * std::sqrt(3.0)));
  }
}
