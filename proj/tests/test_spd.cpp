#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gwpdti/errors.hpp"
#include "gwpdti/spd.hpp"
#include "test_util.hpp"

using namespace gwpdti;
using test::random_spd;

TEST_SUITE("spd-core") {
  TEST_CASE("symmetric tensor basics") {
    const auto t = SymTensor3(1, 2, 3, 0.1, 0.2, 0.3);
    const Mat3 m = t.matrix();
    CHECK(m(0, 1) == 0.1);
    CHECK(m(1, 0) == 0.1);
    CHECK(m(2, 0) == 0.2);
    CHECK(m(2, 1) == 0.3);
    CHECK(t.trace() == 6.0);
    CHECK(t.determinant() == doctest::Approx(m.determinant()).epsilon(1e-14));
    CHECK(SymTensor3::from_matrix(m) == t);
    CHECK_THROWS_AS(SymTensor3(NAN, 0, 0, 0, 0, 0), Error);
  }

  TEST_CASE("eigendecomposition reconstructs and orders") {
    Engine eng(11);
    for (int k = 0; k < 200; ++k) {
      const auto t = random_spd(eng, 1e-4, 10.0);
      const auto e = eig(t);
      CHECK(e.values[0] >= e.values[1]);
      CHECK(e.values[1] >= e.values[2]);
      const Mat3 r = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
      CHECK((r - t.matrix()).norm() <= 1e-12 * t.matrix().norm());
      CHECK((e.vectors.transpose() * e.vectors - Mat3::Identity()).norm() < 1e-12);
      for (int c = 0; c < 3; ++c) {
        Eigen::Index i;
        e.vectors.col(c).cwiseAbs().maxCoeff(&i);
        CHECK(e.vectors(i, c) > 0.0);
      }
    }
  }

  TEST_CASE("eigenvector sign convention is deterministic under negation of input vectors") {
    const auto a = eig(SymTensor3::diagonal(3, 2, 1));
    CHECK(a.vectors.isApprox(Mat3::Identity()));
    const auto b = eig(SymTensor3(1, 1, 1, 0.5, 0, 0));
    CHECK(b.vectors.col(0).cwiseAbs().maxCoeff() == doctest::Approx(std::sqrt(0.5)));
    CHECK(b.vectors(0, 0) > 0);
  }

  TEST_CASE("spd check tolerance is relative") {
    // accepted iff min eigenvalue > 1e-12 * max(1, max eigenvalue)
    CHECK(is_spd(SymTensor3::diagonal(1e-3, 1e-3, 2e-12)) == true);
    CHECK(is_spd(SymTensor3::diagonal(1e-3, 1e-3, 5e-13)) == false);
    CHECK(is_spd(SymTensor3::diagonal(1e6, 1, 2e-6)) == true);
    CHECK(is_spd(SymTensor3::diagonal(1e6, 1, 5e-7)) == false);
    CHECK(is_spd(SymTensor3::diagonal(1, 1, 1e-13)) == false);
    CHECK(is_spd(SymTensor3::diagonal(1, 1, 0)) == false);
    CHECK(is_spd(SymTensor3::diagonal(1, 1, -1)) == false);
    CHECK_THROWS_AS(SpdTensor3(SymTensor3::diagonal(1, 0, 1)), Error);
    try {
      SpdTensor3 s(SymTensor3::diagonal(1, -1, 1));
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::domain);
    }
  }

  TEST_CASE("matrix log and exp") {
    CHECK(matrix_log(SpdTensor3(SymTensor3::identity())).frob_norm2() < 1e-30);
    const double e = std::numbers::e;
    const auto l = matrix_log(SpdTensor3(SymTensor3::diagonal(e * e, e, 1)));
    CHECK(frob_distance(l, SymTensor3::diagonal(2, 1, 0)) < 1e-14);
    CHECK_THROWS_AS(matrix_log(SpdTensor3(SymTensor3::diagonal(1, 1, 1e-20))), Error);

    Engine eng(3);
    for (int k = 0; k < 500; ++k) {
      const auto t = random_spd(eng, 1e-4, 5e-3);
      const auto back = matrix_exp(matrix_log(SpdTensor3(t)));
      CHECK(test::rel_frob(back.sym(), t) < 1e-9);
    }
    // exp of a symmetric matrix is SPD while its eigenvalue spread stays inside the relative tolerance
    for (int k = 0; k < 200; ++k) {
      SymTensor3 s(standard_normal(eng) * 2, standard_normal(eng) * 2, standard_normal(eng) * 2,
                   standard_normal(eng) * 2, standard_normal(eng) * 2, standard_normal(eng) * 2);
      CHECK(is_spd(matrix_exp(s).sym()));
    }
  }

  TEST_CASE("sqrt and inverse sqrt") {
    Engine eng(5);
    for (int k = 0; k < 100; ++k) {
      const SpdTensor3 t(random_spd(eng));
      const Mat3 r = matrix_sqrt(t).matrix();
      CHECK((r * r - t.matrix()).norm() < 1e-12 * t.matrix().norm());
      const Mat3 ir = matrix_inv_sqrt(t).matrix();
      CHECK((ir * t.matrix() * ir - Mat3::Identity()).norm() < 1e-11);
    }
  }

  TEST_CASE("frobenius distance") {
    const auto t = SymTensor3(1, 2, 3, 0.4, 0.5, 0.6);
    CHECK(frob_distance(t, t) == 0.0);
    CHECK(frob_distance(SymTensor3::diagonal(2, 1, 1), SymTensor3::identity()) == doctest::Approx(1.0));
    Engine eng(9);
    for (int k = 0; k < 100; ++k) {
      const auto a = random_spd(eng), b = random_spd(eng);
      // element-wise oracle over all nine entries
      double s = 0;
      const Mat3 d = a.matrix() - b.matrix();
      for (int i = 0; i < 9; ++i) s += d(i) * d(i);
      CHECK(frob_distance(a, b) == doctest::Approx(std::sqrt(s)).epsilon(1e-13));
      CHECK(frob_distance(a, b) == frob_distance(b, a));
      CHECK(frob_distance(a, b) > 0.0);
    }
  }

  TEST_CASE("riemannian distance") {
    const SpdTensor3 i(SymTensor3::identity());
    CHECK(riem_distance(i, i) == doctest::Approx(0.0));
    CHECK(riem_distance(i, SpdTensor3(SymTensor3::diagonal(std::numbers::e, 1, 1))) == doctest::Approx(1.0));
    Engine eng(17);
    for (int k = 0; k < 200; ++k) {
      const SpdTensor3 a(random_spd(eng)), b(random_spd(eng));
      const double d = riem_distance(a, b);
      CHECK(d > 0.0);
      CHECK(riem_distance(a, a) < 1e-12);
      CHECK(d == doctest::Approx(riem_distance(b, a)).epsilon(1e-10));
      // congruence invariance
      Mat3 w;
      for (int j = 0; j < 9; ++j) w(j) = standard_normal(eng);
      if (std::abs(w.determinant()) < 0.1) continue;
      const SpdTensor3 wa(SymTensor3::from_matrix(w * a.matrix() * w.transpose()));
      const SpdTensor3 wb(SymTensor3::from_matrix(w * b.matrix() * w.transpose()));
      CHECK(std::abs(riem_distance(wa, wb) - d) < 1e-8);
    }
  }

  TEST_CASE("fractional anisotropy") {
    CHECK(fractional_anisotropy(SpdTensor3(SymTensor3::diagonal(0.7, 0.7, 0.7))) == doctest::Approx(0.0));
    CHECK(fractional_anisotropy(SpdTensor3(SymTensor3::diagonal(2, 1, 1))) ==
          doctest::Approx(0.408248290463863).epsilon(1e-12));
    CHECK(std::abs(fractional_anisotropy(SpdTensor3(SymTensor3::diagonal(1, 1e-9, 1e-9))) - 1.0) < 1e-6);
    Engine eng(1);
    for (int k = 0; k < 100; ++k) {
      const double fa = fractional_anisotropy(SpdTensor3(random_spd(eng, 1e-6, 1.0)));
      CHECK(fa >= 0.0);
      CHECK(fa <= 1.0);
    }
  }

  TEST_CASE("ellipsoid glyph") {
    const auto g = ellipsoid_glyph(SpdTensor3(SymTensor3::identity()), 1.0);
    CHECK(g.radii.isApprox(Vec3(1, 1, 1)));
    const auto h = ellipsoid_glyph(SpdTensor3(SymTensor3::diagonal(4, 1, 1)), 1.0);
    CHECK(h.radii[0] == doctest::Approx(2.0));
    CHECK(h.radii[1] == doctest::Approx(1.0));
    CHECK(std::abs(h.axes.col(0).dot(Vec3::UnitX())) == doctest::Approx(1.0));
    CHECK_THROWS_AS(ellipsoid_glyph(SpdTensor3(SymTensor3::diagonal(1, 1, 1)), 0.0), Error);

    Engine eng(23);
    for (int k = 0; k < 100; ++k) {
      const SpdTensor3 t(random_spd(eng));
      const double c = 0.1 + uniform01(eng);
      const auto gl = ellipsoid_glyph(t, c);
      CHECK(gl.radii[0] >= gl.radii[1]);
      CHECK(gl.radii[1] >= gl.radii[2]);
      CHECK(gl.radii[2] > 0.0);
      const Mat3 inv = t.matrix().inverse();
      for (int a = 0; a < 3; ++a) {
        const Vec3 r = gl.radii[a] * gl.axes.col(a);
        CHECK(std::abs(r.dot(inv * r) - c) < 1e-9);
      }
    }
  }
}
