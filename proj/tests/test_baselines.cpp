#include <doctest.h>

#include <cmath>

#include "gwpdti/baselines.hpp"
#include "gwpdti/errors.hpp"
#include "test_util.hpp"

using namespace gwpdti;

namespace {

TensorGrid edge(const SymTensor3& a, const SymTensor3& b) { return TensorGrid({2, 1, 1}, {1, 1, 1}, {a, b}); }

TensorGrid random_field(Dims d, std::uint64_t seed) {
  Engine eng(seed);
  std::vector<SymTensor3> ts;
  for (std::size_t i = 0; i < d[0] * d[1] * d[2]; ++i) ts.push_back(test::random_spd(eng, 1e-4, 3e-3));
  return TensorGrid(d, {1, 1, 1}, std::move(ts));
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("swelling contrast at the edge midpoint") {
    const auto d1 = SymTensor3::diagonal(1, 0.1, 0.1);
    const auto d2 = SymTensor3::diagonal(0.1, 1, 0.1);
    const auto g = edge(d1, d2);
    InterpolationRequest req{&g, {Vec3(0.5, 0, 0)}};
    const auto lin = linear_interpolate(req)[0];
    CHECK(lin == SymTensor3::diagonal(0.55, 0.55, 0.1));
    CHECK(lin.determinant() == doctest::Approx(0.03025).epsilon(1e-12));
    CHECK(lin.determinant() > d1.determinant());
    CHECK(lin.determinant() > d2.determinant());
    const auto le = logeuclid_interpolate(req)[0];
    CHECK(std::abs(le.determinant() - std::sqrt(d1.determinant() * d2.determinant())) < 1e-9);
    CHECK(std::abs(le.determinant() - 0.01) < 1e-9);
  }

  TEST_CASE("geometric mean of commuting tensors") {
    const auto g = edge(SymTensor3::diagonal(1, 4, 9), SymTensor3::diagonal(4, 1, 1));
    const auto m = logeuclid_interpolate({&g, {Vec3(0.5, 0, 0)}})[0];
    CHECK(frob_distance(m, SymTensor3::diagonal(2, 2, 3)) < 1e-12);
  }

  TEST_CASE("both baselines reproduce nodes") {
    const auto g = random_field({4, 3, 2}, 7);
    std::vector<Vec3> nodes;
    for (std::size_t i = 0; i < g.size(); ++i) nodes.push_back(site_coordinates(g, i));
    const auto lin = linear_interpolate({&g, nodes});
    const auto le = logeuclid_interpolate({&g, nodes});
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(lin[i] == g.at(i));
      CHECK(test::rel_frob(le[i], g.at(i)) < 1e-10);
    }
  }

  TEST_CASE("log-euclidean edge midpoints do not swell") {
    Engine eng(12);
    for (int k = 0; k < 200; ++k) {
      const auto a = test::random_spd(eng), b = test::random_spd(eng);
      const auto g = edge(a, b);
      const auto m = logeuclid_interpolate({&g, {Vec3(0.5, 0, 0)}})[0];
      CHECK(is_spd(m));
      CHECK(std::abs(std::log(m.determinant()) - 0.5 * (std::log(a.determinant()) + std::log(b.determinant()))) < 1e-9);
    }
  }

  TEST_CASE("bilinear and trilinear weights") {
    const auto g = random_field({3, 3, 3}, 2);
    const Vec3 t(0.25, 1.5, 0.75);
    SymTensor3 ref;
    for (int cz = 0; cz < 2; ++cz)
      for (int cy = 0; cy < 2; ++cy)
        for (int cx = 0; cx < 2; ++cx) {
          const double w = (cx ? 0.25 : 0.75) * (cy ? 0.5 : 0.5) * (cz ? 0.75 : 0.25);
          ref += g.at(SiteIndex{static_cast<std::size_t>(cx), static_cast<std::size_t>(1 + cy), static_cast<std::size_t>(cz)}) * w;
        }
    CHECK(test::rel_frob(linear_interpolate({&g, {t}})[0], ref) < 1e-14);
    // log-Euclidean outputs are SPD everywhere in the hull
    Engine eng(3);
    std::vector<Vec3> targets;
    for (int k = 0; k < 500; ++k) targets.emplace_back(2 * uniform01(eng), 2 * uniform01(eng), 2 * uniform01(eng));
    for (const auto& m : logeuclid_interpolate({&g, targets})) CHECK(is_spd(m));
  }

  TEST_CASE("hull policy") {
    const auto g = random_field({3, 3, 1}, 4);
    try {
      linear_interpolate({&g, {Vec3(2.5, 1, 0)}});
      FAIL("expected domain error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::domain);
    }
    // fringe clamping: one source spacing beyond the last node uses the edge value
    const auto c = linear_interpolate({&g, {Vec3(2.5, 1, 0)}, HullPolicy::clamp_fringe})[0];
    CHECK(c == g.at(SiteIndex{2, 1, 0}));
    CHECK_THROWS_AS(linear_interpolate({&g, {Vec3(3.5, 1, 0)}, HullPolicy::clamp_fringe}), Error);
  }

  TEST_CASE("non-SPD source voxel is named") {
    auto ts = random_field({2, 2, 1}, 5).tensors();
    ts[3] = SymTensor3::diagonal(1e-3, -1e-4, 1e-3);
    const TensorGrid g({2, 2, 1}, {1, 1, 1}, ts);
    try {
      logeuclid_interpolate({&g, {Vec3(0.5, 0.5, 0)}});
      FAIL("expected domain error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::domain);
      CHECK(std::string(e.what()).find("(1,1,0)") != std::string::npos);
    }
    // linear interpolation carries on and may return non-SPD output
    const auto lin = linear_interpolate({&g, {Vec3(1, 1, 0)}});
    CHECK_FALSE(is_spd(lin[0]));
  }
}
