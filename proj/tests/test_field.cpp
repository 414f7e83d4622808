#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "gwpdti/errors.hpp"
#include "gwpdti/field.hpp"
#include "test_util.hpp"

using namespace gwpdti;

namespace {

TensorGrid random_grid(Dims d, Spacing sp, std::uint64_t seed) {
  Engine eng(seed);
  std::vector<SymTensor3> ts;
  for (std::size_t i = 0; i < d[0] * d[1] * d[2]; ++i) ts.push_back(test::random_spd(eng, 1e-4, 3e-3));
  return TensorGrid(d, sp, std::move(ts));
}

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::io;
}

}  // namespace

TEST_SUITE("tensor-field") {
  TEST_CASE("site coordinates") {
    const auto g = random_grid({3, 4, 2}, {0.5, 0.5, 2.0}, 1);
    CHECK(site_coordinates(g, SiteIndex{0, 0, 0}) == Vec3(0, 0, 0));
    CHECK(site_coordinates(g, SiteIndex{1, 1, 1}) == Vec3(0.5, 0.5, 2.0));
    const auto h = random_grid({4, 4, 1}, {1, 1, 1}, 2);
    CHECK(site_coordinates(h, SiteIndex{2, 3, 0}) == Vec3(2, 3, 0));
    CHECK_THROWS_AS(site_coordinates(h, SiteIndex{4, 0, 0}), Error);
    // x varies fastest
    CHECK(g.flat_index({1, 0, 0}) == 1);
    CHECK(g.flat_index({0, 1, 0}) == 3);
    CHECK(g.flat_index({0, 0, 1}) == 12);
    CHECK(g.site_index(17) == SiteIndex{2, 1, 1});
  }

  TEST_CASE("grid invariants") {
    CHECK(kind_of([] { TensorGrid({2, 2, 1}, {1, 1, 1}, std::vector<SymTensor3>(3)); }) == ErrorKind::validation);
    CHECK(kind_of([] { TensorGrid({0, 2, 1}, {1, 1, 1}, {}); }) == ErrorKind::validation);
    CHECK(kind_of([] { TensorGrid({1, 1, 1}, {0, 1, 1}, std::vector<SymTensor3>(1)); }) == ErrorKind::validation);
    CHECK(kind_of([] {
            TensorGrid({2, 1, 1}, {1, 1, 1}, std::vector<SymTensor3>(2), std::vector<bool>{true});
          }) == ErrorKind::validation);
  }

  TEST_CASE("downsample counts") {
    for (auto [n, kept, held] : {std::tuple<std::size_t, std::size_t, std::size_t>{37, 361, 1008},
                                 {31, 256, 705},
                                 {15, 64, 161},
                                 {2, 1, 3}}) {
      const auto ds = downsample_by_two(random_grid({n, n, 1}, {1, 1, 1}, n));
      CHECK(ds.split.kept.size() == kept);
      CHECK(ds.split.held_out.size() == held);
      CHECK(ds.low_res.dims() == Dims{(n + 1) / 2, (n + 1) / 2, 1});
    }
    CHECK(kind_of([] { downsample_by_two(random_grid({1, 1, 1}, {1, 1, 1}, 3)); }) == ErrorKind::validation);
  }

  TEST_CASE("downsample partitions sites and preserves values and coordinates") {
    for (Dims d : {Dims{7, 6, 1}, Dims{5, 4, 3}, Dims{8, 8, 1}}) {
      const auto g = random_grid(d, {0.7, 1.1, 1.3}, 5);
      const auto ds = downsample_by_two(g);
      std::set<std::size_t> all(ds.split.kept.begin(), ds.split.kept.end());
      for (auto i : ds.split.held_out) CHECK(all.insert(i).second);
      CHECK(all.size() == g.size());
      REQUIRE(ds.split.kept.size() == ds.low_res.size());
      for (std::size_t k = 0; k < ds.split.kept.size(); ++k) {
        const auto full = ds.split.kept[k];
        CHECK(ds.low_res.at(k) == g.at(full));
        CHECK((site_coordinates(ds.low_res, k) - site_coordinates(g, full)).norm() < 1e-12);
        const auto s = g.site_index(full);
        CHECK(s.x % 2 == 0);
        CHECK(s.y % 2 == 0);
        CHECK(s.z % 2 == 0);
      }
    }
  }

  TEST_CASE("masked sites are neither kept nor held out") {
    auto base = random_grid({4, 3, 1}, {1, 1, 1}, 8);
    std::vector<bool> mask(12, true);
    mask[0] = false;
    mask[5] = false;
    const TensorGrid g(base.dims(), base.spacing(), base.tensors(), mask);
    const auto ds = downsample_by_two(g);
    CHECK(ds.split.kept.size() + ds.split.held_out.size() == 10);
    CHECK(std::find(ds.split.kept.begin(), ds.split.kept.end(), 0u) == ds.split.kept.end());
    CHECK(std::find(ds.split.held_out.begin(), ds.split.held_out.end(), 5u) == ds.split.held_out.end());
    CHECK_FALSE(ds.low_res.valid(0));
  }

  TEST_CASE("field file round trip") {
    const auto g = random_grid({4, 4, 1}, {1, 1, 1}, 12);
    const auto text = format_field(g);
    const auto back = parse_field(text);
    CHECK(back.dims() == g.dims());
    CHECK(back.spacing() == g.spacing());
    CHECK(back.tensors() == g.tensors());
    CHECK(format_field(back) == text);
    CHECK(text.find("\"units\": \"mm^2/s\"") != std::string::npos);

    const auto dir = std::filesystem::temp_directory_path() / "gwpdti_field_test";
    write_field(g, dir / "f.json");
    CHECK(read_field(dir / "f.json").tensors() == g.tensors());
    std::filesystem::remove_all(dir);

    std::vector<bool> mask(16, true);
    mask[3] = false;
    const TensorGrid m(g.dims(), g.spacing(), g.tensors(), mask);
    CHECK(parse_field(format_field(m)).mask() == m.mask());
  }

  TEST_CASE("field file errors") {
    CHECK(kind_of([] { parse_field("{not json"); }) == ErrorKind::parse);
    CHECK(kind_of([] {
            parse_field(R"({"version":1,"dims":[2,1,1],"spacing":[1,1,1],"order":"row-major-x-fastest",)"
                        R"("tensors":[[1,1,1,0,0,0]]})");
          }) == ErrorKind::validation);
    CHECK(kind_of([] {
            parse_field(R"({"version":1,"dims":[0,1,1],"spacing":[1,1,1],"order":"row-major-x-fastest",)"
                        R"("tensors":[]})");
          }) == ErrorKind::validation);
    CHECK(kind_of([] {
            parse_field(R"({"version":2,"dims":[1,1,1],"spacing":[1,1,1],"tensors":[[1,1,1,0,0,0]]})");
          }) == ErrorKind::parse);
    CHECK(kind_of([] {
            parse_field(R"({"version":1,"dims":[1,1,1],"spacing":[1,1,1],"tensors":[[1,1,1,0,0]]})");
          }) == ErrorKind::parse);
    CHECK(kind_of([] { read_field("/nonexistent/field.json"); }) == ErrorKind::io);
    try {
      parse_field("{\n\"version\": 1,\n\"dims\": [1,1,1],\n oops }");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
  }

  TEST_CASE("split file round trip") {
    const auto ds = downsample_by_two(random_grid({5, 5, 1}, {1, 1, 1}, 2));
    const auto back = parse_split(format_split(ds.split));
    CHECK(back.full_dims == ds.split.full_dims);
    CHECK(back.kept == ds.split.kept);
    CHECK(back.held_out == ds.split.held_out);
  }

  TEST_CASE("shortest round-trip doubles") {
    Engine eng(4);
    for (int k = 0; k < 1000; ++k) {
      const double v = standard_normal(eng) * std::pow(10.0, static_cast<int>(uniform01(eng) * 20) - 10);
      CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(0.1) == "0.1");
  }
}
