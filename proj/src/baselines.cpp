#include "gwpdti/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gwpdti/errors.hpp"

namespace gwpdti {

namespace {

struct AxisWeights {
  std::size_t lo = 0, hi = 0;
  double t = 0.0;  // weight of hi
};

AxisWeights axis_weights(double coord, double spacing, std::size_t n, HullPolicy policy, int axis) {
  constexpr double tol = 1e-9;
  double f = coord / spacing;
  const double last = static_cast<double>(n - 1);
  if (f < -tol || f > last + tol) {
    const bool fringe = f >= -1.0 - tol && f <= last + 1.0 + tol;
    if (policy != HullPolicy::clamp_fringe || !fringe) {
      std::ostringstream msg;
      msg << "target coordinate " << coord << " on axis " << axis << " lies outside the source grid";
      fail(ErrorKind::domain, msg.str());
    }
  }
  f = std::clamp(f, 0.0, last);
  if (n == 1) return {0, 0, 0.0};
  auto lo = static_cast<std::size_t>(std::floor(f));
  if (lo >= n - 1) lo = n - 2;
  return {lo, lo + 1, f - static_cast<double>(lo)};
}

template <typename Field>
std::vector<SymTensor3> multilinear(const TensorGrid& grid, const Field& values, const InterpolationRequest& req) {
  const auto& d = grid.dims();
  const auto& sp = grid.spacing();
  std::vector<SymTensor3> out;
  out.reserve(req.targets.size());
  for (const auto& target : req.targets) {
    std::array<AxisWeights, 3> w;
    for (int a = 0; a < 3; ++a) w[a] = axis_weights(target[a], sp[a], d[a], req.policy, a);
    SymTensor3 acc;
    for (int corner = 0; corner < 8; ++corner) {
      double weight = 1.0;
      SiteIndex s;
      std::size_t* idx[3] = {&s.x, &s.y, &s.z};
      for (int a = 0; a < 3; ++a) {
        const bool upper = (corner >> a) & 1;
        weight *= upper ? w[a].t : 1.0 - w[a].t;
        *idx[a] = upper ? w[a].hi : w[a].lo;
      }
      if (weight == 0.0) continue;
      const std::size_t flat = grid.flat_index(s);
      if (!grid.valid(flat)) {
        fail(ErrorKind::domain, "interpolation stencil touches masked voxel " + std::to_string(flat));
      }
      acc += values[flat] * weight;
    }
    out.push_back(acc);
  }
  return out;
}

const TensorGrid& source_of(const InterpolationRequest& req) {
  if (!req.source) fail(ErrorKind::usage, "interpolation request without source grid");
  return *req.source;
}

}  // namespace

std::vector<SymTensor3> linear_interpolate(const InterpolationRequest& req) {
  const auto& grid = source_of(req);
  return multilinear(grid, grid.tensors(), req);
}

std::vector<SymTensor3> logeuclid_interpolate(const InterpolationRequest& req) {
  const auto& grid = source_of(req);
  std::vector<SymTensor3> logs;
  logs.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!grid.valid(i)) {
      logs.emplace_back();
      continue;
    }
    try {
      logs.push_back(matrix_log(SpdTensor3(grid.at(i))));
    } catch (const Error& e) {
      const auto s = grid.site_index(i);
      std::ostringstream msg;
      msg << "source voxel (" << s.x << "," << s.y << "," << s.z << ") is not SPD: " << e.what();
      fail(ErrorKind::domain, msg.str());
    }
  }
  auto out = multilinear(grid, logs, req);
  for (auto& t : out) t = matrix_exp(t).sym();
  return out;
}

}  // namespace gwpdti
