#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gwpdti/rng.hpp"
#include "gwpdti/spd.hpp"

namespace gwpdti::test {

inline Mat3 random_rotation(Engine& eng) {
  Mat3 g;
  for (int i = 0; i < 9; ++i) g(i) = standard_normal(eng);
  Eigen::HouseholderQR<Mat3> qr(g);
  Mat3 q = qr.householderQ();
  if (q.determinant() < 0) q.col(0) *= -1.0;
  return q;
}

/// Eigenvalues log-uniform in [lo, hi], random orientation.
inline SymTensor3 random_spd(Engine& eng, double lo = 0.1, double hi = 3.0) {
  const Mat3 q = random_rotation(eng);
  Vec3 l;
  for (int i = 0; i < 3; ++i) l[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * uniform01(eng));
  return SymTensor3::from_matrix(q * l.asDiagonal() * q.transpose());
}

inline double rel_frob(const SymTensor3& a, const SymTensor3& b) {
  return frob_distance(a, b) / std::sqrt(b.frob_norm2());
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

/// Mean and batch-means standard error of a correlated series.
inline MeanSe batch_means(const std::vector<double>& x, std::size_t batches = 50) {
  const std::size_t len = x.size() / batches;
  std::vector<double> m(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < len; ++i) m[b] += x[b * len + i];
    m[b] /= static_cast<double>(len);
  }
  double mean = 0.0;
  for (double v : m) mean += v;
  mean /= static_cast<double>(batches);
  double var = 0.0;
  for (double v : m) var += (v - mean) * (v - mean);
  var /= static_cast<double>(batches - 1);
  return {mean, std::sqrt(var / static_cast<double>(batches))};
}

inline double z_score(const MeanSe& m, double expected) { return (m.mean - expected) / m.se; }

}  // namespace gwpdti::test
