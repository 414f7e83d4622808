#pragma once

// Small-matrix numerics for 3x3 symmetric tensors.

#include <array>

#include <Eigen/Dense>

namespace gwpdti {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

/// Symmetric 3x3 tensor stored as its six unique components
/// (xx, yy, zz, xy, xz, yz). Components must be finite.
class SymTensor3 {
 public:
  SymTensor3() = default;
  SymTensor3(double xx, double yy, double zz, double xy, double xz, double yz);
  explicit SymTensor3(const std::array<double, 6>& c);

  /// Builds from a full matrix; the matrix is symmetrized as (M + M^T)/2.
  static SymTensor3 from_matrix(const Mat3& m);
  static SymTensor3 diagonal(double a, double b, double c);
  static SymTensor3 identity() { return diagonal(1.0, 1.0, 1.0); }

  double xx() const { return c_[0]; }
  double yy() const { return c_[1]; }
  double zz() const { return c_[2]; }
  double xy() const { return c_[3]; }
  double xz() const { return c_[4]; }
  double yz() const { return c_[5]; }

  const std::array<double, 6>& components() const { return c_; }
  double operator[](std::size_t i) const { return c_[i]; }

  Mat3 matrix() const;
  double trace() const { return c_[0] + c_[1] + c_[2]; }
  double determinant() const;
  /// Squared Frobenius norm over all nine entries.
  double frob_norm2() const;

  SymTensor3& operator+=(const SymTensor3& o);
  SymTensor3& operator-=(const SymTensor3& o);
  SymTensor3& operator*=(double s);

  friend SymTensor3 operator+(SymTensor3 a, const SymTensor3& b) { return a += b; }
  friend SymTensor3 operator-(SymTensor3 a, const SymTensor3& b) { return a -= b; }
  friend SymTensor3 operator*(SymTensor3 a, double s) { return a *= s; }
  friend SymTensor3 operator*(double s, SymTensor3 a) { return a *= s; }
  friend bool operator==(const SymTensor3&, const SymTensor3&) = default;

 private:
  std::array<double, 6> c_{};
};

struct EigenDecomp3 {
  Vec3 values;   // descending
  Mat3 vectors;  // orthonormal columns, largest-magnitude entry positive
};

/// Eigendecomposition by cyclic Jacobi rotations. Throws invalid_input on
/// non-finite components.
EigenDecomp3 eig(const SymTensor3& t);

/// SPD acceptance rule: min eigenvalue > 1e-12 * max(1, max eigenvalue).
bool is_spd(const SymTensor3& t);
bool is_spd(const EigenDecomp3& e);

/// A SymTensor3 whose smallest eigenvalue passed the SPD rule at
/// construction.
class SpdTensor3 {
 public:
  /// Throws ErrorKind::domain if `t` is not SPD.
  explicit SpdTensor3(const SymTensor3& t);

  const SymTensor3& sym() const { return t_; }
  operator const SymTensor3&() const { return t_; }
  Mat3 matrix() const { return t_.matrix(); }

 private:
  SymTensor3 t_;
};

/// f(D) = Q f(Lambda) Q^T.
template <typename F>
SymTensor3 apply_spectral(const EigenDecomp3& e, F&& f) {
  Vec3 fl;
  for (int i = 0; i < 3; ++i) fl[i] = f(e.values[i]);
  return SymTensor3::from_matrix(e.vectors * fl.asDiagonal() * e.vectors.transpose());
}

SymTensor3 matrix_log(const SpdTensor3& t);
SpdTensor3 matrix_exp(const SymTensor3& t);
SpdTensor3 matrix_sqrt(const SpdTensor3& t);
SpdTensor3 matrix_inv_sqrt(const SpdTensor3& t);

double frob_distance(const SymTensor3& a, const SymTensor3& b);

/// Affine-invariant distance || log(a^{-1/2} b a^{-1/2}) ||_F.
double riem_distance(const SpdTensor3& a, const SpdTensor3& b);

/// sqrt(3/2) * |lambda - mean| / |lambda|.
double fractional_anisotropy(const SpdTensor3& t);

struct Glyph {
  Vec3 center = Vec3::Zero();  // mm
  Vec3 radii = Vec3::Zero();   // r1 >= r2 >= r3 > 0
  Mat3 axes = Mat3::Identity();
};

/// Level set r^T D^{-1} r = c: semi-axes sqrt(c * lambda_i) along the
/// eigenvectors.
Glyph ellipsoid_glyph(const SpdTensor3& t, double c, const Vec3& center = Vec3::Zero());

}  // namespace gwpdti
