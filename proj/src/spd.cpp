#include "gwpdti/spd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gwpdti/errors.hpp"

namespace gwpdti {

namespace {

void require_finite(const std::array<double, 6>& c) {
  for (double v : c) {
    if (!std::isfinite(v)) fail(ErrorKind::invalid_input, "tensor component is not finite");
  }
}

}  // namespace

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid input";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::estimation: return "estimation error";
    case ErrorKind::conditioning: return "conditioning error";
    case ErrorKind::numerical: return "numerical error";
    case ErrorKind::provenance: return "provenance error";
    case ErrorKind::usage: return "usage error";
    case ErrorKind::io: return "i/o error";
  }
  return "error";
}

SymTensor3::SymTensor3(double xx, double yy, double zz, double xy, double xz, double yz)
    : c_{xx, yy, zz, xy, xz, yz} {
  require_finite(c_);
}

SymTensor3::SymTensor3(const std::array<double, 6>& c) : c_(c) { require_finite(c_); }

SymTensor3 SymTensor3::from_matrix(const Mat3& m) {
  return {m(0, 0), m(1, 1), m(2, 2), 0.5 * (m(0, 1) + m(1, 0)), 0.5 * (m(0, 2) + m(2, 0)),
          0.5 * (m(1, 2) + m(2, 1))};
}

SymTensor3 SymTensor3::diagonal(double a, double b, double c) { return {a, b, c, 0.0, 0.0, 0.0}; }

Mat3 SymTensor3::matrix() const {
  Mat3 m;
  m << c_[0], c_[3], c_[4],
       c_[3], c_[1], c_[5],
       c_[4], c_[5], c_[2];
  return m;
}

double SymTensor3::determinant() const {
  return c_[0] * (c_[1] * c_[2] - c_[5] * c_[5]) - c_[3] * (c_[3] * c_[2] - c_[5] * c_[4]) +
         c_[4] * (c_[3] * c_[5] - c_[1] * c_[4]);
}

double SymTensor3::frob_norm2() const {
  return c_[0] * c_[0] + c_[1] * c_[1] + c_[2] * c_[2] +
         2.0 * (c_[3] * c_[3] + c_[4] * c_[4] + c_[5] * c_[5]);
}

SymTensor3& SymTensor3::operator+=(const SymTensor3& o) {
  for (std::size_t i = 0; i < 6; ++i) c_[i] += o.c_[i];
  return *this;
}

SymTensor3& SymTensor3::operator-=(const SymTensor3& o) {
  for (std::size_t i = 0; i < 6; ++i) c_[i] -= o.c_[i];
  return *this;
}

SymTensor3& SymTensor3::operator*=(double s) {
  for (auto& v : c_) v *= s;
  return *this;
}

EigenDecomp3 eig(const SymTensor3& t) {
  require_finite(t.components());
  Mat3 a = t.matrix();
  Mat3 v = Mat3::Identity();

  const double scale = a.cwiseAbs().maxCoeff();
  if (scale > 0.0) {
    // Cyclic Jacobi; converges quadratically, a handful of sweeps suffice.
    for (int sweep = 0; sweep < 50; ++sweep) {
      const double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
      if (off <= 1e-36 * scale * scale) break;
      for (int p = 0; p < 2; ++p) {
        for (int q = p + 1; q < 3; ++q) {
          const double apq = a(p, q);
          if (apq == 0.0) continue;
          const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
          const double tn = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
          const double c = 1.0 / std::sqrt(1.0 + tn * tn);
          const double s = tn * c;
          Mat3 rot = Mat3::Identity();
          rot(p, p) = c;
          rot(q, q) = c;
          rot(p, q) = s;
          rot(q, p) = -s;
          a = rot.transpose() * a * rot;
          v = v * rot;
          a(p, q) = a(q, p) = 0.0;
        }
      }
    }
  }

  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });

  EigenDecomp3 out;
  for (int k = 0; k < 3; ++k) {
    out.values[k] = a(order[k], order[k]);
    Vec3 col = v.col(order[k]);
    Eigen::Index imax = 0;
    col.cwiseAbs().maxCoeff(&imax);
    if (col[imax] < 0.0) col = -col;
    out.vectors.col(k) = col;
  }
  return out;
}

bool is_spd(const EigenDecomp3& e) {
  return e.values[2] > 1e-12 * std::max(1.0, e.values[0]);
}

bool is_spd(const SymTensor3& t) { return is_spd(eig(t)); }

SpdTensor3::SpdTensor3(const SymTensor3& t) : t_(t) {
  const auto e = eig(t);
  if (!is_spd(e)) {
    std::ostringstream msg;
    msg << "tensor is not positive definite (eigenvalues " << e.values[0] << ", "
        << e.values[1] << ", " << e.values[2] << ")";
    fail(ErrorKind::domain, msg.str());
  }
}

SymTensor3 matrix_log(const SpdTensor3& t) {
  return apply_spectral(eig(t.sym()), [](double x) { return std::log(x); });
}

SpdTensor3 matrix_exp(const SymTensor3& t) {
  return SpdTensor3(apply_spectral(eig(t), [](double x) { return std::exp(x); }));
}

SpdTensor3 matrix_sqrt(const SpdTensor3& t) {
  return SpdTensor3(apply_spectral(eig(t.sym()), [](double x) { return std::sqrt(x); }));
}

SpdTensor3 matrix_inv_sqrt(const SpdTensor3& t) {
  return SpdTensor3(apply_spectral(eig(t.sym()), [](double x) { return 1.0 / std::sqrt(x); }));
}

double frob_distance(const SymTensor3& a, const SymTensor3& b) {
  return std::sqrt((a - b).frob_norm2());
}

double riem_distance(const SpdTensor3& a, const SpdTensor3& b) {
  const Mat3 w = matrix_inv_sqrt(a).matrix();
  const auto e = eig(SymTensor3::from_matrix(w * b.matrix() * w));
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (!(e.values[i] > 0.0)) fail(ErrorKind::domain, "congruence has non-positive eigenvalue");
    const double l = std::log(e.values[i]);
    s += l * l;
  }
  return std::sqrt(s);
}

double fractional_anisotropy(const SpdTensor3& t) {
  const Vec3 l = eig(t.sym()).values;
  const double mean = l.mean();
  const double num = (l.array() - mean).matrix().squaredNorm();
  const double den = l.squaredNorm();
  return std::min(1.0, std::sqrt(1.5 * num / den));
}

Glyph ellipsoid_glyph(const SpdTensor3& t, double c, const Vec3& center) {
  if (!(c > 0.0) || !std::isfinite(c)) fail(ErrorKind::invalid_input, "glyph constant must be positive");
  const auto e = eig(t.sym());
  Glyph g;
  g.center = center;
  for (int i = 0; i < 3; ++i) g.radii[i] = std::sqrt(c * e.values[i]);
  g.axes = e.vectors;
  return g;
}

}  // namespace gwpdti
