#pragma once

// Stejskal-Tanner signal model, log-linear tensor fitting and synthetic
// field generators.

#include <cstdint>
#include <string>
#include <vector>

#include "gwpdti/field.hpp"
#include "gwpdti/spd.hpp"

namespace gwpdti {

struct GradientEntry {
  Vec3 g = Vec3::Zero();  // unit vector; ignored when b == 0
  double b = 0.0;         // s/mm^2
};

class GradientScheme {
 public:
  GradientScheme() = default;
  /// Throws ErrorKind::validation if a b > 0 direction is not unit length
  /// (1e-12) or a b-value is negative or non-finite.
  explicit GradientScheme(std::vector<GradientEntry> entries);

  const std::vector<GradientEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// One b = 0 reference entry followed by `n` repulsion-optimized directions
  /// at the given b-value.
  static GradientScheme single_shell(std::size_t n, double b, std::uint64_t seed = 7);

 private:
  std::vector<GradientEntry> entries_;
};

/// `n` antipodally symmetric unit directions spread by electrostatic
/// repulsion; deterministic in `seed`.
std::vector<Vec3> electrostatic_directions(std::size_t n, std::uint64_t seed);

struct DwiSignals {
  double s0 = 1.0;
  std::vector<double> signals;  // aligned with the scheme entries
};

/// S_k = s0 * exp(-b g^T D g).
DwiSignals st_forward(const SpdTensor3& d, const GradientScheme& scheme, double s0);

/// Least squares on ln(S_k/S0) = -b g^T D g over the six unique components.
/// Throws ErrorKind::estimation if fewer than six independent b > 0 rows,
/// ErrorKind::domain on a non-positive signal.
SymTensor3 fit_tensor_lls(const DwiSignals& signals, const GradientScheme& scheme);

/// sqrt((S + n1)^2 + n2^2) with n1, n2 ~ N(0, sigma^2). `stream` selects an
/// independent sequence for the same seed (e.g. the voxel index).
DwiSignals add_rician_noise(const DwiSignals& signals, double sigma, std::uint64_t seed,
                            std::uint64_t stream = 0);

/// Raises eigenvalues below `floor` to `floor`.
SymTensor3 repair_spd(const SymTensor3& t, double floor);

struct AcquisitionParams {
  std::size_t directions = 25;
  double b = 1000.0;         // s/mm^2
  double s0 = 1.0;
  double noise_sigma = 0.03; // absolute, in units of s0
  std::uint64_t scheme_seed = 7;
};

/// Smoothly varying single-fiber field. Angles advance linearly per voxel
/// (index units) plus a sinusoidal bend, so the amount of change between
/// neighbouring voxels does not depend on the grid size.
struct SmoothFieldParams {
  double lambda_par = 1.7e-3;   // mm^2/s
  double lambda_perp = 0.5e-3;  // mm^2/s
  double lambda_mod = 0.0;      // relative modulation of the principal eigenvalue
  double rot_rate_x = 0.10;     // rad per voxel
  double rot_rate_y = 0.05;     // rad per voxel
  double bend_amp = 0.0;        // rad
  double bend_period = 14.0;    // voxels
  double elevation_amp = 0.0;   // rad, out-of-plane tilt
  double log_scale_amp = 1.0;   // all eigenvalues scaled by exp(amp * sin(2 pi (x - y) / period))
  double log_scale_period = 12.0;  // voxels
  AcquisitionParams acq;
};

/// Two fiber populations meeting in a vertical band around the grid centre.
/// Population A (left) runs along `angle_a`, population B (right) along
/// `angle_b`; both bend gently with y. In the band the DWI signal is the
/// weighted sum of both compartments, which is then fitted by one tensor.
struct CrossingFieldParams {
  double lambda_par = 1.7e-3;
  double lambda_perp = 0.3e-3;
  double angle_a = 0.5236;       // rad (30 degrees)
  double angle_b = 2.0944;       // rad (120 degrees)
  double band_halfwidth = 3.0;   // voxels
  double bend_rate = 0.05;       // rad per voxel along y
  double log_scale_amp = 1.0;    // diffusivities of both populations scaled as in SmoothFieldParams
  double log_scale_period = 12.0;
  AcquisitionParams acq;
};

/// Principal direction of each population at a site, as used by the
/// crossing generator.
Vec3 crossing_direction_a(const CrossingFieldParams& p, double x, double y, double cy);
Vec3 crossing_direction_b(const CrossingFieldParams& p, double x, double y, double cy);
/// Weight of population A at column x, in [0, 1].
double crossing_weight_a(const CrossingFieldParams& p, double x, double cx);

/// Noise-free generating tensor of the smooth field at voxel (x, y, z).
SpdTensor3 smooth_field_tensor(const SmoothFieldParams& p, double x, double y, double z);

TensorGrid synth_smooth_field(const Dims& dims, std::uint64_t seed, const SmoothFieldParams& p);
TensorGrid synth_crossing_field(const Dims& dims, std::uint64_t seed, const CrossingFieldParams& p);

/// Gradient scheme CSV: one line per measurement, `gx,gy,gz,b`.
GradientScheme parse_scheme_csv(const std::string& text);
std::string format_scheme_csv(const GradientScheme& scheme);

/// Per-voxel DWI data over a grid.
struct DwiVolume {
  Dims dims{1, 1, 1};
  Spacing spacing{1.0, 1.0, 1.0};
  GradientScheme scheme;
  std::vector<double> s0;                    // one per voxel
  std::vector<std::vector<double>> signals;  // [measurement][voxel]
};

DwiVolume parse_dwi(const std::string& text);
std::string format_dwi(const DwiVolume& dwi);

/// Per-voxel LLS fit followed by SPD repair with the generator floor rule.
TensorGrid estimate_field(const DwiVolume& dwi);

/// DWI volume for an SPD field (noise added when sigma > 0).
DwiVolume simulate_dwi(const TensorGrid& field, const AcquisitionParams& acq, std::uint64_t seed);

}  // namespace gwpdti
