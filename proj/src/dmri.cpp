#include "gwpdti/dmri.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gwpdti/errors.hpp"
#include "gwpdti/rng.hpp"

namespace gwpdti {

using nlohmann::json;

GradientScheme::GradientScheme(std::vector<GradientEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const auto& e = entries_[k];
    if (!std::isfinite(e.b) || e.b < 0.0)
      fail(ErrorKind::validation, "gradient entry " + std::to_string(k) + ": invalid b-value");
    if (!e.g.allFinite())
      fail(ErrorKind::validation, "gradient entry " + std::to_string(k) + ": non-finite direction");
    if (e.b > 0.0 && std::abs(e.g.norm() - 1.0) > 1e-12)
      fail(ErrorKind::validation, "gradient entry " + std::to_string(k) + ": direction is not unit length");
  }
}

std::vector<Vec3> electrostatic_directions(std::size_t n, std::uint64_t seed) {
  std::vector<Vec3> p(n);
  auto eng = make_engine(seed, 0x9d1);
  for (auto& v : p) {
    v = Vec3(standard_normal(eng), standard_normal(eng), standard_normal(eng)).normalized();
  }
  if (n < 2) return p;

  // Gradient descent on the Coulomb energy of the 2n charges {+p_i, -p_i}.
  double step = 0.1;
  for (int iter = 0; iter < 2000; ++iter) {
    std::vector<Vec3> force(n, Vec3::Zero());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        for (double sgn : {1.0, -1.0}) {
          const Vec3 d = p[i] - sgn * p[j];
          const double r = d.norm();
          force[i] += d / (r * r * r);
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      Vec3 f = force[i] - force[i].dot(p[i]) * p[i];  // tangential part
      p[i] = (p[i] + step * f / static_cast<double>(n)).normalized();
    }
    step *= 0.998;
  }
  for (auto& v : p) {
    // Canonical hemisphere, then renormalize to unit length to machine precision.
    if (v.z() < 0.0) v = -v;
    v.normalize();
  }
  return p;
}

GradientScheme GradientScheme::single_shell(std::size_t n, double b, std::uint64_t seed) {
  std::vector<GradientEntry> e;
  e.push_back({Vec3::Zero(), 0.0});
  for (const auto& g : electrostatic_directions(n, seed)) e.push_back({g, b});
  return GradientScheme(std::move(e));
}

DwiSignals st_forward(const SpdTensor3& d, const GradientScheme& scheme, double s0) {
  if (!(s0 > 0.0)) fail(ErrorKind::invalid_input, "s0 must be positive");
  const Mat3 m = d.matrix();
  DwiSignals out;
  out.s0 = s0;
  out.signals.reserve(scheme.size());
  for (const auto& e : scheme.entries()) {
    const double adc = e.b > 0.0 ? e.g.dot(m * e.g) : 0.0;
    out.signals.push_back(s0 * std::exp(-e.b * adc));
  }
  return out;
}

SymTensor3 fit_tensor_lls(const DwiSignals& signals, const GradientScheme& scheme) {
  if (signals.signals.size() != scheme.size())
    fail(ErrorKind::invalid_input, "signal count does not match gradient scheme");
  if (!(signals.s0 > 0.0)) fail(ErrorKind::domain, "reference signal must be positive");

  std::size_t rows = 0;
  for (const auto& e : scheme.entries()) rows += e.b > 0.0 ? 1 : 0;
  if (rows < 6) fail(ErrorKind::estimation, "need at least 6 diffusion-weighted measurements");

  Eigen::MatrixXd a(rows, 6);
  Eigen::VectorXd y(rows);
  std::size_t r = 0;
  for (std::size_t k = 0; k < scheme.size(); ++k) {
    const auto& e = scheme.entries()[k];
    if (e.b <= 0.0) continue;
    const double s = signals.signals[k];
    if (!(s > 0.0)) fail(ErrorKind::domain, "non-positive signal in measurement " + std::to_string(k));
    const Vec3& g = e.g;
    a.row(r) << g.x() * g.x(), g.y() * g.y(), g.z() * g.z(), 2 * g.x() * g.y(), 2 * g.x() * g.z(),
        2 * g.y() * g.z();
    a.row(r) *= -e.b;
    y[r] = std::log(s / signals.s0);
    ++r;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < 6) fail(ErrorKind::estimation, "gradient directions do not determine the tensor");
  const Eigen::VectorXd c = qr.solve(y);
  return SymTensor3(c[0], c[1], c[2], c[3], c[4], c[5]);
}

DwiSignals add_rician_noise(const DwiSignals& signals, double sigma, std::uint64_t seed,
                            std::uint64_t stream) {
  if (!(sigma > 0.0)) fail(ErrorKind::invalid_input, "noise sigma must be positive");
  auto eng = make_engine(seed, 0x51c, stream);
  DwiSignals out = signals;
  for (auto& s : out.signals) {
    const double n1 = sigma * standard_normal(eng);
    const double n2 = sigma * standard_normal(eng);
    s = std::hypot(s + n1, n2);
  }
  return out;
}

SymTensor3 repair_spd(const SymTensor3& t, double floor) {
  const auto e = eig(t);
  if (e.values[2] >= floor) return t;
  return apply_spectral(e, [floor](double l) { return std::max(l, floor); });
}

namespace {

// Orthonormal frame with e1 at (azimuth, elevation).
Mat3 frame(double azimuth, double elevation) {
  const Vec3 e1(std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
                std::sin(elevation));
  const Vec3 e2(-std::sin(azimuth), std::cos(azimuth), 0.0);
  Mat3 q;
  q.col(0) = e1;
  q.col(1) = e2;
  q.col(2) = e1.cross(e2);
  return q;
}

SpdTensor3 cylinder(const Vec3& dir, double lpar, double lperp) {
  const Mat3 m = lperp * Mat3::Identity() + (lpar - lperp) * dir * dir.transpose();
  return SpdTensor3(SymTensor3::from_matrix(m));
}

double centre(std::size_t n) { return 0.5 * static_cast<double>(n - 1); }

// Refit every voxel's signal and apply the field-level SPD floor.
template <typename SignalFn>
TensorGrid measure_field(const Dims& dims, std::uint64_t seed, const AcquisitionParams& acq,
                         SignalFn&& signal_at) {
  const auto scheme = GradientScheme::single_shell(acq.directions, acq.b, acq.scheme_seed);
  const std::size_t n = dims[0] * dims[1] * dims[2];
  std::vector<SymTensor3> fitted;
  fitted.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i % dims[0]);
    const double y = static_cast<double>((i / dims[0]) % dims[1]);
    const double z = static_cast<double>(i / (dims[0] * dims[1]));
    DwiSignals s = signal_at(scheme, x, y, z);
    if (acq.noise_sigma > 0.0) s = add_rician_noise(s, acq.noise_sigma, seed, i);
    fitted.push_back(fit_tensor_lls(s, scheme));
  }
  double mean_trace = 0.0;
  for (const auto& t : fitted) mean_trace += t.trace();
  mean_trace /= static_cast<double>(n);
  const double floor = 1e-6 * mean_trace / 3.0;
  for (auto& t : fitted) t = repair_spd(t, floor);
  return TensorGrid(dims, {1.0, 1.0, 1.0}, std::move(fitted));
}

void check_dims(const Dims& dims) {
  int active = 0;
  for (auto d : dims) {
    if (d == 0) fail(ErrorKind::invalid_input, "field dimensions must be positive");
    if (d == 1) continue;
    if (d < 2) fail(ErrorKind::invalid_input, "active axes need at least 2 sites");
    ++active;
  }
  if (active == 0) fail(ErrorKind::invalid_input, "field needs at least one axis with 2+ sites");
}

}  // namespace

SpdTensor3 smooth_field_tensor(const SmoothFieldParams& p, double x, double y, double z) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double azimuth = p.rot_rate_x * x + p.rot_rate_y * (y + 0.5 * z) +
                         p.bend_amp * std::sin(two_pi * y / p.bend_period);
  const double elevation = p.elevation_amp * std::sin(two_pi * x / (2.0 * p.bend_period));
  const double l1 = p.lambda_par * (1.0 + p.lambda_mod * std::sin(two_pi * (x + y) / (2.0 * p.bend_period)));
  const double l2 = 1.3 * p.lambda_perp;
  const double l3 = p.lambda_perp;
  const double g = std::exp(p.log_scale_amp * std::sin(two_pi * (x - y) / p.log_scale_period));
  const Mat3 q = frame(azimuth, elevation);
  return SpdTensor3(SymTensor3::from_matrix(q * Vec3(g * l1, g * l2, g * l3).asDiagonal() * q.transpose()));
}

TensorGrid synth_smooth_field(const Dims& dims, std::uint64_t seed, const SmoothFieldParams& p) {
  check_dims(dims);
  return measure_field(dims, seed, p.acq, [&](const GradientScheme& scheme, double x, double y, double z) {
    return st_forward(smooth_field_tensor(p, x, y, z), scheme, p.acq.s0);
  });
}

Vec3 crossing_direction_a(const CrossingFieldParams& p, double x, double y, double cy) {
  (void)x;
  const double a = p.angle_a + p.bend_rate * (y - cy);
  return {std::cos(a), std::sin(a), 0.0};
}

Vec3 crossing_direction_b(const CrossingFieldParams& p, double x, double y, double cy) {
  (void)x;
  const double a = p.angle_b - p.bend_rate * (y - cy);
  return {std::cos(a), std::sin(a), 0.0};
}

double crossing_weight_a(const CrossingFieldParams& p, double x, double cx) {
  return 0.5 * (1.0 - std::tanh((x - cx) / p.band_halfwidth));
}

TensorGrid synth_crossing_field(const Dims& dims, std::uint64_t seed, const CrossingFieldParams& p) {
  check_dims(dims);
  const double cx = centre(dims[0]);
  const double cy = centre(dims[1]);
  return measure_field(dims, seed, p.acq, [&](const GradientScheme& scheme, double x, double y, double) {
    const double g = std::exp(p.log_scale_amp * std::sin(2.0 * std::numbers::pi * (x - y) / p.log_scale_period));
    const auto da = cylinder(crossing_direction_a(p, x, y, cy), g * p.lambda_par, g * p.lambda_perp);
    const auto db = cylinder(crossing_direction_b(p, x, y, cy), g * p.lambda_par, g * p.lambda_perp);
    const double wa = crossing_weight_a(p, x, cx);
    const auto sa = st_forward(da, scheme, p.acq.s0);
    const auto sb = st_forward(db, scheme, p.acq.s0);
    DwiSignals s = sa;
    for (std::size_t k = 0; k < s.signals.size(); ++k)
      s.signals[k] = wa * sa.signals[k] + (1.0 - wa) * sb.signals[k];
    return s;
  });
}

GradientScheme parse_scheme_csv(const std::string& text) {
  std::vector<GradientEntry> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    std::array<double, 4> v{};
    std::istringstream ls(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(ls, cell, ',')) {
      if (k >= 4) fail(ErrorKind::parse, "scheme line " + std::to_string(lineno) + ": expected gx,gy,gz,b");
      try {
        std::size_t used = 0;
        v[k] = std::stod(cell, &used);
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        fail(ErrorKind::parse, "scheme line " + std::to_string(lineno) + ", field " + std::to_string(k + 1) +
                                   ": not a number");
      }
      ++k;
    }
    if (k != 4) fail(ErrorKind::parse, "scheme line " + std::to_string(lineno) + ": expected gx,gy,gz,b");
    entries.push_back({Vec3(v[0], v[1], v[2]), v[3]});
  }
  return GradientScheme(std::move(entries));
}

std::string format_scheme_csv(const GradientScheme& scheme) {
  std::ostringstream o;
  for (const auto& e : scheme.entries()) {
    o << format_double(e.g.x()) << "," << format_double(e.g.y()) << "," << format_double(e.g.z()) << ","
      << format_double(e.b) << "\n";
  }
  return o.str();
}

DwiVolume parse_dwi(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, "dwi file: line " + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
  DwiVolume v;
  try {
    const auto d = j.at("dims").get<std::vector<std::size_t>>();
    if (d.size() != 3) fail(ErrorKind::parse, "dwi file: \"dims\" must have 3 entries");
    v.dims = {d[0], d[1], d[2]};
    if (j.contains("spacing")) {
      const auto s = j.at("spacing").get<std::vector<double>>();
      if (s.size() != 3) fail(ErrorKind::parse, "dwi file: \"spacing\" must have 3 entries");
      v.spacing = {s[0], s[1], s[2]};
    }
    v.s0 = j.at("s0").get<std::vector<double>>();
    std::vector<GradientEntry> entries;
    const auto& ms = j.at("measurements");
    for (std::size_t k = 0; k < ms.size(); ++k) {
      const auto g = ms[k].at("g").get<std::vector<double>>();
      if (g.size() != 3) fail(ErrorKind::parse, "dwi file: measurements[" + std::to_string(k) + "].g needs 3 entries");
      entries.push_back({Vec3(g[0], g[1], g[2]), ms[k].at("b").get<double>()});
      v.signals.push_back(ms[k].at("signal").get<std::vector<double>>());
    }
    v.scheme = GradientScheme(std::move(entries));
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("dwi file: ") + e.what());
  }
  const std::size_t n = v.dims[0] * v.dims[1] * v.dims[2];
  if (n == 0) fail(ErrorKind::validation, "dwi file: empty dims");
  if (v.s0.size() != n) fail(ErrorKind::validation, "dwi file: s0 length does not match dims");
  for (std::size_t k = 0; k < v.signals.size(); ++k)
    if (v.signals[k].size() != n)
      fail(ErrorKind::validation, "dwi file: measurements[" + std::to_string(k) + "].signal length does not match dims");
  return v;
}

std::string format_dwi(const DwiVolume& dwi) {
  std::ostringstream o;
  auto list = [&](const std::vector<double>& v) {
    o << "[";
    for (std::size_t i = 0; i < v.size(); ++i) o << (i ? "," : "") << format_double(v[i]);
    o << "]";
  };
  o << "{\n  \"version\": 1,\n";
  o << "  \"dims\": [" << dwi.dims[0] << ", " << dwi.dims[1] << ", " << dwi.dims[2] << "],\n";
  o << "  \"spacing\": [" << format_double(dwi.spacing[0]) << ", " << format_double(dwi.spacing[1]) << ", "
    << format_double(dwi.spacing[2]) << "],\n";
  o << "  \"s0\": ";
  list(dwi.s0);
  o << ",\n  \"measurements\": [";
  for (std::size_t k = 0; k < dwi.scheme.size(); ++k) {
    const auto& e = dwi.scheme.entries()[k];
    o << (k ? ",\n    " : "\n    ") << "{\"g\": [" << format_double(e.g.x()) << ", " << format_double(e.g.y())
      << ", " << format_double(e.g.z()) << "], \"b\": " << format_double(e.b) << ", \"signal\": ";
    list(dwi.signals[k]);
    o << "}";
  }
  o << "\n  ]\n}\n";
  return o.str();
}

TensorGrid estimate_field(const DwiVolume& dwi) {
  const std::size_t n = dwi.s0.size();
  std::vector<SymTensor3> fitted;
  fitted.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    DwiSignals s;
    s.s0 = dwi.s0[i];
    for (const auto& m : dwi.signals) s.signals.push_back(m[i]);
    try {
      fitted.push_back(fit_tensor_lls(s, dwi.scheme));
    } catch (const Error& e) {
      throw Error(e.kind(), "voxel " + std::to_string(i) + ": " + e.what());
    }
  }
  double mean_trace = 0.0;
  for (const auto& t : fitted) mean_trace += t.trace();
  mean_trace /= static_cast<double>(n);
  const double floor = 1e-6 * std::abs(mean_trace) / 3.0;
  if (floor > 0.0)
    for (auto& t : fitted) t = repair_spd(t, floor);
  return TensorGrid(dwi.dims, dwi.spacing, std::move(fitted));
}

DwiVolume simulate_dwi(const TensorGrid& field, const AcquisitionParams& acq, std::uint64_t seed) {
  DwiVolume v;
  v.dims = field.dims();
  v.spacing = field.spacing();
  v.scheme = GradientScheme::single_shell(acq.directions, acq.b, acq.scheme_seed);
  v.s0.assign(field.size(), acq.s0);
  v.signals.assign(v.scheme.size(), std::vector<double>(field.size()));
  for (std::size_t i = 0; i < field.size(); ++i) {
    DwiSignals s = st_forward(SpdTensor3(field.at(i)), v.scheme, acq.s0);
    if (acq.noise_sigma > 0.0) s = add_rician_noise(s, acq.noise_sigma, seed, i);
    for (std::size_t k = 0; k < s.signals.size(); ++k) v.signals[k][i] = s.signals[k];
  }
  return v;
}

}  // namespace gwpdti
