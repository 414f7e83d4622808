#pragma once

// End-to-end experiments: ground truth -> downsample by two -> fit and
// interpolate with every configured method -> error metrics on held-out
// sites, plus glyph exports and a checksum manifest.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gwpdti/dmri.hpp"
#include "gwpdti/field.hpp"
#include "gwpdti/inference.hpp"
#include "gwpdti/predict.hpp"

namespace gwpdti {

struct MetricsRow {
  std::string method;
  std::string metric;  // "frobenius" | "riemannian"
  double mean = 0.0;
  double std = 0.0;    // population standard deviation
  std::size_t n = 0;   // held-out sites
  std::size_t spd_violations = 0;
};

using MetricsTable = std::vector<MetricsRow>;

/// Per-voxel Frobenius and Riemannian errors of `predicted` (aligned with
/// split.held_out) against `truth`. Non-SPD predictions are counted and left
/// out of the Riemannian statistics.
MetricsTable evaluate(const std::string& method, const std::vector<SymTensor3>& predicted, const TensorGrid& truth,
                      const HoldoutSplit& split);

std::string format_metrics_csv(const MetricsTable& table);
MetricsTable parse_metrics_csv(const std::string& text);
const MetricsRow* find_row(const MetricsTable& table, const std::string& method, const std::string& metric);

enum class DatasetKind { smooth, crossing, file };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::smooth;
  Dims dims{15, 15, 1};
  std::filesystem::path path;  // kind == file
  SmoothFieldParams smooth;
  CrossingFieldParams crossing;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::uint64_t seed = 1;
  McmcConfig mcmc;
  std::vector<std::string> methods{"gwp", "linear", "logeuclid"};
  PredictOptions predict;
  std::vector<std::string> glyph_formats{"glyph-json", "svg-slice"};
  std::optional<double> glyph_c;  // auto when unset

  /// "quick" (smooth 15x15), "paper" (smooth 37x37), "crossing" (31x31).
  static ExperimentConfig preset(const std::string& name);
  void validate() const;
};

/// Overlays a versioned JSON config on `base`. Throws ErrorKind::usage.
ExperimentConfig parse_experiment_config(const std::string& text, ExperimentConfig base = {});
std::string format_experiment_config(const ExperimentConfig& config);

TensorGrid generate_dataset(const DatasetSpec& spec, std::uint64_t seed);

/// Every site of the full-resolution grid described by the split, at half
/// the low-res spacing.
std::vector<Vec3> full_grid_targets(const HoldoutSplit& split, const Spacing& low_res_spacing);
Spacing full_spacing(const Spacing& low_res_spacing);

struct MethodPrediction {
  TensorGrid field;                          // full-resolution grid
  std::optional<std::vector<double>> uncertainty;  // gwp only
};

/// Interpolates the full-resolution grid from the low-res field with one
/// method. `archive` is required for "gwp".
MethodPrediction predict_method(const std::string& method, const TensorGrid& low_res, const HoldoutSplit& split,
                                const PosteriorSamples* archive, const PredictOptions& options = {});

/// Held-out sites of a full-resolution prediction, in split order.
std::vector<SymTensor3> held_out_values(const TensorGrid& full, const HoldoutSplit& split);

struct ExperimentResult {
  MetricsTable metrics;
  std::size_t kept = 0;
  std::size_t held_out = 0;
  std::optional<RunDiagnostics> mcmc;
  std::map<std::string, double> seconds;  // per stage, wall clock
};

/// Runs the full pipeline and writes its outputs to `out_dir` (empty path:
/// nothing is written).
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// MCMC settings and prediction options actually used by run_experiment:
/// their seeds are derived from the experiment seed and the configured
/// sub-seeds, so one --seed changes every random stream.
McmcConfig chain_config(const ExperimentConfig& config);
PredictOptions predict_options(const ExperimentConfig& config);

std::string format_uncertainty(const Dims& dims, const std::vector<double>& values);

/// c such that the largest glyph semi-axis is 0.45 of the smallest in-plane
/// spacing.
double auto_glyph_constant(const TensorGrid& field);
std::string format_glyph_json(const TensorGrid& field, double c);
/// Ellipses from the in-plane 2x2 block of c*D for slice z = `slice`,
/// coloured by FA. Throws ErrorKind::usage for a bad slice index.
std::string format_glyph_svg(const TensorGrid& field, double c, std::size_t slice);
void export_glyphs(const TensorGrid& field, double c, const std::filesystem::path& path, const std::string& format,
                   std::size_t slice = 0);
/// Checks a glyph-json document; returns the number of glyph records.
/// Throws ErrorKind::validation describing the first violation.
std::size_t validate_glyph_json(const std::string& text);

}  // namespace gwpdti
