#include "gwpdti/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "config_json.hpp"
#include "gwpdti/baselines.hpp"
#include "gwpdti/errors.hpp"
#include "gwpdti/version.hpp"

namespace gwpdti {

using nlohmann::json;

MetricsTable evaluate(const std::string& method, const std::vector<SymTensor3>& predicted, const TensorGrid& truth,
                      const HoldoutSplit& split) {
  if (predicted.size() != split.held_out.size())
    fail(ErrorKind::usage, "predictions do not cover exactly the held-out sites");
  if (truth.dims() != split.full_dims) fail(ErrorKind::validation, "ground truth dims do not match the split");

  std::vector<double> frob, riem;
  std::size_t violations = 0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const auto& t = truth.at(split.held_out[k]);
    frob.push_back(frob_distance(predicted[k], t));
    if (is_spd(predicted[k]) && is_spd(t)) {
      riem.push_back(riem_distance(SpdTensor3(predicted[k]), SpdTensor3(t)));
    } else {
      ++violations;
    }
  }

  auto stats = [](const std::vector<double>& v) {
    if (v.empty()) return std::pair{std::nan(""), std::nan("")};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, std::sqrt(s / static_cast<double>(v.size()))};
  };
  const auto [fm, fs] = stats(frob);
  const auto [rm, rs] = stats(riem);
  const std::size_t n = split.held_out.size();
  return {{method, "frobenius", fm, fs, n, violations}, {method, "riemannian", rm, rs, n, violations}};
}

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string format_metrics_csv(const MetricsTable& table) {
  std::string out = "method,metric,mean,std,n,spd_violations\n";
  for (const auto& r : table) {
    out += r.method + "," + r.metric + "," + g17(r.mean) + "," + g17(r.std) + "," + std::to_string(r.n) + "," +
           std::to_string(r.spd_violations) + "\n";
  }
  return out;
}

MetricsTable parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  MetricsTable t;
  if (!std::getline(in, line) || line != "method,metric,mean,std,n,spd_violations")
    fail(ErrorKind::parse, "metrics csv: unexpected header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (cells.size() != 6) fail(ErrorKind::parse, "metrics csv line " + std::to_string(lineno) + ": expected 6 cells");
    try {
      t.push_back({cells[0], cells[1], std::stod(cells[2]), std::stod(cells[3]), std::stoul(cells[4]),
                   std::stoul(cells[5])});
    } catch (const std::exception&) {
      fail(ErrorKind::parse, "metrics csv line " + std::to_string(lineno) + ": bad number");
    }
  }
  return t;
}

const MetricsRow* find_row(const MetricsTable& table, const std::string& method, const std::string& metric) {
  for (const auto& r : table)
    if (r.method == method && r.metric == metric) return &r;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Config

namespace {
// Presets measure at a lower noise level than the generator default so that
// interpolation error, not the irreducible noise of the held-out truth,
// dominates the comparison.
constexpr double kPresetNoise = 0.005;
}  // namespace

ExperimentConfig ExperimentConfig::preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "quick") {
    c.dataset.kind = DatasetKind::smooth;
    c.dataset.dims = {15, 15, 1};
  } else if (name == "paper") {
    c.dataset.kind = DatasetKind::smooth;
    c.dataset.dims = {37, 37, 1};
  } else if (name == "crossing") {
    c.dataset.kind = DatasetKind::crossing;
    c.dataset.dims = {31, 31, 1};
  } else {
    fail(ErrorKind::usage, "unknown preset \"" + name + "\" (expected quick, paper or crossing)");
  }
  c.dataset.smooth.acq.noise_sigma = kPresetNoise;
  c.dataset.crossing.acq.noise_sigma = kPresetNoise;
  return c;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) fail(ErrorKind::usage, "config: at least one method is required");
  for (const auto& m : methods)
    if (m != "gwp" && m != "linear" && m != "logeuclid")
      fail(ErrorKind::usage, "config: unknown method \"" + m + "\"");
  for (const auto& f : glyph_formats)
    if (f != "glyph-json" && f != "svg-slice") fail(ErrorKind::usage, "config: unknown glyph format \"" + f + "\"");
  if (dataset.kind == DatasetKind::file && dataset.path.empty())
    fail(ErrorKind::usage, "config: dataset kind \"file\" needs a path");
  if (glyph_c && !(*glyph_c > 0.0)) fail(ErrorKind::usage, "config: glyph c must be positive");
  mcmc.validate();
}

namespace {

const char* kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::smooth: return "smooth";
    case DatasetKind::crossing: return "crossing";
    case DatasetKind::file: return "file";
  }
  return "?";
}

json acq_to_json(const AcquisitionParams& a) {
  return {{"directions", a.directions}, {"b", a.b}, {"s0", a.s0}, {"noise_sigma", a.noise_sigma},
          {"scheme_seed", a.scheme_seed}};
}

void acq_from_json(const json& j, AcquisitionParams& a) {
  a.directions = j.value("directions", a.directions);
  a.b = j.value("b", a.b);
  a.s0 = j.value("s0", a.s0);
  a.noise_sigma = j.value("noise_sigma", a.noise_sigma);
  a.scheme_seed = j.value("scheme_seed", a.scheme_seed);
}

json smooth_to_json(const SmoothFieldParams& p) {
  return {{"lambda_par", p.lambda_par},   {"lambda_perp", p.lambda_perp}, {"lambda_mod", p.lambda_mod},
          {"rot_rate_x", p.rot_rate_x},   {"rot_rate_y", p.rot_rate_y},   {"bend_amp", p.bend_amp},
          {"bend_period", p.bend_period}, {"elevation_amp", p.elevation_amp},
          {"log_scale_amp", p.log_scale_amp}, {"log_scale_period", p.log_scale_period}};
}

void smooth_from_json(const json& j, SmoothFieldParams& p) {
  p.lambda_par = j.value("lambda_par", p.lambda_par);
  p.lambda_perp = j.value("lambda_perp", p.lambda_perp);
  p.lambda_mod = j.value("lambda_mod", p.lambda_mod);
  p.rot_rate_x = j.value("rot_rate_x", p.rot_rate_x);
  p.rot_rate_y = j.value("rot_rate_y", p.rot_rate_y);
  p.bend_amp = j.value("bend_amp", p.bend_amp);
  p.bend_period = j.value("bend_period", p.bend_period);
  p.elevation_amp = j.value("elevation_amp", p.elevation_amp);
  p.log_scale_amp = j.value("log_scale_amp", p.log_scale_amp);
  p.log_scale_period = j.value("log_scale_period", p.log_scale_period);
}

json crossing_to_json(const CrossingFieldParams& p) {
  return {{"lambda_par", p.lambda_par}, {"lambda_perp", p.lambda_perp},       {"angle_a", p.angle_a},
          {"angle_b", p.angle_b},       {"band_halfwidth", p.band_halfwidth}, {"bend_rate", p.bend_rate},
          {"log_scale_amp", p.log_scale_amp}, {"log_scale_period", p.log_scale_period}};
}

void crossing_from_json(const json& j, CrossingFieldParams& p) {
  p.lambda_par = j.value("lambda_par", p.lambda_par);
  p.lambda_perp = j.value("lambda_perp", p.lambda_perp);
  p.angle_a = j.value("angle_a", p.angle_a);
  p.angle_b = j.value("angle_b", p.angle_b);
  p.band_halfwidth = j.value("band_halfwidth", p.band_halfwidth);
  p.bend_rate = j.value("bend_rate", p.bend_rate);
  p.log_scale_amp = j.value("log_scale_amp", p.log_scale_amp);
  p.log_scale_period = j.value("log_scale_period", p.log_scale_period);
}

json config_to_json(const ExperimentConfig& c) {
  json ds{{"kind", kind_name(c.dataset.kind)},
          {"dims", c.dataset.dims},
          {"acquisition", acq_to_json(c.dataset.kind == DatasetKind::crossing ? c.dataset.crossing.acq
                                                                             : c.dataset.smooth.acq)}};
  if (c.dataset.kind == DatasetKind::file) ds["path"] = c.dataset.path.string();
  if (c.dataset.kind == DatasetKind::smooth) ds["smooth"] = smooth_to_json(c.dataset.smooth);
  if (c.dataset.kind == DatasetKind::crossing) ds["crossing"] = crossing_to_json(c.dataset.crossing);
  json glyphs{{"formats", c.glyph_formats}};
  glyphs["c"] = c.glyph_c ? json(*c.glyph_c) : json(nullptr);
  return {{"version", 1},
          {"dataset", ds},
          {"seed", c.seed},
          {"mcmc", mcmc_config_to_json(c.mcmc)},
          {"methods", c.methods},
          {"predict",
           {{"mode", c.predict.mode == PredictMode::mean ? "mean" : "sample"},
            {"seed", c.predict.seed},
            {"keep_per_sample", c.predict.keep_per_sample}}},
          {"glyphs", glyphs}};
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::usage, "config: " + where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) fail(ErrorKind::usage, "config: unknown key \"" + k + "\" in " + where);
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, ExperimentConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::usage, "config: line " + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
  try {
    check_keys(j, {"version", "preset", "dataset", "seed", "mcmc", "methods", "predict", "glyphs"}, "config");
    if (j.value("version", 1) != 1) fail(ErrorKind::usage, "config: unsupported version");
    if (j.contains("preset")) c = ExperimentConfig::preset(j.at("preset").get<std::string>());
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      check_keys(d, {"kind", "dims", "path", "smooth", "crossing", "acquisition"}, "dataset");
      if (d.contains("kind")) {
        const auto k = d.at("kind").get<std::string>();
        if (k == "smooth") c.dataset.kind = DatasetKind::smooth;
        else if (k == "crossing") c.dataset.kind = DatasetKind::crossing;
        else if (k == "file") c.dataset.kind = DatasetKind::file;
        else fail(ErrorKind::usage, "config: unknown dataset kind \"" + k + "\"");
      }
      if (d.contains("dims")) {
        const auto v = d.at("dims").get<std::vector<std::size_t>>();
        if (v.size() != 3) fail(ErrorKind::usage, "config: dataset.dims needs 3 entries");
        c.dataset.dims = {v[0], v[1], v[2]};
      }
      if (d.contains("path")) c.dataset.path = d.at("path").get<std::string>();
      if (d.contains("smooth")) {
        check_keys(d.at("smooth"),
                   {"lambda_par", "lambda_perp", "lambda_mod", "rot_rate_x", "rot_rate_y", "bend_amp", "bend_period",
                    "elevation_amp", "log_scale_amp", "log_scale_period"},
                   "dataset.smooth");
        smooth_from_json(d.at("smooth"), c.dataset.smooth);
      }
      if (d.contains("crossing")) {
        check_keys(d.at("crossing"),
                   {"lambda_par", "lambda_perp", "angle_a", "angle_b", "band_halfwidth", "bend_rate", "log_scale_amp",
                    "log_scale_period"},
                   "dataset.crossing");
        crossing_from_json(d.at("crossing"), c.dataset.crossing);
      }
      if (d.contains("acquisition")) {
        check_keys(d.at("acquisition"), {"directions", "b", "s0", "noise_sigma", "scheme_seed"}, "dataset.acquisition");
        acq_from_json(d.at("acquisition"), c.dataset.smooth.acq);
        acq_from_json(d.at("acquisition"), c.dataset.crossing.acq);
      }
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("mcmc")) c.mcmc = mcmc_config_from_json(j.at("mcmc"), c.mcmc);
    if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
    if (j.contains("predict")) {
      const auto& p = j.at("predict");
      check_keys(p, {"mode", "seed", "keep_per_sample"}, "predict");
      const auto mode = p.value("mode", std::string(c.predict.mode == PredictMode::mean ? "mean" : "sample"));
      if (mode == "mean") c.predict.mode = PredictMode::mean;
      else if (mode == "sample") c.predict.mode = PredictMode::sample;
      else fail(ErrorKind::usage, "config: predict.mode must be mean or sample");
      c.predict.seed = p.value("seed", c.predict.seed);
      c.predict.keep_per_sample = p.value("keep_per_sample", c.predict.keep_per_sample);
    }
    if (j.contains("glyphs")) {
      const auto& g = j.at("glyphs");
      check_keys(g, {"formats", "c"}, "glyphs");
      if (g.contains("formats")) c.glyph_formats = g.at("formats").get<std::vector<std::string>>();
      if (g.contains("c")) c.glyph_c = g.at("c").is_null() ? std::nullopt : std::optional(g.at("c").get<double>());
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::usage, std::string("config: ") + e.what());
  }
  return c;
}

std::string format_experiment_config(const ExperimentConfig& config) { return config_to_json(config).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Pipeline

TensorGrid generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case DatasetKind::smooth: return synth_smooth_field(spec.dims, seed, spec.smooth);
    case DatasetKind::crossing: return synth_crossing_field(spec.dims, seed, spec.crossing);
    case DatasetKind::file: return read_field(spec.path);
  }
  fail(ErrorKind::usage, "unknown dataset kind");
}

Spacing full_spacing(const Spacing& low_res_spacing) {
  return {low_res_spacing[0] / 2.0, low_res_spacing[1] / 2.0, low_res_spacing[2] / 2.0};
}

std::vector<Vec3> full_grid_targets(const HoldoutSplit& split, const Spacing& low_res_spacing) {
  const auto sp = full_spacing(low_res_spacing);
  const auto& d = split.full_dims;
  std::vector<Vec3> out;
  out.reserve(d[0] * d[1] * d[2]);
  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x)
        out.emplace_back(static_cast<double>(x) * sp[0], static_cast<double>(y) * sp[1], static_cast<double>(z) * sp[2]);
  return out;
}

MethodPrediction predict_method(const std::string& method, const TensorGrid& low_res, const HoldoutSplit& split,
                                const PosteriorSamples* archive, const PredictOptions& options) {
  const auto targets = full_grid_targets(split, low_res.spacing());
  MethodPrediction out;
  std::vector<SymTensor3> values;
  if (method == "linear" || method == "logeuclid") {
    InterpolationRequest req{&low_res, targets, HullPolicy::clamp_fringe};
    values = method == "linear" ? linear_interpolate(req) : logeuclid_interpolate(req);
  } else if (method == "gwp") {
    if (!archive) fail(ErrorKind::usage, "method gwp needs a posterior archive");
    auto pf = interpolate_gwp(*archive, low_res, targets, options);
    values = std::move(pf.mean);
    out.uncertainty = std::move(pf.uncertainty);
  } else {
    fail(ErrorKind::usage, "unknown method \"" + method + "\"");
  }
  out.field = TensorGrid(split.full_dims, full_spacing(low_res.spacing()), std::move(values));
  return out;
}

std::vector<SymTensor3> held_out_values(const TensorGrid& full, const HoldoutSplit& split) {
  if (full.dims() != split.full_dims) fail(ErrorKind::validation, "predicted field dims do not match the split");
  std::vector<SymTensor3> out;
  out.reserve(split.held_out.size());
  for (auto i : split.held_out) out.push_back(full.at(i));
  return out;
}

std::string format_uncertainty(const Dims& dims, const std::vector<double>& values) {
  std::ostringstream o;
  o << "{\n  \"version\": 1,\n  \"quantity\": \"trace of tensor sample variance\",\n";
  o << "  \"dims\": [" << dims[0] << ", " << dims[1] << ", " << dims[2] << "],\n  \"values\": [";
  for (std::size_t i = 0; i < values.size(); ++i) o << (i ? ", " : "") << format_double(values[i]);
  o << "]\n}\n";
  return o.str();
}

namespace {

using Clock = std::chrono::steady_clock;

// Stream tags keep the chain and prediction seeds apart from the noise
// streams that use the experiment seed directly.
constexpr std::uint64_t kMcmcSeedTag = 0x6d636d63;     // "mcmc"
constexpr std::uint64_t kPredictSeedTag = 0x70726564;  // "pred"

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage ") + name + ": " + e.what());
  }
}

}  // namespace

McmcConfig chain_config(const ExperimentConfig& config) {
  McmcConfig mc = config.mcmc;
  mc.seed = derive_seed(config.seed, kMcmcSeedTag, config.mcmc.seed);
  return mc;
}

PredictOptions predict_options(const ExperimentConfig& config) {
  PredictOptions p = config.predict;
  p.seed = derive_seed(config.seed, kPredictSeedTag, config.predict.seed);
  return p;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  ExperimentResult result;
  const bool write = !out_dir.empty();
  std::map<std::string, std::string> files;  // name -> contents, for the manifest
  auto emit = [&](const std::string& name, const std::string& text) {
    if (!write) return;
    write_text(out_dir / name, text);
    files[name] = sha256_hex(text);
  };

  auto t0 = Clock::now();
  const TensorGrid truth = stage("dataset", [&] { return generate_dataset(config.dataset, config.seed); });
  result.seconds["dataset"] = since(t0);
  emit("truth.json", format_field(truth));

  const auto ds = stage("downsample", [&] { return downsample_by_two(truth); });
  result.kept = ds.split.kept.size();
  result.held_out = ds.split.held_out.size();
  emit("lowres.json", format_field(ds.low_res));
  emit("split.json", format_split(ds.split));

  std::optional<PosteriorSamples> archive;
  const McmcConfig mc = chain_config(config);
  const PredictOptions popts = predict_options(config);
  for (const auto& method : config.methods) {
    if (method == "gwp" && !archive) {
      t0 = Clock::now();
      archive = stage("fit", [&] { return run_chain(ds.low_res, mc); });
      result.seconds["fit"] = since(t0);
      result.mcmc = archive->diagnostics;
      emit("posterior.jsonl", format_archive(*archive));
    }
    t0 = Clock::now();
    auto pred = stage("interp", [&] {
      return predict_method(method, ds.low_res, ds.split, archive ? &*archive : nullptr, popts);
    });
    result.seconds["interp_" + method] = since(t0);
    emit("pred_" + method + ".json", format_field(pred.field));
    if (pred.uncertainty) emit("uncertainty_" + method + ".json", format_uncertainty(ds.split.full_dims, *pred.uncertainty));

    auto rows = stage("eval", [&] { return evaluate(method, held_out_values(pred.field, ds.split), truth, ds.split); });
    result.metrics.insert(result.metrics.end(), rows.begin(), rows.end());

    if (write) {
      const double c = config.glyph_c ? *config.glyph_c : auto_glyph_constant(truth);
      for (const auto& f : config.glyph_formats) {
        if (f == "glyph-json") emit("glyphs_" + method + ".json", format_glyph_json(pred.field, c));
        else emit("glyphs_" + method + ".svg", format_glyph_svg(pred.field, c, 0));
      }
    }
  }
  emit("metrics.csv", format_metrics_csv(result.metrics));

  if (write) {
    const double c = config.glyph_c ? *config.glyph_c : auto_glyph_constant(truth);
    for (const auto& f : config.glyph_formats) {
      if (f == "glyph-json") {
        emit("glyphs_truth.json", format_glyph_json(truth, c));
        emit("glyphs_lowres.json", format_glyph_json(ds.low_res, c));
      } else {
        emit("glyphs_truth.svg", format_glyph_svg(truth, c, 0));
        emit("glyphs_lowres.svg", format_glyph_svg(ds.low_res, c, 0));
      }
    }
    json manifest{{"tool", std::string("gwpdti ") + kVersion},
                  {"seed", config.seed},
                  {"mcmc_seed", mc.seed},
                  {"predict_seed", popts.seed},
                  {"config", json::parse(format_experiment_config(config))},
                  {"truth_checksum", field_checksum(truth)},
                  {"lowres_checksum", field_checksum(ds.low_res)},
                  {"files", files}};
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Glyphs

double auto_glyph_constant(const TensorGrid& field) {
  double lmax = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i)
    if (field.valid(i)) lmax = std::max(lmax, eig(field.at(i)).values[0]);
  const auto& sp = field.spacing();
  const double s = std::min(sp[0], sp[1]);
  if (!(lmax > 0.0)) return 1.0;
  return std::pow(0.45 * s, 2) / lmax;
}

std::string format_glyph_json(const TensorGrid& field, double c) {
  if (!(c > 0.0)) fail(ErrorKind::usage, "glyph constant must be positive");
  json glyphs = json::array();
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (!field.valid(i)) continue;
    const auto s = field.site_index(i);
    const Vec3 centre = site_coordinates(field, s);
    json g{{"index", {s.x, s.y, s.z}}, {"center", {centre.x(), centre.y(), centre.z()}}};
    if (is_spd(field.at(i))) {
      const SpdTensor3 t(field.at(i));
      const Glyph gl = ellipsoid_glyph(t, c, centre);
      g["spd"] = true;
      g["radii"] = {gl.radii[0], gl.radii[1], gl.radii[2]};
      json axes = json::array();
      for (int k = 0; k < 3; ++k) axes.push_back({gl.axes(0, k), gl.axes(1, k), gl.axes(2, k)});
      g["axes"] = axes;
      g["fa"] = fractional_anisotropy(t);
    } else {
      g["spd"] = false;
    }
    glyphs.push_back(std::move(g));
  }
  json doc{{"format", "gwpdti-glyphs"},
           {"version", 1},
           {"c", c},
           {"dims", field.dims()},
           {"spacing", field.spacing()},
           {"glyphs", glyphs}};
  return doc.dump(1) + "\n";
}

std::size_t validate_glyph_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::validation, std::string("glyph json: ") + e.what());
  }
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::validation, "glyph json: " + what);
  };
  require(j.is_object() && j.value("format", "") == "gwpdti-glyphs", "bad format tag");
  require(j.value("version", 0) == 1, "unsupported version");
  require(j.contains("c") && j["c"].is_number() && j["c"].get<double>() > 0.0, "c must be a positive number");
  require(j.contains("glyphs") && j["glyphs"].is_array(), "missing glyphs array");
  std::size_t k = 0;
  for (const auto& g : j["glyphs"]) {
    const std::string at = "glyphs[" + std::to_string(k) + "]: ";
    require(g.contains("index") && g["index"].is_array() && g["index"].size() == 3, at + "index");
    require(g.contains("center") && g["center"].is_array() && g["center"].size() == 3, at + "center");
    require(g.contains("spd") && g["spd"].is_boolean(), at + "spd flag");
    if (g["spd"].get<bool>()) {
      require(g.contains("radii") && g["radii"].size() == 3, at + "radii");
      const auto r = g["radii"].get<std::vector<double>>();
      require(r[0] >= r[1] && r[1] >= r[2] && r[2] > 0.0, at + "radii must satisfy r1 >= r2 >= r3 > 0");
      require(g.contains("axes") && g["axes"].size() == 3, at + "axes");
      Mat3 q;
      for (int c = 0; c < 3; ++c) {
        const auto col = g["axes"][c].get<std::vector<double>>();
        require(col.size() == 3, at + "axis length");
        q.col(c) = Vec3(col[0], col[1], col[2]);
      }
      require((q.transpose() * q - Mat3::Identity()).norm() < 1e-9, at + "axes not orthonormal");
      require(g.contains("fa") && g["fa"].get<double>() >= 0.0 && g["fa"].get<double>() <= 1.0, at + "fa");
    }
    ++k;
  }
  return k;
}

std::string format_glyph_svg(const TensorGrid& field, double c, std::size_t slice) {
  if (!(c > 0.0)) fail(ErrorKind::usage, "glyph constant must be positive");
  const auto& d = field.dims();
  const auto& sp = field.spacing();
  if (slice >= d[2]) fail(ErrorKind::usage, "slice index " + std::to_string(slice) + " out of range");

  const double w = static_cast<double>(d[0]) * sp[0];
  const double h = static_cast<double>(d[1]) * sp[1];
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << format_double(-0.5 * sp[0]) << " "
    << format_double(-0.5 * sp[1]) << " " << format_double(w) << " " << format_double(h) << "\" width=\""
    << d[0] * 20 << "\" height=\"" << d[1] * 20 << "\">\n";
  o << "<rect x=\"" << format_double(-0.5 * sp[0]) << "\" y=\"" << format_double(-0.5 * sp[1]) << "\" width=\""
    << format_double(w) << "\" height=\"" << format_double(h) << "\" fill=\"black\"/>\n";
  for (std::size_t y = 0; y < d[1]; ++y) {
    for (std::size_t x = 0; x < d[0]; ++x) {
      const std::size_t i = field.flat_index({x, y, slice});
      if (!field.valid(i)) continue;
      const Vec3 p = site_coordinates(field, i);
      const auto& t = field.at(i);
      if (!is_spd(t)) {
        o << "<circle class=\"non-spd\" cx=\"" << format_double(p.x()) << "\" cy=\"" << format_double(p.y())
          << "\" r=\"" << format_double(0.2 * std::min(sp[0], sp[1])) << "\" fill=\"none\" stroke=\"red\"/>\n";
        continue;
      }
      // Shadow of the ellipsoid on the slice plane: principal 2x2 block of c*D.
      Eigen::Matrix2d m;
      m << t.xx(), t.xy(), t.xy(), t.yy();
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(c * m);
      const double r1 = std::sqrt(std::max(es.eigenvalues()[1], 0.0));
      const double r2 = std::sqrt(std::max(es.eigenvalues()[0], 0.0));
      const Eigen::Vector2d major = es.eigenvectors().col(1);
      const double deg = std::atan2(major.y(), major.x()) * 180.0 / std::numbers::pi;
      const double fa = fractional_anisotropy(SpdTensor3(t));
      const int hue = static_cast<int>(std::lround(240.0 * (1.0 - fa)));
      o << "<ellipse cx=\"" << format_double(p.x()) << "\" cy=\"" << format_double(p.y()) << "\" rx=\""
        << format_double(r1) << "\" ry=\"" << format_double(r2) << "\" transform=\"rotate("
        << format_double(deg) << " " << format_double(p.x()) << " " << format_double(p.y())
        << ")\" fill=\"hsl(" << hue << ",100%,50%)\" data-fa=\"" << format_double(fa) << "\"/>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

void export_glyphs(const TensorGrid& field, double c, const std::filesystem::path& path, const std::string& format,
                   std::size_t slice) {
  if (format == "glyph-json") write_text(path, format_glyph_json(field, c));
  else if (format == "svg-slice") write_text(path, format_glyph_svg(field, c, slice));
  else fail(ErrorKind::usage, "unknown glyph format \"" + format + "\" (expected glyph-json or svg-slice)");
}

}  // namespace gwpdti
