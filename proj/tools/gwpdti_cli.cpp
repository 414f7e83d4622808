#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gwpdti.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 1;

// Thrown to unwind with the status of a failed library call.
struct ApiFailure {
  gwpdti_status status;
};

void check(gwpdti_status s) {
  if (s != GWPDTI_OK) throw ApiFailure{s};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Field = std::unique_ptr<gwpdti_field, Deleter<gwpdti_field, gwpdti_field_free>>;
using Split = std::unique_ptr<gwpdti_split, Deleter<gwpdti_split, gwpdti_split_free>>;
using Archive = std::unique_ptr<gwpdti_archive, Deleter<gwpdti_archive, gwpdti_archive_free>>;
using Metrics = std::unique_ptr<gwpdti_metrics, Deleter<gwpdti_metrics, gwpdti_metrics_free>>;
using Config = std::unique_ptr<gwpdti_config, Deleter<gwpdti_config, gwpdti_config_free>>;

// Takes ownership of a library-allocated string.
std::string take(char* s) {
  std::string out = s ? s : "";
  gwpdti_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "gwpdti: cannot read " << path << "\n";
    throw ApiFailure{GWPDTI_DATA};
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) {
    std::cerr << "gwpdti: cannot write " << path.string() << "\n";
    throw ApiFailure{GWPDTI_DATA};
  }
}

Field load_field(const std::string& path) {
  gwpdti_field* f = nullptr;
  check(gwpdti_field_read(path.c_str(), &f));
  return Field(f);
}

Split load_split(const std::string& path) {
  gwpdti_split* s = nullptr;
  check(gwpdti_split_read(path.c_str(), &s));
  return Split(s);
}

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::string out = ".";
};

void add_config_options(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "seed; overrides the config");
  sub->add_option("--preset", c.preset, "quick | paper | crossing")
      ->check(CLI::IsMember({"quick", "paper", "crossing"}));
}

Config make_config(const Common& c) {
  std::string text;
  if (!c.config_path.empty()) text = read_file(c.config_path);
  gwpdti_config* cfg = nullptr;
  check(gwpdti_config_create(c.preset.empty() ? nullptr : c.preset.c_str(), text.empty() ? nullptr : text.c_str(),
                             &cfg));
  Config out(cfg);
  if (c.seed) check(gwpdti_config_set_seed(out.get(), *c.seed));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion tensor field interpolation with generalized Wishart processes"};
  app.set_version_flag("--version", std::string(gwpdti_version()));
  app.require_subcommand(1);

  Common common;
  std::string input, split_path, archive_path, truth_path, method = "gwp", glyph_format = "glyph-json";
  bool with_dwi = false;
  double glyph_c = 0.0;
  std::size_t slice = 0;
  const auto method_check = CLI::IsMember({"gwp", "linear", "logeuclid"});

  auto* synth = app.add_subcommand("synth", "generate a synthetic ground-truth field -> truth.json");
  add_config_options(synth, common);
  synth->add_option("--out", common.out, "output directory");
  synth->add_flag("--dwi", with_dwi, "also write the simulated acquisition of the field -> dwi.json");

  auto* estimate = app.add_subcommand("estimate-dti", "fit tensors to a DWI volume -> field.json");
  estimate->add_option("dwi", input, "DWI volume (JSON)")->required()->check(CLI::ExistingFile);
  estimate->add_option("--out", common.out, "output directory");

  auto* down = app.add_subcommand("downsample", "keep even-index sites -> lowres.json, split.json");
  down->add_option("field", input, "full-resolution field")->required()->check(CLI::ExistingFile);
  down->add_option("--out", common.out, "output directory");

  auto* fit = app.add_subcommand("fit", "run the MCMC on a low-resolution field -> posterior.jsonl");
  fit->add_option("lowres", input, "low-resolution field")->required()->check(CLI::ExistingFile);
  add_config_options(fit, common);
  fit->add_option("--out", common.out, "output directory");

  auto* interp = app.add_subcommand("interp", "predict the full-resolution field -> pred_<method>.json");
  interp->add_option("lowres", input, "low-resolution field")->required()->check(CLI::ExistingFile);
  interp->add_option("--split", split_path, "split file")->required()->check(CLI::ExistingFile);
  interp->add_option("--archive", archive_path, "posterior archive (gwp)")->check(CLI::ExistingFile);
  interp->add_option("--method", method, "gwp | linear | logeuclid")->check(method_check);
  add_config_options(interp, common);
  interp->add_option("--out", common.out, "output directory");

  std::string eval_out;
  auto* eval = app.add_subcommand("eval", "held-out errors of a prediction -> metrics CSV");
  eval->add_option("predicted", input, "full-resolution prediction")->required()->check(CLI::ExistingFile);
  eval->add_option("--truth", truth_path, "ground-truth field")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split_path, "split file")->required()->check(CLI::ExistingFile);
  eval->add_option("--method", method, "method label for the rows")->check(method_check);
  eval->add_option("--out", eval_out, "output directory for metrics.csv (default: stdout only)");

  auto* glyphs = app.add_subcommand("glyphs", "export ellipsoid glyphs of a field");
  glyphs->add_option("field", input, "field file")->required()->check(CLI::ExistingFile);
  glyphs->add_option("--format", glyph_format, "glyph-json | svg-slice")
      ->check(CLI::IsMember({"glyph-json", "svg-slice"}));
  glyphs->add_option("--c", glyph_c, "scale constant (default: automatic)")->check(CLI::PositiveNumber);
  glyphs->add_option("--slice", slice, "z slice for svg-slice");
  glyphs->add_option("--out", common.out, "output directory");

  auto* pipeline = app.add_subcommand("pipeline", "run the full experiment -> metrics.csv and all artifacts");
  add_config_options(pipeline, common);
  pipeline->add_option("--out", common.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  const fs::path out(common.out);
  try {
    if (synth->parsed()) {
      auto cfg = make_config(common);
      gwpdti_field* f = nullptr;
      check(gwpdti_synth(cfg.get(), &f));
      Field field(f);
      fs::create_directories(out);
      check(gwpdti_field_write(field.get(), (out / "truth.json").c_str()));
      if (with_dwi) {
        char* dwi = nullptr;
        check(gwpdti_simulate_dwi(field.get(), cfg.get(), &dwi));
        write_file(out / "dwi.json", take(dwi));
      }
    } else if (estimate->parsed()) {
      const auto text = read_file(input);
      gwpdti_field* f = nullptr;
      check(gwpdti_estimate_dti(text.c_str(), &f));
      Field field(f);
      fs::create_directories(out);
      check(gwpdti_field_write(field.get(), (out / "field.json").c_str()));
    } else if (down->parsed()) {
      auto field = load_field(input);
      gwpdti_field* lr = nullptr;
      gwpdti_split* sp = nullptr;
      check(gwpdti_downsample(field.get(), &lr, &sp));
      Field low(lr);
      Split split(sp);
      fs::create_directories(out);
      check(gwpdti_field_write(low.get(), (out / "lowres.json").c_str()));
      check(gwpdti_split_write(split.get(), (out / "split.json").c_str()));
      std::size_t kept = 0, held = 0;
      check(gwpdti_split_counts(split.get(), &kept, &held));
      std::cout << "kept " << kept << ", held out " << held << "\n";
    } else if (fit->parsed()) {
      auto cfg = make_config(common);
      auto low = load_field(input);
      gwpdti_archive* a = nullptr;
      check(gwpdti_fit(low.get(), cfg.get(), &a));
      Archive archive(a);
      fs::create_directories(out);
      check(gwpdti_archive_write(archive.get(), (out / "posterior.jsonl").c_str()));
      std::size_t n = 0;
      check(gwpdti_archive_size(archive.get(), &n));
      std::cout << n << " posterior samples\n";
    } else if (interp->parsed()) {
      auto cfg = make_config(common);
      auto low = load_field(input);
      auto split = load_split(split_path);
      Archive archive;
      if (!archive_path.empty()) {
        gwpdti_archive* a = nullptr;
        check(gwpdti_archive_read(archive_path.c_str(), &a));
        archive.reset(a);
      } else if (method == "gwp") {
        std::cerr << "gwpdti: --method gwp needs --archive\n";
        return kExitUsage;
      }
      gwpdti_field* p = nullptr;
      char* unc = nullptr;
      check(gwpdti_interp(method.c_str(), low.get(), split.get(), archive.get(), cfg.get(), &p, &unc));
      Field pred(p);
      const std::string sidecar = take(unc);
      fs::create_directories(out);
      check(gwpdti_field_write(pred.get(), (out / ("pred_" + method + ".json")).c_str()));
      if (!sidecar.empty()) write_file(out / ("uncertainty_" + method + ".json"), sidecar);
    } else if (eval->parsed()) {
      auto pred = load_field(input);
      auto truth = load_field(truth_path);
      auto split = load_split(split_path);
      gwpdti_metrics* m = nullptr;
      check(gwpdti_eval(method.c_str(), pred.get(), truth.get(), split.get(), &m));
      Metrics metrics(m);
      char* csv = nullptr;
      check(gwpdti_metrics_csv(metrics.get(), &csv));
      const std::string text = take(csv);
      if (!eval_out.empty()) write_file(fs::path(eval_out) / "metrics.csv", text);
      std::cout << text;
    } else if (glyphs->parsed()) {
      auto field = load_field(input);
      const auto name = glyph_format == "glyph-json" ? "glyphs.json" : "glyphs.svg";
      fs::create_directories(out);
      check(gwpdti_glyphs_export(field.get(), glyph_c, (out / name).c_str(), glyph_format.c_str(), slice));
    } else if (pipeline->parsed()) {
      auto cfg = make_config(common);
      gwpdti_metrics* m = nullptr;
      check(gwpdti_pipeline_run(cfg.get(), out.c_str(), &m));
      Metrics metrics(m);
      char* csv = nullptr;
      check(gwpdti_metrics_csv(metrics.get(), &csv));
      std::cout << take(csv);
    }
  } catch (const ApiFailure& f) {
    const char* msg = gwpdti_last_error();
    if (msg && *msg) std::cerr << "gwpdti: " << msg << "\n";
    switch (f.status) {
      case GWPDTI_USAGE:
      case GWPDTI_DATA:
      case GWPDTI_NUMERICAL: return static_cast<int>(f.status);
      default: return kExitInternal;
    }
  } catch (const fs::filesystem_error& e) {
    std::cerr << "gwpdti: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
