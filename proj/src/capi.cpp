#include "gwpdti.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "gwpdti/baselines.hpp"
#include "gwpdti/dmri.hpp"
#include "gwpdti/errors.hpp"
#include "gwpdti/field.hpp"
#include "gwpdti/harness.hpp"
#include "gwpdti/inference.hpp"
#include "gwpdti/rng.hpp"
#include "gwpdti/version.hpp"

struct gwpdti_field {
  gwpdti::TensorGrid grid;
};
struct gwpdti_split {
  gwpdti::HoldoutSplit split;
};
struct gwpdti_archive {
  gwpdti::PosteriorSamples samples;
};
struct gwpdti_metrics {
  gwpdti::MetricsTable table;
};
struct gwpdti_config {
  gwpdti::ExperimentConfig config;
};

namespace {

thread_local std::string g_last_error;

gwpdti_status status_of(gwpdti::ErrorKind k) {
  using gwpdti::ErrorKind;
  switch (k) {
    case ErrorKind::usage: return GWPDTI_USAGE;
    case ErrorKind::conditioning:
    case ErrorKind::numerical:
    case ErrorKind::estimation: return GWPDTI_NUMERICAL;
    case ErrorKind::invalid_input:
    case ErrorKind::domain:
    case ErrorKind::parse:
    case ErrorKind::validation:
    case ErrorKind::provenance:
    case ErrorKind::io: return GWPDTI_DATA;
  }
  return GWPDTI_INTERNAL;
}

template <typename F>
gwpdti_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return GWPDTI_OK;
  } catch (const gwpdti::Error& e) {
    g_last_error = std::string(gwpdti::to_string(e.kind())) + ": " + e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return GWPDTI_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return GWPDTI_INTERNAL;
  } catch (...) {
    g_last_error = "internal error";
    return GWPDTI_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) gwpdti::fail(gwpdti::ErrorKind::usage, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

constexpr std::uint64_t kDwiSeedTag = 0x64776920;

const gwpdti::ExperimentConfig& config_of(const gwpdti_config* c) {
  need(c, "config");
  return c->config;
}

}  // namespace

extern "C" {

const char* gwpdti_version(void) { return gwpdti::kVersion; }

const char* gwpdti_last_error(void) { return g_last_error.c_str(); }

void gwpdti_string_free(char* s) { std::free(s); }

gwpdti_status gwpdti_config_create(const char* preset, const char* json_text, gwpdti_config** out) {
  return guarded([&] {
    need(out, "out");
    auto cfg = gwpdti::ExperimentConfig::preset(preset ? preset : "quick");
    if (json_text) cfg = gwpdti::parse_experiment_config(json_text, cfg);
    cfg.validate();
    *out = new gwpdti_config{std::move(cfg)};
  });
}

gwpdti_status gwpdti_config_set_seed(gwpdti_config* c, uint64_t seed) {
  return guarded([&] {
    need(c, "config");
    c->config.seed = seed;
  });
}

gwpdti_status gwpdti_config_seed(const gwpdti_config* c, uint64_t* seed) {
  return guarded([&] {
    need(seed, "seed");
    *seed = config_of(c).seed;
  });
}

gwpdti_status gwpdti_config_format(const gwpdti_config* c, char** out) {
  return guarded([&] {
    need(out, "out");
    *out = dup_string(gwpdti::format_experiment_config(config_of(c)));
  });
}

void gwpdti_config_free(gwpdti_config* c) { delete c; }

gwpdti_status gwpdti_field_create(const size_t dims[3], const double spacing[3], const double* tensors,
                                  const uint8_t* mask, gwpdti_field** out) {
  return guarded([&] {
    need(dims, "dims");
    need(spacing, "spacing");
    need(tensors, "tensors");
    need(out, "out");
    const gwpdti::Dims d{dims[0], dims[1], dims[2]};
    const std::size_t n = d[0] * d[1] * d[2];
    std::vector<gwpdti::SymTensor3> ts;
    ts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* t = tensors + 6 * i;
      ts.emplace_back(t[0], t[1], t[2], t[3], t[4], t[5]);
    }
    std::optional<std::vector<bool>> m;
    if (mask) m = std::vector<bool>(mask, mask + n);
    *out = new gwpdti_field{gwpdti::TensorGrid(d, {spacing[0], spacing[1], spacing[2]}, std::move(ts), std::move(m))};
  });
}

gwpdti_status gwpdti_field_read(const char* path, gwpdti_field** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new gwpdti_field{gwpdti::read_field(path)};
  });
}

gwpdti_status gwpdti_field_parse(const char* text, gwpdti_field** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = new gwpdti_field{gwpdti::parse_field(text)};
  });
}

gwpdti_status gwpdti_field_write(const gwpdti_field* f, const char* path) {
  return guarded([&] {
    need(f, "field");
    need(path, "path");
    gwpdti::write_field(f->grid, path);
  });
}

gwpdti_status gwpdti_field_format(const gwpdti_field* f, char** out) {
  return guarded([&] {
    need(f, "field");
    need(out, "out");
    *out = dup_string(gwpdti::format_field(f->grid));
  });
}

gwpdti_status gwpdti_field_dims(const gwpdti_field* f, size_t dims[3]) {
  return guarded([&] {
    need(f, "field");
    need(dims, "dims");
    for (int a = 0; a < 3; ++a) dims[a] = f->grid.dims()[a];
  });
}

gwpdti_status gwpdti_field_tensor(const gwpdti_field* f, size_t flat_index, double out6[6]) {
  return guarded([&] {
    need(f, "field");
    need(out6, "out");
    if (flat_index >= f->grid.size())
      gwpdti::fail(gwpdti::ErrorKind::usage, "index " + std::to_string(flat_index) + " out of range");
    const auto c = f->grid.at(flat_index).components();
    for (int k = 0; k < 6; ++k) out6[k] = c[k];
  });
}

gwpdti_status gwpdti_field_checksum(const gwpdti_field* f, char** out) {
  return guarded([&] {
    need(f, "field");
    need(out, "out");
    *out = dup_string(gwpdti::field_checksum(f->grid));
  });
}

void gwpdti_field_free(gwpdti_field* f) { delete f; }

gwpdti_status gwpdti_synth(const gwpdti_config* c, gwpdti_field** out) {
  return guarded([&] {
    need(out, "out");
    const auto& cfg = config_of(c);
    *out = new gwpdti_field{gwpdti::generate_dataset(cfg.dataset, cfg.seed)};
  });
}

gwpdti_status gwpdti_simulate_dwi(const gwpdti_field* f, const gwpdti_config* c, char** out) {
  return guarded([&] {
    need(f, "field");
    need(out, "out");
    const auto& cfg = config_of(c);
    const auto& acq =
        cfg.dataset.kind == gwpdti::DatasetKind::crossing ? cfg.dataset.crossing.acq : cfg.dataset.smooth.acq;
    const auto seed = gwpdti::derive_seed(cfg.seed, kDwiSeedTag);
    *out = dup_string(gwpdti::format_dwi(gwpdti::simulate_dwi(f->grid, acq, seed)));
  });
}

gwpdti_status gwpdti_estimate_dti(const char* dwi_text, gwpdti_field** out) {
  return guarded([&] {
    need(dwi_text, "dwi text");
    need(out, "out");
    *out = new gwpdti_field{gwpdti::estimate_field(gwpdti::parse_dwi(dwi_text))};
  });
}

gwpdti_status gwpdti_downsample(const gwpdti_field* f, gwpdti_field** low_res, gwpdti_split** split) {
  return guarded([&] {
    need(f, "field");
    need(low_res, "low_res");
    need(split, "split");
    auto ds = gwpdti::downsample_by_two(f->grid);
    auto* lr = new gwpdti_field{std::move(ds.low_res)};
    try {
      *split = new gwpdti_split{std::move(ds.split)};
    } catch (...) {
      delete lr;
      throw;
    }
    *low_res = lr;
  });
}

gwpdti_status gwpdti_split_read(const char* path, gwpdti_split** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new gwpdti_split{gwpdti::parse_split(gwpdti::read_text(path))};
  });
}

gwpdti_status gwpdti_split_write(const gwpdti_split* s, const char* path) {
  return guarded([&] {
    need(s, "split");
    need(path, "path");
    gwpdti::write_text(path, gwpdti::format_split(s->split));
  });
}

gwpdti_status gwpdti_split_counts(const gwpdti_split* s, size_t* kept, size_t* held_out) {
  return guarded([&] {
    need(s, "split");
    if (kept) *kept = s->split.kept.size();
    if (held_out) *held_out = s->split.held_out.size();
  });
}

void gwpdti_split_free(gwpdti_split* s) { delete s; }

gwpdti_status gwpdti_fit(const gwpdti_field* low_res, const gwpdti_config* c, gwpdti_archive** out) {
  return guarded([&] {
    need(low_res, "low_res");
    need(out, "out");
    *out = new gwpdti_archive{gwpdti::run_chain(low_res->grid, gwpdti::chain_config(config_of(c)))};
  });
}

gwpdti_status gwpdti_archive_read(const char* path, gwpdti_archive** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new gwpdti_archive{gwpdti::parse_archive(gwpdti::read_text(path))};
  });
}

gwpdti_status gwpdti_archive_write(const gwpdti_archive* a, const char* path) {
  return guarded([&] {
    need(a, "archive");
    need(path, "path");
    gwpdti::write_text(path, gwpdti::format_archive(a->samples));
  });
}

gwpdti_status gwpdti_archive_size(const gwpdti_archive* a, size_t* n_samples) {
  return guarded([&] {
    need(a, "archive");
    need(n_samples, "n_samples");
    *n_samples = a->samples.samples.size();
  });
}

void gwpdti_archive_free(gwpdti_archive* a) { delete a; }

gwpdti_status gwpdti_interp(const char* method, const gwpdti_field* low_res, const gwpdti_split* split,
                            const gwpdti_archive* archive, const gwpdti_config* c, gwpdti_field** out,
                            char** uncertainty) {
  return guarded([&] {
    need(method, "method");
    need(low_res, "low_res");
    need(split, "split");
    need(out, "out");
    const auto opts = c ? gwpdti::predict_options(c->config) : gwpdti::PredictOptions{};
    auto p = gwpdti::predict_method(method, low_res->grid, split->split, archive ? &archive->samples : nullptr, opts);
    char* u = nullptr;
    if (uncertainty && p.uncertainty) u = dup_string(gwpdti::format_uncertainty(split->split.full_dims, *p.uncertainty));
    try {
      *out = new gwpdti_field{std::move(p.field)};
    } catch (...) {
      std::free(u);
      throw;
    }
    if (uncertainty) *uncertainty = u;
  });
}

gwpdti_status gwpdti_eval(const char* method, const gwpdti_field* predicted, const gwpdti_field* truth,
                          const gwpdti_split* split, gwpdti_metrics** out) {
  return guarded([&] {
    need(method, "method");
    need(predicted, "predicted");
    need(truth, "truth");
    need(split, "split");
    need(out, "out");
    const auto values = gwpdti::held_out_values(predicted->grid, split->split);
    *out = new gwpdti_metrics{gwpdti::evaluate(method, values, truth->grid, split->split)};
  });
}

gwpdti_status gwpdti_metrics_csv(const gwpdti_metrics* m, char** out) {
  return guarded([&] {
    need(m, "metrics");
    need(out, "out");
    *out = dup_string(gwpdti::format_metrics_csv(m->table));
  });
}

gwpdti_status gwpdti_metrics_merge(gwpdti_metrics* into, const gwpdti_metrics* from) {
  return guarded([&] {
    need(into, "into");
    need(from, "from");
    into->table.insert(into->table.end(), from->table.begin(), from->table.end());
  });
}

gwpdti_status gwpdti_metrics_get(const gwpdti_metrics* m, const char* method, const char* metric, double* mean,
                                 double* std, size_t* n, size_t* spd_violations) {
  return guarded([&] {
    need(m, "metrics");
    need(method, "method");
    need(metric, "metric");
    const auto* row = gwpdti::find_row(m->table, method, metric);
    if (!row) gwpdti::fail(gwpdti::ErrorKind::usage, std::string("no row for ") + method + "/" + metric);
    if (mean) *mean = row->mean;
    if (std) *std = row->std;
    if (n) *n = row->n;
    if (spd_violations) *spd_violations = row->spd_violations;
  });
}

void gwpdti_metrics_free(gwpdti_metrics* m) { delete m; }

gwpdti_status gwpdti_glyphs_export(const gwpdti_field* f, double c, const char* path, const char* format,
                                   size_t slice) {
  return guarded([&] {
    need(f, "field");
    need(path, "path");
    need(format, "format");
    const double scale = c > 0.0 ? c : gwpdti::auto_glyph_constant(f->grid);
    gwpdti::export_glyphs(f->grid, scale, path, format, slice);
  });
}

gwpdti_status gwpdti_glyphs_validate(const char* json_text, size_t* n_glyphs) {
  return guarded([&] {
    need(json_text, "json text");
    const auto n = gwpdti::validate_glyph_json(json_text);
    if (n_glyphs) *n_glyphs = n;
  });
}

gwpdti_status gwpdti_pipeline_run(const gwpdti_config* c, const char* out_dir, gwpdti_metrics** metrics) {
  return guarded([&] {
    const auto& cfg = config_of(c);
    auto r = gwpdti::run_experiment(cfg, out_dir ? std::filesystem::path(out_dir) : std::filesystem::path());
    if (metrics) *metrics = new gwpdti_metrics{std::move(r.metrics)};
  });
}

}  // extern "C"
