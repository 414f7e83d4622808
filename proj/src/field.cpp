#include "gwpdti/field.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gwpdti/errors.hpp"

namespace gwpdti {

using nlohmann::json;

TensorGrid::TensorGrid(Dims dims, Spacing spacing, std::vector<SymTensor3> tensors,
                       std::optional<std::vector<bool>> mask)
    : dims_(dims), spacing_(spacing), tensors_(std::move(tensors)), mask_(std::move(mask)) {
  for (int a = 0; a < 3; ++a) {
    if (dims_[a] == 0) fail(ErrorKind::validation, "grid dimension must be at least 1");
    if (!(spacing_[a] > 0.0) || !std::isfinite(spacing_[a]))
      fail(ErrorKind::validation, "grid spacing must be strictly positive");
  }
  const std::size_t n = dims_[0] * dims_[1] * dims_[2];
  if (tensors_.size() != n) {
    std::ostringstream msg;
    msg << "grid has " << tensors_.size() << " tensors but dims imply " << n;
    fail(ErrorKind::validation, msg.str());
  }
  if (mask_ && mask_->size() != n) {
    std::ostringstream msg;
    msg << "mask has " << mask_->size() << " entries but dims imply " << n;
    fail(ErrorKind::validation, msg.str());
  }
}

std::vector<std::size_t> TensorGrid::valid_sites() const {
  std::vector<std::size_t> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i)
    if (valid(i)) out.push_back(i);
  return out;
}

std::size_t TensorGrid::flat_index(const SiteIndex& s) const {
  if (s.x >= dims_[0] || s.y >= dims_[1] || s.z >= dims_[2]) {
    std::ostringstream msg;
    msg << "site index (" << s.x << "," << s.y << "," << s.z << ") outside grid " << dims_[0]
        << "x" << dims_[1] << "x" << dims_[2];
    fail(ErrorKind::invalid_input, msg.str());
  }
  return s.x + dims_[0] * (s.y + dims_[1] * s.z);
}

SiteIndex TensorGrid::site_index(std::size_t flat) const {
  if (flat >= size()) fail(ErrorKind::invalid_input, "flat site index out of range");
  return {flat % dims_[0], (flat / dims_[0]) % dims_[1], flat / (dims_[0] * dims_[1])};
}

int TensorGrid::active_axes() const {
  int n = 0;
  for (auto d : dims_) n += d > 1 ? 1 : 0;
  return n;
}

Vec3 site_coordinates(const TensorGrid& grid, const SiteIndex& index) {
  (void)grid.flat_index(index);  // range check
  const auto& sp = grid.spacing();
  return {static_cast<double>(index.x) * sp[0], static_cast<double>(index.y) * sp[1],
          static_cast<double>(index.z) * sp[2]};
}

Vec3 site_coordinates(const TensorGrid& grid, std::size_t flat) {
  return site_coordinates(grid, grid.site_index(flat));
}

Downsampled downsample_by_two(const TensorGrid& grid) {
  const Dims& d = grid.dims();
  if (d[0] * d[1] * d[2] <= 1)
    fail(ErrorKind::validation, "grid too small to downsample: no site would be held out");

  Dims low{(d[0] + 1) / 2, (d[1] + 1) / 2, (d[2] + 1) / 2};
  Spacing sp = grid.spacing();
  for (int a = 0; a < 3; ++a) {
    // A singleton axis stays singleton; its spacing is irrelevant but doubled
    // for uniformity.
    sp[a] *= 2.0;
  }

  std::vector<SymTensor3> tensors;
  tensors.reserve(low[0] * low[1] * low[2]);
  std::optional<std::vector<bool>> mask;
  if (grid.mask()) mask.emplace();

  HoldoutSplit split;
  split.full_dims = d;
  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x) {
        const std::size_t flat = grid.flat_index({x, y, z});
        const bool even = x % 2 == 0 && y % 2 == 0 && z % 2 == 0;
        if (even) {
          tensors.push_back(grid.at(flat));
          if (mask) mask->push_back(grid.valid(flat));
        }
        if (!grid.valid(flat)) continue;
        (even ? split.kept : split.held_out).push_back(flat);
      }

  return {TensorGrid(low, sp, std::move(tensors), std::move(mask)), std::move(split)};
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  // Keep a JSON-number that reads back as floating point.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset; ++i)
    if (text[i] == '\n') ++line;
  return line;
}

std::string format_field(const TensorGrid& grid) {
  std::ostringstream o;
  const auto& d = grid.dims();
  const auto& sp = grid.spacing();
  o << "{\n";
  o << "  \"version\": 1,\n";
  o << "  \"units\": \"mm^2/s\",\n";
  o << "  \"dims\": [" << d[0] << ", " << d[1] << ", " << d[2] << "],\n";
  o << "  \"spacing\": [" << format_double(sp[0]) << ", " << format_double(sp[1]) << ", "
    << format_double(sp[2]) << "],\n";
  o << "  \"order\": \"row-major-x-fastest\",\n";
  o << "  \"tensors\": [";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    o << (i ? ",\n    [" : "\n    [");
    const auto& c = grid.at(i).components();
    for (std::size_t k = 0; k < 6; ++k) o << (k ? ", " : "") << format_double(c[k]);
    o << "]";
  }
  o << "\n  ]";
  if (grid.mask()) {
    o << ",\n  \"mask\": [";
    const auto& m = *grid.mask();
    for (std::size_t i = 0; i < m.size(); ++i) o << (i ? "," : "") << (m[i] ? 1 : 0);
    o << "]";
  }
  o << "\n}\n";
  return o.str();
}

namespace {

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::ostringstream msg;
    msg << what << ": line " << line_of_offset(text, e.byte) << ": " << e.what();
    fail(ErrorKind::parse, msg.str());
  }
}

template <typename T>
T get_field(const json& j, const char* key, const char* what) {
  if (!j.contains(key)) fail(ErrorKind::parse, std::string(what) + ": missing field \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string(what) + ": field \"" + key + "\": " + e.what());
  }
}

}  // namespace

TensorGrid parse_field(const std::string& text) {
  const json j = parse_json(text, "field file");
  if (!j.is_object()) fail(ErrorKind::parse, "field file: top level must be an object");
  const int version = get_field<int>(j, "version", "field file");
  if (version != 1) fail(ErrorKind::parse, "field file: unsupported version " + std::to_string(version));
  if (j.contains("order") && j.at("order") != "row-major-x-fastest")
    fail(ErrorKind::parse, "field file: unsupported order");

  const auto dims_v = get_field<std::vector<long long>>(j, "dims", "field file");
  if (dims_v.size() != 3) fail(ErrorKind::parse, "field file: \"dims\" must have 3 entries");
  Dims dims{};
  for (int a = 0; a < 3; ++a) {
    if (dims_v[a] < 0) fail(ErrorKind::validation, "field file: negative dimension");
    dims[a] = static_cast<std::size_t>(dims_v[a]);
  }
  Spacing spacing{1.0, 1.0, 1.0};
  if (j.contains("spacing")) {
    const auto sp = get_field<std::vector<double>>(j, "spacing", "field file");
    if (sp.size() != 3) fail(ErrorKind::parse, "field file: \"spacing\" must have 3 entries");
    spacing = {sp[0], sp[1], sp[2]};
  }

  if (!j.contains("tensors") || !j.at("tensors").is_array())
    fail(ErrorKind::parse, "field file: missing array \"tensors\"");
  const auto& jt = j.at("tensors");
  std::vector<SymTensor3> tensors;
  tensors.reserve(jt.size());
  for (std::size_t i = 0; i < jt.size(); ++i) {
    const auto& row = jt[i];
    std::array<double, 6> c{};
    bool ok = row.is_array() && row.size() == 6;
    for (std::size_t k = 0; ok && k < 6; ++k) {
      ok = row[k].is_number();
      if (ok) c[k] = row[k].get<double>();
    }
    if (!ok) {
      fail(ErrorKind::parse,
           "field file: tensors[" + std::to_string(i) + "]: expected 6 numbers [dxx,dyy,dzz,dxy,dxz,dyz]");
    }
    try {
      tensors.emplace_back(c);
    } catch (const Error&) {
      fail(ErrorKind::parse, "field file: tensors[" + std::to_string(i) + "]: non-finite component");
    }
  }

  std::optional<std::vector<bool>> mask;
  if (j.contains("mask") && !j.at("mask").is_null()) {
    const auto m = get_field<std::vector<int>>(j, "mask", "field file");
    mask.emplace();
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] != 0 && m[i] != 1)
        fail(ErrorKind::parse, "field file: mask[" + std::to_string(i) + "] must be 0 or 1");
      mask->push_back(m[i] == 1);
    }
  }

  try {
    return TensorGrid(dims, spacing, std::move(tensors), std::move(mask));
  } catch (const Error& e) {
    fail(ErrorKind::validation, std::string("field file: ") + e.what());
  }
}

std::string format_split(const HoldoutSplit& split) {
  json j;
  j["version"] = 1;
  j["full_dims"] = split.full_dims;
  j["kept"] = split.kept;
  j["held_out"] = split.held_out;
  return j.dump() + "\n";
}

HoldoutSplit parse_split(const std::string& text) {
  const json j = parse_json(text, "split file");
  HoldoutSplit s;
  const auto d = get_field<std::vector<std::size_t>>(j, "full_dims", "split file");
  if (d.size() != 3) fail(ErrorKind::parse, "split file: \"full_dims\" must have 3 entries");
  s.full_dims = {d[0], d[1], d[2]};
  s.kept = get_field<std::vector<std::size_t>>(j, "kept", "split file");
  s.held_out = get_field<std::vector<std::size_t>>(j, "held_out", "split file");
  const std::size_t n = d[0] * d[1] * d[2];
  for (auto v : s.kept)
    if (v >= n) fail(ErrorKind::validation, "split file: kept index out of range");
  for (auto v : s.held_out)
    if (v >= n) fail(ErrorKind::validation, "split file: held-out index out of range");
  return s;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

TensorGrid read_field(const std::filesystem::path& path) {
  try {
    return parse_field(read_text(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::io) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_field(const TensorGrid& grid, const std::filesystem::path& path) {
  write_text(path, format_field(grid));
}

}  // namespace gwpdti
