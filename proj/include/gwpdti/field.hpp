#pragma once

// Regular grids of diffusion tensors, the downsample-by-two holdout split,
// and the JSON field file format.

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gwpdti/spd.hpp"

namespace gwpdti {

using Dims = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;

struct SiteIndex {
  std::size_t x = 0, y = 0, z = 0;
  friend bool operator==(const SiteIndex&, const SiteIndex&) = default;
};

/// Row-major grid with x varying fastest. 2D fields use nz = 1.
class TensorGrid {
 public:
  TensorGrid() = default;
  /// Throws ErrorKind::validation when the invariants do not hold.
  TensorGrid(Dims dims, Spacing spacing, std::vector<SymTensor3> tensors,
             std::optional<std::vector<bool>> mask = std::nullopt);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return tensors_.size(); }

  const std::vector<SymTensor3>& tensors() const { return tensors_; }
  const SymTensor3& at(std::size_t flat) const { return tensors_.at(flat); }
  const SymTensor3& at(const SiteIndex& s) const { return tensors_.at(flat_index(s)); }
  void set(std::size_t flat, const SymTensor3& t) { tensors_.at(flat) = t; }

  const std::optional<std::vector<bool>>& mask() const { return mask_; }
  bool valid(std::size_t flat) const { return !mask_ || (*mask_)[flat]; }
  std::vector<std::size_t> valid_sites() const;

  std::size_t flat_index(const SiteIndex& s) const;
  SiteIndex site_index(std::size_t flat) const;
  /// Number of axes with more than one site.
  int active_axes() const;

 private:
  Dims dims_{0, 0, 0};
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<SymTensor3> tensors_;
  std::optional<std::vector<bool>> mask_;
};

/// Position in mm: index * spacing, origin at the first site.
Vec3 site_coordinates(const TensorGrid& grid, const SiteIndex& index);
Vec3 site_coordinates(const TensorGrid& grid, std::size_t flat);

/// Flat indices into the full-resolution grid.
struct HoldoutSplit {
  Dims full_dims{0, 0, 0};
  std::vector<std::size_t> kept;
  std::vector<std::size_t> held_out;
};

struct Downsampled {
  TensorGrid low_res;
  HoldoutSplit split;
};

/// Keeps every site whose indices are all even. The low-res grid has
/// ceil(n/2) sites per axis and doubled spacing, so kept sites keep their
/// physical coordinates. Throws ErrorKind::validation when nothing would
/// be held out.
Downsampled downsample_by_two(const TensorGrid& grid);

TensorGrid read_field(const std::filesystem::path& path);
void write_field(const TensorGrid& grid, const std::filesystem::path& path);

TensorGrid parse_field(const std::string& text);
std::string format_field(const TensorGrid& grid);

std::string format_split(const HoldoutSplit& split);
HoldoutSplit parse_split(const std::string& text);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

/// Line number (1-based) of a byte offset, for parse diagnostics.
std::size_t line_of_offset(const std::string& text, std::size_t offset);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gwpdti
