#pragma once

// Patch-grid descriptors. The built-in descriptor is a 4x4 grid of 8-bin
// gradient-orientation histograms (128 dims), L2-normalised, or all-zero for
// textureless patches. Externally computed descriptors load through the same
// DescriptorGrid type from ".pdsc" files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "maskpipe/binary_io.hpp"
#include "maskpipe/error.hpp"
#include "maskpipe/imaging.hpp"

namespace maskpipe {

struct PatchGridConfig {
  int patch_size = 32;
  int stride = 32;
  int descriptor_dim = 128;

  void validate() const {
    if (patch_size < 4) throw Error("patch_size must be >= 4, got " + std::to_string(patch_size));
    if (stride < 1) throw Error("stride must be >= 1, got " + std::to_string(stride));
    if (descriptor_dim < 1) throw Error("descriptor_dim must be >= 1");
  }

  /// Number of patch positions along an axis of `extent` pixels.
  [[nodiscard]] int cells_along(int extent) const noexcept {
    return extent < patch_size ? 0 : (extent - patch_size) / stride + 1;
  }
};

/// Patch centre in pixel coordinates (x = column, y = row).
struct PixelCenter {
  std::uint16_t x = 0;
  std::uint16_t y = 0;

  friend bool operator==(const PixelCenter&, const PixelCenter&) = default;
};

/// Row-major (grid_h rows of grid_w cells) list of `dim`-dimensional descriptors.
class DescriptorGrid {
 public:
  DescriptorGrid() = default;
  DescriptorGrid(int grid_w, int grid_h, int dim)
      : grid_w_(grid_w), grid_h_(grid_h), dim_(dim),
        values_(static_cast<std::size_t>(grid_w) * grid_h * dim, 0.0f),
        centers_(static_cast<std::size_t>(grid_w) * grid_h) {
    if (grid_w < 0 || grid_h < 0 || dim < 1) throw Error("invalid descriptor grid shape");
  }

  [[nodiscard]] int grid_w() const noexcept { return grid_w_; }
  [[nodiscard]] int grid_h() const noexcept { return grid_h_; }
  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t cell_count() const noexcept { return centers_.size(); }
  [[nodiscard]] std::size_t cell_index(int i, int j) const noexcept {
    return static_cast<std::size_t>(i) * grid_w_ + j;
  }

  [[nodiscard]] std::span<const float> descriptor(std::size_t cell) const noexcept {
    return {values_.data() + cell * dim_, static_cast<std::size_t>(dim_)};
  }
  [[nodiscard]] std::span<float> descriptor(std::size_t cell) noexcept {
    return {values_.data() + cell * dim_, static_cast<std::size_t>(dim_)};
  }
  [[nodiscard]] std::span<const float> descriptor(int i, int j) const noexcept {
    return descriptor(cell_index(i, j));
  }

  [[nodiscard]] bool is_zero(std::size_t cell) const noexcept {
    for (float v : descriptor(cell))
      if (v != 0.0f) return false;
    return true;
  }

  [[nodiscard]] PixelCenter& center(std::size_t cell) noexcept { return centers_[cell]; }
  [[nodiscard]] const PixelCenter& center(std::size_t cell) const noexcept { return centers_[cell]; }

  [[nodiscard]] const std::vector<float>& values() const noexcept { return values_; }
  [[nodiscard]] std::vector<float>& values() noexcept { return values_; }
  [[nodiscard]] const std::vector<PixelCenter>& centers() const noexcept { return centers_; }

  friend bool operator==(const DescriptorGrid&, const DescriptorGrid&) = default;

 private:
  int grid_w_ = 0;
  int grid_h_ = 0;
  int dim_ = 1;
  std::vector<float> values_;
  std::vector<PixelCenter> centers_;
};

inline constexpr int kBuiltinDescriptorDim = 128;

namespace detail {

inline void describe_patch(const std::vector<double>& luma, int img_w, int x0, int y0, int patch,
                           std::span<float> out) {
  constexpr int kBlocks = 4;
  constexpr int kBins = 8;
  double hist[kBlocks * kBlocks * kBins] = {};
  double energy = 0.0;
  const int x1 = x0 + patch - 1;
  const int y1 = y0 + patch - 1;
  auto at = [&](int y, int x) { return luma[static_cast<std::size_t>(y) * img_w + x]; };
  for (int y = y0; y <= y1; ++y) {
    const int yu = y > y0 ? y - 1 : y;
    const int yd = y < y1 ? y + 1 : y;
    const int by = (y - y0) * kBlocks / patch;
    for (int x = x0; x <= x1; ++x) {
      const int xl = x > x0 ? x - 1 : x;
      const int xr = x < x1 ? x + 1 : x;
      const double gx = (at(y, xr) - at(y, xl)) / (xr - xl);
      const double gy = (at(yd, x) - at(yu, x)) / (yd - yu);
      const double mag2 = gx * gx + gy * gy;
      if (mag2 == 0.0) continue;
      energy += mag2;
      const double theta = std::atan2(gy, gx) + std::numbers::pi;  // [0, 2pi]
      int bin = static_cast<int>(theta * (kBins / (2.0 * std::numbers::pi)));
      if (bin >= kBins) bin = 0;
      const int bx = (x - x0) * kBlocks / patch;
      hist[(by * kBlocks + bx) * kBins + bin] += std::sqrt(mag2);
    }
  }
  if (energy < 1e-6) {
    std::fill(out.begin(), out.end(), 0.0f);
    return;
  }
  double norm2 = 0.0;
  for (double h : hist) norm2 += h * h;
  const double inv = 1.0 / std::sqrt(norm2);
  for (int d = 0; d < kBlocks * kBlocks * kBins; ++d) out[d] = static_cast<float>(hist[d] * inv);
}

}  // namespace detail

/// Built-in 128-d descriptors on the patch grid implied by `cfg`.
[[nodiscard]] inline DescriptorGrid extract_descriptors(const Image& image, const PatchGridConfig& cfg) {
  cfg.validate();
  if (cfg.descriptor_dim != kBuiltinDescriptorDim) {
    throw Error("built-in descriptor is 128-d; descriptor_dim " + std::to_string(cfg.descriptor_dim) +
                " requires external descriptors");
  }
  if (image.width() < cfg.patch_size || image.height() < cfg.patch_size) {
    throw Error("image " + image.shape() + " smaller than one " + std::to_string(cfg.patch_size) + " px patch");
  }
  const int gw = cfg.cells_along(image.width());
  const int gh = cfg.cells_along(image.height());
  std::vector<double> luma(image.pixel_count());
  for (int i = 0; i < image.height(); ++i)
    for (int j = 0; j < image.width(); ++j)
      luma[static_cast<std::size_t>(i) * image.width() + j] = image.luma(i, j);

  DescriptorGrid grid(gw, gh, kBuiltinDescriptorDim);
  for (int r = 0; r < gh; ++r) {
    for (int c = 0; c < gw; ++c) {
      const std::size_t cell = grid.cell_index(r, c);
      const int x0 = c * cfg.stride;
      const int y0 = r * cfg.stride;
      detail::describe_patch(luma, image.width(), x0, y0, cfg.patch_size, grid.descriptor(cell));
      grid.center(cell) = {static_cast<std::uint16_t>(x0 + cfg.patch_size / 2),
                           static_cast<std::uint16_t>(y0 + cfg.patch_size / 2)};
    }
  }
  return grid;
}

/// Euclidean (L2) distance.
[[nodiscard]] inline double descriptor_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error("descriptor_distance: dim mismatch " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = static_cast<double>(a[d]) - b[d];
    s += diff * diff;
  }
  return std::sqrt(s);
}

// ---- .pdsc -----------------------------------------------------------------
// "PDSC", u32 version=1, W_p, H_p, D_p, W_p*H_p*D_p f32, then W_p*H_p (u16 x, u16 y).

inline constexpr std::uint32_t kPdscVersion = 1;

[[nodiscard]] inline std::vector<std::uint8_t> encode_pdsc(const DescriptorGrid& grid) {
  binio::Writer w;
  w.magic("PDSC");
  w.u32(kPdscVersion);
  w.u32(static_cast<std::uint32_t>(grid.grid_w()));
  w.u32(static_cast<std::uint32_t>(grid.grid_h()));
  w.u32(static_cast<std::uint32_t>(grid.dim()));
  for (float v : grid.values()) w.f32(v);
  for (const auto& c : grid.centers()) {
    w.u16(c.x);
    w.u16(c.y);
  }
  return w.bytes();
}

inline void write_pdsc(const std::filesystem::path& path, const DescriptorGrid& grid) {
  binio::save_bytes(path, encode_pdsc(grid));
}

[[nodiscard]] inline DescriptorGrid decode_pdsc(binio::Reader& r) {
  r.expect_magic("PDSC");
  const auto version = r.u32("version");
  if (version != kPdscVersion) r.fail("unsupported version " + std::to_string(version));
  const auto gw = r.u32("grid width");
  const auto gh = r.u32("grid height");
  const auto dim = r.u32("descriptor dim");
  if (dim == 0) r.fail("descriptor dim must be >= 1");
  if (gw > 65535 || gh > 65535 || dim > 65535) r.fail("implausible dimensions");
  const std::uint64_t cells = static_cast<std::uint64_t>(gw) * gh;
  r.require(cells * dim, 4, "descriptor data");
  DescriptorGrid grid(static_cast<int>(gw), static_cast<int>(gh), static_cast<int>(dim));
  for (auto& v : grid.values()) v = r.f32("descriptor data");
  r.require(cells, 4, "patch centers");
  for (std::size_t c = 0; c < cells; ++c) {
    grid.center(c).x = r.u16("center x");
    grid.center(c).y = r.u16("center y");
  }
  r.expect_end();
  return grid;
}

[[nodiscard]] inline DescriptorGrid read_pdsc(const std::filesystem::path& path) {
  auto r = binio::Reader::from_file(path);
  return decode_pdsc(r);
}

}  // namespace maskpipe
