#pragma once

// Core grid types shared by every stage of the pipeline. All grids are
// row-major with (row i, column j, channel k) indexing.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "maskpipe/error.hpp"

namespace maskpipe {

/// Planar robot pose. Yaw in degrees.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  friend bool operator==(const Pose&, const Pose&) = default;
};

template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 1) {
      throw Error("invalid grid shape " + shape_string(width, height, channels));
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }
  Grid(int width, int height, int channels, std::vector<T> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width < 0 || height < 0 || channels < 1 ||
        data_.size() != static_cast<std::size_t>(width) * height * channels) {
      throw Error("grid data length " + std::to_string(data_.size()) + " does not match shape " +
                  shape_string(width, height, channels));
    }
  }

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] int channels() const noexcept { return channels_; }
  [[nodiscard]] std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * height_;
  }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] std::size_t index(int i, int j, int k = 0) const noexcept {
    return (static_cast<std::size_t>(i) * width_ + j) * channels_ + k;
  }
  [[nodiscard]] bool contains(int i, int j) const noexcept {
    return i >= 0 && j >= 0 && i < height_ && j < width_;
  }

  T& operator()(int i, int j, int k = 0) noexcept { return data_[index(i, j, k)]; }
  const T& operator()(int i, int j, int k = 0) const noexcept { return data_[index(i, j, k)]; }

  [[nodiscard]] std::vector<T>& data() noexcept { return data_; }
  [[nodiscard]] const std::vector<T>& data() const noexcept { return data_; }

  [[nodiscard]] std::string shape() const { return shape_string(width_, height_, channels_); }

  [[nodiscard]] bool same_plane(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

  static std::string shape_string(int w, int h, int c) {
    return std::to_string(w) + "x" + std::to_string(h) + "x" + std::to_string(c);
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

/// Intensities in [0,1]; 1 (gray) or 3 (RGB) channels.
class Image : public Grid<float> {
 public:
  Image() = default;
  Image(int width, int height, int channels = 1, float fill = 0.0f)
      : Grid<float>(width, height, channels, fill) {
    check_channels();
  }
  Image(int width, int height, int channels, std::vector<float> data)
      : Grid<float>(width, height, channels, std::move(data)) {
    check_channels();
  }

  std::string frame_id;
  std::optional<Pose> pose;

  /// Luma for RGB (0.299, 0.587, 0.114), the identity for gray.
  [[nodiscard]] float luma(int i, int j) const noexcept {
    const auto& self = *this;
    if (channels() == 1) return self(i, j);
    return 0.299f * self(i, j, 0) + 0.587f * self(i, j, 1) + 0.114f * self(i, j, 2);
  }

  [[nodiscard]] Image to_gray() const {
    Image out(width(), height(), 1);
    for (int i = 0; i < height(); ++i)
      for (int j = 0; j < width(); ++j) out(i, j) = luma(i, j);
    out.frame_id = frame_id;
    out.pose = pose;
    return out;
  }

 private:
  void check_channels() const {
    if (channels() != 1 && channels() != 3) {
      throw Error("image must have 1 or 3 channels, got " + std::to_string(channels()));
    }
  }
};

/// W x H x C activation tensor from an external network.
using FeatureMap = Grid<float>;

/// Single-channel grid of {0,1}.
class BinaryMask : public Grid<std::uint8_t> {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false)
      : Grid<std::uint8_t>(width, height, 1, fill ? 1 : 0) {}

  [[nodiscard]] bool test(int i, int j) const noexcept { return (*this)(i, j) != 0; }
  void set(int i, int j, bool v) noexcept { (*this)(i, j) = v ? 1 : 0; }

  [[nodiscard]] std::size_t count_ones() const noexcept {
    std::size_t n = 0;
    for (auto v : data()) n += v;
    return n;
  }

  [[nodiscard]] BinaryMask complement() const {
    BinaryMask out(width(), height());
    for (std::size_t n = 0; n < data().size(); ++n) out.data()[n] = data()[n] ? 0 : 1;
    return out;
  }
};

/// Single-channel change probability in [0,1].
class ScoreMap : public Grid<float> {
 public:
  ScoreMap() = default;
  ScoreMap(int width, int height, float fill = 0.0f) : Grid<float>(width, height, 1, fill) {}
};

namespace detail {

inline void require_same_plane(const auto& a, const auto& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(std::string(what) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

}  // namespace detail

/// out[i,j,k] = a[i,j,k] * b[i,j]; b is broadcast across the channels of a.
template <typename GridA, typename T>
  requires std::is_base_of_v<Grid<typename GridA::value_type>, GridA>
[[nodiscard]] GridA hadamard(const GridA& a, const Grid<T>& b) {
  if (!a.same_plane(b) || b.channels() != 1) {
    throw Error("hadamard: shape mismatch " + a.shape() + " vs " + b.shape());
  }
  GridA out = a;
  const int c = a.channels();
  auto& od = out.data();
  const auto& bd = b.data();
  for (std::size_t p = 0; p < bd.size(); ++p) {
    for (int k = 0; k < c; ++k) {
      auto& v = od[p * c + k];
      v = static_cast<typename GridA::value_type>(v * bd[p]);
    }
  }
  return out;
}

/// Nearest-neighbour resize with top-left anchoring:
/// out[i,j] = mask[floor(i*src_h/target_h), floor(j*src_w/target_w)].
[[nodiscard]] inline BinaryMask resize_nearest(const BinaryMask& mask, int target_w, int target_h) {
  if (target_w < 1 || target_h < 1) {
    throw Error("resize_nearest: target dims must be >= 1, got " + std::to_string(target_w) + "x" +
                std::to_string(target_h));
  }
  if (mask.empty()) throw Error("resize_nearest: empty source mask");
  const auto src_w = static_cast<std::int64_t>(mask.width());
  const auto src_h = static_cast<std::int64_t>(mask.height());
  BinaryMask out(target_w, target_h);
  std::vector<int> col_src(target_w);
  for (int j = 0; j < target_w; ++j) col_src[j] = static_cast<int>(j * src_w / target_w);
  for (int i = 0; i < target_h; ++i) {
    const int si = static_cast<int>(i * src_h / target_h);
    for (int j = 0; j < target_w; ++j) out(i, j) = mask(si, col_src[j]);
  }
  return out;
}

}  // namespace maskpipe
