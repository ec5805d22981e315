#pragma once

// Side-by-side diagnostic panels: live | warped ref | mask overlay | score heat | ground truth.

#include <algorithm>
#include <array>
#include <span>

#include "maskpipe/error.hpp"
#include "maskpipe/imaging.hpp"

namespace maskpipe {

/// Blue (0) -> cyan -> yellow -> red (1).
[[nodiscard]] inline std::array<float, 3> heat_color(float v) noexcept {
  static constexpr std::array<std::array<float, 3>, 4> kStops{{{0.0f, 0.0f, 0.5f},
                                                               {0.0f, 0.8f, 1.0f},
                                                               {1.0f, 0.9f, 0.0f},
                                                               {0.8f, 0.0f, 0.0f}}};
  const float t = std::clamp(v, 0.0f, 1.0f) * 3.0f;
  const int k = std::min(2, static_cast<int>(t));
  const float f = t - static_cast<float>(k);
  std::array<float, 3> out{};
  for (int c = 0; c < 3; ++c) out[c] = kStops[k][c] + f * (kStops[k + 1][c] - kStops[k][c]);
  return out;
}

[[nodiscard]] inline Image to_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  Image out(img.width(), img.height(), 3);
  for (int i = 0; i < img.height(); ++i)
    for (int j = 0; j < img.width(); ++j)
      for (int k = 0; k < 3; ++k) out(i, j, k) = img(i, j, 0);
  return out;
}

[[nodiscard]] inline Image heat_panel(const ScoreMap& score) {
  Image out(score.width(), score.height(), 3);
  for (int i = 0; i < score.height(); ++i) {
    for (int j = 0; j < score.width(); ++j) {
      const auto c = heat_color(score(i, j));
      for (int k = 0; k < 3; ++k) out(i, j, k) = c[k];
    }
  }
  return out;
}

/// Live image darkened outside the mask and tinted green inside it.
/// `mask` is at pixel resolution.
[[nodiscard]] inline Image mask_overlay(const Image& live, const BinaryMask& mask) {
  Image out = to_rgb(live);
  if (!out.same_plane(mask)) throw Error("mask_overlay: shape mismatch " + out.shape() + " vs " + mask.shape());
  for (int i = 0; i < out.height(); ++i) {
    for (int j = 0; j < out.width(); ++j) {
      for (int k = 0; k < 3; ++k) {
        float& v = out(i, j, k);
        v = mask.test(i, j) ? 0.5f * v + (k == 1 ? 0.5f : 0.0f) : 0.4f * v;
      }
    }
  }
  return out;
}

[[nodiscard]] inline Image mask_panel(const BinaryMask& mask) {
  Image out(mask.width(), mask.height(), 3);
  for (std::size_t p = 0; p < mask.data().size(); ++p)
    for (int k = 0; k < 3; ++k) out.data()[p * 3 + k] = mask.data()[p] ? 1.0f : 0.0f;
  return out;
}

/// Concatenates equally sized panels left to right.
[[nodiscard]] inline Image hstack(std::span<const Image> panels) {
  if (panels.empty()) throw Error("hstack: no panels");
  const int w = panels[0].width();
  const int h = panels[0].height();
  Image out(w * static_cast<int>(panels.size()), h, 3);
  for (std::size_t n = 0; n < panels.size(); ++n) {
    const Image rgb = to_rgb(panels[n]);
    if (rgb.width() != w || rgb.height() != h) {
      throw Error("hstack: panel " + std::to_string(n) + " is " + rgb.shape() + ", expected " + std::to_string(w) +
                  "x" + std::to_string(h));
    }
    const int x0 = static_cast<int>(n) * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int k = 0; k < 3; ++k) out(i, x0 + j, k) = rgb(i, j, k);
  }
  return out;
}

}  // namespace maskpipe
