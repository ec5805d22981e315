#pragma once

// Classical change scoring: absolute differencing of live vs warped
// reference, attention-mask gating, and fusion with warp uncertainty.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "maskpipe/error.hpp"
#include "maskpipe/imaging.hpp"

namespace maskpipe {

enum class GateMode {
  suppress_matched,    ///< score * (1 - mask)
  suppress_unmatched,  ///< score * mask
  off,
};

struct DetectConfig {
  GateMode gate_mode = GateMode::suppress_matched;
  int smoothing_radius = 2;
  double decision_threshold = 0.5;  ///< normally replaced by the best-F1 sweep value
  bool use_uncertainty = true;

  void validate() const {
    if (smoothing_radius < 0) throw Error("smoothing_radius must be >= 0");
    if (!(decision_threshold >= 0.0 && decision_threshold <= 1.0)) throw Error("decision_threshold must be in [0,1]");
  }
};

/// Mean of `plane` over the in-bounds part of a (2r+1)^2 window.
[[nodiscard]] inline ScoreMap box_filter(const ScoreMap& plane, int radius) {
  if (radius <= 0) return plane;
  const int w = plane.width();
  const int h = plane.height();
  const auto stride = static_cast<std::size_t>(w) + 1;
  std::vector<double> sat(stride * (h + 1), 0.0);
  for (int i = 0; i < h; ++i) {
    double row = 0.0;
    for (int j = 0; j < w; ++j) {
      row += plane(i, j);
      sat[(i + 1) * stride + j + 1] = sat[i * stride + j + 1] + row;
    }
  }
  ScoreMap out(w, h);
  for (int i = 0; i < h; ++i) {
    const int i0 = std::max(0, i - radius), i1 = std::min(h - 1, i + radius);
    for (int j = 0; j < w; ++j) {
      const int j0 = std::max(0, j - radius), j1 = std::min(w - 1, j + radius);
      const double s = sat[(i1 + 1) * stride + j1 + 1] - sat[i0 * stride + j1 + 1] - sat[(i1 + 1) * stride + j0] +
                       sat[i0 * stride + j0];
      const double area = static_cast<double>(i1 - i0 + 1) * (j1 - j0 + 1);
      out(i, j) = static_cast<float>(s / area);
    }
  }
  return out;
}

/// Per-pixel mean absolute channel difference, zero at invalid pixels,
/// box-smoothed and clamped to [0,1].
[[nodiscard]] inline ScoreMap difference_map(const Image& live, const Image& warped_ref, const BinaryMask& validity,
                                             const DetectConfig& cfg) {
  cfg.validate();
  if (!live.same_plane(warped_ref) || live.channels() != warped_ref.channels() || !live.same_plane(validity)) {
    throw Error("difference_map: shape mismatch " + live.shape() + " vs " + warped_ref.shape() + " / " +
                validity.shape());
  }
  const int c = live.channels();
  ScoreMap raw(live.width(), live.height());
  for (int i = 0; i < live.height(); ++i) {
    for (int j = 0; j < live.width(); ++j) {
      if (!validity.test(i, j)) continue;
      double s = 0.0;
      for (int k = 0; k < c; ++k) s += std::abs(static_cast<double>(live(i, j, k)) - warped_ref(i, j, k));
      raw(i, j) = static_cast<float>(s / c);
    }
  }
  ScoreMap out = box_filter(raw, cfg.smoothing_radius);
  for (auto& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

/// output_new[i,j] = output_old[i,j] * uncertainty[i,j].
[[nodiscard]] inline ScoreMap merge_uncertainty(const ScoreMap& output_old, const Grid<float>& uncertainty) {
  if (!output_old.same_plane(uncertainty) || uncertainty.channels() != 1) {
    throw Error("merge_uncertainty: shape mismatch " + output_old.shape() + " vs " + uncertainty.shape());
  }
  return hadamard(output_old, uncertainty);
}

[[nodiscard]] inline ScoreMap gate_with_mask(const ScoreMap& score, const BinaryMask& mask, GateMode mode) {
  if (!score.same_plane(mask)) {
    throw Error("gate_with_mask: shape mismatch " + score.shape() + " vs " + mask.shape());
  }
  switch (mode) {
    case GateMode::off:
      return score;
    case GateMode::suppress_unmatched:
      return hadamard(score, mask);
    case GateMode::suppress_matched:
      return hadamard(score, mask.complement());
  }
  return score;
}

/// 1 where score >= tau.
[[nodiscard]] inline BinaryMask threshold(const ScoreMap& score, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error("threshold: tau must be in [0,1], got " + std::to_string(tau));
  BinaryMask out(score.width(), score.height());
  for (std::size_t p = 0; p < score.data().size(); ++p) out.data()[p] = score.data()[p] >= tau ? 1 : 0;
  return out;
}

}  // namespace maskpipe
