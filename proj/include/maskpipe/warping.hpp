#pragma once

// Dense backward warping of a reference image onto the live viewpoint.
//
// A FlowField is indexed by live pixel (x, y); the displacement (dx, dy)
// points at the reference location (x + dx, y + dy) that the live pixel
// corresponds to. Warping samples the reference there bilinearly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "maskpipe/binary_io.hpp"
#include "maskpipe/error.hpp"
#include "maskpipe/geometry.hpp"
#include "maskpipe/imaging.hpp"

namespace maskpipe {

struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<double> dx;
  std::vector<double> dy;
  std::vector<double> uncertainty;  ///< [0,1]; 1 = no reliable correspondence

  FlowField() = default;
  FlowField(int w, int h)
      : width(w), height(h), dx(static_cast<std::size_t>(w) * h, 0.0), dy(dx), uncertainty(dx) {
    if (w < 0 || h < 0) throw Error("invalid flow shape");
  }

  [[nodiscard]] std::size_t index(int i, int j) const noexcept { return static_cast<std::size_t>(i) * width + j; }

  void validate() const {
    const auto n = static_cast<std::size_t>(width) * height;
    if (dx.size() != n || dy.size() != n || uncertainty.size() != n) throw Error("flow plane size mismatch");
    for (std::size_t p = 0; p < n; ++p) {
      if (!std::isfinite(dx[p]) || !std::isfinite(dy[p])) throw Error("flow displacement not finite at pixel " + std::to_string(p));
      if (!(uncertainty[p] >= 0.0 && uncertainty[p] <= 1.0)) {
        throw Error("flow uncertainty outside [0,1] at pixel " + std::to_string(p));
      }
    }
  }

  /// Uncertainty as a single-channel grid for fusion with score maps.
  [[nodiscard]] ScoreMap uncertainty_map() const {
    ScoreMap u(width, height);
    for (std::size_t p = 0; p < uncertainty.size(); ++p) u.data()[p] = static_cast<float>(uncertainty[p]);
    return u;
  }

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

struct WarpResult {
  Image image;
  BinaryMask valid;  ///< 0 where the sample location falls outside the reference
};

/// Bilinear sample at (x, y); caller guarantees 0 <= x <= w-1, 0 <= y <= h-1.
[[nodiscard]] inline double sample_bilinear(const Image& img, double x, double y, int k) noexcept {
  const int w = img.width();
  const int h = img.height();
  const int x0 = std::min(static_cast<int>(std::floor(x)), w - 1);
  const int y0 = std::min(static_cast<int>(std::floor(y)), h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * img(y0, x0, k) + fx * img(y0, x1, k);
  const double bottom = (1.0 - fx) * img(y1, x0, k) + fx * img(y1, x1, k);
  return (1.0 - fy) * top + fy * bottom;
}

[[nodiscard]] inline bool inside_image(double x, double y, int w, int h) noexcept {
  return x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1;
}

[[nodiscard]] inline WarpResult warp_reference(const Image& ref, const FlowField& flow) {
  if (flow.width != ref.width() || flow.height != ref.height()) {
    throw Error("warp_reference: flow " + std::to_string(flow.width) + "x" + std::to_string(flow.height) +
                " vs image " + ref.shape());
  }
  WarpResult out{Image(ref.width(), ref.height(), ref.channels()), BinaryMask(ref.width(), ref.height())};
  out.image.frame_id = ref.frame_id;
  out.image.pose = ref.pose;
  for (int i = 0; i < ref.height(); ++i) {
    for (int j = 0; j < ref.width(); ++j) {
      const auto p = flow.index(i, j);
      const double sx = j + flow.dx[p];
      const double sy = i + flow.dy[p];
      if (!inside_image(sx, sy, ref.width(), ref.height())) continue;
      out.valid.set(i, j, true);
      for (int k = 0; k < ref.channels(); ++k) {
        out.image(i, j, k) = static_cast<float>(std::clamp(sample_bilinear(ref, sx, sy, k), 0.0, 1.0));
      }
    }
  }
  return out;
}

/// Zero displacement, zero uncertainty.
[[nodiscard]] inline FlowField identity_flow(int w, int h) { return FlowField(w, h); }

/// displacement(x, y) = H (x, y) - (x, y); uncertainty 1 where H (x, y) leaves the image.
[[nodiscard]] inline FlowField flow_from_homography(const Homography& model, int w, int h) {
  if (!model.allFinite() || std::abs(model.determinant()) < 1e-12 * std::pow(model.norm(), 3)) {
    throw Error("flow_from_homography: singular model");
  }
  FlowField flow(w, h);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const auto p = flow.index(i, j);
      const auto q = project(model, {static_cast<double>(j), static_cast<double>(i)});
      if (!q || !std::isfinite(q->x) || !std::isfinite(q->y) || std::abs(q->x) > 1e7 || std::abs(q->y) > 1e7) {
        // Maps to (near) infinity: park the sample far outside the image.
        flow.dx[p] = -1e7;
        flow.dy[p] = -1e7;
        flow.uncertainty[p] = 1.0;
        continue;
      }
      flow.dx[p] = q->x - j;
      flow.dy[p] = q->y - i;
      flow.uncertainty[p] = inside_image(q->x, q->y, w, h) ? 0.0 : 1.0;
    }
  }
  return flow;
}

/// Local photometric correspondence uncertainty between the live image and
/// the warped reference: 1 - ZNCC over a (2r+1)^2 window of luma, clamped to
/// [0,1]. `reg` is added to both window variances so flat-vs-flat windows
/// carry no evidence of correspondence. Invalid pixels score 1.
[[nodiscard]] inline ScoreMap correspondence_uncertainty(const Image& live, const Image& warped,
                                                         const BinaryMask& valid, int radius = 3,
                                                         double reg = 1e-4) {
  if (!live.same_plane(warped) || !live.same_plane(valid)) {
    throw Error("correspondence_uncertainty: shape mismatch " + live.shape() + " vs " + warped.shape());
  }
  const int w = live.width();
  const int h = live.height();
  const auto stride = static_cast<std::size_t>(w) + 1;
  // Summed-area tables over valid pixels: n, a, b, aa, bb, ab.
  std::vector<double> sums[6];
  for (auto& s : sums) s.assign(stride * (h + 1), 0.0);
  for (int i = 0; i < h; ++i) {
    double row[6] = {};
    for (int j = 0; j < w; ++j) {
      if (valid.test(i, j)) {
        const double a = live.luma(i, j);
        const double b = warped.luma(i, j);
        row[0] += 1.0;
        row[1] += a;
        row[2] += b;
        row[3] += a * a;
        row[4] += b * b;
        row[5] += a * b;
      }
      const auto at = (i + 1) * stride + (j + 1);
      for (int s = 0; s < 6; ++s) sums[s][at] = sums[s][at - stride] + row[s];
    }
  }
  ScoreMap u(w, h, 1.0f);
  for (int i = 0; i < h; ++i) {
    const int i0 = std::max(0, i - radius), i1 = std::min(h - 1, i + radius);
    for (int j = 0; j < w; ++j) {
      if (!valid.test(i, j)) continue;
      const int j0 = std::max(0, j - radius), j1 = std::min(w - 1, j + radius);
      double v[6];
      for (int s = 0; s < 6; ++s) {
        const auto& t = sums[s];
        v[s] = t[(i1 + 1) * stride + (j1 + 1)] - t[i0 * stride + (j1 + 1)] - t[(i1 + 1) * stride + j0] +
               t[i0 * stride + j0];
      }
      const double n = v[0];
      const double ma = v[1] / n, mb = v[2] / n;
      const double va = std::max(0.0, v[3] / n - ma * ma);
      const double vb = std::max(0.0, v[4] / n - mb * mb);
      const double cov = v[5] / n - ma * mb;
      const double zncc = cov / std::sqrt((va + reg) * (vb + reg));
      u(i, j) = static_cast<float>(std::clamp(1.0 - zncc, 0.0, 1.0));
    }
  }
  return u;
}

// ---- .flow -----------------------------------------------------------------
// "FLO1", u32 version=1, W, H, W*H (dx, dy) f32 pairs row-major, W*H f32 uncertainty.

inline constexpr std::uint32_t kFlowVersion = 1;

[[nodiscard]] inline std::vector<std::uint8_t> encode_flow(const FlowField& flow) {
  binio::Writer w;
  w.magic("FLO1");
  w.u32(kFlowVersion);
  w.u32(static_cast<std::uint32_t>(flow.width));
  w.u32(static_cast<std::uint32_t>(flow.height));
  for (std::size_t p = 0; p < flow.dx.size(); ++p) {
    w.f32(static_cast<float>(flow.dx[p]));
    w.f32(static_cast<float>(flow.dy[p]));
  }
  for (double u : flow.uncertainty) w.f32(static_cast<float>(u));
  return w.bytes();
}

inline void save_flow(const FlowField& flow, const std::filesystem::path& path) {
  flow.validate();
  binio::save_bytes(path, encode_flow(flow));
}

[[nodiscard]] inline FlowField decode_flow(binio::Reader& r) {
  r.expect_magic("FLO1");
  const auto version = r.u32("version");
  if (version != kFlowVersion) r.fail("unsupported version " + std::to_string(version));
  const auto w = r.u32("width");
  const auto h = r.u32("height");
  if (w > (1u << 16) || h > (1u << 16)) r.fail("implausible dimensions");
  const std::uint64_t n = static_cast<std::uint64_t>(w) * h;
  r.require(n, 12, "flow data");
  FlowField flow(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t p = 0; p < n; ++p) {
    const auto at = r.offset();
    flow.dx[p] = r.f32("dx");
    flow.dy[p] = r.f32("dy");
    if (!std::isfinite(flow.dx[p]) || !std::isfinite(flow.dy[p])) {
      r.fail_at(at, "non-finite displacement");
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    const auto at = r.offset();
    flow.uncertainty[p] = r.f32("uncertainty");
    if (!(flow.uncertainty[p] >= 0.0 && flow.uncertainty[p] <= 1.0)) {
      r.fail_at(at, "uncertainty outside [0,1]");
    }
  }
  r.expect_end();
  return flow;
}

[[nodiscard]] inline FlowField load_flow(const std::filesystem::path& path) {
  auto r = binio::Reader::from_file(path);
  return decode_flow(r);
}

}  // namespace maskpipe
