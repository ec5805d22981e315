#pragma once

// Coarse-to-fine photometric refinement of a live->reference homography.
// Patch-centre matches pin the model down only to the patch grid spacing;
// this brings it to sub-pixel accuracy so pixel differencing is meaningful.
// Gauss-Newton (Levenberg damped, Huber weighted) over the 8 homography
// entries plus a gain/bias pair absorbing global brightness change.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "maskpipe/geometry.hpp"
#include "maskpipe/imaging.hpp"

namespace maskpipe {

struct AlignConfig {
  int max_levels = 4;        ///< pyramid depth, coarsest level >= 40 px on the short side
  int iterations = 20;       ///< per level
  int fine_sample_step = 2;  ///< pixel subsampling at the finest level
  double huber_delta = 0.04;
};

namespace detail {

struct Plane {
  int w = 0;
  int h = 0;
  std::vector<double> v;
  [[nodiscard]] double at(int i, int j) const noexcept { return v[static_cast<std::size_t>(i) * w + j]; }
  [[nodiscard]] double sample(double x, double y) const noexcept {
    const int x0 = std::min(static_cast<int>(x), w - 2);
    const int y0 = std::min(static_cast<int>(y), h - 2);
    const double fx = x - x0, fy = y - y0;
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
           fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
  }
};

inline Plane luma_plane(const Image& img) {
  Plane p{img.width(), img.height(), std::vector<double>(img.pixel_count())};
  for (int i = 0; i < img.height(); ++i)
    for (int j = 0; j < img.width(); ++j) p.v[static_cast<std::size_t>(i) * p.w + j] = img.luma(i, j);
  return p;
}

inline Plane downsample(const Plane& src) {
  Plane d{src.w / 2, src.h / 2, {}};
  d.v.resize(static_cast<std::size_t>(d.w) * d.h);
  for (int i = 0; i < d.h; ++i)
    for (int j = 0; j < d.w; ++j)
      d.v[static_cast<std::size_t>(i) * d.w + j] =
          0.25 * (src.at(2 * i, 2 * j) + src.at(2 * i, 2 * j + 1) + src.at(2 * i + 1, 2 * j) +
                  src.at(2 * i + 1, 2 * j + 1));
  return d;
}

/// Central-difference gradient planes.
inline std::pair<Plane, Plane> gradients(const Plane& p) {
  Plane gx{p.w, p.h, std::vector<double>(p.v.size(), 0.0)};
  Plane gy = gx;
  for (int i = 0; i < p.h; ++i)
    for (int j = 0; j < p.w; ++j) {
      const int jl = std::max(j - 1, 0), jr = std::min(j + 1, p.w - 1);
      const int iu = std::max(i - 1, 0), id = std::min(i + 1, p.h - 1);
      gx.v[static_cast<std::size_t>(i) * p.w + j] = (p.at(i, jr) - p.at(i, jl)) / std::max(1, jr - jl);
      gy.v[static_cast<std::size_t>(i) * p.w + j] = (p.at(id, j) - p.at(iu, j)) / std::max(1, id - iu);
    }
  return {gx, gy};
}

/// Pixel coordinates at pyramid level l from level-0 coordinates (2x box pyramid).
inline Eigen::Matrix3d level_transform(int level) {
  const double s = std::ldexp(1.0, -level);
  Eigen::Matrix3d t;
  t << s, 0, 0.5 * s - 0.5, 0, s, 0.5 * s - 0.5, 0, 0, 1;
  return t;
}

struct LevelProblem {
  const Plane& live;
  const Plane& ref;
  const Plane& gx;
  const Plane& gy;
  int step;
  double huber;
  Eigen::Matrix3d norm;  // pixel -> normalised coordinates at this level
};

/// Weighted cost and (optionally) normal equations at parameters (hn, gain, bias).
inline double evaluate_level(const LevelProblem& pb, const Eigen::Matrix3d& hn, double gain, double bias,
                             Eigen::Matrix<double, 10, 10>* jtj, Eigen::Matrix<double, 10, 1>* jtr,
                             long* used) {
  const Eigen::Matrix3d n_inv = pb.norm.inverse();
  const double s = pb.norm(0, 0);
  double cost = 0.0;
  long count = 0;
  if (jtj) jtj->setZero();
  if (jtr) jtr->setZero();
  const int margin = 1;
  for (int i = margin; i < pb.live.h - margin; i += pb.step) {
    for (int j = margin; j < pb.live.w - margin; j += pb.step) {
      const double ux = pb.norm(0, 0) * j + pb.norm(0, 2);
      const double uy = pb.norm(1, 1) * i + pb.norm(1, 2);
      const double wz = hn(2, 0) * ux + hn(2, 1) * uy + 1.0;
      if (std::abs(wz) < 1e-9) continue;
      const double vx = (hn(0, 0) * ux + hn(0, 1) * uy + hn(0, 2)) / wz;
      const double vy = (hn(1, 0) * ux + hn(1, 1) * uy + hn(1, 2)) / wz;
      const double x = n_inv(0, 0) * vx + n_inv(0, 2);
      const double y = n_inv(1, 1) * vy + n_inv(1, 2);
      if (!(x >= 0.0 && y >= 0.0 && x <= pb.ref.w - 1 && y <= pb.ref.h - 1)) continue;
      const double rv = pb.ref.sample(x, y);
      const double r = gain * rv + bias - pb.live.at(i, j);
      const double ar = std::abs(r);
      const double wgt = ar <= pb.huber ? 1.0 : pb.huber / ar;
      cost += ar <= pb.huber ? 0.5 * r * r : pb.huber * (ar - 0.5 * pb.huber);
      ++count;
      if (!jtj) continue;
      // d(pixel)/d(normalised) = 1/s
      const double dix = gain * pb.gx.sample(x, y) / s;
      const double diy = gain * pb.gy.sample(x, y) / s;
      Eigen::Matrix<double, 10, 1> jac;
      jac << dix * ux / wz, dix * uy / wz, dix / wz, diy * ux / wz, diy * uy / wz, diy / wz,
          -(dix * vx + diy * vy) * ux / wz, -(dix * vx + diy * vy) * uy / wz, rv, 1.0;
      jtj->selfadjointView<Eigen::Upper>().rankUpdate(jac, wgt);
      *jtr += wgt * r * jac;
    }
  }
  if (jtj) *jtj = jtj->selfadjointView<Eigen::Upper>();
  if (used) *used = count;
  return count > 0 ? cost / static_cast<double>(count) : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Refines `init` (live pixel -> reference pixel) against image content.
/// Returns `init` unchanged when refinement does not lower the photometric cost.
[[nodiscard]] inline Homography refine_homography(const Image& live, const Image& ref, const Homography& init,
                                                  const AlignConfig& cfg = {}) {
  if (!live.same_plane(ref)) throw Error("refine_homography: shape mismatch " + live.shape() + " vs " + ref.shape());
  std::vector<detail::Plane> live_pyr{detail::luma_plane(live)};
  std::vector<detail::Plane> ref_pyr{detail::luma_plane(ref)};
  while (static_cast<int>(live_pyr.size()) < cfg.max_levels &&
         std::min(live_pyr.back().w, live_pyr.back().h) / 2 >= 40) {
    live_pyr.push_back(detail::downsample(live_pyr.back()));
    ref_pyr.push_back(detail::downsample(ref_pyr.back()));
  }

  Homography h = normalize_homography(init);
  double gain = 1.0, bias = 0.0;
  double final_cost = 0.0, init_cost = 0.0;
  for (int level = static_cast<int>(live_pyr.size()) - 1; level >= 0; --level) {
    const auto& lp = live_pyr[level];
    const auto& rp = ref_pyr[level];
    const auto [gx, gy] = detail::gradients(rp);
    const Eigen::Matrix3d t = detail::level_transform(level);
    const double s = 2.0 / std::max(lp.w, lp.h);
    Eigen::Matrix3d norm;
    norm << s, 0, -s * 0.5 * (lp.w - 1), 0, s, -s * 0.5 * (lp.h - 1), 0, 0, 1;
    detail::LevelProblem pb{lp, rp, gx, gy, level == 0 ? cfg.fine_sample_step : 1, cfg.huber_delta, norm};

    Eigen::Matrix3d hn = norm * t * h * t.inverse() * norm.inverse();
    hn /= hn(2, 2);
    double lambda = 1e-4;
    Eigen::Matrix<double, 10, 10> jtj;
    Eigen::Matrix<double, 10, 1> jtr;
    long used = 0;
    double cost = detail::evaluate_level(pb, hn, gain, bias, &jtj, &jtr, &used);
    if (level == 0) {
      Eigen::Matrix3d h0 = norm * normalize_homography(init) * norm.inverse();
      init_cost = detail::evaluate_level(pb, h0 / h0(2, 2), 1.0, 0.0, nullptr, nullptr, nullptr);
    }
    for (int it = 0; it < cfg.iterations && used > 0; ++it) {
      Eigen::Matrix<double, 10, 10> a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-9);
      const Eigen::Matrix<double, 10, 1> delta = a.ldlt().solve(-jtr);
      if (!delta.allFinite()) break;
      Eigen::Matrix3d cand = hn;
      cand(0, 0) += delta(0);
      cand(0, 1) += delta(1);
      cand(0, 2) += delta(2);
      cand(1, 0) += delta(3);
      cand(1, 1) += delta(4);
      cand(1, 2) += delta(5);
      cand(2, 0) += delta(6);
      cand(2, 1) += delta(7);
      const double cand_cost = detail::evaluate_level(pb, cand, gain + delta(8), bias + delta(9), nullptr, nullptr, nullptr);
      if (cand_cost < cost) {
        hn = cand;
        gain += delta(8);
        bias += delta(9);
        lambda = std::max(lambda * 0.3, 1e-7);
        cost = detail::evaluate_level(pb, hn, gain, bias, &jtj, &jtr, &used);
        if (delta.head<8>().norm() < 1e-7) break;
      } else {
        lambda *= 10.0;
        if (lambda > 1e6) break;
      }
    }
    h = t.inverse() * norm.inverse() * hn * norm * t;
    h = normalize_homography(h);
    if (level == 0) final_cost = cost;
  }
  if (!h.allFinite() || !(final_cost <= init_cost)) return normalize_homography(init);
  return h;
}

}  // namespace maskpipe
