#pragma once

// Mutual-nearest-neighbour matching of descriptor grids and RANSAC
// verification with a planar homography over patch centres.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskpipe/error.hpp"
#include "maskpipe/patch_features.hpp"
#include "maskpipe/rng.hpp"

namespace maskpipe {

/// Maps live pixel coordinates (x, y, 1) to reference pixel coordinates.
using Homography = Eigen::Matrix3d;

struct CellIndex {
  int row = 0;
  int col = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
  friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Match {
  CellIndex live;
  CellIndex ref;
  double distance = 0.0;
  Point2 live_pt;
  Point2 ref_pt;

  friend bool operator==(const Match&, const Match&) = default;
};

/// One-to-one: every live cell and every ref cell appears at most once.
struct MatchSet {
  std::vector<Match> pairs;
};

struct RansacConfig {
  double reproj_threshold = 3.0;
  int max_iterations = 2000;
  double confidence = 0.999;
  int min_inliers = 8;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(reproj_threshold > 0.0)) throw Error("reproj_threshold must be > 0");
    if (!(confidence > 0.0 && confidence < 1.0)) throw Error("confidence must be in (0,1)");
    if (max_iterations < 1) throw Error("max_iterations must be >= 1");
    if (min_inliers < 0) throw Error("min_inliers must be >= 0");
  }
};

struct InlierSet {
  Homography model = Homography::Identity();
  std::vector<Match> inliers;
  double reproj_threshold = 3.0;
  bool degenerate = true;
  int iterations = 0;
};

/// Projective mapping; returns nullopt when the point maps to infinity.
[[nodiscard]] inline std::optional<Point2> project(const Homography& h, Point2 p) noexcept {
  const double w = h(2, 0) * p.x + h(2, 1) * p.y + h(2, 2);
  if (!(std::abs(w) > 1e-12)) return std::nullopt;
  return Point2{(h(0, 0) * p.x + h(0, 1) * p.y + h(0, 2)) / w, (h(1, 0) * p.x + h(1, 1) * p.y + h(1, 2)) / w};
}

/// Scales so h33 = 1 (falls back to unit Frobenius norm when h33 ~ 0).
[[nodiscard]] inline Homography normalize_homography(const Homography& h) {
  if (std::abs(h(2, 2)) > 1e-12) return h / h(2, 2);
  return h / h.norm();
}

/// max(|H p - q|, |H^-1 q - p|), in pixels.
[[nodiscard]] inline double symmetric_transfer_error(const Homography& h, const Homography& h_inv,
                                                     const Match& m) noexcept {
  const auto fwd = project(h, m.live_pt);
  const auto bwd = project(h_inv, m.ref_pt);
  if (!fwd || !bwd) return std::numeric_limits<double>::infinity();
  const double ef = std::hypot(fwd->x - m.ref_pt.x, fwd->y - m.ref_pt.y);
  const double eb = std::hypot(bwd->x - m.live_pt.x, bwd->y - m.live_pt.y);
  return std::max(ef, eb);
}

// ---- matching --------------------------------------------------------------

/// Pairs (a, b) where b is a's nearest ref descriptor and a is b's nearest live
/// descriptor. Zero descriptors never take part; ties go to the lowest
/// row-major cell index.
[[nodiscard]] inline MatchSet mutual_nearest_neighbors(const DescriptorGrid& live, const DescriptorGrid& ref) {
  if (live.dim() != ref.dim()) {
    throw Error("mutual_nearest_neighbors: descriptor dim mismatch " + std::to_string(live.dim()) + " vs " +
                std::to_string(ref.dim()));
  }
  MatchSet out;
  std::vector<std::size_t> live_ids;
  std::vector<std::size_t> ref_ids;
  for (std::size_t c = 0; c < live.cell_count(); ++c)
    if (!live.is_zero(c)) live_ids.push_back(c);
  for (std::size_t c = 0; c < ref.cell_count(); ++c)
    if (!ref.is_zero(c)) ref_ids.push_back(c);
  if (live_ids.empty() || ref_ids.empty()) return out;

  const std::size_t n = live_ids.size();
  const std::size_t m = ref_ids.size();
  const auto dim = static_cast<std::size_t>(live.dim());
  std::vector<double> d2(n * m);
  for (std::size_t a = 0; a < n; ++a) {
    const float* pa = live.descriptor(live_ids[a]).data();
    for (std::size_t b = 0; b < m; ++b) {
      const float* pb = ref.descriptor(ref_ids[b]).data();
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = static_cast<double>(pa[d]) - pb[d];
        s += diff * diff;
      }
      d2[a * m + b] = s;
    }
  }

  constexpr auto kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best_ref(n, kNone);
  std::vector<std::size_t> best_live(m, kNone);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      const double v = d2[a * m + b];
      if (best_ref[a] == kNone || v < d2[a * m + best_ref[a]]) best_ref[a] = b;
      if (best_live[b] == kNone || v < d2[best_live[b] * m + b]) best_live[b] = a;
    }
  }

  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t b = best_ref[a];
    if (best_live[b] != a) continue;
    const std::size_t lc = live_ids[a];
    const std::size_t rc = ref_ids[b];
    Match match;
    match.live = {static_cast<int>(lc / live.grid_w()), static_cast<int>(lc % live.grid_w())};
    match.ref = {static_cast<int>(rc / ref.grid_w()), static_cast<int>(rc % ref.grid_w())};
    match.distance = std::sqrt(d2[a * m + b]);
    match.live_pt = {static_cast<double>(live.center(lc).x), static_cast<double>(live.center(lc).y)};
    match.ref_pt = {static_cast<double>(ref.center(rc).x), static_cast<double>(ref.center(rc).y)};
    out.pairs.push_back(match);
  }
  return out;
}

// ---- homography fitting ----------------------------------------------------

namespace detail {

/// Similarity taking points to zero centroid and mean distance sqrt(2).
inline Eigen::Matrix3d normalizing_transform(std::span<const Point2> pts) {
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double mean = 0.0;
  for (const auto& p : pts) mean += std::hypot(p.x - cx, p.y - cy);
  mean /= static_cast<double>(pts.size());
  const double s = mean > 1e-12 ? std::sqrt(2.0) / mean : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

inline Point2 apply_affine(const Eigen::Matrix3d& t, Point2 p) {
  return {t(0, 0) * p.x + t(0, 1) * p.y + t(0, 2), t(1, 0) * p.x + t(1, 1) * p.y + t(1, 2)};
}

inline bool nearly_collinear(const Point2& a, const Point2& b, const Point2& c) {
  const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  const double scale = std::max({(b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y),
                                 (c.x - a.x) * (c.x - a.x) + (c.y - a.y) * (c.y - a.y),
                                 (c.x - b.x) * (c.x - b.x) + (c.y - b.y) * (c.y - b.y)});
  return std::abs(cross) <= 1e-6 * scale;
}

inline bool has_collinear_triple(const std::array<Point2, 4>& p) {
  return nearly_collinear(p[0], p[1], p[2]) || nearly_collinear(p[0], p[1], p[3]) ||
         nearly_collinear(p[0], p[2], p[3]) || nearly_collinear(p[1], p[2], p[3]);
}

}  // namespace detail

/// Normalised DLT over n >= 4 correspondences (least squares via SVD).
[[nodiscard]] inline std::optional<Homography> fit_homography_dlt(std::span<const Point2> src,
                                                                  std::span<const Point2> dst) {
  if (src.size() != dst.size() || src.size() < 4) return std::nullopt;
  const auto ts = detail::normalizing_transform(src);
  const auto td = detail::normalizing_transform(dst);
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto p = detail::apply_affine(ts, src[k]);
    const auto q = detail::apply_affine(td, dst[k]);
    a.row(2 * k) << -p.x, -p.y, -1, 0, 0, 0, q.x * p.x, q.x * p.y, q.x;
    a.row(2 * k + 1) << 0, 0, 0, -p.x, -p.y, -1, q.y * p.x, q.y * p.y, q.y;
  }
  // Full V: with n = 4 the system is 8x9 and the null vector is not in the thin basis.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(7) < 1e-10 * sv(0)) return std::nullopt;
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Homography full = td.inverse() * hn * ts;
  if (!std::isfinite(full.sum()) || std::abs(full.determinant()) < 1e-14 * std::pow(full.norm(), 3)) {
    return std::nullopt;
  }
  return normalize_homography(full);
}

namespace detail {

/// 4-point solve with h33 = 1 on normalised coordinates (8x8 linear system).
inline std::optional<Homography> fit_minimal(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst) {
  if (has_collinear_triple(src) || has_collinear_triple(dst)) return std::nullopt;
  const auto ts = normalizing_transform(src);
  const auto td = normalizing_transform(dst);
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int k = 0; k < 4; ++k) {
    const auto p = apply_affine(ts, src[k]);
    const auto q = apply_affine(td, dst[k]);
    a.row(2 * k) << p.x, p.y, 1, 0, 0, 0, -q.x * p.x, -q.x * p.y;
    a.row(2 * k + 1) << 0, 0, 0, p.x, p.y, 1, -q.y * p.x, -q.y * p.y;
    b(2 * k) = q.x;
    b(2 * k + 1) = q.y;
  }
  Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (!lu.isInvertible()) return std::nullopt;
  const Eigen::Matrix<double, 8, 1> h = lu.solve(b);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  const Homography full = td.inverse() * hn * ts;
  if (!std::isfinite(full.sum()) || std::abs(full.determinant()) < 1e-14 * std::pow(full.norm(), 3)) {
    return std::nullopt;
  }
  return normalize_homography(full);
}

inline std::vector<std::size_t> consensus(const Homography& h, std::span<const Match> matches, double thr) {
  std::vector<std::size_t> ids;
  const Homography h_inv = h.inverse();
  for (std::size_t k = 0; k < matches.size(); ++k) {
    if (symmetric_transfer_error(h, h_inv, matches[k]) <= thr) ids.push_back(k);
  }
  return ids;
}

}  // namespace detail

/// Minimal-sample RANSAC with adaptive stopping, followed by normalised-DLT
/// refits on the consensus set. Sample k draws from a stream seeded by
/// (rng_seed, k), so the result does not depend on execution order.
[[nodiscard]] inline InlierSet estimate_homography_ransac(const MatchSet& matches, const RansacConfig& cfg) {
  cfg.validate();
  InlierSet result;
  result.reproj_threshold = cfg.reproj_threshold;
  const auto& pairs = matches.pairs;
  const std::size_t n = pairs.size();
  if (n < 4) return result;

  std::vector<std::size_t> best_ids;
  Homography best_model = Homography::Identity();
  const double log_fail = std::log(1.0 - cfg.confidence);
  long required = cfg.max_iterations;
  int iter = 0;
  for (; iter < required && iter < cfg.max_iterations; ++iter) {
    rng::Stream stream(rng::combine(cfg.rng_seed, static_cast<std::uint64_t>(iter)));
    std::array<std::size_t, 4> pick{};
    for (int s = 0; s < 4; ++s) {
      std::size_t cand = 0;
      do {
        cand = static_cast<std::size_t>(stream.next() % n);
      } while (std::find(pick.begin(), pick.begin() + s, cand) != pick.begin() + s);
      pick[s] = cand;
    }
    std::array<Point2, 4> src{};
    std::array<Point2, 4> dst{};
    for (int s = 0; s < 4; ++s) {
      src[s] = pairs[pick[s]].live_pt;
      dst[s] = pairs[pick[s]].ref_pt;
    }
    const auto model = detail::fit_minimal(src, dst);
    if (!model) continue;
    auto ids = detail::consensus(*model, pairs, cfg.reproj_threshold);
    if (ids.size() > best_ids.size()) {
      best_ids = std::move(ids);
      best_model = *model;
      const double w = static_cast<double>(best_ids.size()) / static_cast<double>(n);
      const double p_good = std::pow(w, 4);
      if (p_good >= 1.0) {
        required = iter + 1;
      } else {
        const double k = log_fail / std::log(1.0 - p_good);
        if (std::isfinite(k)) required = std::min<long>(cfg.max_iterations, static_cast<long>(std::ceil(k)));
      }
    }
  }
  result.iterations = iter;

  // Refit on the consensus set while it does not shrink.
  for (int round = 0; round < 5 && best_ids.size() >= 4; ++round) {
    std::vector<Point2> src;
    std::vector<Point2> dst;
    for (auto k : best_ids) {
      src.push_back(pairs[k].live_pt);
      dst.push_back(pairs[k].ref_pt);
    }
    const auto refit = fit_homography_dlt(src, dst);
    if (!refit) break;
    auto ids = detail::consensus(*refit, pairs, cfg.reproj_threshold);
    if (ids.size() < best_ids.size()) break;
    const bool stable = ids == best_ids;
    best_ids = std::move(ids);
    best_model = *refit;
    if (stable) break;
  }

  if (best_ids.size() < 4 || best_ids.size() < static_cast<std::size_t>(cfg.min_inliers)) return result;
  result.model = best_model;
  result.degenerate = false;
  for (auto k : best_ids) result.inliers.push_back(pairs[k]);
  return result;
}

}  // namespace maskpipe
