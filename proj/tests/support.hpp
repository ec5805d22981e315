#pragma once

// Seeded generators shared by the property tests.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>

#include "maskpipe/imaging.hpp"
#include "maskpipe/patch_features.hpp"
#include "maskpipe/rng.hpp"

namespace testsupport {

using maskpipe::rng::Stream;

inline maskpipe::Image random_image(Stream& s, int w, int h, int c) {
  maskpipe::Image img(w, h, c);
  for (auto& v : img.data()) v = static_cast<float>(s.uniform());
  return img;
}

inline maskpipe::ScoreMap random_score(Stream& s, int w, int h) {
  maskpipe::ScoreMap m(w, h);
  for (auto& v : m.data()) v = static_cast<float>(s.uniform());
  return m;
}

inline maskpipe::BinaryMask random_mask(Stream& s, int w, int h, double p_one = 0.5) {
  maskpipe::BinaryMask m(w, h);
  for (auto& v : m.data()) v = s.uniform() < p_one ? 1 : 0;
  return m;
}

/// Unit-norm random descriptors; a fraction of cells may be left at zero.
inline maskpipe::DescriptorGrid random_grid(Stream& s, int gw, int gh, int dim, double p_zero = 0.0) {
  maskpipe::DescriptorGrid g(gw, gh, dim);
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    const int i = static_cast<int>(c) / gw, j = static_cast<int>(c) % gw;
    g.center(c) = {static_cast<std::uint16_t>(16 + 32 * j), static_cast<std::uint16_t>(16 + 32 * i)};
    if (s.uniform() < p_zero) continue;
    double norm = 0.0;
    auto d = g.descriptor(c);
    for (auto& v : d) {
      v = static_cast<float>(s.uniform(-1.0, 1.0));
      norm += double(v) * v;
    }
    for (auto& v : d) v = static_cast<float>(v / std::sqrt(norm));
  }
  return g;
}

template <typename G>
bool all_equal(const G& grid, typename G::value_type v) {
  return std::all_of(grid.data().begin(), grid.data().end(), [&](auto x) { return x == v; });
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("maskpipe_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport

#include <limits>
#include <set>
#include <utility>
#include <vector>

#include "maskpipe/geometry.hpp"

namespace testsupport {

/// Exhaustive double-argmin: independent of the library's distance matrix.
inline std::set<std::pair<std::size_t, std::size_t>> brute_force_mnn(const maskpipe::DescriptorGrid& a,
                                                                     const maskpipe::DescriptorGrid& b) {
  auto dist = [&](std::size_t i, std::size_t j) {
    long double s = 0;
    for (int d = 0; d < a.dim(); ++d) {
      const long double diff = static_cast<long double>(a.descriptor(i)[d]) - b.descriptor(j)[d];
      s += diff * diff;
    }
    return s;
  };
  auto argmin_b = [&](std::size_t i) {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (std::size_t j = 0; j < b.cell_count(); ++j)
      if (!b.is_zero(j) && (best == std::numeric_limits<std::size_t>::max() || dist(i, j) < dist(i, best))) best = j;
    return best;
  };
  auto argmin_a = [&](std::size_t j) {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i < a.cell_count(); ++i)
      if (!a.is_zero(i) && (best == std::numeric_limits<std::size_t>::max() || dist(i, j) < dist(best, j))) best = i;
    return best;
  };
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < a.cell_count(); ++i) {
    if (a.is_zero(i)) continue;
    const auto j = argmin_b(i);
    if (j != std::numeric_limits<std::size_t>::max() && argmin_a(j) == i) out.insert({i, j});
  }
  return out;
}

inline std::set<std::pair<std::size_t, std::size_t>> as_cell_pairs(const maskpipe::MatchSet& m, int live_w,
                                                                   int ref_w) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (const auto& p : m.pairs)
    out.insert({static_cast<std::size_t>(p.live.row) * live_w + p.live.col,
                static_cast<std::size_t>(p.ref.row) * ref_w + p.ref.col});
  return out;
}

/// Mild random projective map on a 640x480 canvas.
inline maskpipe::Homography random_homography(Stream& s) {
  maskpipe::Homography h;
  const double th = s.uniform(-0.2, 0.2), sc = s.uniform(0.85, 1.15);
  h << sc * std::cos(th) + s.uniform(-0.05, 0.05), -sc * std::sin(th) + s.uniform(-0.05, 0.05), s.uniform(-40, 40),
      sc * std::sin(th) + s.uniform(-0.05, 0.05), sc * std::cos(th) + s.uniform(-0.05, 0.05), s.uniform(-40, 40),
      s.uniform(-1e-4, 1e-4), s.uniform(-1e-4, 1e-4), 1.0;
  return h;
}

struct PlantedMatches {
  maskpipe::MatchSet matches;
  std::vector<bool> planted_inlier;
  maskpipe::Homography truth;
};

/// `n` matches, a fraction `outlier_ratio` uniform outliers, the rest from a
/// random homography displaced by at most `noise_px`.
inline PlantedMatches planted_matches(Stream& s, int n, double outlier_ratio, double noise_px) {
  PlantedMatches out;
  out.truth = random_homography(s);
  const int n_out = static_cast<int>(std::lround(n * outlier_ratio));
  for (int k = 0; k < n; ++k) {
    maskpipe::Match m;
    m.live = {k / 20, k % 20};
    m.ref = m.live;
    m.live_pt = {s.uniform(0, 640), s.uniform(0, 480)};
    const bool outlier = k < n_out;
    const auto t = *maskpipe::project(out.truth, m.live_pt);
    if (outlier) {
      m.ref_pt = {s.uniform(0, 640), s.uniform(0, 480)};
    } else {
      const double r = noise_px * std::sqrt(s.uniform()), a = s.uniform(0.0, 6.283185307179586);
      m.ref_pt = {t.x + r * std::cos(a), t.y + r * std::sin(a)};
    }
    out.matches.pairs.push_back(m);
    out.planted_inlier.push_back(!outlier);
  }
  return out;
}

}  // namespace testsupport
