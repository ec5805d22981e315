#pragma once

// Attention mask generation over a reference window and the channel-wise
// masking of external feature maps.
//
// A cell of the mask is 1 when the live patch at that cell took part in a
// geometrically verified (RANSAC inlier) mutual-nearest-neighbour match with
// every reference frame in the window. Frames are combined by element-wise
// product, starting from an all-ones mask.

#include <span>
#include <string>
#include <vector>

#include "maskpipe/error.hpp"
#include "maskpipe/geometry.hpp"
#include "maskpipe/imaging.hpp"
#include "maskpipe/patch_features.hpp"
#include "maskpipe/rng.hpp"

namespace maskpipe {

enum class Polarity {
  inlier_one,   ///< 1 = verified match (static background)
  inlier_zero,  ///< complement of inlier_one
};

struct MaskGenConfig {
  int T = 10;  ///< half-window: at most 2T+1 reference frames
  PatchGridConfig patch;
  RansacConfig ransac;
  Polarity polarity = Polarity::inlier_one;
  /// Degenerate frames (too few matches for RANSAC) are skipped instead of
  /// contributing an all-zeros binarization.
  bool skip_degenerate_frames = true;

  void validate() const {
    if (T < 0) throw Error("T must be >= 0, got " + std::to_string(T));
    patch.validate();
    ransac.validate();
  }
};

/// Marks the live cells of the inlier pairs.
[[nodiscard]] inline BinaryMask binarize(const InlierSet& inliers, int grid_w, int grid_h,
                                         Polarity polarity = Polarity::inlier_one) {
  BinaryMask mask(grid_w, grid_h);
  for (const auto& m : inliers.inliers) {
    if (!mask.contains(m.live.row, m.live.col)) {
      throw Error("binarize: inlier cell (" + std::to_string(m.live.row) + "," + std::to_string(m.live.col) +
                  ") outside " + std::to_string(grid_w) + "x" + std::to_string(grid_h) + " grid");
    }
    mask.set(m.live.row, m.live.col, true);
  }
  return polarity == Polarity::inlier_one ? mask : mask.complement();
}

struct FrameDescriptors {
  std::string frame_id;
  DescriptorGrid grid;
};

struct AttentionMaskResult {
  BinaryMask mask;                          ///< live patch-grid dims
  std::vector<std::string> skipped_frames;  ///< degenerate frames left out
};

/// Per-frame verification: MNN, then RANSAC seeded by the frame id.
[[nodiscard]] inline InlierSet verify_frame(const DescriptorGrid& live, const FrameDescriptors& ref,
                                            const RansacConfig& ransac) {
  RansacConfig cfg = ransac;
  cfg.rng_seed = rng::frame_seed(ransac.rng_seed, ref.frame_id);
  return estimate_homography_ransac(mutual_nearest_neighbors(live, ref.grid), cfg);
}

[[nodiscard]] inline AttentionMaskResult generate_attention_mask(const DescriptorGrid& live,
                                                                 std::span<const FrameDescriptors> refs,
                                                                 const MaskGenConfig& cfg) {
  cfg.validate();
  if (refs.empty()) throw Error("generate_attention_mask: reference sequence is empty");
  if (refs.size() > static_cast<std::size_t>(2 * cfg.T + 1)) {
    throw Error("generate_attention_mask: " + std::to_string(refs.size()) + " reference frames exceed 2T+1 = " +
                std::to_string(2 * cfg.T + 1));
  }
  AttentionMaskResult out{BinaryMask(live.grid_w(), live.grid_h(), true), {}};
  for (const auto& ref : refs) {
    const auto inliers = verify_frame(live, ref, cfg.ransac);
    if (inliers.degenerate && cfg.skip_degenerate_frames) {
      out.skipped_frames.push_back(ref.frame_id);
      continue;
    }
    out.mask = hadamard(out.mask, binarize(inliers, live.grid_w(), live.grid_h(), cfg.polarity));
  }
  return out;
}

[[nodiscard]] inline AttentionMaskResult generate_attention_mask(const Image& live, std::span<const Image> refs,
                                                                 const MaskGenConfig& cfg) {
  cfg.validate();
  const auto live_grid = extract_descriptors(live, cfg.patch);
  std::vector<FrameDescriptors> ref_grids;
  ref_grids.reserve(refs.size());
  for (const auto& r : refs) ref_grids.push_back({r.frame_id, extract_descriptors(r, cfg.patch)});
  return generate_attention_mask(live_grid, ref_grids, cfg);
}

/// fmap_new[i,j,k] = fmap_old[i,j,k] * mask[i,j]. The mask must already be
/// resized to the feature map's W x H.
[[nodiscard]] inline FeatureMap apply_mask(const FeatureMap& fmap, const BinaryMask& mask) {
  if (!fmap.same_plane(mask)) {
    throw Error("apply_mask: feature map " + fmap.shape() + " vs mask " + mask.shape());
  }
  return hadamard(fmap, mask);
}

}  // namespace maskpipe
