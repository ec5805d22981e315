#pragma once

// End-to-end per-frame change detection:
//   pair -> attention mask over the reference window -> warp -> difference
//   -> mask gate -> uncertainty merge.
// Also the on-disk corpus conventions shared by the CLI.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "maskpipe/alignment.hpp"
#include "maskpipe/attention_mask.hpp"
#include "maskpipe/dataset_eval.hpp"
#include "maskpipe/detection.hpp"
#include "maskpipe/image_io.hpp"
#include "maskpipe/patch_features.hpp"
#include "maskpipe/warping.hpp"

namespace maskpipe {

struct PipelineConfig {
  MaskGenConfig maskgen;
  DetectConfig detect;
  bool warp = true;
  AlignConfig align;
  int correspondence_radius = 3;

  void validate() const {
    maskgen.validate();
    detect.validate();
    if (correspondence_radius < 1) throw Error("correspondence_radius must be >= 1");
  }
};

enum class FlowSource { none, external, homography };

struct FrameInput {
  Image live;
  std::vector<Image> refs;  ///< whole reference sequence in traversal order
  /// External descriptors; when present they replace the built-in ones.
  std::optional<DescriptorGrid> live_descriptors;
  std::vector<std::optional<DescriptorGrid>> ref_descriptors;  ///< parallel to refs, or empty
  /// External dense flow (live -> given reference), if one exists.
  std::function<std::optional<FlowField>(const Image& ref)> external_flow;
};

struct FrameResult {
  std::string live_id;
  std::string paired_ref_id;
  std::vector<std::string> window_ids;
  std::vector<std::string> skipped_frames;
  BinaryMask patch_mask;  ///< attention mask on the live patch grid; empty when gating is off
  FlowSource flow_source = FlowSource::none;
  Homography model = Homography::Identity();  ///< live -> paired reference (homography path)
  Image warped;
  BinaryMask valid;
  ScoreMap uncertainty;
  ScoreMap score;
};

/// Indices [p - T, p + T] clipped to the sequence, around position p.
[[nodiscard]] inline std::pair<std::size_t, std::size_t> reference_window(std::size_t p, std::size_t n, int T) {
  const auto t = static_cast<std::size_t>(T);
  return {p > t ? p - t : 0, std::min(n - 1, p + t)};
}

[[nodiscard]] inline FrameResult run_frame(const FrameInput& in, const PipelineConfig& cfg) {
  cfg.validate();
  if (in.refs.empty()) throw Error("run_frame: no reference frames for " + in.live.frame_id);
  if (!in.live.pose) throw Error("run_frame: live frame " + in.live.frame_id + " has no pose");
  FrameResult out;
  out.live_id = in.live.frame_id;

  std::vector<PosedFrame> posed;
  for (const auto& r : in.refs) {
    if (!r.pose) throw Error("run_frame: reference " + r.frame_id + " has no pose");
    if (!r.same_plane(in.live) || r.channels() != in.live.channels()) {
      throw Error("run_frame: reference " + r.frame_id + " " + r.shape() + " vs live " + in.live.shape());
    }
    posed.push_back({r.frame_id, *r.pose});
  }
  out.paired_ref_id = pair_viewpoints(*in.live.pose, posed);
  const auto paired = static_cast<std::size_t>(
      std::find_if(in.refs.begin(), in.refs.end(), [&](const Image& r) { return r.frame_id == out.paired_ref_id; }) -
      in.refs.begin());
  const Image& ref = in.refs[paired];

  auto descriptors_of = [&](std::size_t k) {
    if (k < in.ref_descriptors.size() && in.ref_descriptors[k]) return *in.ref_descriptors[k];
    return extract_descriptors(in.refs[k], cfg.maskgen.patch);
  };
  const DescriptorGrid live_grid =
      in.live_descriptors ? *in.live_descriptors : extract_descriptors(in.live, cfg.maskgen.patch);

  const bool gating = cfg.detect.gate_mode != GateMode::off;
  std::optional<DescriptorGrid> paired_grid;
  if (gating) {
    const auto [lo, hi] = reference_window(paired, in.refs.size(), cfg.maskgen.T);
    std::vector<FrameDescriptors> window;
    for (std::size_t k = lo; k <= hi; ++k) {
      window.push_back({in.refs[k].frame_id, descriptors_of(k)});
      out.window_ids.push_back(in.refs[k].frame_id);
      if (k == paired) paired_grid = window.back().grid;
    }
    auto mask = generate_attention_mask(live_grid, window, cfg.maskgen);
    out.patch_mask = std::move(mask.mask);
    out.skipped_frames = std::move(mask.skipped_frames);
  }

  FlowField flow;
  if (!cfg.warp) {
    flow = identity_flow(in.live.width(), in.live.height());
    out.flow_source = FlowSource::none;
  } else if (auto ext = in.external_flow ? in.external_flow(ref) : std::nullopt) {
    if (ext->width != in.live.width() || ext->height != in.live.height()) {
      throw Error("run_frame: external flow dims do not match live frame " + in.live.frame_id);
    }
    flow = std::move(*ext);
    out.flow_source = FlowSource::external;
  } else {
    if (!paired_grid) paired_grid = descriptors_of(paired);
    const auto inliers = verify_frame(live_grid, {ref.frame_id, *paired_grid}, cfg.maskgen.ransac);
    const Homography init = inliers.degenerate ? Homography::Identity() : inliers.model;
    out.model = refine_homography(in.live, ref, init, cfg.align);
    flow = flow_from_homography(out.model, in.live.width(), in.live.height());
    out.flow_source = FlowSource::homography;
  }

  auto warped = warp_reference(ref, flow);
  out.warped = std::move(warped.image);
  out.valid = std::move(warped.valid);

  // Out-of-bounds samples count as fully uncertain; without learned flow
  // uncertainty, local photometric correspondence stands in for it.
  out.uncertainty = flow.uncertainty_map();
  const auto& valid_data = out.valid.data();
  for (std::size_t p = 0; p < valid_data.size(); ++p)
    if (!valid_data[p]) out.uncertainty.data()[p] = 1.0f;
  if (out.flow_source != FlowSource::external) {
    const auto photometric = correspondence_uncertainty(in.live, out.warped, out.valid, cfg.correspondence_radius);
    for (std::size_t p = 0; p < photometric.data().size(); ++p)
      out.uncertainty.data()[p] = std::max(out.uncertainty.data()[p], photometric.data()[p]);
  }

  ScoreMap score = difference_map(in.live, out.warped, out.valid, cfg.detect);
  if (gating) score = gate_with_mask(score, resize_nearest(out.patch_mask, score.width(), score.height()), cfg.detect.gate_mode);
  if (cfg.detect.use_uncertainty) score = merge_uncertainty(score, out.uncertainty);
  out.score = std::move(score);
  return out;
}

// ---- on-disk corpus --------------------------------------------------------
//
//   <scene>/manifest.json
//   <scene>/<frame>.png           images named by the manifest
//   <scene>/<live stem>_gt.pgm    ground truth for each live frame
//   <scene>/<frame stem>.pdsc     optional external descriptors
//   <scene>/<live stem>__<ref stem>.flow   optional external flow

namespace fs = std::filesystem;

[[nodiscard]] inline fs::path descriptor_sidecar(const fs::path& image) {
  return image.parent_path() / (image.stem().string() + ".pdsc");
}

[[nodiscard]] inline fs::path flow_sidecar(const fs::path& live_image, const fs::path& ref_image) {
  return live_image.parent_path() / (live_image.stem().string() + "__" + ref_image.stem().string() + ".flow");
}

/// Scene directories under `corpus` holding a manifest.json (or `corpus` itself), sorted.
[[nodiscard]] inline std::vector<fs::path> find_scenes(const fs::path& corpus) {
  if (!fs::is_directory(corpus)) throw IoError("corpus directory not found: " + corpus.string());
  if (fs::exists(corpus / "manifest.json")) return {corpus};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(corpus))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no manifest.json found under " + corpus.string());
  return out;
}

[[nodiscard]] inline Image load_frame(const fs::path& dir, const ManifestEntry& e) {
  Image img = io::read_image(dir / e.path);
  img.frame_id = e.frame_id;
  img.pose = e.pose;
  return img;
}

/// One FrameInput per live entry, with sidecar descriptors / flows wired in.
[[nodiscard]] inline std::vector<FrameInput> load_scene_inputs(const fs::path& scene_dir) {
  const auto manifest = load_manifest(scene_dir / "manifest.json");
  std::vector<Image> refs;
  std::vector<std::optional<DescriptorGrid>> ref_desc;
  std::vector<fs::path> ref_paths;
  std::vector<std::string> ref_ids;
  for (const auto* e : manifest.with_role(FrameRole::reference)) {
    ref_ids.push_back(e->frame_id);
    refs.push_back(load_frame(scene_dir, *e));
    ref_paths.push_back(scene_dir / e->path);
    const auto side = descriptor_sidecar(ref_paths.back());
    ref_desc.push_back(fs::exists(side) ? std::optional(read_pdsc(side)) : std::nullopt);
  }
  std::vector<FrameInput> out;
  for (const auto* e : manifest.with_role(FrameRole::live)) {
    FrameInput in;
    in.live = load_frame(scene_dir, *e);
    const fs::path live_path = scene_dir / e->path;
    const auto side = descriptor_sidecar(live_path);
    if (fs::exists(side)) in.live_descriptors = read_pdsc(side);
    in.refs = refs;
    in.ref_descriptors = ref_desc;
    in.external_flow = [live_path, ref_paths, ref_ids](const Image& ref) -> std::optional<FlowField> {
      for (std::size_t k = 0; k < ref_ids.size(); ++k) {
        if (ref_ids[k] != ref.frame_id) continue;
        const auto f = flow_sidecar(live_path, ref_paths[k]);
        if (fs::exists(f)) return load_flow(f);
      }
      return std::nullopt;
    };
    out.push_back(std::move(in));
  }
  return out;
}

}  // namespace maskpipe
