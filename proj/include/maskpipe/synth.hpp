#pragma once

// Synthetic traversal generator: a procedural indoor-ish background (value
// noise plus tinted rectangles) viewed under small random homographies, with
// small textured objects planted only in the live view.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "maskpipe/dataset_eval.hpp"
#include "maskpipe/error.hpp"
#include "maskpipe/geometry.hpp"
#include "maskpipe/image_io.hpp"
#include "maskpipe/imaging.hpp"
#include "maskpipe/rng.hpp"

namespace maskpipe {

struct SynthConfig {
  int width = 640;
  int height = 480;
  int T = 10;  ///< 2T+1 reference views
  int min_objects = 1;
  int max_objects = 3;
  int object_min_px = 8;
  int object_max_px = 40;
  bool jitter = true;
  double max_rotation_deg = 2.0;
  double max_translation_px = 8.0;
  double brightness_jitter = 0.05;
  double meters_per_px = 0.01;  ///< pose scale for the translation jitter

  void validate() const {
    if (width < 64 || height < 48) throw Error("synth: canvas must be at least 64x48");
    if (T < 0) throw Error("synth: T must be >= 0");
    if (min_objects < 0 || max_objects < min_objects) throw Error("synth: invalid object count range");
    if (object_min_px < 1 || object_max_px < object_min_px || object_max_px > std::min(width, height)) {
      throw Error("synth: object size range does not fit the canvas");
    }
  }
};

/// Axis-aligned planted object in live pixel coordinates: [x, x+w) x [y, y+h).
struct PlantedObject {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

struct Scene {
  std::vector<Image> refs;  ///< 2T+1 views, frame ids ref_00 ...
  Image live;
  BinaryMask ground_truth;
  Manifest manifest;
  std::vector<PlantedObject> objects;
  std::vector<Homography> ref_views;  ///< view pixel -> background coordinates
  Homography live_view = Homography::Identity();
};

namespace detail {

/// Lattice value noise with smoothstep interpolation.
class ValueNoise {
 public:
  ValueNoise(std::uint64_t seed, double wavelength, double x_min, double y_min, double x_max, double y_max)
      : wavelength_(wavelength), ox_(std::floor(x_min / wavelength) - 1), oy_(std::floor(y_min / wavelength) - 1) {
    nx_ = static_cast<int>(std::ceil(x_max / wavelength) - ox_) + 2;
    ny_ = static_cast<int>(std::ceil(y_max / wavelength) - oy_) + 2;
    rng::Stream s(seed);
    lattice_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (auto& v : lattice_) v = s.uniform();
  }

  [[nodiscard]] double operator()(double x, double y) const noexcept {
    const double gx = std::clamp(x / wavelength_ - ox_, 0.0, nx_ - 1.001);
    const double gy = std::clamp(y / wavelength_ - oy_, 0.0, ny_ - 1.001);
    const int ix = static_cast<int>(gx);
    const int iy = static_cast<int>(gy);
    const double fx = smooth(gx - ix);
    const double fy = smooth(gy - iy);
    auto at = [&](int a, int b) { return lattice_[static_cast<std::size_t>(b) * nx_ + a]; };
    return (1 - fy) * ((1 - fx) * at(ix, iy) + fx * at(ix + 1, iy)) +
           fy * ((1 - fx) * at(ix, iy + 1) + fx * at(ix + 1, iy + 1));
  }

 private:
  static double smooth(double t) noexcept { return t * t * (3.0 - 2.0 * t); }

  double wavelength_;
  double ox_;
  double oy_;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<double> lattice_;
};

struct TintedRect {
  double x0, y0, x1, y1;
  std::array<double, 3> tint;
  double offset;
};

class Background {
 public:
  Background(std::uint64_t seed, int w, int h) {
    rng::Stream s(seed);
    const double pad = 80.0;
    constexpr std::array<double, 4> kWavelengths{56.0, 24.0, 11.0, 5.0};
    constexpr std::array<double, 4> kAmplitudes{0.55, 0.35, 0.22, 0.12};
    for (std::size_t o = 0; o < kWavelengths.size(); ++o) {
      octaves_.emplace_back(s.next(), kWavelengths[o], -pad, -pad, w + pad, h + pad);
      amplitudes_.push_back(kAmplitudes[o]);
    }
    base_tint_ = {s.uniform(0.7, 1.0), s.uniform(0.7, 1.0), s.uniform(0.7, 1.0)};
    const int n_rects = s.uniform_int(6, 12);
    for (int r = 0; r < n_rects; ++r) {
      const double rw = s.uniform(40.0, 0.45 * w);
      const double rh = s.uniform(30.0, 0.45 * h);
      const double x0 = s.uniform(-pad, w + pad - rw);
      const double y0 = s.uniform(-pad, h + pad - rh);
      rects_.push_back({x0, y0, x0 + rw, y0 + rh, {s.uniform(0.4, 1.0), s.uniform(0.4, 1.0), s.uniform(0.4, 1.0)},
                        s.uniform(-0.2, 0.2)});
    }
  }

  void shade(double x, double y, float* rgb) const noexcept {
    double l = 0.5;
    for (std::size_t o = 0; o < octaves_.size(); ++o) l += amplitudes_[o] * (octaves_[o](x, y) - 0.5);
    std::array<double, 3> tint = base_tint_;
    double offset = 0.0;
    for (const auto& r : rects_) {  // later rectangles paint over earlier ones
      if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1) {
        tint = r.tint;
        offset = r.offset;
      }
    }
    for (int c = 0; c < 3; ++c) rgb[c] = static_cast<float>(std::clamp(l * tint[c] + offset, 0.0, 1.0));
  }

 private:
  std::vector<ValueNoise> octaves_;
  std::vector<double> amplitudes_;
  std::array<double, 3> base_tint_{};
  std::vector<TintedRect> rects_;
};

struct ViewJitter {
  double rotation_deg = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  double brightness = 0.0;
};

/// View pixel -> background: rotation about the canvas centre, then translation.
inline Homography view_homography(const ViewJitter& j, int w, int h) {
  const double th = j.rotation_deg * std::numbers::pi / 180.0;
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  const double c = std::cos(th), s = std::sin(th);
  Homography m;
  m << c, -s, cx - c * cx + s * cy + j.tx, s, c, cy - s * cx - c * cy + j.ty, 0, 0, 1;
  return m;
}

inline ViewJitter draw_jitter(rng::Stream& s, const SynthConfig& cfg) {
  if (!cfg.jitter) return {};
  return {s.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg),
          s.uniform(-cfg.max_translation_px, cfg.max_translation_px),
          s.uniform(-cfg.max_translation_px, cfg.max_translation_px),
          s.uniform(-cfg.brightness_jitter, cfg.brightness_jitter)};
}

/// Renders one view, quantised to 8-bit levels so a PNG round-trip is exact.
inline Image render_view(const Background& bg, const Homography& view, double brightness, int w, int h) {
  Image img(w, h, 3);
  float rgb[3];
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double x = view(0, 0) * j + view(0, 1) * i + view(0, 2);
      const double y = view(1, 0) * j + view(1, 1) * i + view(1, 2);
      bg.shade(x, y, rgb);
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb[c] + brightness, 0.0, 1.0);
        img(i, j, c) = static_cast<float>(std::lround(v * 255.0) / 255.0);
      }
    }
  }
  return img;
}

inline Pose jitter_pose(const ViewJitter& j, double meters_per_px) {
  return {j.tx * meters_per_px, j.ty * meters_per_px, j.rotation_deg};
}

}  // namespace detail

/// Builds one scene. The same (seed, cfg) always yields a bit-identical scene.
[[nodiscard]] inline Scene synth_scene(std::uint64_t seed, const SynthConfig& cfg,
                                       const std::string& name = "scene") {
  cfg.validate();
  const int w = cfg.width;
  const int h = cfg.height;
  rng::Stream s(seed);
  const detail::Background bg(s.next(), w, h);

  Scene scene;
  scene.manifest.name = name;
  scene.manifest.width = w;
  scene.manifest.height = h;
  scene.manifest.seed = seed;

  const int n_refs = 2 * cfg.T + 1;
  for (int r = 0; r < n_refs; ++r) {
    const auto jit = detail::draw_jitter(s, cfg);
    const auto view = detail::view_homography(jit, w, h);
    Image img = detail::render_view(bg, view, jit.brightness, w, h);
    char id[16];
    std::snprintf(id, sizeof id, "ref_%02d", r);
    img.frame_id = id;
    img.pose = detail::jitter_pose(jit, cfg.meters_per_px);
    scene.manifest.entries.push_back({img.frame_id, img.frame_id + ".png", FrameRole::reference, *img.pose});
    scene.refs.push_back(std::move(img));
    scene.ref_views.push_back(view);
  }

  const auto live_jit = detail::draw_jitter(s, cfg);
  scene.live_view = detail::view_homography(live_jit, w, h);
  scene.live = detail::render_view(bg, scene.live_view, live_jit.brightness, w, h);
  scene.live.frame_id = "live";
  scene.live.pose = detail::jitter_pose(live_jit, cfg.meters_per_px);
  scene.manifest.entries.insert(scene.manifest.entries.begin(),
                                {"live", "live.png", FrameRole::live, *scene.live.pose});

  // Planted objects: non-overlapping (1 px gap), fully inside the canvas.
  scene.ground_truth = BinaryMask(w, h);
  const int n_objects = s.uniform_int(cfg.min_objects, cfg.max_objects);
  for (int o = 0; o < n_objects; ++o) {
    PlantedObject obj;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      obj.w = s.uniform_int(cfg.object_min_px, cfg.object_max_px);
      obj.h = s.uniform_int(cfg.object_min_px, cfg.object_max_px);
      obj.x = s.uniform_int(0, w - obj.w);
      obj.y = s.uniform_int(0, h - obj.h);
      placed = std::none_of(scene.objects.begin(), scene.objects.end(), [&](const PlantedObject& other) {
        return obj.x < other.x + other.w + 1 && other.x < obj.x + obj.w + 1 && obj.y < other.y + other.h + 1 &&
               other.y < obj.y + obj.h + 1;
      });
    }
    if (!placed) throw Error("synth: could not place object " + std::to_string(o) + " after 100 attempts");
    // Two-tone checkerboard, one dark and one bright tone of random hue.
    const int cell = s.uniform_int(2, 4);
    std::array<float, 3> dark{}, bright{};
    for (int c = 0; c < 3; ++c) {
      dark[c] = static_cast<float>(std::lround(s.uniform(0.0, 0.2) * 255.0) / 255.0);
      bright[c] = static_cast<float>(std::lround(s.uniform(0.8, 1.0) * 255.0) / 255.0);
    }
    for (int i = obj.y; i < obj.y + obj.h; ++i) {
      for (int j = obj.x; j < obj.x + obj.w; ++j) {
        const bool on = (((i - obj.y) / cell) + ((j - obj.x) / cell)) % 2 == 0;
        for (int c = 0; c < 3; ++c) scene.live(i, j, c) = on ? bright[c] : dark[c];
        scene.ground_truth.set(i, j, true);
      }
    }
    scene.objects.push_back(obj);
  }
  return scene;
}

/// Seed of scene `index` within a corpus.
[[nodiscard]] inline std::uint64_t scene_seed(std::uint64_t corpus_seed, std::size_t index) {
  return rng::combine(corpus_seed, static_cast<std::uint64_t>(index));
}

/// Writes manifest.json, one PNG per frame and "<live stem>_gt.pgm" into `dir`.
inline void save_scene(const Scene& scene, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  io::write_png(dir / "live.png", scene.live);
  for (const auto& r : scene.refs) io::write_png(dir / (r.frame_id + ".png"), r);
  io::write_mask_pgm(ground_truth_path(dir / "live.png"), scene.ground_truth);
  save_manifest(scene.manifest, dir / "manifest.json");
}

}  // namespace maskpipe
