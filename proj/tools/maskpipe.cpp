// maskpipe command-line front end.
//
// Exit codes: 0 success, 1 I/O or data error, 2 usage error.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "maskpipe/pipeline.hpp"
#include "maskpipe/render.hpp"
#include "maskpipe/synth.hpp"

namespace fs = std::filesystem;
using namespace maskpipe;

namespace {

struct UsageError : Error {
  using Error::Error;
};

struct Options {
  // shared
  fs::path corpus;
  fs::path out;
  std::uint64_t seed = 42;
  int jobs = 1;
  // synth
  int scenes = 100;
  bool no_jitter = false;
  // pipeline
  int T = 10;
  int patch_size = 32;
  int stride = 32;
  double ransac_thresh = 3.0;
  std::string gate = "matched";
  bool no_warp = false;
  bool no_uncertainty = false;
  std::string sweep = "0:1:0.01";
  // mask apply
  fs::path apply_fmap;
  fs::path mask_file;
  // eval / render
  fs::path results;
  fs::path scene;
};

ThresholdSweep parse_sweep(const std::string& s) {
  ThresholdSweep sw;
  const auto a = s.find(':');
  const auto b = a == std::string::npos ? std::string::npos : s.find(':', a + 1);
  if (b == std::string::npos) throw UsageError("--threshold-sweep expects start:stop:step, got '" + s + "'");
  try {
    std::size_t used = 0;
    auto num = [&](const std::string& part) {
      const double v = std::stod(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      return v;
    };
    sw.start = num(s.substr(0, a));
    sw.stop = num(s.substr(a + 1, b - a - 1));
    sw.step = num(s.substr(b + 1));
  } catch (const std::exception&) {
    throw UsageError("--threshold-sweep: cannot parse '" + s + "'");
  }
  try {
    (void)sw.values();
  } catch (const Error& e) {
    throw UsageError(std::string("--threshold-sweep: ") + e.what());
  }
  return sw;
}

PipelineConfig pipeline_config(const Options& o) {
  PipelineConfig cfg;
  cfg.maskgen.T = o.T;
  cfg.maskgen.patch.patch_size = o.patch_size;
  cfg.maskgen.patch.stride = o.stride;
  cfg.maskgen.ransac.reproj_threshold = o.ransac_thresh;
  cfg.maskgen.ransac.rng_seed = o.seed;
  if (o.gate == "matched") cfg.detect.gate_mode = GateMode::suppress_matched;
  else if (o.gate == "unmatched") cfg.detect.gate_mode = GateMode::suppress_unmatched;
  else if (o.gate == "off") cfg.detect.gate_mode = GateMode::off;
  else throw UsageError("--gate must be one of matched, unmatched, off");
  cfg.warp = !o.no_warp;
  cfg.detect.use_uncertainty = !o.no_uncertainty;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

int checked_jobs(int jobs) {
  if (jobs < 1) throw UsageError("--jobs must be >= 1");
  return jobs;
}

/// Runs fn(k) for k in [0, n) on up to `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < n;) {
      try {
        fn(k);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::jthread> pool;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(jobs), std::max<std::size_t>(n, 1));
  for (std::size_t t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

std::string stem_of(const Manifest& m, const std::string& frame_id) {
  for (const auto& e : m.entries)
    if (e.frame_id == frame_id) return fs::path(e.path).stem().string();
  throw Error("frame " + frame_id + " not in manifest " + m.name);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

// ---- subcommands -------------------------------------------------------------

void cmd_synth(const Options& o) {
  if (o.scenes < 1) throw UsageError("--scenes must be >= 1");
  SynthConfig cfg;
  cfg.T = o.T;
  cfg.jitter = !o.no_jitter;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  ensure_dir(o.out);
  parallel_for(static_cast<std::size_t>(o.scenes), checked_jobs(o.jobs), [&](std::size_t k) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03zu", k);
    const auto scene = synth_scene(scene_seed(o.seed, k), cfg, name);
    save_scene(scene, o.out / name);
    spdlog::debug("wrote {}", (o.out / name).string());
  });
  spdlog::info("wrote {} scenes to {}", o.scenes, o.out.string());
}

void cmd_pair(const Options& o) {
  for (const auto& dir : find_scenes(o.corpus)) {
    const auto manifest = load_manifest(dir / "manifest.json");
    std::vector<PosedFrame> refs;
    for (const auto* e : manifest.with_role(FrameRole::reference)) refs.push_back({e->frame_id, e->pose});
    if (refs.empty()) throw Error(dir.string() + ": manifest has no reference frames");
    for (const auto* e : manifest.with_role(FrameRole::live))
      std::cout << dir.filename().string() << '\t' << e->frame_id << '\t' << pair_viewpoints(e->pose, refs) << '\n';
  }
}

void cmd_mask_apply(const Options& o) {
  if (o.mask_file.empty() || o.out.empty()) throw UsageError("mask --apply needs --mask-file and --out");
  const auto fmap = io::read_fmap(o.apply_fmap);
  const auto mask = io::read_mask_pgm(o.mask_file);
  io::write_fmap(o.out, apply_mask(fmap, resize_nearest(mask, fmap.width(), fmap.height())));
}

void cmd_mask(const Options& o) {
  if (!o.apply_fmap.empty()) return cmd_mask_apply(o);
  if (o.corpus.empty() || o.out.empty()) throw UsageError("mask needs --corpus and --out (or --apply)");
  auto cfg = pipeline_config(o);
  const auto scenes = find_scenes(o.corpus);
  std::mutex print;
  parallel_for(scenes.size(), checked_jobs(o.jobs), [&](std::size_t s) {
    const auto& dir = scenes[s];
    const auto manifest = load_manifest(dir / "manifest.json");
    const auto out_dir = o.out / dir.filename();
    ensure_dir(out_dir);
    for (auto& in : load_scene_inputs(dir)) {
      std::vector<PosedFrame> posed;
      for (const auto& r : in.refs) posed.push_back({r.frame_id, *r.pose});
      const auto paired_id = pair_viewpoints(*in.live.pose, posed);
      std::size_t p = 0;
      while (in.refs[p].frame_id != paired_id) ++p;
      const auto [lo, hi] = reference_window(p, in.refs.size(), cfg.maskgen.T);
      const auto live_grid = in.live_descriptors ? *in.live_descriptors : extract_descriptors(in.live, cfg.maskgen.patch);
      std::vector<FrameDescriptors> window;
      for (std::size_t k = lo; k <= hi; ++k) {
        const bool side = k < in.ref_descriptors.size() && in.ref_descriptors[k];
        window.push_back({in.refs[k].frame_id, side ? *in.ref_descriptors[k] : extract_descriptors(in.refs[k], cfg.maskgen.patch)});
      }
      const auto result = generate_attention_mask(live_grid, window, cfg.maskgen);
      io::write_mask_pgm(out_dir / (stem_of(manifest, in.live.frame_id) + "_mask.pgm"), result.mask);
      std::lock_guard lock(print);
      std::cout << dir.filename().string() << '\t' << in.live.frame_id << '\t' << result.mask.count_ones() << '\t'
                << result.skipped_frames.size() << '\n';
    }
  });
}

struct FrameRecord {
  std::string id;  ///< "<scene>/<live>"
  ScoreMap score;
  BinaryMask gt;
  std::string row;  ///< frames.csv line
};

const char* flow_source_name(FlowSource s) {
  switch (s) {
    case FlowSource::external: return "external";
    case FlowSource::homography: return "homography";
    case FlowSource::none: break;
  }
  return "none";
}

void write_reports(const fs::path& dir, std::vector<FrameRecord>& records, const ThresholdSweep& sweep) {
  std::vector<std::string> ids;
  std::vector<ScoreMap> scores;
  std::vector<BinaryMask> gts;
  for (auto& r : records) {
    ids.push_back(r.id);
    scores.push_back(std::move(r.score));
    gts.push_back(std::move(r.gt));
  }
  const auto report = evaluate_sweep(ids, scores, gts, sweep);
  write_report_csv(report, dir / "report.csv");
  write_sweep_csv(report, dir / "sweep.csv");
  const auto best = report.best();
  std::cout << "best threshold " << report.best_threshold() << "  precision " << best.precision << "  recall "
            << best.recall << "  f1 " << best.f1 << '\n';
}

void cmd_detect(const Options& o) {
  if (o.corpus.empty() || o.out.empty()) throw UsageError("detect needs --corpus and --out");
  const auto cfg = pipeline_config(o);
  const auto sweep = parse_sweep(o.sweep);
  const int jobs = checked_jobs(o.jobs);
  const auto scenes = find_scenes(o.corpus);
  ensure_dir(o.out);

  std::vector<std::vector<FrameRecord>> per_scene(scenes.size());
  parallel_for(scenes.size(), jobs, [&](std::size_t s) {
    const auto& dir = scenes[s];
    const auto manifest = load_manifest(dir / "manifest.json");
    const auto out_dir = o.out / dir.filename();
    ensure_dir(out_dir);
    for (const auto& in : load_scene_inputs(dir)) {
      const auto stem = stem_of(manifest, in.live.frame_id);
      const auto gt_path = ground_truth_path(dir / (stem + ".png"));
      if (!fs::exists(gt_path)) throw IoError("missing ground truth " + gt_path.string());
      auto gt = io::read_mask_pgm(gt_path);
      auto r = run_frame(in, cfg);
      io::write_fmap(out_dir / (stem + "_score.fmap"), r.score);
      io::write_score_pgm(out_dir / (stem + "_score.pgm"), r.score);
      io::write_png(out_dir / (stem + "_warped.png"), r.warped);
      if (!r.patch_mask.empty()) io::write_mask_pgm(out_dir / (stem + "_mask.pgm"), r.patch_mask);
      const std::string id = dir.filename().string() + "/" + in.live.frame_id;
      std::string row = dir.filename().string() + "," + in.live.frame_id + "," + r.paired_ref_id + "," +
                        std::to_string(r.window_ids.size()) + "," + std::to_string(r.skipped_frames.size()) + "," +
                        (r.patch_mask.empty() ? std::string() : std::to_string(r.patch_mask.count_ones())) + "," +
                        flow_source_name(r.flow_source);
      per_scene[s].push_back({id, std::move(r.score), std::move(gt), std::move(row)});
      spdlog::debug("{}: paired {} skipped {}", id, r.paired_ref_id, r.skipped_frames.size());
    }
    spdlog::info("processed {}", dir.filename().string());
  });

  std::vector<FrameRecord> records;
  for (auto& v : per_scene)
    for (auto& r : v) records.push_back(std::move(r));
  std::ofstream frames(o.out / "frames.csv");
  if (!frames) throw IoError("cannot write " + (o.out / "frames.csv").string());
  frames << "scene,live,paired_ref,window,skipped,mask_ones,flow\n";
  for (const auto& r : records) frames << r.row << '\n';
  frames.close();
  write_reports(o.out, records, sweep);
}

void cmd_eval(const Options& o) {
  if (o.corpus.empty() || o.results.empty()) throw UsageError("eval needs --corpus and --results");
  const auto sweep = parse_sweep(o.sweep);
  const fs::path out = o.out.empty() ? o.results : o.out;
  ensure_dir(out);
  std::vector<FrameRecord> records;
  for (const auto& dir : find_scenes(o.corpus)) {
    const auto manifest = load_manifest(dir / "manifest.json");
    for (const auto* e : manifest.with_role(FrameRole::live)) {
      const auto stem = fs::path(e->path).stem().string();
      const auto score_path = o.results / dir.filename() / (stem + "_score.fmap");
      if (!fs::exists(score_path)) throw IoError("missing score map " + score_path.string());
      records.push_back({dir.filename().string() + "/" + e->frame_id, io::read_score_fmap(score_path),
                         io::read_mask_pgm(ground_truth_path(dir / e->path)), {}});
    }
  }
  write_reports(out, records, sweep);
}

void cmd_render(const Options& o) {
  if (o.scene.empty() || o.results.empty()) throw UsageError("render needs --scene and --results");
  const auto manifest = load_manifest(o.scene / "manifest.json");
  const auto res_dir = o.results / o.scene.filename();
  const fs::path out_dir = o.out.empty() ? res_dir : o.out;
  for (const auto* e : manifest.with_role(FrameRole::live)) {
    const auto stem = fs::path(e->path).stem().string();
    const auto score_path = res_dir / (stem + "_score.fmap");
    const auto warped_path = res_dir / (stem + "_warped.png");
    for (const auto& p : {score_path, warped_path})
      if (!fs::exists(p)) throw IoError("missing detection result " + p.string());
    const Image live = io::read_image(o.scene / e->path);
    const ScoreMap score = io::read_score_fmap(score_path);
    const Image warped = io::read_image(warped_path);
    const auto mask_path = res_dir / (stem + "_mask.pgm");
    const Image masked = fs::exists(mask_path)
                             ? mask_overlay(live, resize_nearest(io::read_mask_pgm(mask_path), live.width(), live.height()))
                             : to_rgb(live);
    const auto gt = io::read_mask_pgm(ground_truth_path(o.scene / e->path));
    const std::vector<Image> panels{live, warped, masked, heat_panel(score), mask_panel(gt)};
    ensure_dir(out_dir);
    const auto path = out_dir / (stem + "_panels.png");
    io::write_png(path, hstack(panels));
    std::cout << path.string() << '\n';
  }
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("maskpipe");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("MASKPIPE_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

void add_pipeline_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--T", o.T, "Reference half-window (2T+1 frames)")->capture_default_str();
  cmd->add_option("--patch-size", o.patch_size, "Patch size in pixels")->capture_default_str();
  cmd->add_option("--stride", o.stride, "Patch stride in pixels")->capture_default_str();
  cmd->add_option("--ransac-thresh", o.ransac_thresh, "RANSAC reprojection threshold (px)")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Base RNG seed")->capture_default_str();
  cmd->add_option("--jobs", o.jobs, "Worker threads")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  Options o;
  CLI::App app{"Attention-mask change detection pipeline"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--seed", o.seed, "Corpus seed")->capture_default_str();
  synth->add_option("--scenes", o.scenes, "Number of scenes")->capture_default_str();
  synth->add_option("--T", o.T, "Reference half-window (2T+1 views per scene)")->capture_default_str();
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_flag("--no-jitter", o.no_jitter, "Render every view from the same viewpoint");
  synth->add_option("--jobs", o.jobs, "Worker threads")->capture_default_str();

  auto* pair = app.add_subcommand("pair", "Print the paired reference for each live frame");
  pair->add_option("--corpus", o.corpus, "Corpus or scene directory")->required();

  auto* mask = app.add_subcommand("mask", "Generate attention masks, or apply one to a feature map");
  mask->add_option("--corpus", o.corpus, "Corpus or scene directory");
  mask->add_option("--out", o.out, "Output directory (or .fmap with --apply)");
  mask->add_option("--apply", o.apply_fmap, "Feature map (.fmap) to mask");
  mask->add_option("--mask-file", o.mask_file, "Mask (.pgm) to apply");
  add_pipeline_flags(mask, o);

  auto* detect = app.add_subcommand("detect", "Run change detection and evaluate");
  detect->add_option("--corpus", o.corpus, "Corpus or scene directory")->required();
  detect->add_option("--out", o.out, "Output directory")->required();
  add_pipeline_flags(detect, o);
  detect->add_option("--gate", o.gate, "Mask gate: matched, unmatched or off")->capture_default_str();
  detect->add_flag("--no-warp", o.no_warp, "Compare against the unwarped paired reference");
  detect->add_flag("--no-uncertainty", o.no_uncertainty, "Skip the uncertainty merge");
  detect->add_option("--threshold-sweep", o.sweep, "start:stop:step")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Re-evaluate saved score maps");
  eval->add_option("--corpus", o.corpus, "Corpus or scene directory")->required();
  eval->add_option("--results", o.results, "detect output directory")->required();
  eval->add_option("--out", o.out, "Report directory (default: results)");
  eval->add_option("--threshold-sweep", o.sweep, "start:stop:step")->capture_default_str();

  auto* render = app.add_subcommand("render", "Write 5-panel overlays for a scene");
  render->add_option("--scene", o.scene, "Scene directory")->required();
  render->add_option("--results", o.results, "detect output directory")->required();
  render->add_option("--out", o.out, "Output directory (default: results/<scene>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) cmd_synth(o);
    else if (*pair) cmd_pair(o);
    else if (*mask) cmd_mask(o);
    else if (*detect) cmd_detect(o);
    else if (*eval) cmd_eval(o);
    else if (*render) cmd_render(o);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
