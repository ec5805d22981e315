#pragma once

// Corpus manifests, viewpoint pairing and pooled pixel-wise P/R/F1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskpipe/detection.hpp"
#include "maskpipe/error.hpp"
#include "maskpipe/imaging.hpp"

namespace maskpipe {

// ---- manifest --------------------------------------------------------------

enum class FrameRole { live, reference };

struct ManifestEntry {
  std::string frame_id;
  std::string path;  ///< relative to the manifest's directory
  FrameRole role = FrameRole::reference;
  Pose pose;
};

struct Manifest {
  std::string name;
  int width = 0;
  int height = 0;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;

  [[nodiscard]] std::vector<const ManifestEntry*> with_role(FrameRole role) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.role == role) out.push_back(&e);
    return out;
  }
};

[[nodiscard]] inline nlohmann::json to_json(const Manifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"frame_id", e.frame_id},
                       {"path", e.path},
                       {"role", e.role == FrameRole::live ? "live" : "reference"},
                       {"pose", {{"x", e.pose.x}, {"y", e.pose.y}, {"yaw", e.pose.yaw}}}});
  }
  return {{"name", m.name}, {"width", m.width}, {"height", m.height}, {"seed", m.seed}, {"entries", entries}};
}

/// Parses and checks the schema; frame ids must be unique.
[[nodiscard]] inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    std::set<std::string> ids;
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.frame_id = e.at("frame_id").get<std::string>();
      entry.path = e.at("path").get<std::string>();
      const auto role = e.at("role").get<std::string>();
      if (role == "live") {
        entry.role = FrameRole::live;
      } else if (role == "reference") {
        entry.role = FrameRole::reference;
      } else {
        throw IoError("manifest: unknown role \"" + role + "\"");
      }
      const auto& pose = e.at("pose");
      entry.pose = {pose.at("x").get<double>(), pose.at("y").get<double>(), pose.at("yaw").get<double>()};
      if (!ids.insert(entry.frame_id).second) throw IoError("manifest: duplicate frame_id \"" + entry.frame_id + "\"");
      m.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(std::string("manifest: ") + ex.what());
  }
  return m;
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << std::setw(2) << to_json(m) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

/// Loads and checks that every referenced image exists next to the manifest.
[[nodiscard]] inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(path.string() + ": " + ex.what());
  }
  auto m = manifest_from_json(j);
  const auto dir = path.parent_path();
  for (const auto& e : m.entries) {
    if (!std::filesystem::exists(dir / e.path)) throw IoError("missing file: " + (dir / e.path).string());
  }
  return m;
}

/// Ground-truth mask for a live frame is stored beside it as "<stem>_gt.pgm".
[[nodiscard]] inline std::filesystem::path ground_truth_path(const std::filesystem::path& live_image) {
  return live_image.parent_path() / (live_image.stem().string() + "_gt.pgm");
}

// ---- viewpoint pairing -----------------------------------------------------

struct PosedFrame {
  std::string frame_id;
  Pose pose;
};

/// Signed yaw difference wrapped to (-180, 180].
[[nodiscard]] inline double yaw_deviation(double a, double b) noexcept {
  double d = std::fmod(a - b, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

/// Among references within 1 degree of the live yaw, the position-nearest one;
/// otherwise the position-nearest overall. Ties go to the lowest frame_id.
[[nodiscard]] inline std::string pair_viewpoints(const Pose& live, std::span<const PosedFrame> refs,
                                                 double max_yaw_deviation_deg = 1.0) {
  if (refs.empty()) throw Error("pair_viewpoints: no reference frames");
  auto pick = [&](bool angle_gate) -> const PosedFrame* {
    const PosedFrame* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& r : refs) {
      if (angle_gate && !(std::abs(yaw_deviation(live.yaw, r.pose.yaw)) < max_yaw_deviation_deg)) continue;
      const double d = std::hypot(r.pose.x - live.x, r.pose.y - live.y);
      if (!best || d < best_d || (d == best_d && r.frame_id < best->frame_id)) {
        best = &r;
        best_d = d;
      }
    }
    return best;
  };
  if (const auto* r = pick(true)) return r->frame_id;
  return pick(false)->frame_id;
}

// ---- metrics ---------------------------------------------------------------

struct PixelCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  PixelCounts& operator+=(const PixelCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// precision/recall are 0 when their denominators are 0; F1 is 0 when P + R = 0.
[[nodiscard]] inline Metrics metrics_from(const PixelCounts& c) noexcept {
  Metrics m;
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

[[nodiscard]] inline PixelCounts count_pixels(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_plane(gt)) throw Error("evaluate: shape mismatch " + pred.shape() + " vs " + gt.shape());
  PixelCounts c;
  for (std::size_t p = 0; p < pred.data().size(); ++p) {
    const bool a = pred.data()[p] != 0;
    const bool b = gt.data()[p] != 0;
    c.tp += a && b;
    c.fp += a && !b;
    c.fn += !a && b;
  }
  return c;
}

/// Corpus-pooled (micro-averaged) metrics over image pairs.
[[nodiscard]] inline Metrics evaluate(std::span<const BinaryMask> preds, std::span<const BinaryMask> gts) {
  if (preds.size() != gts.size()) throw Error("evaluate: prediction/ground-truth count mismatch");
  PixelCounts total;
  for (std::size_t n = 0; n < preds.size(); ++n) total += count_pixels(preds[n], gts[n]);
  return metrics_from(total);
}

struct ThresholdSweep {
  double start = 0.0;
  double stop = 1.0;
  double step = 0.01;

  [[nodiscard]] std::vector<double> values() const {
    if (!(step > 0.0) || start < 0.0 || stop > 1.0 || start > stop) {
      throw Error("threshold sweep must satisfy 0 <= start <= stop <= 1 and step > 0");
    }
    std::vector<double> out;
    const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long k = 0; k <= n; ++k) out.push_back(std::min(stop, start + static_cast<double>(k) * step));
    return out;
  }
};

/// Counts at every threshold of a sorted sweep, for one image.
[[nodiscard]] inline std::vector<PixelCounts> sweep_counts(const ScoreMap& score, const BinaryMask& gt,
                                                           std::span<const double> taus) {
  if (!score.same_plane(gt)) throw Error("evaluate: shape mismatch " + score.shape() + " vs " + gt.shape());
  // hist[k]: pixels whose score clears exactly the first k thresholds.
  std::vector<std::uint64_t> pos(taus.size() + 1, 0), neg(taus.size() + 1, 0);
  for (std::size_t p = 0; p < score.data().size(); ++p) {
    const double s = score.data()[p];
    const auto k = static_cast<std::size_t>(std::upper_bound(taus.begin(), taus.end(), s) - taus.begin());
    (gt.data()[p] ? pos : neg)[k]++;
  }
  std::uint64_t total_pos = 0;
  for (auto v : pos) total_pos += v;
  std::vector<PixelCounts> out(taus.size());
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t k = taus.size(); k-- > 0;) {
    tp += pos[k + 1];
    fp += neg[k + 1];
    out[k] = {tp, fp, total_pos - tp};
  }
  return out;
}

struct EvalRow {
  std::string image;  ///< "corpus" for the pooled row
  double threshold = 0.0;
  Metrics metrics;
};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<std::string> image_ids;
  std::vector<std::vector<PixelCounts>> per_image;  ///< [image][threshold]
  std::vector<PixelCounts> corpus;                  ///< [threshold]
  std::size_t best_index = 0;

  [[nodiscard]] double best_threshold() const { return thresholds.at(best_index); }
  [[nodiscard]] Metrics best() const { return metrics_from(corpus.at(best_index)); }
  [[nodiscard]] Metrics corpus_at(std::size_t k) const { return metrics_from(corpus.at(k)); }

  /// Corpus row then one row per image, all at the best-F1 threshold.
  [[nodiscard]] std::vector<EvalRow> summary_rows() const {
    std::vector<EvalRow> rows{{"corpus", best_threshold(), best()}};
    for (std::size_t n = 0; n < image_ids.size(); ++n)
      rows.push_back({image_ids[n], best_threshold(), metrics_from(per_image[n][best_index])});
    return rows;
  }
};

/// Sweeps thresholds over score maps; the best threshold maximises pooled F1
/// (lowest threshold wins ties).
[[nodiscard]] inline EvalReport evaluate_sweep(std::span<const std::string> ids, std::span<const ScoreMap> scores,
                                               std::span<const BinaryMask> gts, const ThresholdSweep& sweep) {
  if (ids.size() != scores.size() || scores.size() != gts.size()) throw Error("evaluate_sweep: input count mismatch");
  EvalReport r;
  r.thresholds = sweep.values();
  r.image_ids.assign(ids.begin(), ids.end());
  r.corpus.assign(r.thresholds.size(), {});
  for (std::size_t n = 0; n < scores.size(); ++n) {
    r.per_image.push_back(sweep_counts(scores[n], gts[n], r.thresholds));
    for (std::size_t k = 0; k < r.thresholds.size(); ++k) r.corpus[k] += r.per_image.back()[k];
  }
  double best_f1 = -1.0;
  for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
    const double f1 = metrics_from(r.corpus[k]).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      r.best_index = k;
    }
  }
  return r;
}

namespace detail {
inline std::string fmt_num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}
}  // namespace detail

/// image,threshold,precision,recall,f1 -- corpus row first.
inline void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "image,threshold,precision,recall,f1\n";
  for (const auto& row : report.summary_rows()) {
    os << row.image << ',' << detail::fmt_num(row.threshold) << ',' << detail::fmt_num(row.metrics.precision) << ','
       << detail::fmt_num(row.metrics.recall) << ',' << detail::fmt_num(row.metrics.f1) << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

/// Pooled metrics at every swept threshold.
inline void write_sweep_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "threshold,precision,recall,f1\n";
  for (std::size_t k = 0; k < report.thresholds.size(); ++k) {
    const auto m = report.corpus_at(k);
    os << detail::fmt_num(report.thresholds[k]) << ',' << detail::fmt_num(m.precision) << ','
       << detail::fmt_num(m.recall) << ',' << detail::fmt_num(m.f1) << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace maskpipe
