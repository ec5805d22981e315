#pragma once

// PGM (P5) and PNG codecs for images, masks and score maps, and the ".fmap"
// feature-map container.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "maskpipe/binary_io.hpp"
#include "maskpipe/error.hpp"
#include "maskpipe/imaging.hpp"

namespace maskpipe::io {

namespace fs = std::filesystem;

[[nodiscard]] inline std::uint8_t to_byte(float v) noexcept {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

namespace detail {

struct Raster8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> bytes;
};

inline void write_pgm_bytes(const fs::path& path, int w, int h, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "P5\n" << w << ' ' << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

inline Raster8 read_pgm_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto fail = [&](const std::string& msg) -> IoError {
    return IoError(path.string() + ": at byte offset " + std::to_string(pos) + ": " + msg);
  };
  auto skip_ws = [&] {
    while (pos < buf.size()) {
      if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_ws();
    if (pos >= buf.size() || !std::isdigit(static_cast<unsigned char>(buf[pos]))) throw fail("expected integer");
    long v = 0;
    while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
      v = v * 10 + (buf[pos] - '0');
      if (v > 1'000'000) throw fail("header value too large");
      ++pos;
    }
    return static_cast<int>(v);
  };
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') throw fail("not a binary PGM (P5)");
  pos = 2;
  Raster8 r;
  r.width = read_int();
  r.height = read_int();
  const int maxval = read_int();
  if (maxval < 1 || maxval > 255) throw fail("unsupported maxval " + std::to_string(maxval));
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos]))) throw fail("malformed header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(r.width) * r.height;
  if (buf.size() - pos < n) throw fail("truncated pixel data");
  r.bytes.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    const auto v = static_cast<unsigned char>(buf[pos + p]);
    r.bytes[p] = maxval == 255 ? v : static_cast<std::uint8_t>(std::lround(v * 255.0 / maxval));
  }
  return r;
}

}  // namespace detail

// ---- PGM -------------------------------------------------------------------

inline void write_pgm(const fs::path& path, const Image& img) {
  std::vector<std::uint8_t> bytes(img.pixel_count());
  for (int i = 0; i < img.height(); ++i)
    for (int j = 0; j < img.width(); ++j) bytes[static_cast<std::size_t>(i) * img.width() + j] = to_byte(img.luma(i, j));
  detail::write_pgm_bytes(path, img.width(), img.height(), bytes);
}

[[nodiscard]] inline Image read_pgm(const fs::path& path) {
  auto r = detail::read_pgm_bytes(path);
  Image img(r.width, r.height, 1);
  for (std::size_t p = 0; p < r.bytes.size(); ++p) img.data()[p] = r.bytes[p] / 255.0f;
  return img;
}

/// Masks are stored as 0 / 255.
inline void write_mask_pgm(const fs::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> bytes(mask.data().size());
  std::transform(mask.data().begin(), mask.data().end(), bytes.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
  detail::write_pgm_bytes(path, mask.width(), mask.height(), bytes);
}

/// Any value >= 128 reads as 1.
[[nodiscard]] inline BinaryMask read_mask_pgm(const fs::path& path) {
  auto r = detail::read_pgm_bytes(path);
  BinaryMask mask(r.width, r.height);
  for (std::size_t p = 0; p < r.bytes.size(); ++p) mask.data()[p] = r.bytes[p] >= 128 ? 1 : 0;
  return mask;
}

/// score * 255, rounded. Lossy; use write_fmap for evaluation.
inline void write_score_pgm(const fs::path& path, const ScoreMap& score) {
  std::vector<std::uint8_t> bytes(score.data().size());
  std::transform(score.data().begin(), score.data().end(), bytes.begin(), to_byte);
  detail::write_pgm_bytes(path, score.width(), score.height(), bytes);
}

// ---- PNG -------------------------------------------------------------------

inline void write_png(const fs::path& path, const Image& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> bytes(img.data().size());
  std::transform(img.data().begin(), img.data().end(), bytes.begin(), to_byte);
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

/// Decodes any PNG to 8-bit gray or RGB (alpha dropped).
[[nodiscard]] inline Image read_png(const fs::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot read PNG " + path.string() + ": " + msg);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  Image img(static_cast<int>(png.width), static_cast<int>(png.height), channels);
  for (std::size_t n = 0; n < bytes.size(); ++n) img.data()[n] = bytes[n] / 255.0f;
  return img;
}

/// Dispatches on extension (.png / .pgm).
[[nodiscard]] inline Image read_image(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm") return read_pgm(path);
  throw IoError("unsupported image extension: " + path.string());
}

inline void write_image(const fs::path& path, const Image& img) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return write_png(path, img);
  if (ext == ".pgm") return write_pgm(path, img);
  throw IoError("unsupported image extension: " + path.string());
}

// ---- .fmap -----------------------------------------------------------------
// "FMAP", u32 version=1, W, H, C, then W*H*C f32 row-major (i, j, k). Little-endian.

inline constexpr std::uint32_t kFmapVersion = 1;

[[nodiscard]] inline std::vector<std::uint8_t> encode_fmap(const Grid<float>& fmap) {
  binio::Writer w;
  w.magic("FMAP");
  w.u32(kFmapVersion);
  w.u32(static_cast<std::uint32_t>(fmap.width()));
  w.u32(static_cast<std::uint32_t>(fmap.height()));
  w.u32(static_cast<std::uint32_t>(fmap.channels()));
  for (float v : fmap.data()) w.f32(v);
  return w.bytes();
}

inline void write_fmap(const fs::path& path, const Grid<float>& fmap) {
  binio::save_bytes(path, encode_fmap(fmap));
}

[[nodiscard]] inline FeatureMap decode_fmap(binio::Reader& r) {
  r.expect_magic("FMAP");
  const auto version = r.u32("version");
  if (version != kFmapVersion) r.fail("unsupported version " + std::to_string(version));
  const auto w = r.u32("width");
  const auto h = r.u32("height");
  const auto c = r.u32("channels");
  if (c == 0) r.fail("channel count must be >= 1");
  if (w > (1u << 16) || h > (1u << 16) || c > (1u << 16)) r.fail("implausible dimensions");
  const std::uint64_t n = static_cast<std::uint64_t>(w) * h * c;
  r.require(n, 4, "tensor data");
  std::vector<float> data(n);
  for (auto& v : data) v = r.f32("tensor data");
  r.expect_end();
  return FeatureMap(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c), std::move(data));
}

[[nodiscard]] inline FeatureMap read_fmap(const fs::path& path) {
  auto r = binio::Reader::from_file(path);
  return decode_fmap(r);
}

/// Scores round-trip losslessly through a C=1 .fmap.
[[nodiscard]] inline ScoreMap read_score_fmap(const fs::path& path) {
  auto f = read_fmap(path);
  if (f.channels() != 1) throw IoError(path.string() + ": score map must have 1 channel");
  ScoreMap s(f.width(), f.height());
  s.data() = std::move(f.data());
  return s;
}

}  // namespace maskpipe::io
