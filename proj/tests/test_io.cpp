#include <gtest/gtest.h>

#include <fstream>

#include "maskpipe/image_io.hpp"
#include "support.hpp"

using namespace maskpipe;
using testsupport::Stream;

namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image quantised(Stream& s, int w, int h, int c) {
  Image img(w, h, c);
  for (auto& v : img.data()) v = static_cast<float>(s.uniform_int(0, 255) / 255.0);
  return img;
}

}  // namespace

TEST(BinaryIo, LittleEndianLayout) {
  binio::Writer w;
  w.magic("AB");
  w.u16(0x0102);
  w.u32(0x03040506);
  w.f32(1.0f);
  EXPECT_EQ(w.bytes(), (std::vector<std::uint8_t>{'A', 'B', 0x02, 0x01, 0x06, 0x05, 0x04, 0x03, 0x00, 0x00, 0x80, 0x3F}));
  binio::Reader r(w.bytes(), "mem");
  r.expect_magic("AB");
  EXPECT_EQ(r.u16("a"), 0x0102);
  EXPECT_EQ(r.u32("b"), 0x03040506u);
  EXPECT_EQ(r.f32("c"), 1.0f);
  EXPECT_NO_THROW(r.expect_end());
}

TEST(BinaryIo, ErrorsNameTheOffset) {
  binio::Reader r({'X', 'Y', 1}, "mem");
  r.expect_magic("XY");
  try {
    (void)r.u32("field");
    FAIL() << "expected a truncation error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("at byte offset 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("field"), std::string::npos) << e.what();
  }
}

TEST(Pgm, GrayRoundTripIsExact) {
  const auto dir = testsupport::scratch_dir("pgm");
  Stream s(1);
  const auto img = quantised(s, 17, 9, 1);
  io::write_pgm(dir / "a.pgm", img);
  EXPECT_EQ(io::read_pgm(dir / "a.pgm").data(), img.data());
}

TEST(Pgm, MaskRoundTripAndThreshold) {
  const auto dir = testsupport::scratch_dir("mask");
  Stream s(2);
  const auto m = testsupport::random_mask(s, 11, 6);
  io::write_mask_pgm(dir / "m.pgm", m);
  EXPECT_EQ(io::read_mask_pgm(dir / "m.pgm").data(), m.data());
  write_all(dir / "t.pgm", {'P', '5', '\n', '3', ' ', '1', '\n', '2', '5', '5', '\n', 127, 128, 255});
  EXPECT_EQ(io::read_mask_pgm(dir / "t.pgm").data(), (std::vector<std::uint8_t>{0, 1, 1}));
}

TEST(Pgm, HeaderCommentsAndMaxval) {
  const auto dir = testsupport::scratch_dir("pgmhdr");
  write_all(dir / "c.pgm", {'P', '5', ' ', '#', 'x', '\n', '2', ' ', '1', ' ', '1', '5', '\n', 15, 0});
  const auto img = io::read_pgm(dir / "c.pgm");
  EXPECT_EQ(img.data(), (std::vector<float>{1.0f, 0.0f}));
}

TEST(Pgm, TruncatedAndMalformed) {
  const auto dir = testsupport::scratch_dir("pgmbad");
  write_all(dir / "t.pgm", {'P', '5', '\n', '4', ' ', '4', '\n', '2', '5', '5', '\n', 1, 2});
  EXPECT_THROW((void)io::read_pgm(dir / "t.pgm"), IoError);
  write_all(dir / "p2.pgm", {'P', '2', '\n'});
  EXPECT_THROW((void)io::read_pgm(dir / "p2.pgm"), IoError);
  EXPECT_THROW((void)io::read_pgm(dir / "missing.pgm"), IoError);
}

TEST(Png, RgbAndGrayRoundTripsAreExact) {
  const auto dir = testsupport::scratch_dir("png");
  Stream s(3);
  for (int c : {1, 3}) {
    const auto img = quantised(s, 23, 14, c);
    io::write_image(dir / "a.png", img);
    const auto back = io::read_image(dir / "a.png");
    EXPECT_EQ(back.channels(), c);
    EXPECT_EQ(back.data(), img.data());
  }
  EXPECT_THROW((void)io::read_image(dir / "a.bmp"), IoError);
  EXPECT_THROW((void)io::read_png(dir / "missing.png"), IoError);
}

TEST(Fmap, RoundTripIsBitExact) {
  const auto dir = testsupport::scratch_dir("fmap");
  Stream s(4);
  FeatureMap f(20, 15, 64);
  for (auto& v : f.data()) v = static_cast<float>(s.uniform(-1e3, 1e3));
  f.data()[5] = -0.0f;
  f.data()[6] = std::numeric_limits<float>::denorm_min();
  io::write_fmap(dir / "f.fmap", f);
  const auto bytes = read_all(dir / "f.fmap");
  EXPECT_EQ(bytes, io::encode_fmap(f));
  const auto back = io::read_fmap(dir / "f.fmap");
  ASSERT_EQ(back.shape(), f.shape());
  EXPECT_EQ(std::memcmp(back.data().data(), f.data().data(), f.data().size() * sizeof(float)), 0);
}

TEST(Fmap, HandAssembledHeader) {
  const std::vector<std::uint8_t> bytes{'F', 'M', 'A', 'P', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0,
                                        0, 0, 0x80, 0x3F, 0, 0, 0, 0xC0};
  binio::Reader r(bytes, "mem");
  const auto f = io::decode_fmap(r);
  EXPECT_EQ(f.shape(), FeatureMap(1, 1, 2).shape());
  EXPECT_EQ(f.data(), (std::vector<float>{1.0f, -2.0f}));
}

TEST(Fmap, RejectsCorruptFiles) {
  Stream s(5);
  const auto good = io::encode_fmap(testsupport::random_score(s, 3, 2));
  auto decode = [](std::vector<std::uint8_t> b) {
    binio::Reader r(std::move(b), "mem");
    return io::decode_fmap(r);
  };
  EXPECT_THROW(decode({good.begin(), good.end() - 1}), IoError);
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode(bad_magic), IoError);
  auto bad_version = good;
  bad_version[4] = 2;
  EXPECT_THROW(decode(bad_version), IoError);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode(trailing), IoError);
  auto zero_channels = good;
  zero_channels[16] = 0;
  EXPECT_THROW(decode(zero_channels), IoError);
}

TEST(Fmap, ScoreReaderRequiresOneChannel) {
  const auto dir = testsupport::scratch_dir("fmapscore");
  io::write_fmap(dir / "c2.fmap", FeatureMap(2, 2, 2));
  EXPECT_THROW((void)io::read_score_fmap(dir / "c2.fmap"), IoError);
  Stream s(6);
  const auto score = testsupport::random_score(s, 5, 4);
  io::write_fmap(dir / "c1.fmap", score);
  EXPECT_EQ(io::read_score_fmap(dir / "c1.fmap").data(), score.data());
}
