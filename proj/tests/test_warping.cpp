#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "maskpipe/warping.hpp"
#include "support.hpp"

using namespace maskpipe;
using testsupport::Stream;

namespace {

Image smooth_image(Stream& s, int w, int h, int c) {
  Image img(w, h, c);
  const double fx = s.uniform(0.02, 0.08), fy = s.uniform(0.02, 0.08);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int k = 0; k < c; ++k)
        img(i, j, k) = static_cast<float>(0.5 + 0.3 * std::sin(fx * j + k) * std::cos(fy * i + 0.5 * k));
  return img;
}

Homography small_homography(Stream& s, int w, int h) {
  const double th = s.uniform(-0.03, 0.03);
  const double cx = w / 2.0, cy = h / 2.0;
  Homography m;
  m << std::cos(th), -std::sin(th), cx - std::cos(th) * cx + std::sin(th) * cy + s.uniform(-3, 3), std::sin(th),
      std::cos(th), cy - std::sin(th) * cx - std::cos(th) * cy + s.uniform(-3, 3), s.uniform(-2e-5, 2e-5),
      s.uniform(-2e-5, 2e-5), 1.0;
  return m;
}

/// Direct resampling oracle: bilinear lookup of ref at H (x, y), written out by hand.
double resample_oracle(const Image& ref, const Homography& h, int i, int j, int k, bool& inside) {
  const double wq = h(2, 0) * j + h(2, 1) * i + h(2, 2);
  const double x = (h(0, 0) * j + h(0, 1) * i + h(0, 2)) / wq;
  const double y = (h(1, 0) * j + h(1, 1) * i + h(1, 2)) / wq;
  inside = x >= 0 && y >= 0 && x <= ref.width() - 1 && y <= ref.height() - 1;
  if (!inside) return 0.0;
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, ref.width() - 1), y1 = std::min(y0 + 1, ref.height() - 1);
  const double ax = x - x0, ay = y - y0;
  return (1 - ay) * ((1 - ax) * ref(y0, x0, k) + ax * ref(y0, x1, k)) + ay * ((1 - ax) * ref(y1, x0, k) + ax * ref(y1, x1, k));
}

}  // namespace

TEST(Warp, ZeroFlowIsIdentity) {
  Stream s(1);
  const auto ref = testsupport::random_image(s, 31, 17, 3);
  const auto r = warp_reference(ref, identity_flow(31, 17));
  EXPECT_EQ(r.image.data(), ref.data());
  EXPECT_EQ(r.valid.count_ones(), 31u * 17u);
}

TEST(Warp, ConstantFlowShiftsAndInvalidatesBand) {
  Stream s(2);
  const auto ref = testsupport::random_image(s, 40, 12, 1);
  FlowField flow(40, 12);
  std::fill(flow.dx.begin(), flow.dx.end(), 5.0);
  const auto r = warp_reference(ref, flow);
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 40; ++j) {
      if (j < 35) {
        EXPECT_TRUE(r.valid.test(i, j));
        EXPECT_EQ(r.image(i, j, 0), ref(i, j + 5, 0));
      } else {
        EXPECT_FALSE(r.valid.test(i, j));
        EXPECT_EQ(r.image(i, j, 0), 0.0f);
      }
    }
  }
}

TEST(Warp, HomographyFlowMatchesDirectResampling) {
  Stream s(3);
  for (int t = 0; t < 5; ++t) {
    const auto ref = smooth_image(s, 80, 60, 3);
    const auto h = small_homography(s, 80, 60);
    const auto r = warp_reference(ref, flow_from_homography(h, 80, 60));
    for (int i = 0; i < 60; ++i) {
      for (int j = 0; j < 80; ++j) {
        for (int k = 0; k < 3; ++k) {
          bool inside = false;
          const double expected = resample_oracle(ref, h, i, j, k, inside);
          ASSERT_EQ(r.valid.test(i, j), inside) << i << "," << j;
          if (inside) {
            ASSERT_NEAR(r.image(i, j, k), expected, 1e-6);
          }
        }
      }
    }
  }
}

TEST(Warp, OutputStaysInUnitRange) {
  Stream s(4);
  const auto ref = testsupport::random_image(s, 30, 20, 3);
  FlowField flow(30, 20);
  for (auto& v : flow.dx) v = s.uniform(-4, 4);
  for (auto& v : flow.dy) v = s.uniform(-4, 4);
  const auto r = warp_reference(ref, flow);
  for (float v : r.image.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_THROW((void)warp_reference(ref, FlowField(29, 20)), Error);
}

TEST(Warp, CompositionOfTwoHomographies) {
  // Backward warping: out1(x) = ref(H1 x), out2(x) = out1(H2 x) = ref(H1 H2 x).
  Stream s(5);
  for (int t = 0; t < 5; ++t) {
    const auto ref = smooth_image(s, 120, 90, 1);
    const auto h1 = small_homography(s, 120, 90), h2 = small_homography(s, 120, 90);
    const auto once = warp_reference(ref, flow_from_homography(h1, 120, 90));
    const auto twice = warp_reference(once.image, flow_from_homography(h2, 120, 90));
    const auto direct = warp_reference(ref, flow_from_homography(h1 * h2, 120, 90));
    double sum = 0.0;
    int n = 0;
    for (int i = 0; i < 90; ++i) {
      for (int j = 0; j < 120; ++j) {
        // Only pixels whose intermediate sample neighbourhood is fully inside both images.
        auto interior = [](Point2 q) { return q.x >= 1 && q.y >= 1 && q.x <= 118 && q.y <= 88; };
        const auto p = *project(h2, {double(j), double(i)});
        if (!interior(p) || !interior(*project(h1, p))) continue;
        sum += std::abs(twice.image(i, j, 0) - direct.image(i, j, 0));
        ++n;
      }
    }
    ASSERT_GT(n, 5000);
    EXPECT_LE(sum / n, 2.0 / 255.0);
  }
}

TEST(FlowFromHomography, IdentityAndTranslation) {
  const auto id = flow_from_homography(Homography::Identity(), 16, 9);
  for (std::size_t p = 0; p < id.dx.size(); ++p) {
    EXPECT_EQ(id.dx[p], 0.0);
    EXPECT_EQ(id.dy[p], 0.0);
    EXPECT_EQ(id.uncertainty[p], 0.0);
  }
  Homography t = Homography::Identity();
  t(0, 2) = 2.5;
  t(1, 2) = -1.25;
  const auto f = flow_from_homography(t, 16, 9);
  for (std::size_t p = 0; p < f.dx.size(); ++p) {
    EXPECT_DOUBLE_EQ(f.dx[p], 2.5);
    EXPECT_DOUBLE_EQ(f.dy[p], -1.25);
  }
  // Columns 13+ land past x = 15; rows 0 and 1 land above y = 0.
  EXPECT_EQ(f.uncertainty[f.index(4, 12)], 0.0);
  EXPECT_EQ(f.uncertainty[f.index(4, 13)], 1.0);
  EXPECT_EQ(f.uncertainty[f.index(1, 5)], 1.0);
  EXPECT_EQ(f.uncertainty[f.index(2, 5)], 0.0);
}

TEST(FlowFromHomography, MatchesProjectiveDivisionOracle) {
  Stream s(6);
  for (int t = 0; t < 20; ++t) {
    const auto h = testsupport::random_homography(s);
    const auto f = flow_from_homography(h, 64, 48);
    for (int i = 0; i < 48; ++i) {
      for (int j = 0; j < 64; ++j) {
        const double w = h(2, 0) * j + h(2, 1) * i + h(2, 2);
        const double x = (h(0, 0) * j + h(0, 1) * i + h(0, 2)) / w;
        const double y = (h(1, 0) * j + h(1, 1) * i + h(1, 2)) / w;
        ASSERT_NEAR(f.dx[f.index(i, j)], x - j, 1e-9);
        ASSERT_NEAR(f.dy[f.index(i, j)], y - i, 1e-9);
      }
    }
  }
}

TEST(FlowFromHomography, SingularModelThrows) {
  Homography h = Homography::Zero();
  h(2, 2) = 1.0;
  EXPECT_THROW((void)flow_from_homography(h, 8, 8), Error);
}

TEST(CorrespondenceUncertainty, IdenticalTexturedImagesAreCertain) {
  Stream s(7);
  const auto a = testsupport::random_image(s, 40, 30, 3);
  const auto u = correspondence_uncertainty(a, a, BinaryMask(40, 30, true));
  for (float v : u.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LT(v, 0.01f);
  }
}

TEST(CorrespondenceUncertainty, InvalidAndUncorrelatedPixels) {
  Stream s(8);
  const auto a = testsupport::random_image(s, 40, 30, 1);
  const auto b = testsupport::random_image(s, 40, 30, 1);
  BinaryMask valid(40, 30, true);
  valid.set(5, 5, false);
  const auto u = correspondence_uncertainty(a, b, valid);
  EXPECT_EQ(u(5, 5), 1.0f);
  double mean = 0.0;
  for (float v : u.data()) mean += v;
  EXPECT_GT(mean / u.data().size(), 0.8);
  const auto flat = correspondence_uncertainty(Image(10, 10, 1, 0.5f), Image(10, 10, 1, 0.5f), BinaryMask(10, 10, true));
  for (float v : flat.data()) EXPECT_EQ(v, 1.0f);
}

TEST(FlowFile, RoundTripIsBitIdentical) {
  const auto dir = testsupport::scratch_dir("flow");
  Stream s(9);
  FlowField f(23, 11);
  for (auto& v : f.dx) v = static_cast<float>(s.uniform(-20, 20));
  for (auto& v : f.dy) v = static_cast<float>(s.uniform(-20, 20));
  for (auto& v : f.uncertainty) v = static_cast<float>(s.uniform());
  save_flow(f, dir / "a.flow");
  EXPECT_EQ(load_flow(dir / "a.flow"), f);
  save_flow(load_flow(dir / "a.flow"), dir / "b.flow");
  std::ifstream a(dir / "a.flow", std::ios::binary), b(dir / "b.flow", std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST(FlowFile, HandBuiltTwoByTwo) {
  binio::Writer w;
  w.magic("FLO1");
  for (std::uint32_t v : {1u, 2u, 2u}) w.u32(v);
  const float d[8] = {1.0f, -1.0f, 0.5f, 0.0f, -2.0f, 3.0f, 0.25f, -0.25f};
  for (float v : d) w.f32(v);
  for (float v : {0.0f, 0.5f, 1.0f, 0.125f}) w.f32(v);
  ASSERT_EQ(w.bytes().size(), 16u + 32u + 16u);
  EXPECT_EQ(w.bytes()[16], 0x00);
  EXPECT_EQ(w.bytes()[19], 0x3F);  // 1.0f = 0x3F800000, little-endian
  binio::Reader r(w.bytes(), "mem");
  const auto f = decode_flow(r);
  EXPECT_EQ(f.width, 2);
  EXPECT_EQ(f.height, 2);
  EXPECT_EQ(f.dx, (std::vector<double>{1.0, 0.5, -2.0, 0.25}));
  EXPECT_EQ(f.dy, (std::vector<double>{-1.0, 0.0, 3.0, -0.25}));
  EXPECT_EQ(f.uncertainty, (std::vector<double>{0.0, 0.5, 1.0, 0.125}));
  EXPECT_EQ(encode_flow(f), w.bytes());
}

TEST(FlowFile, TruncatedOrInvalidIsRejected) {
  const auto dir = testsupport::scratch_dir("flowbad");
  FlowField f(4, 3);
  const auto good = encode_flow(f);
  for (std::size_t cut : {std::size_t{2}, std::size_t{14}, good.size() - 1}) {
    binio::Reader r({good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut)}, "mem");
    EXPECT_THROW((void)decode_flow(r), IoError) << cut;
  }
  auto bad_unc = good;
  const std::size_t u0 = 16 + 4 * 3 * 8;
  bad_unc[u0 + 3] = 0x40;  // 2.0f
  binio::Reader r(bad_unc, "mem");
  try {
    (void)decode_flow(r);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("offset " + std::to_string(u0)), std::string::npos) << e.what();
  }
  EXPECT_THROW((void)load_flow(dir / "missing.flow"), IoError);
}
