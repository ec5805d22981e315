#include <gtest/gtest.h>

#include <algorithm>

#include "maskpipe/attention_mask.hpp"
#include "maskpipe/synth.hpp"
#include "support.hpp"

using namespace maskpipe;
using testsupport::Stream;

namespace {

InlierSet inliers_at(std::initializer_list<CellIndex> cells) {
  InlierSet s;
  s.degenerate = false;
  for (const auto& c : cells) s.inliers.push_back({c, c, 0.0, {}, {}});
  return s;
}

SynthConfig small_jitter() {
  SynthConfig cfg;
  cfg.T = 1;
  cfg.max_translation_px = 1.0;
  cfg.max_rotation_deg = 0.1;
  cfg.brightness_jitter = 0.02;
  cfg.min_objects = 0;
  cfg.max_objects = 0;
  return cfg;
}

}  // namespace

TEST(Binarize, EmptyAndFull) {
  EXPECT_EQ(binarize(InlierSet{}, 5, 4).count_ones(), 0u);
  InlierSet all;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) all.inliers.push_back({{i, j}, {i, j}, 0.0, {}, {}});
  EXPECT_EQ(binarize(all, 5, 4).count_ones(), 20u);
}

TEST(Binarize, MarksExactlyTheInlierCells) {
  const auto m = binarize(inliers_at({{0, 0}, {2, 3}}), 4, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(m.test(i, j), (i == 0 && j == 0) || (i == 2 && j == 3)) << i << "," << j;
  const auto inv = binarize(inliers_at({{0, 0}, {2, 3}}), 4, 5, Polarity::inlier_zero);
  EXPECT_EQ(inv.data(), m.complement().data());
  EXPECT_THROW((void)binarize(inliers_at({{5, 0}}), 4, 5), Error);
}

TEST(AttentionMask, SelfComparisonIsAllOnes) {
  const auto scene = synth_scene(11, small_jitter());
  const std::vector<Image> refs{scene.live};
  const auto r = generate_attention_mask(scene.live, refs, MaskGenConfig{});
  EXPECT_EQ(r.mask.width(), 20);
  EXPECT_EQ(r.mask.height(), 15);
  EXPECT_EQ(r.mask.count_ones(), 300u);
  EXPECT_TRUE(r.skipped_frames.empty());
}

TEST(AttentionMask, PlantedObjectCellIsZero) {
  auto scene = synth_scene(12, small_jitter());
  // High-contrast checkerboard filling exactly cell (7, 9) of the live frame.
  for (int i = 7 * 32; i < 8 * 32; ++i)
    for (int j = 9 * 32; j < 10 * 32; ++j)
      for (int k = 0; k < 3; ++k) scene.live(i, j, k) = ((i / 4 + j / 4) % 2) ? 1.0f : 0.0f;
  MaskGenConfig cfg;
  cfg.T = 1;
  const auto r = generate_attention_mask(scene.live, scene.refs, cfg);

  // Oracle: independent per-frame MNN + RANSAC, intersected by hand.
  const auto live_grid = extract_descriptors(scene.live, cfg.patch);
  std::vector<std::uint8_t> expected(300, 1);
  for (const auto& ref : scene.refs) {
    RansacConfig rc = cfg.ransac;
    rc.rng_seed = rng::frame_seed(cfg.ransac.rng_seed, ref.frame_id);
    const auto inl = estimate_homography_ransac(mutual_nearest_neighbors(live_grid, extract_descriptors(ref, cfg.patch)), rc);
    ASSERT_FALSE(inl.degenerate);
    std::vector<std::uint8_t> frame(300, 0);
    for (const auto& m : inl.inliers) frame[static_cast<std::size_t>(m.live.row) * 20 + m.live.col] = 1;
    for (std::size_t c = 0; c < 300; ++c) expected[c] = expected[c] && frame[c];
  }
  EXPECT_EQ(r.mask.data(), expected);
  EXPECT_FALSE(r.mask.test(7, 9));
  EXPECT_GE(r.mask.count_ones(), 270u);
}

TEST(AttentionMask, OrderInvariant) {
  const auto scene = synth_scene(13, SynthConfig{.T = 2});
  MaskGenConfig cfg;
  cfg.T = 2;
  const auto base = generate_attention_mask(scene.live, scene.refs, cfg);
  auto shuffled = scene.refs;
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 2, shuffled.end());
  EXPECT_EQ(generate_attention_mask(scene.live, shuffled, cfg).mask.data(), base.mask.data());
}

TEST(AttentionMask, NestedReferenceSetsAreMonotone) {
  Stream s(14);
  for (int t = 0; t < 5; ++t) {
    const auto scene = synth_scene(s.next(), SynthConfig{.T = 3});
    MaskGenConfig cfg;
    cfg.T = 3;
    const auto live = extract_descriptors(scene.live, cfg.patch);
    std::vector<FrameDescriptors> all;
    for (const auto& r : scene.refs) all.push_back({r.frame_id, extract_descriptors(r, cfg.patch)});
    BinaryMask previous;
    for (std::size_t n = 1; n <= all.size(); ++n) {
      const auto m = generate_attention_mask(live, std::span(all).first(n), cfg).mask;
      if (!previous.empty()) {
        for (std::size_t c = 0; c < m.data().size(); ++c) EXPECT_LE(m.data()[c], previous.data()[c]);
      }
      previous = m;
    }
  }
}

TEST(AttentionMask, DegenerateFramesAreSkippedOrZeroTheMask) {
  Stream s(15);
  const auto live = testsupport::random_grid(s, 20, 15, 16);
  const std::vector<FrameDescriptors> refs{{"self", live}, {"blank", DescriptorGrid(20, 15, 16)}};
  MaskGenConfig cfg;
  cfg.T = 1;
  auto r = generate_attention_mask(live, refs, cfg);
  EXPECT_EQ(r.skipped_frames, std::vector<std::string>{"blank"});
  EXPECT_EQ(r.mask.count_ones(), 300u);
  cfg.skip_degenerate_frames = false;
  r = generate_attention_mask(live, refs, cfg);
  EXPECT_TRUE(r.skipped_frames.empty());
  EXPECT_EQ(r.mask.count_ones(), 0u);
}

TEST(AttentionMask, RejectsEmptyAndOversizedWindows) {
  Stream s(16);
  const auto live = testsupport::random_grid(s, 4, 3, 8);
  MaskGenConfig cfg;
  cfg.T = 0;
  EXPECT_THROW((void)generate_attention_mask(live, std::vector<FrameDescriptors>{}, cfg), Error);
  const std::vector<FrameDescriptors> two{{"a", live}, {"b", live}};
  EXPECT_THROW((void)generate_attention_mask(live, two, cfg), Error);
  cfg.T = -1;
  EXPECT_THROW((void)generate_attention_mask(live, two, cfg), Error);
}

TEST(ApplyMask, IdentityAndAnnihilator) {
  Stream s(17);
  FeatureMap f(20, 15, 8);
  for (auto& v : f.data()) v = static_cast<float>(s.uniform(-2, 2));
  EXPECT_EQ(apply_mask(f, BinaryMask(20, 15, true)).data(), f.data());
  EXPECT_TRUE(testsupport::all_equal(apply_mask(f, BinaryMask(20, 15)), 0.0f));
}

TEST(ApplyMask, SingleZeroCellAcrossChannels) {
  Stream s(18);
  FeatureMap f(6, 5, 4);
  for (auto& v : f.data()) v = static_cast<float>(s.uniform(0.1, 2));
  BinaryMask m(6, 5, true);
  m.set(3, 2, false);
  const auto out = apply_mask(f, m);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 6; ++j)
      for (int k = 0; k < 4; ++k) EXPECT_EQ(out(i, j, k), (i == 3 && j == 2) ? 0.0f : f(i, j, k));
}

TEST(ApplyMask, IdempotentAndShapeChecked) {
  Stream s(19);
  for (int t = 0; t < 20; ++t) {
    FeatureMap f(9, 7, 3);
    for (auto& v : f.data()) v = static_cast<float>(s.uniform(-1, 1));
    const auto m = testsupport::random_mask(s, 9, 7);
    const auto once = apply_mask(f, m);
    EXPECT_EQ(apply_mask(once, m).data(), once.data());
  }
  EXPECT_THROW((void)apply_mask(FeatureMap(4, 4, 2), BinaryMask(4, 5)), Error);
}
