// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "viewshift/io.hpp"

using namespace viewshift;
using namespace viewshift::testing;

TEST_CASE("clip round trip is exact after 8-bit quantization") {
  const auto dir = temp_dir("clip");
  VideoClip clip;
  for (int i = 0; i < 3; ++i) clip.push_back(random_frame(9, 13, 40 + i));
  save_clip(clip, dir);
  const VideoClip back = load_clip(dir);
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    Frame q = clip[i];
    q.pixels = (q.pixels * 255.0).round() / 255.0;
    CHECK(back[i] == q);
  }
  // Already-quantized frames survive bitwise.
  save_clip(back, dir);
  const VideoClip again = load_clip(dir);
  for (int i = 0; i < 3; ++i) CHECK(again[i] == back[i]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("PFM depth round trip is bit exact for float-representable values") {
  const auto dir = temp_dir("pfm");
  Depth d = random_depth(7, 11, 3);
  d.values = d.values.cast<float>().cast<double>();
  d.values(2, 3) = 0.0;
  d.validity(2, 3) = false;
  write_pfm(dir / "d.pfm", d);
  const Depth back = read_pfm(dir / "d.pfm");
  CHECK((back.values == d.values).all());
  CHECK((back.validity == d.validity).all());
  std::filesystem::remove_all(dir);
}

TEST_CASE("16-bit PNG depth uses the declared scale") {
  const auto dir = temp_dir("png16");
  Grid<double> v(3, 4);
  for (int i = 0; i < 12; ++i) v.data()[i] = 0.001 * (1000 + 37 * i);
  write_depth_png(dir / depth_name(0, "png"), Depth::from_values(v), 0.001);
  ClipMeta meta;
  meta.intrinsics = intrinsics(4, 3, 3.0);
  write_meta(dir, meta);
  CHECK_THROWS_AS(load_depths(dir, 1), ParseError);  // scale not declared
  meta.depth_scale = 0.001;
  write_meta(dir, meta);
  const auto depths = load_depths(dir, 1);
  CHECK(((depths[0].values - v).abs() <= 1e-12).all());
  std::filesystem::remove_all(dir);
}

TEST_CASE("mask round trip is lossless") {
  const auto dir = temp_dir("mask");
  std::mt19937_64 rng(2);
  MaskSequence masks;
  for (int i = 0; i < 2; ++i) {
    Mask m(6, 5);
    for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = std::uint8_t(rng() & 1);
    masks.push_back(m);
  }
  save_masks(masks, dir);
  const auto back = load_masks(dir, 2);
  for (int i = 0; i < 2; ++i) CHECK((back[i] == masks[i]).all());
  std::filesystem::remove_all(dir);
}

TEST_CASE("missing frame index is reported") {
  const auto dir = temp_dir("missing");
  VideoClip clip;
  for (int i = 0; i < 5; ++i) clip.push_back(random_frame(4, 4, i));
  save_clip(clip, dir);
  std::filesystem::remove(dir / frame_name(3));
  try {
    load_clip(dir);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    REQUIRE(e.index().has_value());
    CHECK(*e.index() == 3);
    CHECK(std::string(e.what()).find("frame_00003.png") != std::string::npos);
  }
  CHECK_THROWS_AS(load_masks(dir, 1), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("frame size mismatch across a clip is an error") {
  const auto dir = temp_dir("mismatch");
  write_png(dir / frame_name(0), random_frame(4, 4, 1));
  write_png(dir / frame_name(1), random_frame(4, 5, 2));
  CHECK_THROWS_AS(load_clip(dir), DimensionError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("meta.json round trip and validation") {
  const auto dir = temp_dir("meta");
  ClipMeta meta;
  meta.intrinsics = intrinsics(64, 48, 55.5);
  meta.depth_scale = 0.001;
  write_meta(dir, meta);
  const ClipMeta back = read_meta(dir);
  CHECK(back.intrinsics == meta.intrinsics);
  CHECK(back.depth_scale == meta.depth_scale);
  std::ofstream(dir / "meta.json") << R"({"fx": 1, "fy": 1, "cx": 0, "cy": 0, "width": 4})";
  CHECK_THROWS_AS(read_meta(dir), ParseError);
  std::ofstream(dir / "meta.json") << "{not json";
  CHECK_THROWS_AS(read_meta(dir), ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("unreadable PNG is an IoError") {
  const auto dir = temp_dir("garbage");
  std::ofstream(dir / frame_name(0)) << "not a png";
  CHECK_THROWS_AS(load_clip(dir), IoError);
  std::filesystem::remove_all(dir);
}
