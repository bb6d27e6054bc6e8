// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "viewshift/metrics.hpp"

using namespace viewshift;
using namespace viewshift::testing;

TEST_CASE("psnr: identical inputs hit the cap") {
  const Frame a = random_frame(16, 16, 1);
  CHECK(psnr(a, a) == kPsnrCap);
}

TEST_CASE("psnr: constant offset 0.1 gives 20 dB") {
  Frame a = random_frame(16, 16, 2);
  a.pixels *= 0.9;
  Frame b = a;
  b.pixels += 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("psnr: gaussian noise sigma 0.05 gives about 26.02 dB") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.05);
  const Frame a = random_frame(128, 128, 3);
  Frame b = a;
  for (Eigen::Index i = 0; i < b.pixels.size(); ++i) b.pixels.data()[i] += n(rng);
  CHECK(std::abs(psnr(a, b) - 26.0206) <= 0.3);
}

TEST_CASE("psnr: empty region is an error") {
  const Frame a = random_frame(8, 8, 5);
  const Mask empty = Mask::Zero(8, 8);
  CHECK_THROWS_AS(psnr(a, a, &empty), InvalidArgument);
}

TEST_CASE("ssim: identity is exactly one") {
  const Frame a = random_frame(20, 24, 6);
  CHECK(ssim(a, a) == 1.0);
}

TEST_CASE("ssim: inverted image scores below one") {
  const Frame a = random_frame(20, 20, 7);
  Frame b = a;
  b.pixels = 1.0 - a.pixels;
  CHECK(ssim(a, b) < 1.0);
}

TEST_CASE("ssim: constant images match the closed form") {
  Frame a(10, 10), b(10, 10);
  a.pixels.setConstant(0.25);
  b.pixels.setConstant(0.75);
  // (2 mu_a mu_b + C1) / (mu_a^2 + mu_b^2 + C1), frozen from an independent evaluation
  CHECK(ssim(a, b) == doctest::Approx(0.6000639897616381).epsilon(1e-12));
}

TEST_CASE("ssim: image smaller than the window is an error") {
  const Frame a = random_frame(6, 20, 8);
  CHECK_THROWS_AS(ssim(a, a), DimensionError);
}

TEST_CASE("property: metrics are symmetric") {
  for (int trial = 0; trial < 10; ++trial) {
    const Frame a = random_frame(16, 12, 100 + trial), b = random_frame(16, 12, 200 + trial);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK(ssim(a, b) == ssim(b, a));
  }
}

TEST_CASE("property: corrupting pixels outside the region leaves masked metrics unchanged") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Frame a = random_frame(24, 24, rng()), b = random_frame(24, 24, rng());
    Mask m = Mask::Zero(24, 24);
    m.block(2, 3, 15, 12).setOnes();
    Frame c = b;
    for (int r = 0; r < 24; ++r)
      for (int col = 0; col < 24; ++col)
        if (!m(r, col)) c.pixel(r, col) = random_frame(1, 1, rng()).pixel(0, 0);
    CHECK(psnr(a, b, &m) == psnr(a, c, &m));
    CHECK(ssim(a, b, &m) == ssim(a, c, &m));
  }
}

TEST_CASE("property: metric ranges") {
  for (int trial = 0; trial < 10; ++trial) {
    const Frame a = random_frame(16, 16, 300 + trial), b = random_frame(16, 16, 400 + trial);
    const double p = psnr(a, b), s = ssim(a, b);
    CHECK(p >= 0.0);
    CHECK(p <= kPsnrCap);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("report: clip comparison and JSON") {
  VideoClip a{random_frame(12, 12, 1), random_frame(12, 12, 2)};
  MaskSequence m{Mask::Ones(12, 12), Mask::Zero(12, 12)};
  const MetricReport r = compare_clips(a, a, &m);
  CHECK(r.psnr_all == kPsnrCap);
  CHECK(r.ssim_all == 1.0);
  CHECK(r.psnr_masked == kPsnrCap);
  CHECK(r.pixels_all == 288);
  CHECK(r.pixels_masked == 144);
  CHECK(r.to_json().find("\"psnr_all\": 99.0") != std::string::npos);
}
