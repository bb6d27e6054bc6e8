// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

// PSNR and SSIM on [0,1] images, optionally restricted to a region mask.

#pragma once

#include <optional>
#include <string>

#include "viewshift/image.hpp"

namespace viewshift {

inline constexpr double kPsnrCap = 99.0;
inline constexpr int kSsimWindow = 7;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// 10 log10(1 / MSE) with peak 1, over all channels of the selected pixels.
/// Identical inputs give the 99 dB cap. An empty region is an error.
double psnr(const Frame& a, const Frame& b, const Mask* region = nullptr);
double psnr(const VideoClip& a, const VideoClip& b, const MaskSequence* regions = nullptr);

/// Mean local SSIM over every 7x7 window (stride 1, uniform weights, per
/// channel) lying fully inside the image and the region.
double ssim(const Frame& a, const Frame& b, const Mask* region = nullptr);
double ssim(const VideoClip& a, const VideoClip& b, const MaskSequence* regions = nullptr);

struct MetricReport {
  double psnr_all = 0.0, ssim_all = 0.0;
  std::optional<double> psnr_masked, ssim_masked;
  long long pixels_all = 0, pixels_masked = 0;

  std::string to_json() const;
};

/// ssim_masked stays empty when no window fits inside the region.
MetricReport compare_clips(const VideoClip& a, const VideoClip& b, const MaskSequence* regions = nullptr);

}  // namespace viewshift
