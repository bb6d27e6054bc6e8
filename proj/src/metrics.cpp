// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

#include "viewshift/metrics.hpp"

#include <json.hpp>

#include <cmath>

namespace viewshift {

namespace {

void check_pair(const Frame& a, const Frame& b, const Mask* region) {
  if (a.height != b.height) throw DimensionError("height", "images differ in height");
  if (a.width != b.width) throw DimensionError("width", "images differ in width");
  if (region != nullptr && (region->rows() != a.height || region->cols() != a.width))
    throw DimensionError(region->rows() != a.height ? "height" : "width", "region mask size differs from images");
}

void check_clips(const VideoClip& a, const VideoClip& b, const MaskSequence* regions) {
  if (a.size() != b.size()) throw DimensionError("frames", "clips differ in frame count");
  if (a.empty()) throw InvalidArgument("clips are empty");
  if (regions != nullptr && regions->size() != a.size())
    throw DimensionError("frames", "region count differs from frame count");
}

struct SquaredError {
  double sum = 0.0;
  long long count = 0;  // pixels
};

SquaredError squared_error(const Frame& a, const Frame& b, const Mask* region) {
  check_pair(a, b, region);
  SquaredError e;
  for (int r = 0; r < a.height; ++r)
    for (int c = 0; c < a.width; ++c) {
      if (region != nullptr && !(*region)(r, c)) continue;
      e.sum += (a.pixel(r, c) - b.pixel(r, c)).square().sum();
      ++e.count;
    }
  return e;
}

double psnr_from(const SquaredError& e) {
  if (e.count == 0) throw InvalidArgument("PSNR region is empty");
  const double mse = e.sum / double(3 * e.count);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

struct SsimSum {
  double sum = 0.0;
  long long windows = 0;  // window-channel terms
};

SsimSum ssim_sum(const Frame& a, const Frame& b, const Mask* region) {
  check_pair(a, b, region);
  if (a.height < kSsimWindow || a.width < kSsimWindow)
    throw DimensionError(a.height < kSsimWindow ? "height" : "width", "image smaller than the 7x7 SSIM window");

  // Count of region pixels in every window via a summed-area table.
  Grid<int> integral = Grid<int>::Zero(a.height + 1, a.width + 1);
  if (region != nullptr)
    for (int r = 0; r < a.height; ++r)
      for (int c = 0; c < a.width; ++c)
        integral(r + 1, c + 1) = ((*region)(r, c) ? 1 : 0) + integral(r, c + 1) + integral(r + 1, c) - integral(r, c);

  const double n = double(kSsimWindow * kSsimWindow);
  SsimSum s;
  for (int r0 = 0; r0 + kSsimWindow <= a.height; ++r0)
    for (int c0 = 0; c0 + kSsimWindow <= a.width; ++c0) {
      if (region != nullptr) {
        const int r1 = r0 + kSsimWindow, c1 = c0 + kSsimWindow;
        const int inside = integral(r1, c1) - integral(r0, c1) - integral(r1, c0) + integral(r0, c0);
        if (inside != kSsimWindow * kSsimWindow) continue;
      }
      for (int ch = 0; ch < 3; ++ch) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int r = r0; r < r0 + kSsimWindow; ++r)
          for (int c = c0; c < c0 + kSsimWindow; ++c) {
            const double x = a.at(r, c, ch), y = b.at(r, c, ch);
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
            sab += x * y;
          }
        const double ma = sa / n, mb = sb / n;
        const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
        s.sum += ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
                 ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
        ++s.windows;
      }
    }
  return s;
}

double ssim_from(const SsimSum& s) {
  if (s.windows == 0) throw InvalidArgument("no 7x7 window lies fully inside the region");
  return s.sum / double(s.windows);
}

}  // namespace

double psnr(const Frame& a, const Frame& b, const Mask* region) { return psnr_from(squared_error(a, b, region)); }

double psnr(const VideoClip& a, const VideoClip& b, const MaskSequence* regions) {
  check_clips(a, b, regions);
  SquaredError total;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const SquaredError e = squared_error(a[i], b[i], regions ? &(*regions)[i] : nullptr);
    total.sum += e.sum;
    total.count += e.count;
  }
  return psnr_from(total);
}

double ssim(const Frame& a, const Frame& b, const Mask* region) { return ssim_from(ssim_sum(a, b, region)); }

double ssim(const VideoClip& a, const VideoClip& b, const MaskSequence* regions) {
  check_clips(a, b, regions);
  SsimSum total;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const SsimSum s = ssim_sum(a[i], b[i], regions ? &(*regions)[i] : nullptr);
    total.sum += s.sum;
    total.windows += s.windows;
  }
  return ssim_from(total);
}

std::string MetricReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j{{"psnr_all", psnr_all},         {"ssim_all", ssim_all},
                   {"psnr_masked", opt(psnr_masked)}, {"ssim_masked", opt(ssim_masked)},
                   {"pixels_all", pixels_all},     {"pixels_masked", pixels_masked}};
  return j.dump(2);
}

MetricReport compare_clips(const VideoClip& a, const VideoClip& b, const MaskSequence* regions) {
  check_clips(a, b, regions);
  MetricReport r;
  r.psnr_all = psnr(a, b);
  r.ssim_all = ssim(a, b);
  r.pixels_all = (long long)a.size() * a[0].height * a[0].width;
  if (regions != nullptr) {
    for (const auto& m : *regions) r.pixels_masked += (m != 0).count();
    r.psnr_masked = psnr(a, b, regions);
    try {
      r.ssim_masked = ssim(a, b, regions);
    } catch (const InvalidArgument&) {
      r.ssim_masked.reset();
    }
  }
  return r;
}

}  // namespace viewshift
