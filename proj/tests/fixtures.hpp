// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

// Shared builders for tests.

#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "viewshift/geometry.hpp"
#include "viewshift/image.hpp"

namespace viewshift::testing {

inline Frame random_frame(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Frame f(h, w);
  for (Eigen::Index i = 0; i < f.pixels.size(); ++i) f.pixels.data()[i] = u(rng);
  return f;
}

/// Frame with 8-bit representable values, so PNG round trips are exact.
inline Frame quantized_frame(int h, int w, std::uint64_t seed) {
  Frame f = random_frame(h, w, seed);
  f.pixels = (f.pixels * 255.0).round() / 255.0;
  return f;
}

inline Depth constant_depth(int h, int w, double d) {
  return Depth::from_values(Grid<double>::Constant(h, w, d));
}

inline Depth random_depth(int h, int w, std::uint64_t seed, double lo = 1.0, double hi = 5.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Grid<double> v(h, w);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = u(rng);
  return Depth::from_values(std::move(v));
}

inline CameraIntrinsics<double> intrinsics(int w, int h, double f) {
  CameraIntrinsics<double> k;
  k.fx = k.fy = f;
  k.cx = 0.5 * w;
  k.cy = 0.5 * h;
  k.width = w;
  k.height = h;
  return k;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("viewshift_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace viewshift::testing
