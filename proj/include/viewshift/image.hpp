// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "viewshift/error.hpp"

namespace viewshift {

template <typename T>
using Grid = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Binary validity grid, values in {0,1}.
using Mask = Grid<std::uint8_t>;

/// H x W RGB image. Pixel (row, col) lives in row `row * width + col` of
/// `pixels`; channel values are expected in [0,1].
template <typename Scalar>
struct Image {
  using PixelArray = Eigen::Array<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

  int height = 0;
  int width = 0;
  PixelArray pixels;

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(PixelArray::Zero(Eigen::Index(h) * w, 3)) {}

  Eigen::Index index(int row, int col) const { return Eigen::Index(row) * width + col; }
  Scalar& at(int row, int col, int ch) { return pixels(index(row, col), ch); }
  Scalar at(int row, int col, int ch) const { return pixels(index(row, col), ch); }
  auto pixel(int row, int col) { return pixels.row(index(row, col)); }
  auto pixel(int row, int col) const { return pixels.row(index(row, col)); }

  bool in_unit_range() const {
    return pixels.size() == 0 || (pixels.minCoeff() >= Scalar(0) && pixels.maxCoeff() <= Scalar(1));
  }

  bool operator==(const Image& o) const {
    return height == o.height && width == o.width && (pixels == o.pixels).all();
  }
};

using Frame = Image<double>;

/// Depth in scene units plus a validity grid. Non-finite or non-positive
/// depths are never valid.
template <typename Scalar>
struct DepthMap {
  Grid<Scalar> values;
  Grid<bool> validity;

  DepthMap() = default;
  DepthMap(int h, int w) : values(Grid<Scalar>::Zero(h, w)), validity(Grid<bool>::Constant(h, w, false)) {}

  /// Builds a depth map whose validity follows the encoding rule.
  static DepthMap from_values(Grid<Scalar> v) {
    DepthMap d;
    d.validity = v.unaryExpr([](Scalar x) { return std::isfinite(x) && x > Scalar(0); });
    d.values = std::move(v);
    return d;
  }

  int height() const { return int(values.rows()); }
  int width() const { return int(values.cols()); }
  bool valid(int row, int col) const { return validity(row, col); }
  Eigen::Index valid_count() const { return validity.count(); }

  void check_invariants() const {
    if (validity.rows() != values.rows() || validity.cols() != values.cols())
      throw DimensionError("height", "depth validity grid does not match depth values");
    for (Eigen::Index r = 0; r < values.rows(); ++r)
      for (Eigen::Index c = 0; c < values.cols(); ++c)
        if (validity(r, c) && !(std::isfinite(values(r, c)) && values(r, c) > Scalar(0)))
          throw InvalidArgument("valid depth entry must be finite and positive");
  }
};

using Depth = DepthMap<double>;

/// N frames of identical size.
using VideoClip = std::vector<Frame>;
using MaskSequence = std::vector<Mask>;

inline void check_clip(const VideoClip& clip) {
  if (clip.empty()) throw InvalidArgument("clip must contain at least one frame");
  for (std::size_t i = 1; i < clip.size(); ++i) {
    if (clip[i].height != clip[0].height)
      throw DimensionError("height", "frame " + std::to_string(i) + " height differs from frame 0");
    if (clip[i].width != clip[0].width)
      throw DimensionError("width", "frame " + std::to_string(i) + " width differs from frame 0");
  }
}

}  // namespace viewshift
