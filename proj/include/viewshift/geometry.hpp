// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

// Pinhole camera model, RGBD lifting, rigid transforms, z-buffered splatting
// and raymaps.
//
// Conventions: right-handed camera frame with +x right, +y down, +z forward.
// Image origin is the top-left corner and the center of pixel (row, col) is
// at continuous coordinates (col + 0.5, row + 0.5).

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <string>

#include "viewshift/error.hpp"
#include "viewshift/image.hpp"

namespace viewshift {

template <typename Scalar>
struct CameraIntrinsics {
  Scalar fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 1, height = 1;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw InvalidArgument("focal lengths must be positive");
    if (width < 1 || height < 1) throw InvalidArgument("image dimensions must be >= 1");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
      throw InvalidArgument("principal point must lie inside the image");
  }

  Eigen::Matrix<Scalar, 3, 3> matrix() const {
    Eigen::Matrix<Scalar, 3, 3> k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  /// Same camera with focal lengths multiplied by `s` (principal point kept).
  CameraIntrinsics scaled_focal(Scalar s) const {
    CameraIntrinsics k = *this;
    k.fx *= s;
    k.fy *= s;
    return k;
  }

  bool operator==(const CameraIntrinsics&) const = default;
};

/// Rigid transform mapping source-camera (world) coordinates into the
/// target camera frame: p' = R p + t.
template <typename Scalar>
struct CameraPose {
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();

  static CameraPose identity() { return {}; }

  static CameraPose from(const Matrix3& r, const Vector3& t) {
    CameraPose p;
    p.rotation = r;
    p.translation = t;
    return p;
  }

  Vector3 apply(const Vector3& p) const { return rotation * p + translation; }

  /// Camera center expressed in source coordinates.
  Vector3 center() const { return -rotation.transpose() * translation; }

  CameraPose inverse() const { return from(rotation.transpose(), center()); }

  /// Composition: (a * b) applies b first, then a.
  friend CameraPose operator*(const CameraPose& a, const CameraPose& b) {
    return from(a.rotation * b.rotation, a.rotation * b.translation + a.translation);
  }

  /// ||R^T R - I||_inf together with the determinant deviation.
  Scalar orthonormality_error() const {
    const Scalar ortho =
        (rotation.transpose() * rotation - Matrix3::Identity()).cwiseAbs().maxCoeff();
    return std::max(ortho, std::abs(rotation.determinant() - Scalar(1)));
  }

  void validate(Scalar tol = Scalar(1e-9)) const {
    if (!rotation.allFinite() || !translation.allFinite())
      throw InvalidArgument("pose contains non-finite entries");
    if (orthonormality_error() > tol) throw InvalidArgument("pose rotation is not a proper rotation");
  }

  bool operator==(const CameraPose& o) const {
    return rotation == o.rotation && translation == o.translation;
  }
};

/// Rotation about the camera y axis (yaw). Positive angles turn +x toward -z.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> yaw_rotation(Scalar radians) {
  return Eigen::AngleAxis<Scalar>(radians, Eigen::Matrix<Scalar, 3, 1>::UnitY()).toRotationMatrix();
}

/// Rotation about the camera x axis (pitch).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> pitch_rotation(Scalar radians) {
  return Eigen::AngleAxis<Scalar>(radians, Eigen::Matrix<Scalar, 3, 1>::UnitX()).toRotationMatrix();
}

/// Colored points in a camera frame, stored column-wise.
template <typename Scalar>
struct PointCloud {
  Eigen::Matrix<Scalar, 3, Eigen::Dynamic> positions;
  Eigen::Matrix<Scalar, 3, Eigen::Dynamic> colors;
  Eigen::Matrix<int, 2, Eigen::Dynamic> source_pixels;  // (row, col)

  Eigen::Index size() const { return positions.cols(); }
  bool empty() const { return size() == 0; }

  /// Points with z <= 0. They are kept in the cloud and culled at projection.
  Eigen::Array<bool, Eigen::Dynamic, 1> behind_camera() const {
    return (positions.row(2).array() <= Scalar(0)).transpose();
  }
};

template <typename Scalar>
void check_frame_depth(const Image<Scalar>& frame, const DepthMap<Scalar>& depth,
                       const CameraIntrinsics<Scalar>& k) {
  if (frame.width != k.width)
    throw DimensionError("width", "frame width " + std::to_string(frame.width) +
                                      " does not match intrinsics width " + std::to_string(k.width));
  if (frame.height != k.height)
    throw DimensionError("height", "frame height " + std::to_string(frame.height) +
                                       " does not match intrinsics height " + std::to_string(k.height));
  if (depth.width() != k.width)
    throw DimensionError("width", "depth width " + std::to_string(depth.width()) +
                                      " does not match intrinsics width " + std::to_string(k.width));
  if (depth.height() != k.height)
    throw DimensionError("height", "depth height " + std::to_string(depth.height()) +
                                       " does not match intrinsics height " + std::to_string(k.height));
}

/// Back-projects every valid depth pixel through its pixel center. Points are
/// emitted in row-major pixel order.
template <typename Scalar>
PointCloud<Scalar> lift_rgbd(const Image<Scalar>& frame, const DepthMap<Scalar>& depth,
                             const CameraIntrinsics<Scalar>& k) {
  k.validate();
  check_frame_depth(frame, depth, k);

  const Eigen::Index n = depth.valid_count();
  PointCloud<Scalar> cloud;
  cloud.positions.resize(3, n);
  cloud.colors.resize(3, n);
  cloud.source_pixels.resize(2, n);

  Eigen::Index i = 0;
  for (int row = 0; row < k.height; ++row) {
    for (int col = 0; col < k.width; ++col) {
      if (!depth.valid(row, col)) continue;
      const Scalar d = depth.values(row, col);
      const Scalar u = Scalar(col) + Scalar(0.5);
      const Scalar v = Scalar(row) + Scalar(0.5);
      cloud.positions.col(i) << (u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d;
      cloud.colors.col(i) = frame.pixel(row, col).transpose().matrix();
      cloud.source_pixels.col(i) << row, col;
      ++i;
    }
  }
  return cloud;
}

template <typename Scalar>
PointCloud<Scalar> apply_pose(PointCloud<Scalar> cloud, const CameraPose<Scalar>& pose) {
  pose.validate();
  cloud.positions = (pose.rotation * cloud.positions).colwise() + pose.translation;
  return cloud;
}

template <typename Scalar>
struct SplatResult {
  Image<Scalar> frame;
  Mask mask;
  DepthMap<Scalar> depth;
  Grid<Eigen::Index> winner;  // index of the winning point, -1 where uncovered
};

inline constexpr double kDefaultZNear = 1e-4;

/// Forward-projects the cloud with a filled-disc splat of `splat_radius`
/// pixels. The nearest depth wins each pixel; equal depths keep the lower
/// point index.
template <typename Scalar>
SplatResult<Scalar> project_splat(const PointCloud<Scalar>& cloud, const CameraIntrinsics<Scalar>& k,
                                  int splat_radius, Scalar z_near = Scalar(kDefaultZNear)) {
  k.validate();
  if (splat_radius < 0) throw InvalidArgument("splat radius must be >= 0");

  const int h = k.height, w = k.width;
  Grid<Scalar> zbuf = Grid<Scalar>::Constant(h, w, std::numeric_limits<Scalar>::infinity());
  Grid<Eigen::Index> winner = Grid<Eigen::Index>::Constant(h, w, -1);
  const int r2 = splat_radius * splat_radius;
  const Scalar margin = Scalar(splat_radius + 1);

  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const Scalar x = cloud.positions(0, i), y = cloud.positions(1, i), z = cloud.positions(2, i);
    if (!(z > z_near) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) continue;
    const Scalar u = k.fx * x / z + k.cx;
    const Scalar v = k.fy * y / z + k.cy;
    if (!(u > -margin && u < Scalar(w) + margin && v > -margin && v < Scalar(h) + margin)) continue;
    const int col0 = int(std::floor(u));
    const int row0 = int(std::floor(v));
    for (int dy = -splat_radius; dy <= splat_radius; ++dy) {
      const int row = row0 + dy;
      if (row < 0 || row >= h) continue;
      for (int dx = -splat_radius; dx <= splat_radius; ++dx) {
        if (dx * dx + dy * dy > r2) continue;
        const int col = col0 + dx;
        if (col < 0 || col >= w) continue;
        if (z < zbuf(row, col)) {
          zbuf(row, col) = z;
          winner(row, col) = i;
        }
      }
    }
  }

  SplatResult<Scalar> out;
  out.frame = Image<Scalar>(h, w);
  out.mask = Mask::Zero(h, w);
  out.depth = DepthMap<Scalar>(h, w);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const Eigen::Index i = winner(row, col);
      if (i < 0) continue;
      out.frame.pixel(row, col) = cloud.colors.col(i).transpose().array();
      out.mask(row, col) = 1;
      out.depth.values(row, col) = zbuf(row, col);
      out.depth.validity(row, col) = true;
    }
  }
  out.winner = std::move(winner);
  return out;
}

template <typename Scalar>
struct ViewRender {
  Image<Scalar> frame;
  Mask mask;
};

/// One anchor frame: lift with the source camera, move into the target
/// camera, splat with the target intrinsics.
template <typename Scalar>
ViewRender<Scalar> render_view(const Image<Scalar>& frame, const DepthMap<Scalar>& depth,
                               const CameraIntrinsics<Scalar>& k_src, const CameraIntrinsics<Scalar>& k_dst,
                               const CameraPose<Scalar>& pose, int splat_radius) {
  auto splat = project_splat(apply_pose(lift_rgbd(frame, depth, k_src), pose), k_dst, splat_radius);
  return {std::move(splat.frame), std::move(splat.mask)};
}

/// Per-pixel ray origins and unit directions expressed in a reference frame.
template <typename Scalar>
struct Raymap {
  int height = 0, width = 0;
  Eigen::Array<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor> origins;
  Eigen::Array<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor> directions;
};

/// `pose_relative_to_first` maps first-camera coordinates into this camera.
template <typename Scalar>
Raymap<Scalar> compute_raymap(const CameraIntrinsics<Scalar>& k, const CameraPose<Scalar>& pose_relative_to_first) {
  k.validate();
  pose_relative_to_first.validate();
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

  Raymap<Scalar> map;
  map.height = k.height;
  map.width = k.width;
  const Eigen::Index n = Eigen::Index(k.height) * k.width;
  map.origins.resize(n, 3);
  map.directions.resize(n, 3);

  const Vector3 origin = pose_relative_to_first.center();
  const Eigen::Matrix<Scalar, 3, 3> to_first = pose_relative_to_first.rotation.transpose();
  for (int row = 0; row < k.height; ++row) {
    for (int col = 0; col < k.width; ++col) {
      const Eigen::Index i = Eigen::Index(row) * k.width + col;
      const Vector3 ray((Scalar(col) + Scalar(0.5) - k.cx) / k.fx, (Scalar(row) + Scalar(0.5) - k.cy) / k.fy,
                        Scalar(1));
      map.origins.row(i) = origin.transpose().array();
      map.directions.row(i) = (to_first * ray.normalized()).transpose().array();
    }
  }
  return map;
}

}  // namespace viewshift
