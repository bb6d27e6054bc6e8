// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

#include "viewshift/anchor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace viewshift {

using Eigen::Vector3d;

AnchorResult render_anchor_video(const VideoClip& clip, const std::vector<Depth>& depths,
                                 const CompiledTrajectory& traj, int splat_radius) {
  const std::size_t n_clip = clip.size(), n_depth = depths.size(), n_traj = traj.size();
  if (n_clip != n_depth || n_clip != n_traj) {
    const std::size_t shortest = std::min({n_clip, n_depth, n_traj});
    const char* name = shortest == n_clip ? "clip" : shortest == n_depth ? "depths" : "trajectory";
    throw DimensionError("frames", std::string(name) + " is shorter (" + std::to_string(shortest) +
                                       " frames; clip " + std::to_string(n_clip) + ", depths " +
                                       std::to_string(n_depth) + ", trajectory " + std::to_string(n_traj) + ")");
  }
  check_clip(clip);

  const CameraIntrinsics<double>& k_src = traj[0].intrinsics;
  AnchorResult out;
  out.frames.reserve(n_clip);
  out.masks.reserve(n_clip);
  for (std::size_t i = 0; i < n_clip; ++i) {
    auto view = render_view(clip[i], depths[i], k_src, traj[i].intrinsics, traj[i].pose, splat_radius);
    out.valid_fraction.push_back(valid_fraction(view.mask));
    out.frames.push_back(std::move(view.frame));
    out.masks.push_back(std::move(view.mask));
  }
  return out;
}

double valid_fraction(const Mask& mask) {
  if (mask.size() == 0) return 0.0;
  return double((mask != 0).count()) / double(mask.size());
}

Vector3d SyntheticScene::background_at(double x, double y) const {
  const double w = 2.0 * std::numbers::pi / texture_period;
  const double a = std::sin(w * x), b = std::sin(w * y);
  Vector3d c = background_color + texture_amplitude * Vector3d(a * b, a, b);
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

void SyntheticScene::validate(int frames) const {
  if (!(background_depth > 0.0)) throw InvalidArgument("background depth must be positive");
  if (!(texture_period > 0.0)) throw InvalidArgument("texture period must be positive");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (!(o.size > 0.0)) throw InvalidArgument("object " + std::to_string(i) + " needs a positive size");
    for (double t : {0.0, double(std::max(frames - 1, 0))})
      if (o.center(t).z() - o.size <= 0.0)
        throw InvalidArgument("object " + std::to_string(i) + " leaves the reference camera's front half-space");
  }
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double hit_sphere(const Vector3d& o, const Vector3d& d, const Vector3d& c, double r) {
  const Vector3d oc = o - c;
  const double a = d.squaredNorm(), b = oc.dot(d), cc = oc.squaredNorm() - r * r;
  const double disc = b * b - a * cc;
  if (disc < 0.0) return kInf;
  const double sq = std::sqrt(disc);
  const double s0 = (-b - sq) / a, s1 = (-b + sq) / a;
  if (s0 > 0.0) return s0;
  if (s1 > 0.0) return s1;
  return kInf;
}

double hit_box(const Vector3d& o, const Vector3d& d, const Vector3d& c, double half) {
  double lo = -kInf, hi = kInf;
  for (int a = 0; a < 3; ++a) {
    const double min = c(a) - half, max = c(a) + half;
    if (d(a) == 0.0) {
      if (o(a) < min || o(a) > max) return kInf;
      continue;
    }
    double t0 = (min - o(a)) / d(a), t1 = (max - o(a)) / d(a);
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  if (lo > hi) return kInf;
  if (lo > 0.0) return lo;
  if (hi > 0.0) return hi;
  return kInf;
}

}  // namespace

std::pair<Frame, Depth> oracle_render(const SyntheticScene& scene, const CameraIntrinsics<double>& k,
                                      const CameraPose<double>& pose, double time) {
  const Eigen::Matrix3d rt = pose.rotation.transpose();
  const Vector3d origin = -(rt * pose.translation);
  std::vector<Vector3d> centers;
  for (const auto& obj : scene.objects) centers.push_back(obj.center(time));

  Frame frame(k.height, k.width);
  Depth depth(k.height, k.width);
  for (int row = 0; row < k.height; ++row) {
    for (int col = 0; col < k.width; ++col) {
      // Camera-frame direction with unit z, so the ray parameter is depth.
      const Vector3d dc((col + 0.5 - k.cx) / k.fx, (row + 0.5 - k.cy) / k.fy, 1.0);
      const Vector3d d = rt * dc;

      double best = kInf;
      Vector3d color = Vector3d::Zero();
      for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& obj = scene.objects[i];
        const double s = obj.shape == Shape::kSphere ? hit_sphere(origin, d, centers[i], obj.size)
                                                     : hit_box(origin, d, centers[i], obj.size);
        if (s < best) {
          best = s;
          color = obj.color;
        }
      }
      if (d.z() != 0.0) {
        const double s = (scene.background_depth - origin.z()) / d.z();
        if (s > 0.0 && s < best) {
          best = s;
          const Vector3d p = origin + s * d;
          color = scene.background_at(p.x(), p.y());
        }
      }
      if (best == kInf) continue;
      frame.pixel(row, col) = color.transpose().array();
      depth.values(row, col) = best;
      depth.validity(row, col) = true;
    }
  }
  return {std::move(frame), std::move(depth)};
}

SyntheticScene make_random_scene(std::uint64_t seed, int n_objects) {
  if (n_objects < 0) throw InvalidArgument("object count must be >= 0");
  std::mt19937_64 engine(seed);
  auto uniform = [&engine](double lo, double hi) { return lo + (hi - lo) * double(engine() >> 11) * 0x1.0p-53; };

  SyntheticScene scene;
  scene.background_depth = 4.0;
  scene.background_color = Vector3d(uniform(0.35, 0.55), uniform(0.35, 0.55), uniform(0.35, 0.55));
  scene.texture_amplitude = 0.1;
  scene.texture_period = 1.5;
  for (int i = 0; i < n_objects; ++i) {
    SceneObject obj;
    obj.shape = (engine() & 1) ? Shape::kBox : Shape::kSphere;
    obj.size = uniform(0.15, 0.35);
    const double z = uniform(2.0, 3.4);
    obj.center0 = Vector3d(uniform(-0.35, 0.35) * z, uniform(-0.35, 0.35) * z, z);
    obj.velocity = Vector3d(uniform(-0.02, 0.02), uniform(-0.02, 0.02), uniform(-0.01, 0.01));
    obj.color = Vector3d(uniform(0.2, 0.8), uniform(0.2, 0.8), uniform(0.2, 0.8));
    scene.objects.push_back(obj);
  }
  return scene;
}

CameraIntrinsics<double> default_intrinsics(int width, int height) {
  CameraIntrinsics<double> k;
  k.fx = k.fy = double(width);
  k.cx = 0.5 * width;
  k.cy = 0.5 * height;
  k.width = width;
  k.height = height;
  return k;
}

std::pair<VideoClip, std::vector<Depth>> render_scene_clip(const SyntheticScene& scene,
                                                           const CameraIntrinsics<double>& k, int frames) {
  if (frames < 1) throw InvalidArgument("frames must be >= 1");
  scene.validate(frames);
  VideoClip clip;
  std::vector<Depth> depths;
  for (int f = 0; f < frames; ++f) {
    auto [frame, depth] = oracle_render(scene, k, CameraPose<double>::identity(), double(f));
    clip.push_back(std::move(frame));
    depths.push_back(std::move(depth));
  }
  return {std::move(clip), std::move(depths)};
}

}  // namespace viewshift
