// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

// Anchor-video rendering over a compiled trajectory, plus a ray-cast
// renderer for synthetic scenes that shares no code with the splat path.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "viewshift/geometry.hpp"
#include "viewshift/image.hpp"
#include "viewshift/trajectory.hpp"

namespace viewshift {

struct AnchorResult {
  VideoClip frames;
  MaskSequence masks;
  std::vector<double> valid_fraction;
};

/// Frame i is render_view(clip[i], depths[i], traj[0].intrinsics,
/// traj[i].intrinsics, traj[i].pose, splat_radius).
AnchorResult render_anchor_video(const VideoClip& clip, const std::vector<Depth>& depths,
                                 const CompiledTrajectory& traj, int splat_radius);

/// Fraction of mask pixels equal to 1.
double valid_fraction(const Mask& mask);

enum class Shape { kSphere, kBox };

struct SceneObject {
  Shape shape = Shape::kSphere;
  Eigen::Vector3d center0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // per frame
  double size = 0.25;  // sphere radius or box half-extent
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);

  Eigen::Vector3d center(double time) const { return center0 + time * velocity; }
};

/// Objects in front of a background plane z = background_depth expressed in
/// the reference (first) camera. The plane carries a smooth sinusoidal
/// texture of the given amplitude and period (scene units).
struct SyntheticScene {
  std::vector<SceneObject> objects;
  double background_depth = 4.0;
  Eigen::Vector3d background_color = Eigen::Vector3d::Constant(0.5);
  double texture_amplitude = 0.0;
  double texture_period = 1.0;

  Eigen::Vector3d background_at(double x, double y) const;
  /// Throws InvalidArgument if an object reaches z <= 0 within [0, frames).
  void validate(int frames) const;
};

/// Analytic ray casting. `pose` maps reference-camera coordinates into the
/// rendering camera. Pixels whose ray hits nothing get black and an invalid
/// depth.
std::pair<Frame, Depth> oracle_render(const SyntheticScene& scene, const CameraIntrinsics<double>& k,
                                      const CameraPose<double>& pose, double time);

/// Deterministic scene with `n_objects` spheres and boxes between depth 2
/// and 3.4, a textured background at depth 4 and slow object motion.
SyntheticScene make_random_scene(std::uint64_t seed, int n_objects);

/// fx = fy = width, principal point at the image center.
CameraIntrinsics<double> default_intrinsics(int width, int height);

/// Static-camera source clip with exact depths.
std::pair<VideoClip, std::vector<Depth>> render_scene_clip(const SyntheticScene& scene,
                                                           const CameraIntrinsics<double>& k, int frames);

}  // namespace viewshift
