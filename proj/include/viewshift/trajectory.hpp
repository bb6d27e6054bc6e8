// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "viewshift/geometry.hpp"

namespace viewshift {

enum class MoveKind { kPan, kTilt, kZoom, kPedestal, kTruck, kDolly, kOrbit };
enum class Easing { kLinear, kSmoothstep };

std::string_view to_string(MoveKind kind);
std::string_view to_string(Easing easing);

/// One camera move, interpolated over the whole clip.
///
/// `magnitude` is in degrees for pan/tilt/orbit, scene units for
/// pedestal/truck/dolly and a focal multiplier for zoom (the final frame's
/// focal length is `magnitude` times the source focal length).
struct TrajectoryPrimitive {
  MoveKind kind = MoveKind::kPan;
  double magnitude = 0.0;
  Easing easing = Easing::kLinear;
  double pivot_depth = 0.0;  // orbit only

  void validate() const;
  bool operator==(const TrajectoryPrimitive&) const = default;
};

struct TrajectorySpec {
  std::vector<TrajectoryPrimitive> primitives;
  int frame_count = 1;

  void validate() const;
  bool operator==(const TrajectorySpec&) const = default;
};

struct CameraState {
  CameraIntrinsics<double> intrinsics;
  CameraPose<double> pose;
};

/// Per-frame cameras; frame 0 is always the source camera.
struct CompiledTrajectory {
  std::vector<CameraState> per_frame;

  std::size_t size() const { return per_frame.size(); }
  const CameraState& operator[](std::size_t i) const { return per_frame[i]; }
};

/// Maps clip progress u in [0,1] to move progress in [0,1].
double ease(double u, Easing mode);

/// Look-at orbit around the pivot (0, 0, pivot_depth). Positive angles move
/// the camera toward -x.
CameraPose<double> orbit_pose(double angle_degrees, double pivot_depth);

/// Frame i uses progress s = ease(i / (N - 1)). All translations are summed
/// and applied first (in source coordinates); rotation-bearing moves
/// (pan, tilt, orbit) are then applied in listed order. Zoom scales fx, fy.
CompiledTrajectory compile(const TrajectorySpec& spec, const CameraIntrinsics<double>& k_src);

/// Parses the trajectory JSON format:
///   {"frames": N, "moves": [{"kind": "pan", "deg": 20, "ease": "linear"}, ...]}
/// Throws ParseError carrying the offending field path (and line for syntax
/// errors).
TrajectorySpec parse_trajectory(std::string_view text);

std::string serialize_trajectory(const TrajectorySpec& spec);

}  // namespace viewshift
