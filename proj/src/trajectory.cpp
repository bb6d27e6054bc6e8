// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

#include "viewshift/trajectory.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>

namespace viewshift {
namespace {

using json = nlohmann::json;
using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

constexpr double kDegToRad = std::numbers::pi / 180.0;

const char* magnitude_key(MoveKind kind) {
  switch (kind) {
    case MoveKind::kPan:
    case MoveKind::kTilt:
    case MoveKind::kOrbit:
      return "deg";
    case MoveKind::kPedestal:
    case MoveKind::kTruck:
    case MoveKind::kDolly:
      return "units";
    case MoveKind::kZoom:
      return "scale";
  }
  return "deg";
}

bool parse_kind(std::string_view s, MoveKind* out) {
  static constexpr std::pair<std::string_view, MoveKind> kKinds[] = {
      {"pan", MoveKind::kPan},         {"tilt", MoveKind::kTilt},   {"zoom", MoveKind::kZoom},
      {"pedestal", MoveKind::kPedestal}, {"truck", MoveKind::kTruck}, {"dolly", MoveKind::kDolly},
      {"orbit", MoveKind::kOrbit}};
  for (const auto& [name, kind] : kKinds) {
    if (name == s) {
      *out = kind;
      return true;
    }
  }
  return false;
}

int line_of(std::string_view text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

double finite_number(const json& obj, const std::string& key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + "." + key, path + ": missing field \"" + key + "\"");
  if (!it->is_number()) throw ParseError(path + "." + key, path + "." + key + " must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ParseError(path + "." + key, path + "." + key + " must be finite");
  return v;
}

}  // namespace

std::string_view to_string(MoveKind kind) {
  switch (kind) {
    case MoveKind::kPan: return "pan";
    case MoveKind::kTilt: return "tilt";
    case MoveKind::kZoom: return "zoom";
    case MoveKind::kPedestal: return "pedestal";
    case MoveKind::kTruck: return "truck";
    case MoveKind::kDolly: return "dolly";
    case MoveKind::kOrbit: return "orbit";
  }
  return "pan";
}

std::string_view to_string(Easing easing) {
  return easing == Easing::kLinear ? "linear" : "smoothstep";
}

void TrajectoryPrimitive::validate() const {
  if (!std::isfinite(magnitude)) throw InvalidArgument("move magnitude must be finite");
  if (kind == MoveKind::kZoom && !(magnitude > 0)) throw InvalidArgument("zoom scale must be > 0");
  if (kind == MoveKind::kOrbit && !(pivot_depth > 0 && std::isfinite(pivot_depth)))
    throw InvalidArgument("orbit pivot_depth must be > 0");
}

void TrajectorySpec::validate() const {
  if (frame_count < 1) throw InvalidArgument("frames must be >= 1");
  for (const auto& p : primitives) p.validate();
}

double ease(double u, Easing mode) {
  if (!(u >= 0.0 && u <= 1.0)) throw InvalidArgument("ease progress must lie in [0,1]");
  if (mode == Easing::kLinear) return u;
  return u * u * (3.0 - 2.0 * u);
}

CameraPose<double> orbit_pose(double angle_degrees, double pivot_depth) {
  const double a = angle_degrees * kDegToRad;
  const Vector3 pivot(0.0, 0.0, pivot_depth);
  const Vector3 center(-pivot_depth * std::sin(a), 0.0, pivot_depth - pivot_depth * std::cos(a));
  const Vector3 up(0.0, -1.0, 0.0);

  const Vector3 forward = (pivot - center).normalized();
  const Vector3 right = forward.cross(up).normalized();
  const Vector3 down = forward.cross(right);

  Matrix3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  return CameraPose<double>::from(r, -r * center);
}

CompiledTrajectory compile(const TrajectorySpec& spec, const CameraIntrinsics<double>& k_src) {
  spec.validate();
  k_src.validate();

  const int n = spec.frame_count;
  CompiledTrajectory out;
  out.per_frame.reserve(n);
  out.per_frame.push_back({k_src, CameraPose<double>::identity()});

  for (int i = 1; i < n; ++i) {
    const double u = double(i) / double(n - 1);
    Vector3 shift = Vector3::Zero();
    double focal_scale = 1.0;
    CameraPose<double> moves = CameraPose<double>::identity();

    for (const auto& p : spec.primitives) {
      const double s = ease(u, p.easing);
      switch (p.kind) {
        case MoveKind::kTruck: shift.x() += s * p.magnitude; break;
        case MoveKind::kPedestal: shift.y() += s * p.magnitude; break;
        case MoveKind::kDolly: shift.z() += s * p.magnitude; break;
        case MoveKind::kZoom: focal_scale *= 1.0 + s * (p.magnitude - 1.0); break;
        case MoveKind::kPan:
          moves = CameraPose<double>::from(yaw_rotation(s * p.magnitude * kDegToRad), Vector3::Zero()) * moves;
          break;
        case MoveKind::kTilt:
          moves = CameraPose<double>::from(pitch_rotation(s * p.magnitude * kDegToRad), Vector3::Zero()) * moves;
          break;
        case MoveKind::kOrbit: moves = orbit_pose(s * p.magnitude, p.pivot_depth) * moves; break;
      }
    }

    const CameraPose<double> pose = moves * CameraPose<double>::from(Matrix3::Identity(), shift);
    out.per_frame.push_back({k_src.scaled_focal(focal_scale), pose});
  }
  return out;
}

TrajectorySpec parse_trajectory(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON: ") + e.what(), line_of(text, e.byte));
  } catch (const json::exception& e) {
    // e.g. a numeric literal outside double range
    throw ParseError("", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("", "trajectory must be a JSON object", 1);

  TrajectorySpec spec;
  const auto frames = doc.find("frames");
  if (frames == doc.end()) throw ParseError("frames", "missing field \"frames\"");
  if (!frames->is_number_integer()) throw ParseError("frames", "frames must be an integer");
  if (frames->get<long long>() < 1) throw ParseError("frames", "frames must be ≥ 1");
  spec.frame_count = frames->get<int>();

  const auto moves = doc.find("moves");
  if (moves == doc.end()) throw ParseError("moves", "missing field \"moves\"");
  if (!moves->is_array()) throw ParseError("moves", "moves must be an array");

  for (std::size_t i = 0; i < moves->size(); ++i) {
    const json& m = (*moves)[i];
    const std::string path = "moves[" + std::to_string(i) + "]";
    if (!m.is_object()) throw ParseError(path, path + " must be an object");

    TrajectoryPrimitive p;
    const auto kind = m.find("kind");
    if (kind == m.end()) throw ParseError(path + ".kind", path + ": missing field \"kind\"");
    if (!kind->is_string() || !parse_kind(kind->get<std::string>(), &p.kind))
      throw ParseError(path + ".kind", path + ".kind: unknown move kind " + kind->dump());

    p.magnitude = finite_number(m, magnitude_key(p.kind), path);

    if (const auto ease_it = m.find("ease"); ease_it != m.end()) {
      const std::string e = ease_it->is_string() ? ease_it->get<std::string>() : "";
      if (e == "linear") {
        p.easing = Easing::kLinear;
      } else if (e == "smoothstep") {
        p.easing = Easing::kSmoothstep;
      } else {
        throw ParseError(path + ".ease", path + ".ease must be \"linear\" or \"smoothstep\"");
      }
    }

    if (p.kind == MoveKind::kOrbit) {
      p.pivot_depth = finite_number(m, "pivot_depth", path);
      if (!(p.pivot_depth > 0)) throw ParseError(path + ".pivot_depth", path + ".pivot_depth must be > 0");
    }
    if (p.kind == MoveKind::kZoom && !(p.magnitude > 0))
      throw ParseError(path + ".scale", path + ".scale must be > 0");

    spec.primitives.push_back(p);
  }
  return spec;
}

std::string serialize_trajectory(const TrajectorySpec& spec) {
  json moves = json::array();
  for (const auto& p : spec.primitives) {
    json m;
    m["kind"] = std::string(to_string(p.kind));
    m[magnitude_key(p.kind)] = p.magnitude;
    m["ease"] = std::string(to_string(p.easing));
    if (p.kind == MoveKind::kOrbit) m["pivot_depth"] = p.pivot_depth;
    moves.push_back(std::move(m));
  }
  json doc;
  doc["frames"] = spec.frame_count;
  doc["moves"] = std::move(moves);
  return doc.dump();
}

}  // namespace viewshift
