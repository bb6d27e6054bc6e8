// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

// Clip directories:
//   frame_%05d.png  8-bit RGB
//   depth_%05d.pfm  32-bit float depth in scene units (preferred), or
//   depth_%05d.png  16-bit depth multiplied by meta.json "depth_scale"
//   mask_%05d.png   8-bit, 0 or 255
//   meta.json       {"fx","fy","cx","cy","width","height","depth_scale"}

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "viewshift/geometry.hpp"
#include "viewshift/image.hpp"

namespace viewshift {

namespace fs = std::filesystem;

struct ClipMeta {
  CameraIntrinsics<double> intrinsics;
  std::optional<double> depth_scale;  // scene units per 16-bit PNG step
};

std::string frame_name(int index);
std::string depth_name(int index, const char* ext = "pfm");
std::string mask_name(int index);

/// 8-bit RGB. Values are rounded from [0,1] and clamped.
std::string encode_png(const Frame& frame);
void write_png(const fs::path& path, const Frame& frame);
Frame read_png(const fs::path& path);

void write_mask_png(const fs::path& path, const Mask& mask);
/// Any nonzero pixel is valid.
Mask read_mask_png(const fs::path& path);

/// 16-bit single channel; depth = value * scale, zero is invalid.
Depth read_depth_png(const fs::path& path, double scale);
void write_depth_png(const fs::path& path, const Depth& depth, double scale);

/// Little-endian "Pf" file, rows stored bottom to top. Invalid depths are
/// written as 0.
void write_pfm(const fs::path& path, const Depth& depth);
Depth read_pfm(const fs::path& path);

ClipMeta read_meta(const fs::path& dir);
void write_meta(const fs::path& dir, const ClipMeta& meta);

/// Number of consecutive frame files starting at index 0; a gap before the
/// highest present index raises IoError carrying the missing index.
int count_frames(const fs::path& dir);

VideoClip load_clip(const fs::path& dir);
void save_clip(const VideoClip& clip, const fs::path& dir);

/// Loads `frames` depth maps, preferring PFM over 16-bit PNG.
std::vector<Depth> load_depths(const fs::path& dir, int frames);
void save_depths(const std::vector<Depth>& depths, const fs::path& dir);

MaskSequence load_masks(const fs::path& dir, int frames);
void save_masks(const MaskSequence& masks, const fs::path& dir);

}  // namespace viewshift
