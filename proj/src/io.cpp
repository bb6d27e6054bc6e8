// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

#include "viewshift/io.hpp"

#include <png.h>

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <regex>
#include <sstream>

namespace viewshift {

namespace {

std::string indexed(const char* prefix, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05d.%s", prefix, index, ext);
  return buf;
}

struct PngImage {
  int width = 0, height = 0, channels = 0, depth = 0;
  std::vector<std::uint8_t> data;  // row-major, big-endian for 16-bit
};

void write_callback(png_structp png, png_bytep bytes, png_size_t n) {
  static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(bytes), n);
}

void flush_callback(png_structp) {}

std::string encode(const PngImage& img) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::string out;
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed");
  }
  png_set_write_fn(png, &out, write_callback, flush_callback);
  const int color = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), img.depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = std::size_t(img.width) * img.channels * (img.depth / 8);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.data.data() + std::size_t(y) * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

PngImage decode(const fs::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unreadable PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  PngImage img;
  img.width = int(png_get_image_width(png, info));
  img.height = int(png_get_image_height(png, info));
  img.depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && img.depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (img.depth < 8) img.depth = 8;
  png_read_update_info(png, info);
  img.channels = png_get_channels(png, info);
  img.depth = png_get_bit_depth(png, info);

  const std::size_t stride = png_get_rowbytes(png, info);
  img.data.resize(stride * img.height);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = img.data.data() + std::size_t(y) * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::uint8_t to_byte(double v) { return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

}  // namespace

std::string frame_name(int index) { return indexed("frame", index, "png"); }
std::string depth_name(int index, const char* ext) { return indexed("depth", index, ext); }
std::string mask_name(int index) { return indexed("mask", index, "png"); }

std::string encode_png(const Frame& frame) {
  PngImage img{frame.width, frame.height, 3, 8, {}};
  img.data.resize(std::size_t(frame.width) * frame.height * 3);
  for (Eigen::Index i = 0; i < frame.pixels.rows(); ++i)
    for (int c = 0; c < 3; ++c) img.data[std::size_t(i) * 3 + c] = to_byte(frame.pixels(i, c));
  return encode(img);
}

void write_png(const fs::path& path, const Frame& frame) { write_bytes(path, encode_png(frame)); }

Frame read_png(const fs::path& path) {
  const PngImage img = decode(path);
  if (img.depth != 8) throw IoError("expected an 8-bit PNG: " + path.string());
  Frame frame(img.height, img.width);
  for (Eigen::Index i = 0; i < frame.pixels.rows(); ++i)
    for (int c = 0; c < 3; ++c) {
      const int src = img.channels >= 3 ? c : 0;
      frame.pixels(i, c) = img.data[std::size_t(i) * img.channels + src] / 255.0;
    }
  return frame;
}

void write_mask_png(const fs::path& path, const Mask& mask) {
  PngImage img{int(mask.cols()), int(mask.rows()), 1, 8, {}};
  img.data.resize(std::size_t(mask.size()));
  for (Eigen::Index r = 0; r < mask.rows(); ++r)
    for (Eigen::Index c = 0; c < mask.cols(); ++c) img.data[r * mask.cols() + c] = mask(r, c) ? 255 : 0;
  write_bytes(path, encode(img));
}

Mask read_mask_png(const fs::path& path) {
  const PngImage img = decode(path);
  if (img.depth != 8) throw IoError("expected an 8-bit mask PNG: " + path.string());
  Mask mask(img.height, img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) mask(r, c) = img.data[(std::size_t(r) * img.width + c) * img.channels] ? 1 : 0;
  return mask;
}

Depth read_depth_png(const fs::path& path, double scale) {
  const PngImage img = decode(path);
  if (img.depth != 16 || img.channels != 1) throw IoError("expected a 16-bit grayscale depth PNG: " + path.string());
  Grid<double> values(img.height, img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const std::size_t i = (std::size_t(r) * img.width + c) * 2;
      values(r, c) = double((img.data[i] << 8) | img.data[i + 1]) * scale;
    }
  return Depth::from_values(std::move(values));
}

void write_depth_png(const fs::path& path, const Depth& depth, double scale) {
  if (!(scale > 0.0)) throw InvalidArgument("depth scale must be positive");
  PngImage img{depth.width(), depth.height(), 1, 16, {}};
  img.data.resize(std::size_t(depth.values.size()) * 2);
  for (int r = 0; r < depth.height(); ++r)
    for (int c = 0; c < depth.width(); ++c) {
      const long v = depth.valid(r, c) ? std::clamp(std::lround(depth.values(r, c) / scale), 0L, 65535L) : 0L;
      const std::size_t i = (std::size_t(r) * depth.width() + c) * 2;
      img.data[i] = std::uint8_t(v >> 8);
      img.data[i + 1] = std::uint8_t(v & 0xff);
    }
  write_bytes(path, encode(img));
}

void write_pfm(const fs::path& path, const Depth& depth) {
  static_assert(std::endian::native == std::endian::little, "PFM writer assumes a little-endian host");
  std::ostringstream os;
  os << "Pf\n" << depth.width() << ' ' << depth.height() << "\n-1.0\n";
  std::string bytes = os.str();
  for (int r = depth.height() - 1; r >= 0; --r)
    for (int c = 0; c < depth.width(); ++c) {
      const float v = depth.valid(r, c) ? float(depth.values(r, c)) : 0.0f;
      char b[4];
      std::memcpy(b, &v, 4);
      bytes.append(b, 4);
    }
  write_bytes(path, bytes);
}

Depth read_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (!in || magic != "Pf" || w < 1 || h < 1 || scale == 0.0)
    throw IoError("malformed PFM header: " + path.string());
  in.get();  // single whitespace after the scale
  const bool little = scale < 0.0;
  Grid<double> values(h, w);
  for (int r = h - 1; r >= 0; --r)
    for (int c = 0; c < w; ++c) {
      unsigned char b[4];
      if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated PFM: " + path.string());
      if (little != (std::endian::native == std::endian::little)) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
      float v;
      std::memcpy(&v, b, 4);
      values(r, c) = double(v);
    }
  return Depth::from_values(std::move(values));
}

ClipMeta read_meta(const fs::path& dir) {
  const fs::path path = dir / "meta.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("meta.json", std::string("malformed meta.json: ") + e.what());
  }
  ClipMeta meta;
  auto number = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number()) throw ParseError(key, std::string("meta.json: missing number ") + key);
    return j[key].get<double>();
  };
  auto integer = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number_integer())
      throw ParseError(key, std::string("meta.json: missing integer ") + key);
    return j[key].get<int>();
  };
  meta.intrinsics.fx = number("fx");
  meta.intrinsics.fy = number("fy");
  meta.intrinsics.cx = number("cx");
  meta.intrinsics.cy = number("cy");
  meta.intrinsics.width = integer("width");
  meta.intrinsics.height = integer("height");
  if (j.contains("depth_scale") && !j["depth_scale"].is_null()) meta.depth_scale = number("depth_scale");
  try {
    meta.intrinsics.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError("meta.json", std::string("meta.json: ") + e.what());
  }
  return meta;
}

void write_meta(const fs::path& dir, const ClipMeta& meta) {
  ensure_dir(dir);
  const auto& k = meta.intrinsics;
  nlohmann::json j{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
  j["depth_scale"] = meta.depth_scale ? nlohmann::json(*meta.depth_scale) : nlohmann::json(nullptr);
  write_bytes(dir / "meta.json", j.dump(2) + "\n");
}

int count_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  static const std::regex pattern(R"(frame_(\d{5})\.png)");
  int highest = -1, present = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      highest = std::max(highest, std::stoi(m[1]));
      ++present;
    }
  }
  if (highest < 0) throw IoError("no frame_%05d.png files in " + dir.string());
  if (present != highest + 1)
    for (int i = 0; i <= highest; ++i)
      if (!fs::exists(dir / frame_name(i)))
        throw IoError("missing frame index " + std::to_string(i) + " (" + (dir / frame_name(i)).string() + ")", i);
  return highest + 1;
}

VideoClip load_clip(const fs::path& dir) {
  const int n = count_frames(dir);
  VideoClip clip;
  for (int i = 0; i < n; ++i) {
    clip.push_back(read_png(dir / frame_name(i)));
    if (clip[i].height != clip[0].height || clip[i].width != clip[0].width)
      throw DimensionError(clip[i].height != clip[0].height ? "height" : "width",
                           "frame " + std::to_string(i) + " size differs from frame 0 in " + dir.string());
  }
  return clip;
}

void save_clip(const VideoClip& clip, const fs::path& dir) {
  check_clip(clip);
  ensure_dir(dir);
  for (std::size_t i = 0; i < clip.size(); ++i) write_png(dir / frame_name(int(i)), clip[i]);
}

std::vector<Depth> load_depths(const fs::path& dir, int frames) {
  std::optional<ClipMeta> meta;
  std::vector<Depth> depths;
  for (int i = 0; i < frames; ++i) {
    const fs::path pfm = dir / depth_name(i, "pfm"), png = dir / depth_name(i, "png");
    if (fs::exists(pfm)) {
      depths.push_back(read_pfm(pfm));
    } else if (fs::exists(png)) {
      if (!meta) meta = read_meta(dir);
      if (!meta->depth_scale)
        throw ParseError("depth_scale", "16-bit depth PNGs need meta.json depth_scale (" + png.string() + ")");
      depths.push_back(read_depth_png(png, *meta->depth_scale));
    } else {
      throw IoError("missing depth index " + std::to_string(i) + " (" + pfm.string() + ")", i);
    }
    if (depths[i].height() != depths[0].height() || depths[i].width() != depths[0].width())
      throw DimensionError("height", "depth " + std::to_string(i) + " size differs from depth 0");
  }
  return depths;
}

void save_depths(const std::vector<Depth>& depths, const fs::path& dir) {
  ensure_dir(dir);
  for (std::size_t i = 0; i < depths.size(); ++i) write_pfm(dir / depth_name(int(i)), depths[i]);
}

MaskSequence load_masks(const fs::path& dir, int frames) {
  MaskSequence masks;
  for (int i = 0; i < frames; ++i) {
    const fs::path p = dir / mask_name(i);
    if (!fs::exists(p)) throw IoError("missing mask index " + std::to_string(i) + " (" + p.string() + ")", i);
    masks.push_back(read_mask_png(p));
    if (masks[i].rows() != masks[0].rows() || masks[i].cols() != masks[0].cols())
      throw DimensionError("height", "mask " + std::to_string(i) + " size differs from mask 0");
  }
  return masks;
}

void save_masks(const MaskSequence& masks, const fs::path& dir) {
  ensure_dir(dir);
  for (std::size_t i = 0; i < masks.size(); ++i) write_mask_png(dir / mask_name(int(i)), masks[i]);
}

}  // namespace viewshift
