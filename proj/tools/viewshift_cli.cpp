// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

// viewshift: synthetic scenes, anchor rendering, toy fine-tuning, metrics,
// SDEdit refinement and the preview server.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or parse error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "viewshift/anchor.hpp"
#include "viewshift/diffusion.hpp"
#include "viewshift/io.hpp"
#include "viewshift/metrics.hpp"
#include "viewshift/service.hpp"
#include "viewshift/trajectory.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace viewshift;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

int synth_scene(std::uint64_t seed, int n_objects, int frames, int width, int height, const fs::path& out) {
  const SyntheticScene scene = make_random_scene(seed, n_objects);
  const CameraIntrinsics<double> k = default_intrinsics(width, height);
  auto [clip, depths] = render_scene_clip(scene, k, frames);
  make_dir(out);
  save_clip(clip, out);
  save_depths(depths, out);
  write_meta(out, ClipMeta{k, std::nullopt});
  std::cout << json{{"frames", frames}, {"objects", n_objects}, {"seed", seed}, {"out_dir", out.string()}}.dump()
            << '\n';
  return kOk;
}

int render_anchor(const fs::path& clip_dir, const fs::path& traj_file, const fs::path& out, int radius) {
  const ClipMeta meta = read_meta(clip_dir);
  const VideoClip clip = load_clip(clip_dir);
  const auto depths = load_depths(clip_dir, int(clip.size()));

  TrajectorySpec spec;
  try {
    spec = parse_trajectory(read_text(traj_file));
  } catch (const ParseError& e) {
    throw ParseError(e.field(), traj_file.string() + ": " + e.what());
  }
  if (spec.frame_count != int(clip.size()))
    throw ParseError("frames", traj_file.string() + ": frames is " + std::to_string(spec.frame_count) +
                                   " but the clip has " + std::to_string(clip.size()));

  const CompiledTrajectory traj = compile(spec, meta.intrinsics);
  const AnchorResult anchor = render_anchor_video(clip, depths, traj, radius);
  make_dir(out);
  save_clip(anchor.frames, out);
  save_masks(anchor.masks, out);
  write_meta(out, ClipMeta{traj[0].intrinsics, std::nullopt});
  const json report{{"frames", clip.size()}, {"splat_radius", radius}, {"valid_fraction", anchor.valid_fraction}};
  write_text(out / "render_report.json", report.dump(2) + "\n");
  std::cout << report.dump() << '\n';
  return kOk;
}

int train_toy(const fs::path& anchor_dir, const fs::path& clip_dir, const TrainConfig& config, const fs::path& out) {
  std::cout << "rank=" << config.rank << " lr=" << config.learning_rate << " steps=" << config.steps
            << " seed=" << config.rng_seed << std::endl;
  const VideoClip anchor_clip = load_clip(anchor_dir);
  const MaskSequence masks = load_masks(anchor_dir, int(anchor_clip.size()));
  const VideoClip clip = load_clip(clip_dir);
  if (clip[0].height != anchor_clip[0].height || clip[0].width != anchor_clip[0].width)
    throw DimensionError("width", "anchor and clip frame sizes differ");

  const Video anchor = video_from_clip(anchor_clip);
  const Video mask = mask_tensor(masks);
  if (!anchor.same_shape(mask)) throw DimensionError("height", "mask size differs from anchor frames");
  ToyDenoiser model(DenoiserConfig{}, anchor.height, anchor.width);
  const NoiseSchedule schedule = NoiseSchedule::linear();
  const TrainResult result = train(model, anchor, mask, video_from_clip(clip), schedule, config);

  make_dir(out);
  save_checkpoint((out / "checkpoint.json").string(), model, config);
  write_loss_csv((out / "loss.csv").string(), result.trace);
  json summary{{"initial_eval_loss", result.initial_eval_loss}, {"final_eval_loss", result.final_eval_loss}};
  if (!result.trace.empty()) {
    summary["final_loss_temp"] = result.trace.back().loss_temp;
    summary["final_loss_spatial"] = result.trace.back().loss_spatial;
  }
  std::cout << summary.dump() << '\n';
  return kOk;
}

int metrics(const fs::path& a_dir, const fs::path& b_dir, const std::string& mask_dir) {
  const VideoClip a = load_clip(a_dir);
  const VideoClip b = load_clip(b_dir);
  MaskSequence masks;
  if (!mask_dir.empty()) masks = load_masks(mask_dir, int(a.size()));
  const MetricReport report = compare_clips(a, b, mask_dir.empty() ? nullptr : &masks);
  std::cout << report.to_json() << '\n';
  return kOk;
}

int sdedit_cmd(const fs::path& in_dir, const fs::path& ckpt, double strength, std::uint64_t seed, const fs::path& out) {
  const VideoClip clip = load_clip(in_dir);
  const ToyDenoiser model = load_checkpoint(ckpt.string());
  const Video input = video_from_clip(clip);
  Rng rng(seed);
  const Video edited = sdedit(input, strength, model, NoiseSchedule::linear(), rng);
  const VideoClip result = clip_from_video(edited);

  // The output dir starts as a copy of the input; frames are rewritten only
  // where the refinement changed them.
  make_dir(out);
  for (const auto& entry : fs::directory_iterator(in_dir))
    if (entry.is_regular_file())
      fs::copy_file(entry.path(), out / entry.path().filename(), fs::copy_options::overwrite_existing);
  int rewritten = 0;
  for (std::size_t i = 0; i < clip.size(); ++i) {
    if (edited.frame(int(i)) == input.frame(int(i))) continue;
    write_png(out / frame_name(int(i)), result[i]);
    ++rewritten;
  }
  std::cout << json{{"strength", strength}, {"frames", clip.size()}, {"rewritten", rewritten}}.dump() << '\n';
  return kOk;
}

int run_serve(int port, const std::string& host, const std::string& data_dir) {
  PreviewService service(data_dir);
  if (!service.has_clip()) std::cerr << "warning: " << service.load_error() << '\n';
  std::cerr << "listening on " << host << ':' << port << '\n';
  serve(service, host, port);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"viewshift: camera-trajectory anchor videos and masked LoRA fine-tuning"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int n_objects = 8, frames = 14, width = 64, height = 64;
  std::string out_dir;
  auto* synth = app.add_subcommand("synth-scene", "render a seeded synthetic scene with exact depth");
  synth->add_option("seed", seed, "scene seed")->required();
  synth->add_option("n_objects", n_objects, "object count")->required()->check(CLI::Range(1, 22));
  synth->add_option("frames", frames, "frame count")->required()->check(CLI::PositiveNumber);
  synth->add_option("out_dir", out_dir, "output clip directory")->required();
  synth->add_option("--width", width, "image width")->check(CLI::PositiveNumber);
  synth->add_option("--height", height, "image height")->check(CLI::PositiveNumber);

  std::string clip_dir, traj_file;
  int radius = 1;
  auto* render = app.add_subcommand("render-anchor", "render the anchor video and masks for a trajectory");
  render->add_option("clip_dir", clip_dir, "source clip directory")->required();
  render->add_option("traj_file", traj_file, "trajectory JSON")->required();
  render->add_option("out_dir", out_dir, "output directory")->required();
  render->add_option("--splat-radius", radius, "splat disc radius in pixels")->check(CLI::Range(0, 16));

  std::string anchor_dir;
  TrainConfig tc;
  std::string train_out = "train_out";
  auto* train_cmd = app.add_subcommand("train-toy", "fine-tune spatial and temporal LoRA on the toy denoiser");
  train_cmd->add_option("anchor_dir", anchor_dir, "anchor frames and masks")->required();
  train_cmd->add_option("clip_dir", clip_dir, "source clip")->required();
  train_cmd->add_option("--rank", tc.rank, "LoRA rank")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tc.learning_rate, "SGD learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--steps", tc.steps, "training steps")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", tc.rng_seed, "training seed");
  train_cmd->add_option("--out", train_out, "output directory for checkpoint.json and loss.csv");

  std::string a_dir, b_dir, mask_dir;
  auto* metrics_cmd = app.add_subcommand("metrics", "PSNR/SSIM report between two clip directories");
  metrics_cmd->add_option("a_dir", a_dir)->required();
  metrics_cmd->add_option("b_dir", b_dir)->required();
  metrics_cmd->add_option("--mask-dir", mask_dir, "region masks (mask_%05d.png)");

  std::string in_dir, ckpt, sdedit_out = "sdedit_out";
  double strength = 0.5;
  std::uint64_t sdedit_seed = 0;
  auto* sd = app.add_subcommand("sdedit", "per-frame SDEdit refinement without temporal LoRA");
  sd->add_option("in_dir", in_dir)->required();
  sd->add_option("ckpt", ckpt)->required();
  sd->add_option("--strength", strength, "noise strength in [0,1]")->check(CLI::Range(0.0, 1.0));
  sd->add_option("--seed", sdedit_seed);
  sd->add_option("--out", sdedit_out, "output directory");

  int port = 8080;
  std::string host = "127.0.0.1";
  std::string data_dir;
  if (const char* env = std::getenv("RECAPTURE_DATA_DIR")) data_dir = env;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP preview service for the trajectory studio");
  serve_cmd->add_option("--port", port)->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--data-dir", data_dir, "clip directory (default $RECAPTURE_DATA_DIR)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return synth_scene(seed, n_objects, frames, width, height, out_dir);
    if (*render) return render_anchor(clip_dir, traj_file, out_dir, radius);
    if (*train_cmd) return train_toy(anchor_dir, clip_dir, tc, train_out);
    if (*metrics_cmd) return metrics(a_dir, b_dir, mask_dir);
    if (*sd) return sdedit_cmd(in_dir, ckpt, strength, sdedit_seed, sdedit_out);
    if (*serve_cmd) return run_serve(port, host, data_dir);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    // A missing numbered input is a usage problem; other I/O is a runtime one.
    return e.index() ? kUsage : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
