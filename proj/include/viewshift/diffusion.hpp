// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

// Small factorized video denoiser with spatial and temporal LoRA adapters,
// the masked temporal loss, the per-frame spatial loss, SGD fine-tuning,
// ancestral sampling and SDEdit refinement.
//
// Videos live in model space: pixel values mapped from [0,1] to [-1,1].

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "viewshift/error.hpp"
#include "viewshift/image.hpp"

namespace viewshift {

/// N x 3 x H x W tensor, stored contiguously in that order.
template <typename Scalar>
struct VideoTensor {
  static constexpr int kChannels = 3;

  int frames = 0, height = 0, width = 0;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> data;

  VideoTensor() = default;
  VideoTensor(int n, int h, int w)
      : frames(n), height(h), width(w), data(Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(Eigen::Index(n) * 3 * h * w)) {}

  Eigen::Index frame_size() const { return Eigen::Index(kChannels) * height * width; }
  Eigen::Index index(int n, int c, int y, int x) const {
    return ((Eigen::Index(n) * kChannels + c) * height + y) * width + x;
  }
  Scalar& operator()(int n, int c, int y, int x) { return data(index(n, c, y, x)); }
  Scalar operator()(int n, int c, int y, int x) const { return data(index(n, c, y, x)); }

  bool same_shape(const VideoTensor& o) const {
    return frames == o.frames && height == o.height && width == o.width;
  }

  VideoTensor frame(int n) const {
    VideoTensor f(1, height, width);
    f.data = data.segment(n * frame_size(), frame_size());
    return f;
  }
  void set_frame(int n, const VideoTensor& f) { data.segment(n * frame_size(), frame_size()) = f.data; }

  bool operator==(const VideoTensor& o) const { return same_shape(o) && (data == o.data).all(); }
};

using Video = VideoTensor<double>;

/// Model-space conversions. `video_from_clip` maps [0,1] to [-1,1];
/// `clip_from_video` maps back and clamps.
Video video_from_clip(const VideoClip& clip);
VideoClip clip_from_video(const Video& video);
/// Broadcast of per-pixel masks to an N x 3 x H x W weight tensor.
Video mask_tensor(const MaskSequence& masks);

/// Seeded generator with platform-independent uniform, normal and integer
/// draws on top of std::mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1)
  double normal();
  int uniform_int(int n);  // {0, ..., n-1}
  Video normal_like(int frames, int height, int width);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Variance-preserving forward process. Time steps are 1-based: t in [1, T].
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);
  explicit NoiseSchedule(Eigen::VectorXd betas);

  int steps() const { return int(betas_.size()); }
  double beta(int t) const { return betas_(t - 1); }
  double alpha(int t) const { return alphas_(t - 1); }
  /// alpha_bar(0) == 1.
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars_(t - 1); }
  void check_step(int t) const;

 private:
  Eigen::VectorXd betas_, alphas_, alpha_bars_;
};

/// v_t = sqrt(alpha_bar_t) v + sqrt(1 - alpha_bar_t) eps.
Video add_noise(const Video& v, int t, const NoiseSchedule& schedule, const Video& eps);

/// Low-rank update dW = scale * B A. B starts at zero.
struct LoRAAdapter {
  Eigen::MatrixXd A;  // rank x d_in
  Eigen::MatrixXd B;  // d_out x rank
  double scale = 1.0;

  static LoRAAdapter init(int d_in, int d_out, int rank, double scale, Rng& rng, double a_std = 0.02);

  int rank() const { return int(A.rows()); }
  Eigen::MatrixXd delta() const { return scale * B * A; }
};

/// y = W0 x + scale * B (A x).
Eigen::VectorXd lora_forward(const Eigen::VectorXd& x, const Eigen::MatrixXd& w0, const LoRAAdapter& adapter);

struct AdapterGrad {
  Eigen::MatrixXd dA, dB;
};

/// Frozen linear map over token rows (X is tokens x d_in) with an optional
/// adapter.
struct LoraLinear {
  Eigen::MatrixXd weight;  // d_out x d_in
  Eigen::VectorXd bias;
  LoRAAdapter adapter;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool use_lora) const;
  /// Returns dX; when `grad` is non-null also accumulates adapter gradients.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy, bool use_lora,
                           AdapterGrad* grad) const;
};

struct DenoiserConfig {
  int patch = 4;
  int hidden = 64;
  int blocks = 2;  // spatial/temporal block pairs
  int max_frames = 64;
  int cond_grid = 2;
  double spatial_sigma = 1.0;   // in tokens
  double temporal_sigma = 1.0;  // in frames
  std::uint64_t base_seed = 20240611;
};

/// Which parts of the network participate in a forward pass.
struct ForwardMode {
  bool temporal = true;       // false: temporal blocks replaced by identity
  bool spatial_lora = true;
  bool temporal_lora = true;

  static ForwardMode full() { return {}; }
  static ForwardMode spatial_only() { return {false, true, false}; }
  static ForwardMode temporal_detached() { return {true, true, false}; }
  static ForwardMode base() { return {true, false, false}; }
};

/// Gradients for every adapter, in the order of spatial_layers() / temporal_layers().
struct LoraGradients {
  std::vector<AdapterGrad> spatial;
  std::vector<AdapterGrad> temporal;
};

/// Epsilon predictor eps_theta(v_t, t, y). Spatial blocks mix patch tokens
/// within one frame; temporal blocks mix frames at one token position.
class ToyDenoiser {
 public:
  ToyDenoiser(const DenoiserConfig& config, int height, int width);

  /// Attaches fresh adapters (A gaussian, B zero) to every spatial and
  /// temporal linear map.
  void attach_lora(int rank, double scale, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int tokens_per_frame() const { return grid_h_ * grid_w_; }
  int token_dim() const { return 3 * config_.patch * config_.patch; }
  int lora_rank() const;

  /// Image prompt: the first frame average-pooled on a cond_grid x cond_grid
  /// grid, flattened to a vector.
  Eigen::VectorXd condition(const Video& video) const;

  Video predict(const Video& noisy, int t, const Eigen::VectorXd& y, ForwardMode mode = ForwardMode::full()) const;

  /// Forward then backward for an upstream gradient d(loss)/d(prediction).
  /// Only the adapter families flagged in `want_*` receive gradients.
  Video predict_with_grad(const Video& noisy, int t, const Eigen::VectorXd& y, ForwardMode mode,
                          const std::function<Video(const Video&)>& upstream, bool want_spatial,
                          bool want_temporal, LoraGradients* grads) const;

  std::vector<LoraLinear*> spatial_layers();
  std::vector<LoraLinear*> temporal_layers();
  std::vector<const LoraLinear*> spatial_layers() const;
  std::vector<const LoraLinear*> temporal_layers() const;

  /// 64-bit FNV-1a digest over every base weight, in a fixed order.
  std::uint64_t base_digest() const;
  std::size_t base_parameter_count() const;
  std::size_t lora_parameter_count() const;

 private:
  struct Block {
    LoraLinear s1, s2, t1, t2;
  };
  struct BlockCache {
    Eigen::MatrixXd u, g, v, g2;
  };

  Eigen::MatrixXd patchify(const Video& v) const;
  Video unpatchify(const Eigen::MatrixXd& tokens, int frames) const;
  Eigen::VectorXd time_embedding(int t) const;
  Eigen::MatrixXd temporal_kernel(int frames) const;
  Eigen::MatrixXd mix_spatial(const Eigen::MatrixXd& h, int frames, bool transpose) const;
  Eigen::MatrixXd mix_temporal(const Eigen::MatrixXd& h, const Eigen::MatrixXd& kernel, bool transpose) const;
  Eigen::MatrixXd run(const Video& noisy, int t, const Eigen::VectorXd& y, ForwardMode mode,
                      std::vector<BlockCache>* caches) const;

  DenoiserConfig config_;
  int height_, width_, grid_h_, grid_w_;

  Eigen::MatrixXd w_in_;        // hidden x token_dim
  Eigen::VectorXd b_in_;
  Eigen::MatrixXd pos_embed_;   // tokens x hidden
  Eigen::MatrixXd w_time_;      // hidden x 16
  Eigen::MatrixXd w_cond_;      // hidden x 3 g^2
  Eigen::MatrixXd frame_embed_; // max_frames x hidden
  std::vector<Block> blocks_;
  Eigen::MatrixXd w_out_;       // token_dim x hidden
  Eigen::VectorXd b_out_;
  Eigen::MatrixXd spatial_kernel_;
};

using EpsPredictor = std::function<Video(const Video& noisy, int t, const Eigen::VectorXd& y)>;

EpsPredictor make_predictor(const ToyDenoiser& model, ForwardMode mode);

struct LossResult {
  double loss = 0.0;
  LoraGradients grads;
};

/// Mean squared error over mask-valid elements. Masked-out anchor pixels
/// are replaced with black before noising, so their content never reaches
/// the loss. Gradients are returned for temporal adapters only; the spatial
/// adapters are active in the forward pass but frozen.
LossResult masked_temporal_loss(const ToyDenoiser& model, const Video& anchor, const Video& mask, int t,
                                const NoiseSchedule& schedule, const Video& eps, const Eigen::VectorXd& y);

/// Denoising loss on one source frame with temporal blocks bypassed.
/// `frame_index` is drawn uniformly from the clip by `draw_frame`.
LossResult spatial_loss(const ToyDenoiser& model, const Video& clip, int frame_index, int t,
                        const NoiseSchedule& schedule, const Video& eps, const Eigen::VectorXd& y);
int draw_frame(const Video& clip, Rng& rng);

struct TrainConfig {
  int rank = 16;
  double learning_rate = 5e-4;
  int steps = 400;
  std::uint64_t rng_seed = 0;
  double lora_scale = 1.0;
  int eval_draws = 16;  // fixed (t, eps) draws used for before/after loss

  void validate() const;
};

struct LossRecord {
  int step = 0;
  double loss_temp = 0.0;
  double loss_spatial = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> trace;
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
};

/// Combined L_temp + L_spatial on a fixed set of draws.
double evaluate_loss(const ToyDenoiser& model, const Video& anchor, const Video& mask, const Video& clip,
                     const NoiseSchedule& schedule, std::uint64_t seed, int draws);

/// Plain SGD on both adapter families; base weights are never written.
/// Throws NumericError carrying the step index on a non-finite loss.
TrainResult train(ToyDenoiser& model, const Video& anchor, const Video& mask, const Video& clip,
                  const NoiseSchedule& schedule, const TrainConfig& config);

/// Ancestral sampling from pure noise over every step of the schedule.
Video sample(const EpsPredictor& model, const Eigen::VectorXd& y, const NoiseSchedule& schedule, Rng& rng,
             int frames, int height, int width);

/// Reverse process from step `t_start` down to 0 starting at `x`.
Video reverse_from(const EpsPredictor& model, Video x, int t_start, const Eigen::VectorXd& y,
                   const NoiseSchedule& schedule, Rng& rng);

/// Per-frame SDEdit: noise to t* = round(strength * T) and denoise back.
/// Strength 0 returns the input; strength 1 starts from pure noise.
Video sdedit(const Video& video, double strength, const ToyDenoiser& model, const NoiseSchedule& schedule,
             Rng& rng);
/// Same with an explicit per-frame predictor and prompt.
Video sdedit(const Video& video, double strength, const EpsPredictor& predictor, const Eigen::VectorXd& y,
             const NoiseSchedule& schedule, Rng& rng);

/// Checkpoint: JSON with format/version, denoiser and train config, base
/// digest and every adapter's A, B, scale.
void save_checkpoint(const std::string& path, const ToyDenoiser& model, const TrainConfig& train_config);
struct Checkpoint {
  DenoiserConfig denoiser;
  TrainConfig train;
  int height = 0, width = 0;
  std::uint64_t base_digest = 0;
};
/// Rebuilds the base from its seed, verifies the digest and restores the
/// adapters.
ToyDenoiser load_checkpoint(const std::string& path, Checkpoint* meta = nullptr);

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& trace);

}  // namespace viewshift
