// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

#include "viewshift/diffusion.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace viewshift {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Tensors and randomness

Video video_from_clip(const VideoClip& clip) {
  check_clip(clip);
  const int n = int(clip.size()), h = clip[0].height, w = clip[0].width;
  Video v(n, h, w);
  for (int f = 0; f < n; ++f)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) v(f, c, y, x) = 2.0 * clip[f].at(y, x, c) - 1.0;
  return v;
}

VideoClip clip_from_video(const Video& video) {
  VideoClip clip;
  clip.reserve(video.frames);
  for (int f = 0; f < video.frames; ++f) {
    Frame frame(video.height, video.width);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < video.height; ++y)
        for (int x = 0; x < video.width; ++x)
          frame.at(y, x, c) = std::clamp(0.5 * (video(f, c, y, x) + 1.0), 0.0, 1.0);
    clip.push_back(std::move(frame));
  }
  return clip;
}

Video mask_tensor(const MaskSequence& masks) {
  if (masks.empty()) throw InvalidArgument("mask sequence is empty");
  const int h = int(masks[0].rows()), w = int(masks[0].cols());
  Video m(int(masks.size()), h, w);
  for (int f = 0; f < m.frames; ++f) {
    if (masks[f].rows() != h || masks[f].cols() != w)
      throw DimensionError("height", "mask " + std::to_string(f) + " size differs from mask 0");
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m(f, c, y, x) = masks[f](y, x) ? 1.0 : 0.0;
  }
  return m;
}

double Rng::uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw InvalidArgument("uniform_int needs a positive range");
  return int((static_cast<unsigned __int128>(engine_()) * unsigned(n)) >> 64);
}

Video Rng::normal_like(int frames, int height, int width) {
  Video v(frames, height, width);
  for (Eigen::Index i = 0; i < v.data.size(); ++i) v.data(i) = normal();
  return v;
}

// ---------------------------------------------------------------------------
// Schedule

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw InvalidArgument("schedule needs at least one step");
  VectorXd betas(steps);
  for (int i = 0; i < steps; ++i)
    betas(i) = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * double(i) / double(steps - 1);
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule::NoiseSchedule(VectorXd betas) : betas_(std::move(betas)) {
  if (betas_.size() < 1) throw InvalidArgument("schedule needs at least one step");
  for (Eigen::Index i = 0; i < betas_.size(); ++i) {
    if (!(betas_(i) > 0.0 && betas_(i) < 1.0)) throw InvalidArgument("betas must lie in (0,1)");
    if (i > 0 && betas_(i) < betas_(i - 1)) throw InvalidArgument("betas must be non-decreasing");
  }
  alphas_ = (1.0 - betas_.array()).matrix();
  alpha_bars_.resize(betas_.size());
  double prod = 1.0;
  for (Eigen::Index i = 0; i < betas_.size(); ++i) {
    prod *= alphas_(i);
    alpha_bars_(i) = prod;
  }
}

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps())
    throw InvalidArgument("time step " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
}

Video add_noise(const Video& v, int t, const NoiseSchedule& schedule, const Video& eps) {
  schedule.check_step(t);
  if (!v.same_shape(eps)) throw DimensionError("shape", "noise tensor shape differs from video");
  const double ab = schedule.alpha_bar(t);
  Video out = v;
  out.data = std::sqrt(ab) * v.data + std::sqrt(1.0 - ab) * eps.data;
  return out;
}

// ---------------------------------------------------------------------------
// LoRA

LoRAAdapter LoRAAdapter::init(int d_in, int d_out, int rank, double scale, Rng& rng, double a_std) {
  if (rank < 1 || rank > std::min(d_in, d_out))
    throw InvalidArgument("LoRA rank must lie in [1, min(d_in, d_out)]");
  LoRAAdapter a;
  a.A.resize(rank, d_in);
  for (Eigen::Index i = 0; i < a.A.size(); ++i) a.A.data()[i] = a_std * rng.normal();
  a.B = MatrixXd::Zero(d_out, rank);
  a.scale = scale;
  return a;
}

VectorXd lora_forward(const VectorXd& x, const MatrixXd& w0, const LoRAAdapter& adapter) {
  if (w0.cols() != x.size()) throw DimensionError("d_in", "input size does not match W0 columns");
  if (adapter.A.cols() != x.size() || adapter.B.rows() != w0.rows() || adapter.B.cols() != adapter.A.rows())
    throw DimensionError("rank", "adapter factors do not match W0");
  return w0 * x + adapter.scale * (adapter.B * (adapter.A * x));
}

MatrixXd LoraLinear::forward(const MatrixXd& x, bool use_lora) const {
  MatrixXd y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  if (use_lora && adapter.rank() > 0) y.noalias() += adapter.scale * ((x * adapter.A.transpose()) * adapter.B.transpose());
  return y;
}

MatrixXd LoraLinear::backward(const MatrixXd& x, const MatrixXd& dy, bool use_lora, AdapterGrad* grad) const {
  MatrixXd dx = dy * weight;
  if (use_lora && adapter.rank() > 0) {
    const MatrixXd dyb = dy * adapter.B;  // tokens x rank
    dx.noalias() += adapter.scale * (dyb * adapter.A);
    if (grad != nullptr) {
      if (grad->dA.size() == 0) grad->dA = MatrixXd::Zero(adapter.A.rows(), adapter.A.cols());
      if (grad->dB.size() == 0) grad->dB = MatrixXd::Zero(adapter.B.rows(), adapter.B.cols());
      grad->dB.noalias() += adapter.scale * (dy.transpose() * (x * adapter.A.transpose()));
      grad->dA.noalias() += adapter.scale * (dyb.transpose() * x);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Denoiser

namespace {

constexpr int kTimeEmbedDim = 16;

MatrixXd gaussian_matrix(int rows, int cols, double stddev, Rng& rng) {
  MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = stddev * rng.normal();
  return m;
}

LoraLinear make_linear(int d_in, int d_out, Rng& rng) {
  LoraLinear l;
  l.weight = gaussian_matrix(d_out, d_in, 1.0 / std::sqrt(double(d_in)), rng);
  l.bias = VectorXd::Zero(d_out);
  return l;
}

MatrixXd tanh_of(const MatrixXd& a) { return a.array().tanh().matrix(); }

MatrixXd tanh_backward(const MatrixXd& g, const MatrixXd& dg) {
  return (dg.array() * (1.0 - g.array().square())).matrix();
}

void grow(std::vector<AdapterGrad>& v, std::size_t n) {
  if (v.size() < n) v.resize(n);
}

}  // namespace

ToyDenoiser::ToyDenoiser(const DenoiserConfig& config, int height, int width)
    : config_(config), height_(height), width_(width) {
  const int p = config_.patch;
  if (p < 1 || height % p != 0 || width % p != 0)
    throw InvalidArgument("image size must be a multiple of the patch size");
  if (config_.hidden < 1 || config_.blocks < 1 || config_.max_frames < 1 || config_.cond_grid < 1)
    throw InvalidArgument("denoiser dimensions must be positive");
  if (config_.cond_grid > height || config_.cond_grid > width)
    throw InvalidArgument("condition grid larger than the image");
  grid_h_ = height / p;
  grid_w_ = width / p;

  const int d = config_.hidden, c = token_dim(), tokens = tokens_per_frame(), g = config_.cond_grid;
  Rng rng(config_.base_seed);
  w_in_ = gaussian_matrix(d, c, 1.0 / std::sqrt(double(c)), rng);
  b_in_ = VectorXd::Zero(d);
  pos_embed_ = gaussian_matrix(tokens, d, 0.5, rng);
  w_time_ = gaussian_matrix(d, kTimeEmbedDim, 0.25, rng);
  w_cond_ = gaussian_matrix(d, 3 * g * g, 1.0 / std::sqrt(double(3 * g * g)), rng);
  frame_embed_ = gaussian_matrix(config_.max_frames, d, 0.5, rng);
  for (int b = 0; b < config_.blocks; ++b) {
    Block blk;
    blk.s1 = make_linear(d, d, rng);
    blk.s2 = make_linear(d, d, rng);
    blk.t1 = make_linear(d, d, rng);
    blk.t2 = make_linear(d, d, rng);
    blocks_.push_back(std::move(blk));
  }
  w_out_ = gaussian_matrix(c, d, 0.5 / std::sqrt(double(d)), rng);
  b_out_ = VectorXd::Zero(c);

  spatial_kernel_.resize(tokens, tokens);
  const double s2 = 2.0 * config_.spatial_sigma * config_.spatial_sigma;
  for (int i = 0; i < tokens; ++i) {
    for (int j = 0; j < tokens; ++j) {
      const double dy = double(i / grid_w_ - j / grid_w_), dx = double(i % grid_w_ - j % grid_w_);
      spatial_kernel_(i, j) = std::exp(-(dx * dx + dy * dy) / s2);
    }
    spatial_kernel_.row(i) /= spatial_kernel_.row(i).sum();
  }
}

void ToyDenoiser::attach_lora(int rank, double scale, std::uint64_t seed) {
  Rng rng(seed);
  for (LoraLinear* l : spatial_layers()) l->adapter = LoRAAdapter::init(int(l->weight.cols()), int(l->weight.rows()), rank, scale, rng);
  for (LoraLinear* l : temporal_layers()) l->adapter = LoRAAdapter::init(int(l->weight.cols()), int(l->weight.rows()), rank, scale, rng);
}

int ToyDenoiser::lora_rank() const { return blocks_.front().s1.adapter.rank(); }

std::vector<LoraLinear*> ToyDenoiser::spatial_layers() {
  std::vector<LoraLinear*> out;
  for (auto& b : blocks_) {
    out.push_back(&b.s1);
    out.push_back(&b.s2);
  }
  return out;
}

std::vector<LoraLinear*> ToyDenoiser::temporal_layers() {
  std::vector<LoraLinear*> out;
  for (auto& b : blocks_) {
    out.push_back(&b.t1);
    out.push_back(&b.t2);
  }
  return out;
}

std::vector<const LoraLinear*> ToyDenoiser::spatial_layers() const {
  std::vector<const LoraLinear*> out;
  for (const auto& b : blocks_) {
    out.push_back(&b.s1);
    out.push_back(&b.s2);
  }
  return out;
}

std::vector<const LoraLinear*> ToyDenoiser::temporal_layers() const {
  std::vector<const LoraLinear*> out;
  for (const auto& b : blocks_) {
    out.push_back(&b.t1);
    out.push_back(&b.t2);
  }
  return out;
}

std::uint64_t ToyDenoiser::base_digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const auto& m) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    for (std::size_t i = 0; i < std::size_t(m.size()) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  feed(w_in_);
  feed(b_in_);
  feed(pos_embed_);
  feed(w_time_);
  feed(w_cond_);
  feed(frame_embed_);
  for (const auto& b : blocks_)
    for (const LoraLinear* l : {&b.s1, &b.s2, &b.t1, &b.t2}) {
      feed(l->weight);
      feed(l->bias);
    }
  feed(w_out_);
  feed(b_out_);
  return h;
}

std::size_t ToyDenoiser::base_parameter_count() const {
  std::size_t n = w_in_.size() + b_in_.size() + pos_embed_.size() + w_time_.size() + w_cond_.size() +
                  frame_embed_.size() + w_out_.size() + b_out_.size();
  for (const auto& b : blocks_)
    for (const LoraLinear* l : {&b.s1, &b.s2, &b.t1, &b.t2}) n += l->weight.size() + l->bias.size();
  return n;
}

std::size_t ToyDenoiser::lora_parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_)
    for (const LoraLinear* l : {&b.s1, &b.s2, &b.t1, &b.t2}) n += l->adapter.A.size() + l->adapter.B.size();
  return n;
}

VectorXd ToyDenoiser::condition(const Video& video) const {
  if (video.height != height_ || video.width != width_) throw DimensionError("width", "prompt frame size mismatch");
  const int g = config_.cond_grid;
  VectorXd y = VectorXd::Zero(3 * g * g);
  for (int c = 0; c < 3; ++c)
    for (int gy = 0; gy < g; ++gy)
      for (int gx = 0; gx < g; ++gx) {
        const int y0 = gy * height_ / g, y1 = (gy + 1) * height_ / g;
        const int x0 = gx * width_ / g, x1 = (gx + 1) * width_ / g;
        double sum = 0.0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) sum += video(0, c, yy, xx);
        y((c * g + gy) * g + gx) = sum / double((y1 - y0) * (x1 - x0));
      }
  return y;
}

MatrixXd ToyDenoiser::patchify(const Video& v) const {
  const int p = config_.patch, tokens = tokens_per_frame();
  MatrixXd x(Eigen::Index(v.frames) * tokens, token_dim());
  for (int n = 0; n < v.frames; ++n)
    for (int gy = 0; gy < grid_h_; ++gy)
      for (int gx = 0; gx < grid_w_; ++gx) {
        const Eigen::Index row = Eigen::Index(n) * tokens + gy * grid_w_ + gx;
        for (int c = 0; c < 3; ++c)
          for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx) x(row, (c * p + dy) * p + dx) = v(n, c, gy * p + dy, gx * p + dx);
      }
  return x;
}

Video ToyDenoiser::unpatchify(const MatrixXd& x, int frames) const {
  const int p = config_.patch, tokens = tokens_per_frame();
  Video v(frames, height_, width_);
  for (int n = 0; n < frames; ++n)
    for (int gy = 0; gy < grid_h_; ++gy)
      for (int gx = 0; gx < grid_w_; ++gx) {
        const Eigen::Index row = Eigen::Index(n) * tokens + gy * grid_w_ + gx;
        for (int c = 0; c < 3; ++c)
          for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx) v(n, c, gy * p + dy, gx * p + dx) = x(row, (c * p + dy) * p + dx);
      }
  return v;
}

VectorXd ToyDenoiser::time_embedding(int t) const {
  VectorXd e(kTimeEmbedDim);
  const int half = kTimeEmbedDim / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(1000.0) * double(k) / double(half));
    e(k) = std::sin(double(t) * freq);
    e(k + half) = std::cos(double(t) * freq);
  }
  return e;
}

MatrixXd ToyDenoiser::temporal_kernel(int frames) const {
  MatrixXd k(frames, frames);
  const double s2 = 2.0 * config_.temporal_sigma * config_.temporal_sigma;
  for (int i = 0; i < frames; ++i) {
    for (int j = 0; j < frames; ++j) k(i, j) = std::exp(-double((i - j) * (i - j)) / s2);
    k.row(i) /= k.row(i).sum();
  }
  return k;
}

MatrixXd ToyDenoiser::mix_spatial(const MatrixXd& h, int frames, bool transpose) const {
  const int tokens = tokens_per_frame();
  MatrixXd out(h.rows(), h.cols());
  for (int n = 0; n < frames; ++n) {
    const auto in = h.middleRows(Eigen::Index(n) * tokens, tokens);
    if (transpose)
      out.middleRows(Eigen::Index(n) * tokens, tokens).noalias() = spatial_kernel_.transpose() * in;
    else
      out.middleRows(Eigen::Index(n) * tokens, tokens).noalias() = spatial_kernel_ * in;
  }
  return out;
}

MatrixXd ToyDenoiser::mix_temporal(const MatrixXd& h, const MatrixXd& kernel, bool transpose) const {
  const int tokens = tokens_per_frame();
  const int frames = int(kernel.rows());
  MatrixXd out = MatrixXd::Zero(h.rows(), h.cols());
  for (int n = 0; n < frames; ++n)
    for (int m = 0; m < frames; ++m) {
      const double w = transpose ? kernel(m, n) : kernel(n, m);
      out.middleRows(Eigen::Index(n) * tokens, tokens) += w * h.middleRows(Eigen::Index(m) * tokens, tokens);
    }
  return out;
}

MatrixXd ToyDenoiser::run(const Video& noisy, int t, const VectorXd& y, ForwardMode mode,
                          std::vector<BlockCache>* caches) const {
  if (noisy.height != height_ || noisy.width != width_)
    throw DimensionError(noisy.height != height_ ? "height" : "width", "video size does not match the denoiser");
  if (noisy.frames < 1 || noisy.frames > config_.max_frames)
    throw DimensionError("frames", "frame count outside [1, max_frames]");
  if (y.size() != w_cond_.cols()) throw DimensionError("condition", "condition vector has the wrong size");

  const int frames = noisy.frames, tokens = tokens_per_frame();
  MatrixXd h = patchify(noisy) * w_in_.transpose();
  const VectorXd shared = b_in_ + w_time_ * time_embedding(t) + w_cond_ * y;
  h.rowwise() += shared.transpose();
  for (int n = 0; n < frames; ++n) h.middleRows(Eigen::Index(n) * tokens, tokens) += pos_embed_;

  const MatrixXd kt = mode.temporal ? temporal_kernel(frames) : MatrixXd();
  if (caches != nullptr) caches->assign(blocks_.size(), BlockCache{});

  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block& blk = blocks_[b];
    MatrixXd u = mix_spatial(h, frames, false);
    MatrixXd g = tanh_of(blk.s1.forward(u, mode.spatial_lora));
    h += blk.s2.forward(g, mode.spatial_lora);

    MatrixXd v, g2;
    if (mode.temporal) {
      MatrixXd he = h;
      for (int n = 0; n < frames; ++n)
        he.middleRows(Eigen::Index(n) * tokens, tokens).rowwise() += frame_embed_.row(n);
      v = mix_temporal(he, kt, false);
      g2 = tanh_of(blk.t1.forward(v, mode.temporal_lora));
      h += blk.t2.forward(g2, mode.temporal_lora);
    }
    if (caches != nullptr) (*caches)[b] = BlockCache{std::move(u), std::move(g), std::move(v), std::move(g2)};
  }

  MatrixXd out = h * w_out_.transpose();
  out.rowwise() += b_out_.transpose();
  return out;
}

Video ToyDenoiser::predict(const Video& noisy, int t, const VectorXd& y, ForwardMode mode) const {
  return unpatchify(run(noisy, t, y, mode, nullptr), noisy.frames);
}

Video ToyDenoiser::predict_with_grad(const Video& noisy, int t, const VectorXd& y, ForwardMode mode,
                                     const std::function<Video(const Video&)>& upstream, bool want_spatial,
                                     bool want_temporal, LoraGradients* grads) const {
  std::vector<BlockCache> caches;
  const int frames = noisy.frames;
  const Video pred = unpatchify(run(noisy, t, y, mode, &caches), frames);
  const Video dpred = upstream(pred);

  const std::size_t nb = blocks_.size();
  grow(grads->spatial, 2 * nb);
  grow(grads->temporal, 2 * nb);
  const MatrixXd kt = mode.temporal ? temporal_kernel(frames) : MatrixXd();

  MatrixXd dh = patchify(dpred) * w_out_;
  for (std::size_t bi = nb; bi-- > 0;) {
    const Block& blk = blocks_[bi];
    const BlockCache& c = caches[bi];
    if (mode.temporal) {
      AdapterGrad* gt1 = want_temporal ? &grads->temporal[2 * bi] : nullptr;
      AdapterGrad* gt2 = want_temporal ? &grads->temporal[2 * bi + 1] : nullptr;
      const MatrixXd dg2 = blk.t2.backward(c.g2, dh, mode.temporal_lora, gt2);
      const MatrixXd dv = blk.t1.backward(c.v, tanh_backward(c.g2, dg2), mode.temporal_lora, gt1);
      dh += mix_temporal(dv, kt, true);
    }
    AdapterGrad* gs1 = want_spatial ? &grads->spatial[2 * bi] : nullptr;
    AdapterGrad* gs2 = want_spatial ? &grads->spatial[2 * bi + 1] : nullptr;
    const MatrixXd dg = blk.s2.backward(c.g, dh, mode.spatial_lora, gs2);
    const MatrixXd du = blk.s1.backward(c.u, tanh_backward(c.g, dg), mode.spatial_lora, gs1);
    dh += mix_spatial(du, frames, true);
  }
  return pred;
}

EpsPredictor make_predictor(const ToyDenoiser& model, ForwardMode mode) {
  return [&model, mode](const Video& x, int t, const VectorXd& y) { return model.predict(x, t, y, mode); };
}

// ---------------------------------------------------------------------------
// Losses

namespace {

constexpr double kBlack = -1.0;  // model-space value of a black pixel

Video canonical_anchor(const Video& anchor, const Video& mask) {
  if (!anchor.same_shape(mask)) throw DimensionError("shape", "mask shape differs from anchor");
  Video out = anchor;
  out.data = (mask.data > 0.0).select(anchor.data, kBlack);
  return out;
}

void zero_fill(std::vector<AdapterGrad>& grads, const std::vector<const LoraLinear*>& layers) {
  grads.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (grads[i].dA.size() == 0) grads[i].dA = MatrixXd::Zero(layers[i]->adapter.A.rows(), layers[i]->adapter.A.cols());
    if (grads[i].dB.size() == 0) grads[i].dB = MatrixXd::Zero(layers[i]->adapter.B.rows(), layers[i]->adapter.B.cols());
  }
}

double temporal_value(const ToyDenoiser& model, const Video& canonical, const Video& mask, int t,
                      const NoiseSchedule& schedule, const Video& eps, const VectorXd& y) {
  const Video pred = model.predict(add_noise(canonical, t, schedule, eps), t, y, ForwardMode::full());
  const double denom = std::max(1.0, mask.data.sum());
  return (mask.data * (eps.data - pred.data).square()).sum() / denom;
}

double spatial_value(const ToyDenoiser& model, const Video& frame, int t, const NoiseSchedule& schedule,
                     const Video& eps, const VectorXd& y) {
  const Video pred = model.predict(add_noise(frame, t, schedule, eps), t, y, ForwardMode::spatial_only());
  return (eps.data - pred.data).square().mean();
}

}  // namespace

LossResult masked_temporal_loss(const ToyDenoiser& model, const Video& anchor, const Video& mask, int t,
                                const NoiseSchedule& schedule, const Video& eps, const VectorXd& y) {
  const Video canonical = canonical_anchor(anchor, mask);
  const Video noisy = add_noise(canonical, t, schedule, eps);
  const double denom = std::max(1.0, mask.data.sum());

  LossResult out;
  model.predict_with_grad(
      noisy, t, y, ForwardMode::full(),
      [&](const Video& pred) {
        const Eigen::ArrayXd resid = mask.data * (eps.data - pred.data);
        out.loss = (resid * (eps.data - pred.data)).sum() / denom;
        Video d = pred;
        d.data = -2.0 * resid / denom;
        return d;
      },
      false, true, &out.grads);
  zero_fill(out.grads.temporal, model.temporal_layers());
  out.grads.spatial.clear();
  return out;
}

LossResult spatial_loss(const ToyDenoiser& model, const Video& clip, int frame_index, int t,
                        const NoiseSchedule& schedule, const Video& eps, const VectorXd& y) {
  if (clip.frames < 1) throw InvalidArgument("clip must contain at least one frame");
  if (frame_index < 0 || frame_index >= clip.frames) throw InvalidArgument("frame index out of range");
  const Video frame = clip.frame(frame_index);
  const Video noisy = add_noise(frame, t, schedule, eps);
  const double count = double(eps.data.size());

  LossResult out;
  model.predict_with_grad(
      noisy, t, y, ForwardMode::spatial_only(),
      [&](const Video& pred) {
        const Eigen::ArrayXd resid = eps.data - pred.data;
        out.loss = resid.square().sum() / count;
        Video d = pred;
        d.data = -2.0 * resid / count;
        return d;
      },
      true, false, &out.grads);
  zero_fill(out.grads.spatial, model.spatial_layers());
  out.grads.temporal.clear();
  return out;
}

int draw_frame(const Video& clip, Rng& rng) {
  if (clip.frames < 1) throw InvalidArgument("clip must contain at least one frame");
  return rng.uniform_int(clip.frames);
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (rank < 1) throw InvalidArgument("rank must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning rate must be positive");
  if (steps < 0) throw InvalidArgument("steps must be >= 0");
  if (!(lora_scale > 0.0)) throw InvalidArgument("LoRA scale must be positive");
  if (eval_draws < 1) throw InvalidArgument("eval_draws must be positive");
}

double evaluate_loss(const ToyDenoiser& model, const Video& anchor, const Video& mask, const Video& clip,
                     const NoiseSchedule& schedule, std::uint64_t seed, int draws) {
  const Video canonical = canonical_anchor(anchor, mask);
  const VectorXd y = model.condition(canonical);
  Rng rng(seed);
  double total = 0.0;
  for (int k = 0; k < draws; ++k) {
    const int t = 1 + rng.uniform_int(schedule.steps());
    const Video eps = rng.normal_like(anchor.frames, anchor.height, anchor.width);
    total += temporal_value(model, canonical, mask, t, schedule, eps, y);
    const int i = draw_frame(clip, rng);
    const int t2 = 1 + rng.uniform_int(schedule.steps());
    const Video eps2 = rng.normal_like(1, clip.height, clip.width);
    total += spatial_value(model, clip.frame(i), t2, schedule, eps2, y);
  }
  return total / double(draws);
}

namespace {

void sgd_update(const std::vector<LoraLinear*>& layers, const std::vector<AdapterGrad>& grads, double lr) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i]->adapter.A.noalias() -= lr * grads[i].dA;
    layers[i]->adapter.B.noalias() -= lr * grads[i].dB;
  }
}

}  // namespace

TrainResult train(ToyDenoiser& model, const Video& anchor, const Video& mask, const Video& clip,
                  const NoiseSchedule& schedule, const TrainConfig& config) {
  config.validate();
  if (!anchor.same_shape(mask)) throw DimensionError("shape", "mask shape differs from anchor");
  if (clip.height != anchor.height || clip.width != anchor.width)
    throw DimensionError(clip.height != anchor.height ? "height" : "width", "clip and anchor sizes differ");

  model.attach_lora(config.rank, config.lora_scale, config.rng_seed);
  const std::uint64_t eval_seed = config.rng_seed ^ 0x9e3779b97f4a7c15ULL;

  TrainResult result;
  result.initial_eval_loss = evaluate_loss(model, anchor, mask, clip, schedule, eval_seed, config.eval_draws);

  const VectorXd y = model.condition(canonical_anchor(anchor, mask));
  Rng rng(config.rng_seed + 1);
  const auto spatial = model.spatial_layers();
  const auto temporal = model.temporal_layers();

  for (int step = 0; step < config.steps; ++step) {
    const int t = 1 + rng.uniform_int(schedule.steps());
    const Video eps = rng.normal_like(anchor.frames, anchor.height, anchor.width);
    const LossResult lt = masked_temporal_loss(model, anchor, mask, t, schedule, eps, y);

    const int i = draw_frame(clip, rng);
    const int t2 = 1 + rng.uniform_int(schedule.steps());
    const Video eps2 = rng.normal_like(1, clip.height, clip.width);
    const LossResult ls = spatial_loss(model, clip, i, t2, schedule, eps2, y);

    if (!std::isfinite(lt.loss + ls.loss))
      throw NumericError(step, "non-finite loss at step " + std::to_string(step));

    sgd_update(temporal, lt.grads.temporal, config.learning_rate);
    sgd_update(spatial, ls.grads.spatial, config.learning_rate);
    result.trace.push_back({step, lt.loss, ls.loss});
  }

  result.final_eval_loss = evaluate_loss(model, anchor, mask, clip, schedule, eval_seed, config.eval_draws);
  return result;
}

// ---------------------------------------------------------------------------
// Sampling

Video reverse_from(const EpsPredictor& model, Video x, int t_start, const VectorXd& y, const NoiseSchedule& schedule,
                   Rng& rng) {
  if (t_start < 0 || t_start > schedule.steps()) throw InvalidArgument("start step outside the schedule");
  for (int t = t_start; t >= 1; --t) {
    const Video eps = model(x, t, y);
    const double beta = schedule.beta(t), ab = schedule.alpha_bar(t);
    Eigen::ArrayXd mean = (x.data - beta / std::sqrt(1.0 - ab) * eps.data) / std::sqrt(schedule.alpha(t));
    if (t > 1) {
      const double var = beta * (1.0 - schedule.alpha_bar(t - 1)) / (1.0 - ab);
      const Video z = rng.normal_like(x.frames, x.height, x.width);
      mean += std::sqrt(var) * z.data;
    }
    x.data = std::move(mean);
  }
  return x;
}

Video sample(const EpsPredictor& model, const VectorXd& y, const NoiseSchedule& schedule, Rng& rng, int frames,
             int height, int width) {
  return reverse_from(model, rng.normal_like(frames, height, width), schedule.steps(), y, schedule, rng);
}

Video sdedit(const Video& video, double strength, const EpsPredictor& predictor, const VectorXd& y,
             const NoiseSchedule& schedule, Rng& rng) {
  if (!(strength >= 0.0 && strength <= 1.0)) throw InvalidArgument("strength must lie in [0,1]");
  const int t_star = int(std::lround(strength * schedule.steps()));
  if (t_star == 0) return video;

  Video out = video;
  for (int n = 0; n < video.frames; ++n) {
    Video noise = rng.normal_like(1, video.height, video.width);
    Video start = t_star == schedule.steps() ? std::move(noise) : add_noise(video.frame(n), t_star, schedule, noise);
    out.set_frame(n, reverse_from(predictor, std::move(start), t_star, y, schedule, rng));
  }
  return out;
}

Video sdedit(const Video& video, double strength, const ToyDenoiser& model, const NoiseSchedule& schedule, Rng& rng) {
  return sdedit(video, strength, make_predictor(model, ForwardMode::temporal_detached()), model.condition(video),
                schedule, rng);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

using json = nlohmann::json;

json matrix_json(const MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

MatrixXd matrix_from(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (Eigen::Index(data.size()) != rows * cols) throw ParseError("data", "matrix data length mismatch");
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[r * cols + c].get<double>();
  return m;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

json adapters_json(const std::vector<const LoraLinear*>& layers) {
  json arr = json::array();
  for (const LoraLinear* l : layers)
    arr.push_back({{"scale", l->adapter.scale}, {"A", matrix_json(l->adapter.A)}, {"B", matrix_json(l->adapter.B)}});
  return arr;
}

void restore_adapters(const json& arr, const std::vector<LoraLinear*>& layers) {
  if (!arr.is_array() || arr.size() != layers.size()) throw ParseError("adapters", "adapter count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    LoRAAdapter a;
    a.scale = arr[i].at("scale").get<double>();
    a.A = matrix_from(arr[i].at("A"));
    a.B = matrix_from(arr[i].at("B"));
    if (a.A.cols() != layers[i]->weight.cols() || a.B.rows() != layers[i]->weight.rows() || a.B.cols() != a.A.rows())
      throw ParseError("adapters", "adapter shape does not match the denoiser");
    layers[i]->adapter = std::move(a);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const ToyDenoiser& model, const TrainConfig& tc) {
  const DenoiserConfig& dc = model.config();
  json doc;
  doc["format"] = "viewshift-lora";
  doc["version"] = 1;
  doc["height"] = model.height();
  doc["width"] = model.width();
  doc["denoiser"] = {{"patch", dc.patch},
                     {"hidden", dc.hidden},
                     {"blocks", dc.blocks},
                     {"max_frames", dc.max_frames},
                     {"cond_grid", dc.cond_grid},
                     {"spatial_sigma", dc.spatial_sigma},
                     {"temporal_sigma", dc.temporal_sigma},
                     {"base_seed", dc.base_seed}};
  doc["train"] = {{"rank", tc.rank},
                  {"learning_rate", tc.learning_rate},
                  {"steps", tc.steps},
                  {"rng_seed", tc.rng_seed},
                  {"lora_scale", tc.lora_scale},
                  {"eval_draws", tc.eval_draws}};
  doc["base_digest"] = hex64(model.base_digest());
  doc["adapters"] = {{"spatial", adapters_json(model.spatial_layers())},
                     {"temporal", adapters_json(model.temporal_layers())}};

  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << doc.dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint " + path);
}

ToyDenoiser load_checkpoint(const std::string& path, Checkpoint* meta) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("", "malformed checkpoint " + path + ": " + e.what());
  }
  try {
    if (doc.at("format") != "viewshift-lora") throw ParseError("format", "not a viewshift LoRA checkpoint");
    if (doc.at("version").get<int>() != 1) throw ParseError("version", "unsupported checkpoint version");
    Checkpoint ck;
    const json& d = doc.at("denoiser");
    ck.denoiser.patch = d.at("patch").get<int>();
    ck.denoiser.hidden = d.at("hidden").get<int>();
    ck.denoiser.blocks = d.at("blocks").get<int>();
    ck.denoiser.max_frames = d.at("max_frames").get<int>();
    ck.denoiser.cond_grid = d.at("cond_grid").get<int>();
    ck.denoiser.spatial_sigma = d.at("spatial_sigma").get<double>();
    ck.denoiser.temporal_sigma = d.at("temporal_sigma").get<double>();
    ck.denoiser.base_seed = d.at("base_seed").get<std::uint64_t>();
    const json& t = doc.at("train");
    ck.train.rank = t.at("rank").get<int>();
    ck.train.learning_rate = t.at("learning_rate").get<double>();
    ck.train.steps = t.at("steps").get<int>();
    ck.train.rng_seed = t.at("rng_seed").get<std::uint64_t>();
    ck.train.lora_scale = t.at("lora_scale").get<double>();
    ck.train.eval_draws = t.at("eval_draws").get<int>();
    ck.height = doc.at("height").get<int>();
    ck.width = doc.at("width").get<int>();
    ck.base_digest = std::stoull(doc.at("base_digest").get<std::string>(), nullptr, 16);

    ToyDenoiser model(ck.denoiser, ck.height, ck.width);
    if (model.base_digest() != ck.base_digest)
      throw ParseError("base_digest", "base weights digest mismatch (checkpoint built with different base weights)");
    restore_adapters(doc.at("adapters").at("spatial"), model.spatial_layers());
    restore_adapters(doc.at("adapters").at("temporal"), model.temporal_layers());
    if (meta != nullptr) *meta = ck;
    return model;
  } catch (const json::exception& e) {
    throw ParseError("", "invalid checkpoint " + path + ": " + e.what());
  }
}

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss trace " + path);
  out << "step,loss_temp,loss_spatial\n" << std::setprecision(17);
  for (const auto& r : trace) out << r.step << ',' << r.loss_temp << ',' << r.loss_spatial << '\n';
  if (!out) throw IoError("failed writing loss trace " + path);
}

}  // namespace viewshift
