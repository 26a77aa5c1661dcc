#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "echolab/rng.hpp"
#include "echolab/tensor.hpp"

namespace echolab::model {

struct NegativeFeature : nn::TensorError {
  NegativeFeature() : nn::TensorError("generalized-mean pooling needs non-negative features") {}
};

enum class Aggregation : std::uint8_t { SP, GeM, SPGeM };

inline std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::SP: return "SP";
    case Aggregation::GeM: return "GeM";
    case Aggregation::SPGeM: return "SP+GeM";
  }
  return "?";
}
inline Aggregation aggregation_from_string(const std::string& s) {
  if (s == "SP") return Aggregation::SP;
  if (s == "GeM") return Aggregation::GeM;
  if (s == "SP+GeM" || s == "SPGeM") return Aggregation::SPGeM;
  throw nn::TensorError("unknown aggregation mode: " + s);
}

struct EncoderStage {
  int channels = 32;
  int stride = 4;
  int kernel = 5;
};

struct ModelConfig {
  int in_channels = 6;      // microphone channels M
  int input_length = 1024;  // RIR samples N
  std::vector<EncoderStage> stages{{32, 4, 5}, {64, 4, 5}, {128, 4, 5}, {256, 4, 5}};
  int b_out = 100;  // floorplan pixels per side
  int h_out = 40;   // height pixels
  Aggregation aggregation = Aggregation::SPGeM;
  double rho_gem = 3.0;
  int decoder_seed_channels = 64;
  std::vector<int> decoder_channels{32, 16};  // one entry per 2x upsample block

  int feature_channels() const { return stages.back().channels; }
  int feature_length() const {
    int len = input_length;
    for (const auto& s : stages) len = (len + 2 * (s.kernel / 2) - s.kernel) / s.stride + 1;
    return len;
  }
  int latent_width() const {
    return aggregation == Aggregation::SPGeM ? 2 * feature_channels() : feature_channels();
  }
  int seed_grid() const { return b_out >> decoder_channels.size(); }

  void validate() const {
    if (stages.empty()) throw nn::TensorError("model config: encoder needs at least one stage");
    if (feature_length() < 1) throw nn::TensorError("model config: encoder strides exhaust the input");
    if (seed_grid() < 1 || (seed_grid() << decoder_channels.size()) != b_out)
      throw nn::TensorError("model config: b_out must be seed * 2^blocks");
    if (rho_gem < 1.0) throw nn::TensorError("model config: rho must be >= 1");
  }
};

// Eq-style generalized-mean pooling over the temporal axis of [B, C, L]
// features: a_c(rho) = (mean_l f_{c,l}^rho)^(1/rho). rho = 1 is plain mean
// pooling (SP); larger rho weighs peaks more, approaching max pooling.
template <class T>
nn::Var<T> aggregate(const nn::Var<T>& features, double rho) {
  if (features->shape.size() != 3) throw nn::ShapeMismatch("aggregate: expects [B,C,L]");
  if (rho == 1.0) return nn::mean_axis_last(features);
  for (const T v : features->value)
    if (v < T(0)) throw NegativeFeature();
  auto powed = nn::pow_scalar(features, static_cast<T>(rho));
  auto mean = nn::mean_axis_last(powed);
  return nn::pow_scalar(mean, static_cast<T>(1.0 / rho));
}

template <class T>
class Network {
 public:
  struct Forward {
    std::vector<nn::Var<T>> stage_outputs;  // per encoder stage, [B, C_i, L_i]
    nn::Var<T> features;                    // last stage, non-negative
    nn::Var<T> descriptor;                  // [B, latent]
    nn::Var<T> fp_logits;                   // [B, 1, b, b]
    nn::Var<T> h_logits;                    // [B, h]
  };

  Network(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    build(rng);
  }

  const ModelConfig& config() const { return cfg_; }

  const std::vector<std::pair<std::string, nn::Var<T>>>& named_params() const { return params_; }
  std::vector<nn::Var<T>> param_vars() const {
    std::vector<nn::Var<T>> out;
    out.reserve(params_.size());
    for (const auto& [name, v] : params_) out.push_back(v);
    return out;
  }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : params_) n += v->numel();
    return n;
  }

  // Residual 1-D conv encoder; every stage downsamples by its stride and the
  // final relu keeps features non-negative for the fractional-power pooling.
  std::pair<std::vector<nn::Var<T>>, nn::Var<T>> encode(const nn::Var<T>& x) const {
    if (x->shape.size() != 3 || x->shape[1] != cfg_.in_channels || x->shape[2] != cfg_.input_length)
      throw nn::ShapeMismatch("encode: input must be [B, " + std::to_string(cfg_.in_channels) + ", " +
                              std::to_string(cfg_.input_length) + "]");
    std::vector<nn::Var<T>> outputs;
    nn::Var<T> h = x;
    for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
      const auto& st = cfg_.stages[s];
      const std::size_t p = stage_param_base_ + s * 6;
      h = nn::relu(nn::channel_norm(
          nn::conv1d(h, params_[p].second, params_[p + 1].second, st.stride, st.kernel / 2)));
      auto r = nn::relu(nn::channel_norm(nn::conv1d(h, params_[p + 2].second, params_[p + 3].second, 1, 1)));
      r = nn::channel_norm(nn::conv1d(r, params_[p + 4].second, params_[p + 5].second, 1, 1));
      h = nn::relu(nn::add(h, r));
      outputs.push_back(h);
    }
    return {outputs, h};
  }

  nn::Var<T> assemble_descriptor(const nn::Var<T>& features) const {
    switch (cfg_.aggregation) {
      case Aggregation::SP: return aggregate(features, 1.0);
      case Aggregation::GeM: return aggregate(features, cfg_.rho_gem);
      case Aggregation::SPGeM:
        return nn::concat1(aggregate(features, 1.0), aggregate(features, cfg_.rho_gem));
    }
    throw nn::TensorError("bad aggregation mode");
  }

  // Seed grid from a linear projection of the descriptor, then 2x
  // upsample+conv blocks. Each block also receives a linearly projected
  // encoder stage output, broadcast over its spatial grid.
  nn::Var<T> decode_floorplan(const nn::Var<T>& descriptor,
                              const std::vector<nn::Var<T>>& stage_outputs) const {
    const int batch = descriptor->shape[0];
    const int grid = cfg_.seed_grid();
    auto h = nn::linear(descriptor, params_[seed_w_].second, params_[seed_b_].second);
    h = nn::reshape(h, {batch, cfg_.decoder_seed_channels, grid, grid});
    h = nn::relu(nn::channel_norm(h));
    for (std::size_t blk = 0; blk < cfg_.decoder_channels.size(); ++blk) {
      const std::size_t p = block_param_base_ + blk * 4;
      h = nn::upsample_nearest2d(h, 2);
      h = nn::channel_norm(nn::conv2d(h, params_[p].second, params_[p + 1].second, 1, 1));
      const auto& skip_src = stage_outputs[skip_stage(blk)];
      auto flat = nn::reshape(skip_src, {batch, skip_src->shape[1] * skip_src->shape[2]});
      auto proj = nn::linear(flat, params_[p + 2].second, params_[p + 3].second);
      h = nn::relu(nn::broadcast_add_channel(h, proj));
    }
    return nn::conv2d(h, params_[head_w_].second, params_[head_b_].second, 1, 0);
  }

  nn::Var<T> decode_height(const nn::Var<T>& descriptor) const {
    return nn::linear(descriptor, params_[height_w_].second, params_[height_b_].second);
  }

  Forward forward(const nn::Var<T>& x, bool detach_descriptor = false) const {
    Forward f;
    auto [outputs, features] = encode(x);
    f.stage_outputs = std::move(outputs);
    f.features = features;
    f.descriptor = assemble_descriptor(features);
    auto desc = detach_descriptor ? nn::detach(f.descriptor) : f.descriptor;
    f.fp_logits = decode_floorplan(desc, f.stage_outputs);
    f.h_logits = decode_height(desc);
    return f;
  }

  // Temporal saliency: relu of the gradient-weighted feature map, linearly
  // interpolated to the input length and max-normalized to [0, 1].
  std::vector<double> grad_cam(const nn::Var<T>& x) const {
    if (x->shape.empty() || x->shape[0] != 1)
      throw nn::ShapeMismatch("grad_cam: expects a single sample");
    Forward f = forward(x);
    auto target = nn::sum_all(nn::sigmoid(nn::reshape(f.fp_logits, {1, cfg_.b_out * cfg_.b_out})));
    nn::backward(target);
    const int channels = cfg_.feature_channels();
    const int len = f.features->shape[2];
    std::vector<double> cam(static_cast<std::size_t>(len), 0.0);
    for (int c = 0; c < channels; ++c) {
      double w = 0.0;
      for (int l = 0; l < len; ++l) w += static_cast<double>(f.features->grad[static_cast<std::size_t>(c) * len + l]);
      w /= len;
      for (int l = 0; l < len; ++l)
        cam[static_cast<std::size_t>(l)] += w * static_cast<double>(f.features->value[static_cast<std::size_t>(c) * len + l]);
    }
    for (double& v : cam) v = std::max(v, 0.0);

    std::vector<double> out(static_cast<std::size_t>(cfg_.input_length), 0.0);
    for (int n = 0; n < cfg_.input_length; ++n) {
      if (len == 1) {
        out[static_cast<std::size_t>(n)] = cam[0];
        continue;
      }
      const double pos = static_cast<double>(n) * (len - 1) / (cfg_.input_length - 1);
      const int lo = static_cast<int>(pos);
      const int hi = std::min(lo + 1, len - 1);
      const double frac = pos - lo;
      out[static_cast<std::size_t>(n)] =
          (1.0 - frac) * cam[static_cast<std::size_t>(lo)] + frac * cam[static_cast<std::size_t>(hi)];
    }
    double peak = 0.0;
    for (const double v : out) peak = std::max(peak, v);
    if (peak > 0.0)
      for (double& v : out) v /= peak;
    return out;
  }

 private:
  std::size_t skip_stage(std::size_t block) const {
    const std::size_t deepest = cfg_.stages.size() - 1;
    return block > deepest ? 0 : deepest - block;
  }

  nn::Var<T> add_param(const std::string& name, nn::Shape shape, Rng& rng, double fan_in) {
    auto v = nn::make_var<T>(shape, true);
    if (fan_in > 0) {
      const double std_dev = std::sqrt(2.0 / fan_in);
      for (T& x : v->value) x = static_cast<T>(rng.normal() * std_dev);
    }
    params_.emplace_back(name, v);
    return v;
  }

  void build(Rng& rng) {
    stage_param_base_ = 0;
    int cin = cfg_.in_channels;
    for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
      const auto& st = cfg_.stages[s];
      const std::string tag = "enc" + std::to_string(s);
      add_param(tag + ".down.w", {st.channels, cin, st.kernel}, rng, cin * st.kernel);
      add_param(tag + ".down.b", {st.channels}, rng, 0);
      add_param(tag + ".res1.w", {st.channels, st.channels, 3}, rng, st.channels * 3);
      add_param(tag + ".res1.b", {st.channels}, rng, 0);
      add_param(tag + ".res2.w", {st.channels, st.channels, 3}, rng, st.channels * 3);
      add_param(tag + ".res2.b", {st.channels}, rng, 0);
      cin = st.channels;
    }

    const int latent = cfg_.latent_width();
    const int grid = cfg_.seed_grid();
    seed_w_ = params_.size();
    add_param("dec.seed.w", {cfg_.decoder_seed_channels * grid * grid, latent}, rng, latent);
    seed_b_ = params_.size();
    add_param("dec.seed.b", {cfg_.decoder_seed_channels * grid * grid}, rng, 0);

    block_param_base_ = params_.size();
    int dc = cfg_.decoder_seed_channels;
    for (std::size_t blk = 0; blk < cfg_.decoder_channels.size(); ++blk) {
      const int cout = cfg_.decoder_channels[blk];
      const std::string tag = "dec.block" + std::to_string(blk);
      add_param(tag + ".conv.w", {cout, dc, 3, 3}, rng, dc * 9);
      add_param(tag + ".conv.b", {cout}, rng, 0);
      const auto& st = cfg_.stages[skip_stage(blk)];
      int skip_len = cfg_.input_length;
      for (std::size_t s = 0; s <= skip_stage(blk); ++s) {
        const auto& e = cfg_.stages[s];
        skip_len = (skip_len + 2 * (e.kernel / 2) - e.kernel) / e.stride + 1;
      }
      add_param(tag + ".skip.w", {cout, st.channels * skip_len}, rng, st.channels * skip_len);
      add_param(tag + ".skip.b", {cout}, rng, 0);
      dc = cout;
    }

    head_w_ = params_.size();
    add_param("dec.head.w", {1, dc, 1, 1}, rng, dc);
    head_b_ = params_.size();
    add_param("dec.head.b", {1}, rng, 0);

    height_w_ = params_.size();
    add_param("height.w", {cfg_.h_out, latent}, rng, latent);
    height_b_ = params_.size();
    add_param("height.b", {cfg_.h_out}, rng, 0);
  }

  ModelConfig cfg_;
  std::vector<std::pair<std::string, nn::Var<T>>> params_;
  std::size_t stage_param_base_ = 0;
  std::size_t seed_w_ = 0, seed_b_ = 0;
  std::size_t block_param_base_ = 0;
  std::size_t head_w_ = 0, head_b_ = 0;
  std::size_t height_w_ = 0, height_b_ = 0;
};

}  // namespace echolab::model
