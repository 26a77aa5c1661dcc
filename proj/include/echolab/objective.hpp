#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "echolab/model.hpp"
#include "echolab/tensor.hpp"

namespace echolab::pipeline {
struct Dataset;
}

namespace echolab::objective {

struct NoInteriorPixels : nn::TensorError {
  NoInteriorPixels() : nn::TensorError("height prediction has no interior pixels") {}
};

struct LossWeights {
  double alpha = 0.3;  // Dice weight
  double beta = 1.0;   // height MSE weight
};

enum class HeightOrientation : std::uint8_t { Original, Flipped };

// mean of squared elementwise differences
template <class T>
nn::Var<T> mse_loss(const nn::Var<T>& pred, const nn::Var<T>& target) {
  auto d = nn::sub(pred, target);
  return nn::mean_all(nn::mul(d, d));
}

// Per-sample Dice loss 1 - 2 (p.t) / |p + t|_1 over [B, D] inputs, averaged
// over the batch. A sample where both masks are empty contributes 0.
template <class T>
nn::Var<T> dice_loss(const nn::Var<T>& pred_probs, const nn::Var<T>& target) {
  nn::detail::require_same_shape(pred_probs, target, "dice_loss");
  if (pred_probs->shape.size() != 2) throw nn::ShapeMismatch("dice_loss: expects [B, D]");
  const int batch = pred_probs->shape[0];
  const std::size_t d = static_cast<std::size_t>(pred_probs->shape[1]);
  auto out = nn::detail::make_result<T>({batch}, {pred_probs, target});
  std::vector<T> inters(static_cast<std::size_t>(batch)), sums(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    const T* p = pred_probs->value.data() + static_cast<std::size_t>(i) * d;
    const T* t = target->value.data() + static_cast<std::size_t>(i) * d;
    T inter = T(0), sum = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      inter += p[j] * t[j];
      sum += p[j] + t[j];
    }
    inters[static_cast<std::size_t>(i)] = inter;
    sums[static_cast<std::size_t>(i)] = sum;
    out->value[static_cast<std::size_t>(i)] = sum > T(0) ? T(1) - T(2) * inter / sum : T(0);
  }
  out->backward_fn = [d, inters = std::move(inters), sums = std::move(sums)](nn::Node<T>& n) {
    for (int i = 0; i < n.shape[0]; ++i) {
      const T s = sums[static_cast<std::size_t>(i)];
      if (s <= T(0)) continue;
      const T inter = inters[static_cast<std::size_t>(i)];
      const T g = n.grad[static_cast<std::size_t>(i)];
      const T* p = n.parents[0]->value.data() + static_cast<std::size_t>(i) * d;
      const T* t = n.parents[1]->value.data() + static_cast<std::size_t>(i) * d;
      if (n.parents[0]->requires_grad) {
        T* gp = n.parents[0]->grad.data() + static_cast<std::size_t>(i) * d;
        for (std::size_t j = 0; j < d; ++j) gp[j] += g * T(-2) * (t[j] * s - inter) / (s * s);
      }
      if (n.parents[1]->requires_grad) {
        T* gt = n.parents[1]->grad.data() + static_cast<std::size_t>(i) * d;
        for (std::size_t j = 0; j < d; ++j) gt[j] += g * T(-2) * (p[j] * s - inter) / (s * s);
      }
    }
  };
  return nn::mean_all(out);
}

template <class T>
struct PitLoss {
  nn::Var<T> loss;  // scalar
  std::vector<HeightOrientation> chosen;
};

// Permutation-invariant height loss: per-sample minimum of the MSE against
// the target and against the vertically flipped target (ties keep the
// original orientation).
template <class T>
PitLoss<T> pit_height_loss(const nn::Var<T>& pred, const nn::Var<T>& target) {
  nn::detail::require_same_shape(pred, target, "pit_height_loss");
  auto d0 = nn::sub(pred, target);
  auto mse0 = nn::mean_axis_last(nn::mul(d0, d0));
  auto flipped = nn::flip_last(target);
  auto d1 = nn::sub(pred, flipped);
  auto mse1 = nn::mean_axis_last(nn::mul(d1, d1));
  PitLoss<T> out;
  out.chosen.resize(static_cast<std::size_t>(pred->shape[0]));
  for (int i = 0; i < pred->shape[0]; ++i)
    out.chosen[static_cast<std::size_t>(i)] =
        mse0->value[static_cast<std::size_t>(i)] <= mse1->value[static_cast<std::size_t>(i)]
            ? HeightOrientation::Original
            : HeightOrientation::Flipped;
  out.loss = nn::mean_all(nn::min_elem(mse0, mse1));
  return out;
}

template <class T>
struct TotalLoss {
  nn::Var<T> total;  // scalar graph node
  double mse_lw = 0.0;
  double dice_lw = 0.0;
  double mse_h = 0.0;
  std::vector<HeightOrientation> orientations;
};

// weighted sum: MSE_LW + alpha * Dice_LW + beta * PIT-MSE_H
template <class T>
TotalLoss<T> total_loss(const nn::Var<T>& pred_lw_probs, const nn::Var<T>& pred_h_probs,
                        const nn::Var<T>& gt_lw, const nn::Var<T>& gt_h, const LossWeights& w = {}) {
  TotalLoss<T> out;
  auto mse_lw = mse_loss(pred_lw_probs, gt_lw);
  auto dice = dice_loss(pred_lw_probs, gt_lw);
  auto pit = pit_height_loss(pred_h_probs, gt_h);
  out.mse_lw = static_cast<double>(mse_lw->value[0]);
  out.dice_lw = static_cast<double>(dice->value[0]);
  out.mse_h = static_cast<double>(pit.loss->value[0]);
  out.orientations = std::move(pit.chosen);
  out.total = nn::add(nn::add(mse_lw, nn::mul_scalar(dice, static_cast<T>(w.alpha))),
                      nn::mul_scalar(pit.loss, static_cast<T>(w.beta)));
  return out;
}

// --- binary metrics ----------------------------------------------------------

// intersection-over-union of two binary masks; both-empty counts as 1
double iou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& target);

struct ResolvedHeight {
  std::vector<std::uint8_t> pixels;
  int floor_index = 0;
  bool flipped = false;
};

// Post-inference floor/ceiling disambiguation: the side of the vector center
// with fewer interior pixels is taken as the floor (devices sit closer to the
// floor). Ties keep the input orientation.
ResolvedHeight resolve_height_orientation(const std::vector<std::uint8_t>& pred_binary);

struct MetricGroup {
  double iou_2d = 0.0;
  double iou_3d = 0.0;
  double mse_lw = 0.0;
  double mse_h = 0.0;
  long count = 0;
};

struct MetricReport {
  MetricGroup overall;
  std::map<std::string, MetricGroup> by_family;
  std::map<std::string, MetricGroup> by_visibility;

  std::string to_json() const;
};

MetricReport evaluate(const model::Network<float>& net, const pipeline::Dataset& dataset,
                      int batch_size = 16);

}  // namespace echolab::objective
