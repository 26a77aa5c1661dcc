#include "echolab/objective.hpp"

#include <algorithm>
#include <cmath>

#include "echolab/dataset.hpp"
#include "json.hpp"

namespace echolab::objective {

double iou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& target) {
  if (pred.size() != target.size()) throw nn::ShapeMismatch("iou: size mismatch");
  long inter = 0, sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] & target[i];
    sum += pred[i] + target[i];
  }
  const long uni = sum - inter;
  if (uni == 0) return 1.0;  // both empty: vacuous agreement
  return static_cast<double>(inter) / static_cast<double>(uni);
}

ResolvedHeight resolve_height_orientation(const std::vector<std::uint8_t>& pred_binary) {
  const int h = static_cast<int>(pred_binary.size());
  const int center = h / 2;
  long below = 0, above = 0, total = 0;
  for (int k = 0; k < h; ++k) {
    if (!pred_binary[static_cast<std::size_t>(k)]) continue;
    ++total;
    if (k < center) ++below;
    if (k > center) ++above;
  }
  if (total == 0) throw NoInteriorPixels();
  ResolvedHeight out;
  out.pixels = pred_binary;
  out.flipped = below > above;  // fewer interior pixels on the floor side
  if (out.flipped) std::reverse(out.pixels.begin(), out.pixels.end());
  out.floor_index = static_cast<int>(
      std::find(out.pixels.begin(), out.pixels.end(), std::uint8_t{1}) - out.pixels.begin());
  return out;
}

namespace {

struct Accumulator {
  double iou_2d = 0, iou_3d = 0, mse_lw = 0, mse_h = 0;
  long count = 0;

  void add(double i2, double i3, double mlw, double mh) {
    iou_2d += i2;
    iou_3d += i3;
    mse_lw += mlw;
    mse_h += mh;
    ++count;
  }
  MetricGroup finish() const {
    MetricGroup g;
    if (count > 0) {
      g.iou_2d = iou_2d / count;
      g.iou_3d = iou_3d / count;
      g.mse_lw = mse_lw / count;
      g.mse_h = mse_h / count;
    }
    g.count = count;
    return g;
  }
};

nlohmann::json group_json(const MetricGroup& g) {
  return nlohmann::json{{"iou_2d", g.iou_2d}, {"iou_3d", g.iou_3d}, {"mse_lw", g.mse_lw},
                        {"mse_h", g.mse_h},   {"count", g.count}};
}

}  // namespace

std::string MetricReport::to_json() const {
  nlohmann::json j{{"iou_2d", overall.iou_2d},
                   {"iou_3d", overall.iou_3d},
                   {"mse_lw", overall.mse_lw},
                   {"mse_h", overall.mse_h},
                   {"count", overall.count},
                   {"by_family", nlohmann::json::object()},
                   {"by_visibility", nlohmann::json::object()}};
  for (const auto& [k, g] : by_family) j["by_family"][k] = group_json(g);
  for (const auto& [k, g] : by_visibility) j["by_visibility"][k] = group_json(g);
  return j.dump(1);
}

MetricReport evaluate(const model::Network<float>& net, const pipeline::Dataset& dataset,
                      int batch_size) {
  const auto& cfg = net.config();
  if (cfg.in_channels != dataset.cfg.sim.mic_count || cfg.input_length != dataset.cfg.sim.n_samples ||
      cfg.b_out != dataset.cfg.b || cfg.h_out != dataset.cfg.h)
    throw nn::ShapeMismatch("evaluate: model and dataset dimensions disagree");

  const std::size_t bb = static_cast<std::size_t>(cfg.b_out) * cfg.b_out;
  const std::size_t hh = static_cast<std::size_t>(cfg.h_out);
  Accumulator overall;
  std::map<std::string, Accumulator> by_family, by_visibility;

  const std::size_t n = dataset.count();
  for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t cur = std::min<std::size_t>(static_cast<std::size_t>(batch_size), n - begin);
    std::vector<float> x(cur * dataset.rir_stride());
    for (std::size_t i = 0; i < cur; ++i)
      std::copy_n(dataset.rir(begin + i), dataset.rir_stride(), x.begin() + i * dataset.rir_stride());
    auto input = nn::constant<float>(
        {static_cast<int>(cur), cfg.in_channels, cfg.input_length}, std::move(x));
    const auto fwd = net.forward(input);
    const auto lw_probs = nn::sigmoid(nn::reshape(fwd.fp_logits, {static_cast<int>(cur), static_cast<int>(bb)}));
    const auto h_probs = nn::sigmoid(fwd.h_logits);

    for (std::size_t i = 0; i < cur; ++i) {
      const std::size_t s = begin + i;
      const std::uint8_t* gt_fp = dataset.floorplan(s);
      const std::uint8_t* gt_h = dataset.height(s);

      std::vector<std::uint8_t> pred_fp(bb), gt_fp_v(gt_fp, gt_fp + bb);
      double mse_lw = 0.0;
      for (std::size_t p = 0; p < bb; ++p) {
        const double prob = lw_probs->value[i * bb + p];
        pred_fp[p] = prob >= 0.5 ? 1 : 0;
        const double d = prob - gt_fp[p];
        mse_lw += d * d;
      }
      mse_lw /= static_cast<double>(bb);

      // permutation-invariant height score: best of original and flipped
      double mse_orig = 0.0, mse_flip = 0.0;
      for (std::size_t k = 0; k < hh; ++k) {
        const double prob = h_probs->value[i * hh + k];
        const double d0 = prob - gt_h[k];
        const double d1 = prob - gt_h[hh - 1 - k];
        mse_orig += d0 * d0;
        mse_flip += d1 * d1;
      }
      mse_orig /= static_cast<double>(hh);
      mse_flip /= static_cast<double>(hh);
      const bool flip = mse_flip < mse_orig;
      const double mse_h = flip ? mse_flip : mse_orig;

      std::vector<std::uint8_t> pred_h(hh);
      for (std::size_t k = 0; k < hh; ++k)
        pred_h[k] = h_probs->value[i * hh + k] >= 0.5f ? 1 : 0;
      if (flip) std::reverse(pred_h.begin(), pred_h.end());

      const double iou2 = iou(pred_fp, gt_fp_v);

      raster::FloorplanImage pf;
      pf.b = cfg.b_out;
      pf.pixels = pred_fp;
      raster::HeightVector ph;
      ph.h = cfg.h_out;
      ph.pixels = pred_h;
      const auto pred_3d = raster::extrude_3d(pf, ph);

      raster::FloorplanImage gf;
      gf.b = cfg.b_out;
      gf.pixels = gt_fp_v;
      raster::HeightVector gh;
      gh.h = cfg.h_out;
      gh.pixels.assign(gt_h, gt_h + hh);
      const auto gt_3d = raster::extrude_3d(gf, gh);
      const double iou3 = iou(pred_3d.voxels, gt_3d.voxels);

      overall.add(iou2, iou3, mse_lw, mse_h);
      const auto& meta = dataset.meta[s];
      by_family[geometry::to_string(meta.family)].add(iou2, iou3, mse_lw, mse_h);
      by_visibility[geometry::to_string(meta.los)].add(iou2, iou3, mse_lw, mse_h);
    }
  }

  MetricReport report;
  report.overall = overall.finish();
  for (const auto& [k, acc] : by_family) report.by_family[k] = acc.finish();
  for (const auto& [k, acc] : by_visibility) report.by_visibility[k] = acc.finish();
  return report;
}

}  // namespace echolab::objective
