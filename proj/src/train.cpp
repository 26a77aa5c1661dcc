#include "echolab/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "json.hpp"

namespace echolab::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json model_to_json(const model::ModelConfig& m) {
  json stages = json::array();
  for (const auto& s : m.stages) stages.push_back({s.channels, s.stride, s.kernel});
  return json{{"in_channels", m.in_channels},
              {"input_length", m.input_length},
              {"stages", stages},
              {"b_out", m.b_out},
              {"h_out", m.h_out},
              {"aggregation", model::to_string(m.aggregation)},
              {"rho", m.rho_gem},
              {"decoder_seed_channels", m.decoder_seed_channels},
              {"decoder_channels", m.decoder_channels}};
}

model::ModelConfig model_from_json(const json& j) {
  model::ModelConfig m;
  m.in_channels = j.value("in_channels", m.in_channels);
  m.input_length = j.value("input_length", m.input_length);
  if (j.contains("stages")) {
    m.stages.clear();
    for (const auto& s : j.at("stages"))
      m.stages.push_back({s[0].get<int>(), s[1].get<int>(), s.size() > 2 ? s[2].get<int>() : 5});
  }
  m.b_out = j.value("b_out", m.b_out);
  m.h_out = j.value("h_out", m.h_out);
  if (j.contains("aggregation")) m.aggregation = model::aggregation_from_string(j.at("aggregation"));
  m.rho_gem = j.value("rho", m.rho_gem);
  m.decoder_seed_channels = j.value("decoder_seed_channels", m.decoder_seed_channels);
  if (j.contains("decoder_channels")) m.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
  return m;
}

std::vector<geometry::Family> families_from_string(const std::string& csv) {
  std::vector<geometry::Family> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t comma = csv.find(',', pos);
    const std::string tok = csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!tok.empty()) out.push_back(geometry::family_from_string(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw PipelineError("empty family list");
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

RunConfig RunConfig::desk_profile() {
  RunConfig cfg;
  cfg.dataset.count = 2000;
  cfg.dataset.b = 32;
  cfg.dataset.h = 16;
  cfg.dataset.pixel_size = 0.625;
  cfg.dataset.sim.n_samples = 512;
  cfg.test_count = 200;
  cfg.train.model.stages = {{16, 4, 5}, {32, 4, 5}, {64, 4, 5}, {128, 2, 5}};
  cfg.train.model.decoder_seed_channels = 32;
  cfg.train.model.decoder_channels = {16, 8};
  cfg.train.batch = 8;
  cfg.train.steps = 4000;
  return cfg;
}

RunConfig RunConfig::full_profile() {
  RunConfig cfg;
  cfg.dataset.count = 600000;
  cfg.dataset.b = 100;
  cfg.dataset.h = 40;
  cfg.dataset.pixel_size = 0.2;
  cfg.dataset.sim.n_samples = 1024;
  cfg.test_count = 1000;
  cfg.train.model.stages = {{32, 4, 5}, {64, 4, 5}, {128, 4, 5}, {256, 4, 5}};
  cfg.train.model.decoder_seed_channels = 64;
  cfg.train.model.decoder_channels = {32, 16};
  cfg.train.batch = 32;
  cfg.train.steps = 200000;
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw PipelineError("config parse: " + std::string(e.what()));
  }
  try {
    RunConfig cfg = j.value("profile", std::string("desk")) == "full" ? RunConfig::full_profile()
                                                                      : RunConfig::desk_profile();
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      cfg.dataset.dir = d.value("dir", cfg.dataset.dir);
      cfg.dataset.count = d.value("count", cfg.dataset.count);
      cfg.dataset.seed = d.value("seed", cfg.dataset.seed);
      if (d.contains("families")) cfg.dataset.families = families_from_string(d.at("families"));
      cfg.dataset.layout_file = d.value("layout", cfg.dataset.layout_file);
      cfg.dataset.b = d.value("b", cfg.dataset.b);
      cfg.dataset.h = d.value("h", cfg.dataset.h);
      cfg.dataset.pixel_size = d.value("pixel_size", cfg.dataset.pixel_size);
      cfg.test_dir = d.value("test_dir", cfg.test_dir);
      cfg.test_count = d.value("test_count", cfg.test_count);
      cfg.test_seed = d.value("test_seed", cfg.test_seed);
    }
    if (j.contains("sim")) {
      const auto& s = j.at("sim");
      cfg.dataset.sim.fs = s.value("fs", cfg.dataset.sim.fs);
      cfg.dataset.sim.n_samples = s.value("n", cfg.dataset.sim.n_samples);
      cfg.dataset.sim.order_cap = s.value("order_cap", cfg.dataset.sim.order_cap);
      cfg.dataset.sim.max_dist = s.value("max_dist", cfg.dataset.sim.max_dist);
      cfg.dataset.sim.first_order_only = s.value("first_order_only", cfg.dataset.sim.first_order_only);
      if (s.contains("snr_db")) {
        cfg.dataset.sim.snr_lo_db = s.at("snr_db")[0].get<double>();
        cfg.dataset.sim.snr_hi_db = s.at("snr_db")[1].get<double>();
      }
      cfg.dataset.sim.mic_count = s.value("mics", cfg.dataset.sim.mic_count);
      cfg.dataset.sim.mic_radius = s.value("mic_radius", cfg.dataset.sim.mic_radius);
    }
    if (j.contains("model")) cfg.train.model = model_from_json(j.at("model"));
    if (j.contains("train")) {
      const auto& t = j.at("train");
      cfg.train.dataset_dir = t.value("dataset", cfg.train.dataset_dir);
      cfg.train.out_dir = t.value("out", cfg.train.out_dir);
      cfg.train.batch = t.value("batch", cfg.train.batch);
      cfg.train.steps = t.value("steps", cfg.train.steps);
      cfg.train.loss.alpha = t.value("alpha", cfg.train.loss.alpha);
      cfg.train.loss.beta = t.value("beta", cfg.train.loss.beta);
      cfg.train.schedule.lr_max = t.value("lr_max", cfg.train.schedule.lr_max);
      cfg.train.schedule.lr_min = t.value("lr_min", cfg.train.schedule.lr_min);
      cfg.train.schedule.cycle_steps = t.value("t0", cfg.train.schedule.cycle_steps);
      cfg.train.schedule.cycle_mult = t.value("mult", cfg.train.schedule.cycle_mult);
      cfg.train.schedule.warmup_steps = t.value("warmup", cfg.train.schedule.warmup_steps);
      cfg.train.seed = t.value("seed", cfg.train.seed);
      cfg.train.masks = t.value("masks", cfg.train.masks);
      cfg.train.mask_max = t.value("mask_max", cfg.train.mask_max);
      cfg.train.val_fraction = t.value("val_fraction", cfg.train.val_fraction);
      cfg.train.val_every = t.value("val_every", cfg.train.val_every);
      cfg.train.checkpoint_every = t.value("checkpoint_every", cfg.train.checkpoint_every);
      cfg.train.log_every = t.value("log_every", cfg.train.log_every);
    }
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      cfg.ablation_out = a.value("out", cfg.ablation_out);
      cfg.ablation_arms.clear();
      const auto aggs = a.value("aggregation", std::vector<std::string>{"SP+GeM"});
      const auto refl = a.value("reflections", std::vector<std::string>{"full"});
      for (const auto& r : refl)
        for (const auto& g : aggs)
          cfg.ablation_arms.push_back(
              {g + "/" + r, model::aggregation_from_string(g), r == "first_order"});
    }
    return cfg;
  } catch (const json::exception& e) {
    throw PipelineError("config fields: " + std::string(e.what()));
  }
}

std::string run_config_json(const RunConfig& cfg) {
  json j{{"dataset",
          {{"dir", cfg.dataset.dir},
           {"count", cfg.dataset.count},
           {"seed", cfg.dataset.seed},
           {"families", family_list_string(cfg.dataset.families)},
           {"layout", cfg.dataset.layout_file},
           {"b", cfg.dataset.b},
           {"h", cfg.dataset.h},
           {"pixel_size", cfg.dataset.pixel_size},
           {"test_dir", cfg.test_dir},
           {"test_count", cfg.test_count},
           {"test_seed", cfg.test_seed}}},
         {"sim",
          {{"fs", cfg.dataset.sim.fs},
           {"n", cfg.dataset.sim.n_samples},
           {"order_cap", cfg.dataset.sim.order_cap},
           {"max_dist", cfg.dataset.sim.max_dist},
           {"first_order_only", cfg.dataset.sim.first_order_only},
           {"snr_db", {cfg.dataset.sim.snr_lo_db, cfg.dataset.sim.snr_hi_db}},
           {"mics", cfg.dataset.sim.mic_count},
           {"mic_radius", cfg.dataset.sim.mic_radius}}},
         {"model", model_to_json(cfg.train.model)},
         {"train",
          {{"dataset", cfg.train.dataset_dir},
           {"out", cfg.train.out_dir},
           {"batch", cfg.train.batch},
           {"steps", cfg.train.steps},
           {"alpha", cfg.train.loss.alpha},
           {"beta", cfg.train.loss.beta},
           {"lr_max", cfg.train.schedule.lr_max},
           {"lr_min", cfg.train.schedule.lr_min},
           {"t0", cfg.train.schedule.cycle_steps},
           {"mult", cfg.train.schedule.cycle_mult},
           {"warmup", cfg.train.schedule.warmup_steps},
           {"seed", cfg.train.seed},
           {"masks", cfg.train.masks},
           {"mask_max", cfg.train.mask_max},
           {"val_fraction", cfg.train.val_fraction},
           {"val_every", cfg.train.val_every},
           {"checkpoint_every", cfg.train.checkpoint_every},
           {"log_every", cfg.train.log_every}}}};
  return j.dump(1);
}

void apply_time_masks(float* data, int channels, int length, Rng& rng, int masks, int max_len) {
  for (int m = 0; m < masks; ++m) {
    const int len = static_cast<int>(rng.uniform_int(0, std::min(max_len, length)));
    if (len == 0) continue;
    const int offset = static_cast<int>(rng.uniform_int(0, length - len));
    for (int ch = 0; ch < channels; ++ch)
      std::fill_n(data + static_cast<std::size_t>(ch) * length + offset, len, 0.0f);
  }
}

acoustics::RirSet time_mask_augment(const acoustics::RirSet& x, Rng& rng, int masks, int max_len) {
  acoustics::RirSet out = x;
  apply_time_masks(out.samples.data(), out.channels, out.length, rng, masks, max_len);
  return out;
}

double mean_iou_2d(const model::Network<float>& net, const Dataset& dataset,
                   const std::vector<std::size_t>& indices) {
  if (indices.empty()) return 0.0;
  const auto& cfg = net.config();
  const std::size_t bb = static_cast<std::size_t>(cfg.b_out) * cfg.b_out;
  double total = 0.0;
  constexpr std::size_t kChunk = 16;
  for (std::size_t begin = 0; begin < indices.size(); begin += kChunk) {
    const std::size_t cur = std::min(kChunk, indices.size() - begin);
    std::vector<float> x(cur * dataset.rir_stride());
    for (std::size_t i = 0; i < cur; ++i)
      std::copy_n(dataset.rir(indices[begin + i]), dataset.rir_stride(),
                  x.begin() + i * dataset.rir_stride());
    auto input = nn::constant<float>({static_cast<int>(cur), cfg.in_channels, cfg.input_length},
                                     std::move(x));
    const auto fwd = net.forward(input);
    const auto probs =
        nn::sigmoid(nn::reshape(fwd.fp_logits, {static_cast<int>(cur), static_cast<int>(bb)}));
    for (std::size_t i = 0; i < cur; ++i) {
      const std::uint8_t* gt = dataset.floorplan(indices[begin + i]);
      std::vector<std::uint8_t> pred(bb), gtv(gt, gt + bb);
      for (std::size_t p = 0; p < bb; ++p) pred[p] = probs->value[i * bb + p] >= 0.5f ? 1 : 0;
      total += objective::iou(pred, gtv);
    }
  }
  return total / static_cast<double>(indices.size());
}

void save_model(const std::string& dir, const model::Network<float>& net) {
  fs::create_directories(dir);
  nn::save_checkpoint((fs::path(dir) / "model.ckpt").string(), net.named_params());
  std::ofstream cfg_out(fs::path(dir) / "model.json");
  cfg_out << model_to_json(net.config()).dump(1) << "\n";
  if (!cfg_out) throw PipelineError("cannot write model.json in " + dir);
}

model::Network<float> load_model(const std::string& checkpoint_path) {
  const fs::path ckpt(checkpoint_path);
  const fs::path dir = ckpt.has_parent_path() ? ckpt.parent_path() : fs::path(".");
  std::ifstream cfg_in(dir / "model.json");
  if (!cfg_in) throw PipelineError("model.json not found beside " + checkpoint_path);
  json j;
  cfg_in >> j;
  model::Network<float> net(model_from_json(j), 0);
  nn::load_checkpoint(checkpoint_path, net.named_params());
  return net;
}

TrainResult train(const TrainConfig& cfg, const Dataset& dataset, std::ostream& log) {
  if (dataset.count() == 0) throw PipelineError("training dataset is empty");
  model::ModelConfig mc = cfg.model;
  mc.in_channels = dataset.cfg.sim.mic_count;
  mc.input_length = dataset.cfg.sim.n_samples;
  mc.b_out = dataset.cfg.b;
  mc.h_out = dataset.cfg.h;
  model::Network<float> net(mc, cfg.seed);

  const std::size_t n = dataset.count();
  const std::size_t val_n = std::min<std::size_t>(
      n > 1 ? n - 1 : 0, static_cast<std::size_t>(std::ceil(cfg.val_fraction * static_cast<double>(n))));
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < n - val_n; ++i) train_idx.push_back(i);
  for (std::size_t i = n - val_n; i < n; ++i) val_idx.push_back(i);

  auto params = net.param_vars();
  nn::AdamState<float> adam;
  adam.init(params);

  Rng order_rng(cfg.seed ^ 0x5eedf00dull);
  Rng mask_rng(cfg.seed ^ 0x3a55aa55ull);
  std::vector<std::size_t> queue;
  std::size_t queue_pos = 0;
  const std::size_t bb = static_cast<std::size_t>(mc.b_out) * mc.b_out;
  const std::size_t hh = static_cast<std::size_t>(mc.h_out);
  const std::size_t stride = dataset.rir_stride();

  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
  TrainResult result;

  for (long step = 0; step < cfg.steps; ++step) {
    // deterministic shuffled batch assembly
    std::vector<std::size_t> batch_ids;
    for (int b = 0; b < cfg.batch; ++b) {
      if (queue_pos >= queue.size()) {
        queue = train_idx;
        for (std::size_t i = queue.size(); i > 1; --i)
          std::swap(queue[i - 1], queue[static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
        queue_pos = 0;
      }
      batch_ids.push_back(queue[queue_pos++]);
    }

    std::vector<float> x(batch_ids.size() * stride);
    std::vector<float> gt_lw(batch_ids.size() * bb), gt_h(batch_ids.size() * hh);
    for (std::size_t i = 0; i < batch_ids.size(); ++i) {
      std::copy_n(dataset.rir(batch_ids[i]), stride, x.begin() + i * stride);
      apply_time_masks(x.data() + i * stride, mc.in_channels, mc.input_length, mask_rng, cfg.masks,
                       cfg.mask_max);
      const std::uint8_t* fp = dataset.floorplan(batch_ids[i]);
      for (std::size_t p = 0; p < bb; ++p) gt_lw[i * bb + p] = fp[p];
      const std::uint8_t* hv = dataset.height(batch_ids[i]);
      for (std::size_t p = 0; p < hh; ++p) gt_h[i * hh + p] = hv[p];
    }

    auto input = nn::constant<float>({cfg.batch, mc.in_channels, mc.input_length}, std::move(x));
    const auto fwd = net.forward(input);
    auto lw_probs = nn::sigmoid(nn::reshape(fwd.fp_logits, {cfg.batch, static_cast<int>(bb)}));
    auto h_probs = nn::sigmoid(fwd.h_logits);
    auto gt_lw_var = nn::constant<float>({cfg.batch, static_cast<int>(bb)}, std::move(gt_lw));
    auto gt_h_var = nn::constant<float>({cfg.batch, static_cast<int>(hh)}, std::move(gt_h));
    const auto loss = objective::total_loss(lw_probs, h_probs, gt_lw_var, gt_h_var, cfg.loss);
    const double loss_value = loss.total->value[0];

    if (!std::isfinite(loss_value)) {
      log << "{\"event\":\"diverged\",\"step\":" << step << ",\"loss\":\"" << loss_value
          << "\",\"mse_lw\":" << loss.mse_lw << ",\"dice\":" << loss.dice_lw
          << ",\"mse_h\":" << loss.mse_h << ",\"lr\":" << nn::lr_at(step, cfg.schedule) << "}\n";
      throw TrainDiverged("loss is not finite at step " + std::to_string(step));
    }

    nn::backward(loss.total);
    adam_step(params, adam, static_cast<float>(nn::lr_at(step, cfg.schedule)));
    nn::zero_grad(params);

    result.final_loss = loss_value;
    result.steps_run = step + 1;

    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps))
      log << "{\"step\":" << step << ",\"lr\":" << nn::lr_at(step, cfg.schedule)
          << ",\"loss\":" << loss_value << ",\"mse_lw\":" << loss.mse_lw << ",\"dice\":" << loss.dice_lw
          << ",\"mse_h\":" << loss.mse_h << "}\n";

    if (cfg.val_every > 0 && !val_idx.empty() && ((step + 1) % cfg.val_every == 0 || step + 1 == cfg.steps)) {
      result.final_val_iou_2d = mean_iou_2d(net, dataset, val_idx);
      log << "{\"step\":" << step << ",\"val_iou_2d\":" << result.final_val_iou_2d << "}\n";
    }
    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      save_model(cfg.out_dir, net);
  }

  if (!cfg.out_dir.empty()) {
    save_model(cfg.out_dir, net);
    result.checkpoint_path = (fs::path(cfg.out_dir) / "model.ckpt").string();
  }
  if (val_idx.empty()) result.final_val_iou_2d = mean_iou_2d(net, dataset, train_idx);
  return result;
}

std::uint64_t ablation_config_hash(const RunConfig& cfg) {
  RunConfig normalized = cfg;
  normalized.dataset.sim.first_order_only = false;
  normalized.train.model.aggregation = model::Aggregation::SPGeM;
  normalized.dataset.dir.clear();
  normalized.test_dir.clear();
  normalized.train.dataset_dir.clear();
  normalized.train.out_dir.clear();
  normalized.ablation_arms.clear();
  normalized.ablation_out.clear();
  return fnv1a(run_config_json(normalized));
}

std::string run_ablation(const RunConfig& cfg, std::ostream& log) {
  if (cfg.ablation_arms.empty()) throw PipelineError("no ablation arms configured");
  const std::string root = cfg.ablation_out.empty() ? "ablation" : cfg.ablation_out;
  fs::create_directories(root);
  const std::uint64_t common_hash = ablation_config_hash(cfg);

  // one train/test dataset pair per reflection mode, shared across arms
  std::vector<bool> reflection_modes;
  for (const auto& arm : cfg.ablation_arms)
    if (std::find(reflection_modes.begin(), reflection_modes.end(), arm.first_order_only) ==
        reflection_modes.end())
      reflection_modes.push_back(arm.first_order_only);

  auto dataset_dir = [&](bool first_order, bool test) {
    return (fs::path(root) /
            (std::string(test ? "test_" : "train_") + (first_order ? "first" : "full")))
        .string();
  };
  for (const bool first : reflection_modes) {
    DatasetConfig train_ds = cfg.dataset;
    train_ds.dir = dataset_dir(first, false);
    train_ds.sim.first_order_only = first;
    generate_dataset(train_ds);
    DatasetConfig test_ds = train_ds;
    test_ds.dir = dataset_dir(first, true);
    test_ds.count = cfg.test_count;
    test_ds.seed = cfg.test_seed != 0 ? cfg.test_seed : cfg.dataset.seed + 1;
    generate_dataset(test_ds);
    log << "{\"event\":\"ablation_data\",\"first_order\":" << (first ? "true" : "false") << "}\n";
  }

  json arms = json::array();
  for (const auto& arm : cfg.ablation_arms) {
    RunConfig arm_cfg = cfg;
    arm_cfg.train.model.aggregation = arm.aggregation;
    arm_cfg.dataset.sim.first_order_only = arm.first_order_only;
    if (ablation_config_hash(arm_cfg) != common_hash)
      throw PipelineError("ablation arm drifted outside its declared switch");

    const Dataset train_set = load_dataset(dataset_dir(arm.first_order_only, false));
    TrainConfig tc = arm_cfg.train;
    std::string arm_tag = arm.name;
    std::replace(arm_tag.begin(), arm_tag.end(), '/', '_');
    std::replace(arm_tag.begin(), arm_tag.end(), '+', 'p');
    tc.out_dir = (fs::path(root) / ("run_" + arm_tag)).string();
    log << "{\"event\":\"ablation_train\",\"arm\":\"" << arm.name << "\"}\n";
    const TrainResult tr = train(tc, train_set, log);

    const Dataset test_set = load_dataset(dataset_dir(arm.first_order_only, true));
    const auto net = load_model(tr.checkpoint_path);
    const auto report = objective::evaluate(net, test_set);

    json arm_json{{"name", arm.name},
                  {"aggregation", model::to_string(arm.aggregation)},
                  {"first_order_only", arm.first_order_only},
                  {"config_hash", common_hash},
                  {"final_loss", tr.final_loss},
                  {"metrics", json::parse(report.to_json())}};
    arms.push_back(std::move(arm_json));
  }

  json out{{"common_config_hash", common_hash}, {"arms", std::move(arms)}};
  const std::string text = out.dump(1);
  std::ofstream file(fs::path(root) / "report.json");
  file << text << "\n";
  return text;
}

}  // namespace echolab::pipeline
