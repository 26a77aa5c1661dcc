#include "echolab/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "echolab/dataset.hpp"
#include "echolab/pgm.hpp"
#include "echolab/train.hpp"

namespace echolab::pipeline {

namespace fs = std::filesystem;

namespace {

std::optional<std::uint64_t> env_seed() {
  if (const char* v = std::getenv("ECHO_LAB_SEED")) {
    try {
      return std::stoull(v);
    } catch (const std::exception&) {
      throw PipelineError("ECHO_LAB_SEED is not a number");
    }
  }
  return std::nullopt;
}

std::vector<float> sample_input(const Dataset& ds, long index) {
  if (index < 0 || static_cast<std::size_t>(index) >= ds.count())
    throw PipelineError("sample index out of range");
  std::vector<float> x(ds.rir_stride());
  std::copy_n(ds.rir(static_cast<std::size_t>(index)), ds.rir_stride(), x.begin());
  return x;
}

std::vector<double> predict_floorplan(const model::Network<float>& net, const Dataset& ds, long index) {
  const auto& mc = net.config();
  auto input = nn::constant<float>({1, mc.in_channels, mc.input_length}, sample_input(ds, index));
  const auto fwd = net.forward(input);
  const auto probs = nn::sigmoid(nn::reshape(fwd.fp_logits, {1, mc.b_out * mc.b_out}));
  return {probs->value.begin(), probs->value.end()};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"echolab: room geometry from acoustic echoes"};
  app.require_subcommand(1);
  app.fallthrough();  // global --seed/--config may follow the subcommand

  std::optional<std::uint64_t> seed_flag;
  app.add_option("--seed", seed_flag, "override dataset/train seeds (env ECHO_LAB_SEED as fallback)");
  std::string config_path;
  app.add_option("--config", config_path, "run-config JSON file");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a room/RIR dataset");
  std::string gen_family = "all";
  long gen_count = 16;
  std::string gen_out, gen_layout, gen_profile = "desk";
  bool gen_first_order = false;
  gen->add_option("--family", gen_family, "shoebox|pentagonal|hexagonal|L|T|all");
  gen->add_option("--count", gen_count, "number of samples");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--layout", gen_layout, "layout JSON to import instead of sampling");
  gen->add_option("--profile", gen_profile, "desk|full raster/simulation profile");
  gen->add_flag("--first-order", gen_first_order, "keep only first-order reflections");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the encoder-decoder");
  std::string train_dataset, train_out;
  long train_steps = -1;
  train_cmd->add_option("--dataset", train_dataset, "dataset directory");
  train_cmd->add_option("--out", train_out, "run output directory");
  train_cmd->add_option("--steps", train_steps, "override step count");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint; prints metric JSON");
  std::string eval_ckpt, eval_dataset;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model.ckpt path")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "dataset directory")->required();

  // saliency
  auto* sal_cmd = app.add_subcommand("saliency", "temporal saliency map for one sample");
  std::string sal_ckpt, sal_dataset, sal_out;
  long sal_index = 0;
  sal_cmd->add_option("--checkpoint", sal_ckpt)->required();
  sal_cmd->add_option("--dataset", sal_dataset)->required();
  sal_cmd->add_option("--index", sal_index, "sample index");
  sal_cmd->add_option("--out", sal_out, "output PGM path")->required();

  // ablate
  auto* abl_cmd = app.add_subcommand("ablate", "train/evaluate ablation arms side by side");
  std::string abl_out;
  abl_cmd->add_option("--out", abl_out, "ablation output directory");

  // render
  auto* render_cmd = app.add_subcommand("render", "render ground truth (and prediction) as PGM");
  std::string ren_dataset, ren_out, ren_ckpt;
  long ren_index = 0;
  render_cmd->add_option("--dataset", ren_dataset)->required();
  render_cmd->add_option("--index", ren_index);
  render_cmd->add_option("--out", ren_out)->required();
  render_cmd->add_option("--checkpoint", ren_ckpt, "optional: composite GT|prediction");

  // CLI11 wants argv-style reversed vector
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig::desk_profile() : load_run_config(config_path);
    const auto seed = seed_flag ? seed_flag : env_seed();
    if (seed) {
      cfg.dataset.seed = *seed;
      cfg.train.seed = *seed;
    }

    if (gen->parsed()) {
      DatasetConfig ds = cfg.dataset;
      if (config_path.empty() && gen_profile == "full") ds = RunConfig::full_profile().dataset;
      if (seed) ds.seed = *seed;
      ds.dir = gen_out;
      ds.count = gen_count;
      ds.layout_file = gen_layout;
      ds.sim.first_order_only = gen_first_order || ds.sim.first_order_only;
      if (gen_family != "all") ds.families = {geometry::family_from_string(gen_family)};
      generate_dataset(ds);
      out << "generated " << ds.count << " samples in " << ds.dir << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      TrainConfig tc = cfg.train;
      if (!train_dataset.empty()) tc.dataset_dir = train_dataset;
      if (!train_out.empty()) tc.out_dir = train_out;
      if (train_steps > 0) tc.steps = train_steps;
      if (tc.dataset_dir.empty()) throw PipelineError("train: no dataset directory configured");
      if (tc.out_dir.empty()) tc.out_dir = "run";
      const Dataset ds = load_dataset(tc.dataset_dir);
      {
        fs::create_directories(tc.out_dir);
        std::ofstream echo(fs::path(tc.out_dir) / "config.json");
        RunConfig used = cfg;
        used.train = tc;
        echo << run_config_json(used) << "\n";
      }
      std::ofstream log_file(fs::path(tc.out_dir) / "train_log.jsonl");
      struct Tee : std::streambuf {
        std::streambuf *a, *b;
        int overflow(int c) override {
          if (c != EOF) {
            a->sputc(static_cast<char>(c));
            b->sputc(static_cast<char>(c));
          }
          return c;
        }
      } tee;
      tee.a = out.rdbuf();
      tee.b = log_file.rdbuf();
      std::ostream tee_stream(&tee);
      const TrainResult result = train(tc, ds, tee_stream);
      out << "final loss " << result.final_loss << ", val IOU " << result.final_val_iou_2d
          << ", checkpoint " << result.checkpoint_path << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      const Dataset ds = load_dataset(eval_dataset);
      const auto net = load_model(eval_ckpt);
      out << objective::evaluate(net, ds).to_json() << "\n";
      return 0;
    }

    if (sal_cmd->parsed()) {
      const Dataset ds = load_dataset(sal_dataset);
      const auto net = load_model(sal_ckpt);
      const auto& mc = net.config();
      auto input = nn::constant<float>({1, mc.in_channels, mc.input_length}, sample_input(ds, sal_index));
      const auto cam = net.grad_cam(input);
      constexpr int kRows = 16;
      std::vector<double> img;
      img.reserve(cam.size() * kRows);
      for (int r = 0; r < kRows; ++r) img.insert(img.end(), cam.begin(), cam.end());
      pgm::write_pgm(sal_out, img, static_cast<int>(cam.size()), kRows);
      out << "saliency written to " << sal_out << "\n";
      return 0;
    }

    if (abl_cmd->parsed()) {
      if (!abl_out.empty()) cfg.ablation_out = abl_out;
      if (cfg.ablation_arms.empty())
        cfg.ablation_arms = {{"SP+GeM/full", model::Aggregation::SPGeM, false},
                             {"SP+GeM/first_order", model::Aggregation::SPGeM, true}};
      out << run_ablation(cfg, err) << "\n";
      return 0;
    }

    if (render_cmd->parsed()) {
      const Dataset ds = load_dataset(ren_dataset);
      if (ren_index < 0 || static_cast<std::size_t>(ren_index) >= ds.count())
        throw PipelineError("sample index out of range");
      const int b = ds.cfg.b;
      const std::uint8_t* gt = ds.floorplan(static_cast<std::size_t>(ren_index));
      if (ren_ckpt.empty()) {
        std::vector<double> img(static_cast<std::size_t>(b) * b);
        for (std::size_t p = 0; p < img.size(); ++p) img[p] = gt[p];
        pgm::write_pgm(ren_out, img, b, b);
      } else {
        const auto net = load_model(ren_ckpt);
        const auto probs = predict_floorplan(net, ds, ren_index);
        std::vector<double> img(static_cast<std::size_t>(b) * (2 * b + 1), 0.5);
        for (int row = 0; row < b; ++row) {
          for (int col = 0; col < b; ++col) {
            img[static_cast<std::size_t>(row) * (2 * b + 1) + col] = gt[row * b + col];
            img[static_cast<std::size_t>(row) * (2 * b + 1) + b + 1 + col] =
                probs[static_cast<std::size_t>(row) * b + col];
          }
        }
        pgm::write_pgm(ren_out, img, 2 * b + 1, b);
      }
      out << "rendered " << ren_out << "\n";
      return 0;
    }

    err << "no subcommand executed\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace echolab::pipeline
