#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "echolab/dataset.hpp"
#include "echolab/model.hpp"
#include "echolab/objective.hpp"
#include "echolab/tensor.hpp"

namespace echolab::pipeline {

struct TrainDiverged : PipelineError {
  using PipelineError::PipelineError;
};

struct TrainConfig {
  std::string dataset_dir;
  std::string out_dir;
  model::ModelConfig model;
  objective::LossWeights loss;
  nn::LrSchedule schedule;
  int batch = 8;
  long steps = 4000;
  std::uint64_t seed = 1;
  int masks = 3;
  int mask_max = 100;
  double val_fraction = 0.05;
  long val_every = 200;
  long checkpoint_every = 1000;
  long log_every = 50;
};

struct AblationArm {
  std::string name;
  model::Aggregation aggregation = model::Aggregation::SPGeM;
  bool first_order_only = false;
};

// Full run configuration, file sections {dataset, sim, model, train, ablation}.
struct RunConfig {
  DatasetConfig dataset;        // training set; sim lives inside
  std::string test_dir;         // held-out set directory
  long test_count = 200;
  std::uint64_t test_seed = 0;  // 0: dataset.seed + 1
  TrainConfig train;
  std::vector<AblationArm> ablation_arms;
  std::string ablation_out;

  static RunConfig desk_profile();
  static RunConfig full_profile();
};

RunConfig load_run_config(const std::string& path);
std::string run_config_json(const RunConfig& cfg);

// Zeroes `masks` random temporal spans (each up to `max_len` samples long),
// shared across all channels. Never mutates stored datasets; training applies
// it to batch copies only.
void apply_time_masks(float* data, int channels, int length, Rng& rng, int masks = 3, int max_len = 100);
acoustics::RirSet time_mask_augment(const acoustics::RirSet& x, Rng& rng, int masks = 3, int max_len = 100);

struct TrainResult {
  std::string checkpoint_path;
  double final_loss = 0.0;
  double final_val_iou_2d = 0.0;
  long steps_run = 0;
};

// Deterministic single-threaded training loop: batch assembly, masking,
// forward, total loss, backward, Adam with the warm-restart schedule.
// Aborts with TrainDiverged (after a diagnostic dump) if the loss leaves the
// finite range.
TrainResult train(const TrainConfig& cfg, const Dataset& dataset, std::ostream& log);

// Convenience: mean 2D IOU of the binarized floorplan head over a subset.
double mean_iou_2d(const model::Network<float>& net, const Dataset& dataset,
                   const std::vector<std::size_t>& indices);

void save_model(const std::string& dir, const model::Network<float>& net);
model::Network<float> load_model(const std::string& checkpoint_path);

// Trains and evaluates one arm per switch setting under identical seeds and
// emits a side-by-side report (JSON).
std::string run_ablation(const RunConfig& cfg, std::ostream& log);

// 64-bit FNV-1a of the arm-invariant configuration, used to prove that
// ablation arms differ only in their declared switches.
std::uint64_t ablation_config_hash(const RunConfig& cfg);

}  // namespace echolab::pipeline
