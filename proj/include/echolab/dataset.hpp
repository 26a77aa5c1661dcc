#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "echolab/acoustics.hpp"
#include "echolab/geometry.hpp"
#include "echolab/raster.hpp"

namespace echolab::pipeline {

struct PipelineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  double fs = 8000.0;
  int n_samples = 1024;
  int order_cap = 10;
  double max_dist = -1.0;  // <= 0 derives c * n_samples / fs
  bool first_order_only = false;
  double snr_lo_db = 10.0;
  double snr_hi_db = 20.0;
  int mic_count = 6;
  double mic_radius = 0.05;

  double resolved_max_dist() const {
    return max_dist > 0.0 ? max_dist : acoustics::kSpeedOfSound * n_samples / fs;
  }
};

struct DatasetConfig {
  std::string dir;
  long count = 2000;
  std::uint64_t seed = 0;
  std::vector<geometry::Family> families{geometry::Family::Shoebox, geometry::Family::Pentagonal,
                                         geometry::Family::Hexagonal, geometry::Family::L,
                                         geometry::Family::T};
  std::string layout_file;  // when set, every sample imports this layout
  int b = 32;
  int h = 16;
  double pixel_size = 0.625;  // desk profile keeps the 20 m canvas with fewer pixels
  SimConfig sim;
};

struct SampleMeta {
  long id = 0;
  geometry::Family family = geometry::Family::Shoebox;
  std::uint64_t stream_seed = 0;
  long stream_index = 0;
  int attempt = 0;
  geometry::Visibility los = geometry::Visibility::LOS;
  std::vector<geometry::Vec2> polygon;
  geometry::DevicePose device;
  double height_m = 0.0;
  double snr_db = 0.0;
  std::uint64_t rir_offset = 0;  // bytes into rir.bin
};

struct Dataset {
  DatasetConfig cfg;
  std::vector<SampleMeta> meta;
  std::vector<float> rirs;               // count * mic_count * n_samples
  std::vector<std::uint8_t> floorplans;  // count * b * b
  std::vector<std::uint8_t> heights;     // count * h

  std::size_t count() const { return meta.size(); }
  std::size_t rir_stride() const {
    return static_cast<std::size_t>(cfg.sim.mic_count) * cfg.sim.n_samples;
  }
  const float* rir(std::size_t i) const { return rirs.data() + i * rir_stride(); }
  const std::uint8_t* floorplan(std::size_t i) const {
    return floorplans.data() + i * static_cast<std::size_t>(cfg.b) * cfg.b;
  }
  const std::uint8_t* height(std::size_t i) const {
    return heights.data() + i * static_cast<std::size_t>(cfg.h);
  }
};

struct GeneratedSample {
  geometry::RoomSpec spec;
  acoustics::RirSet rir;
  raster::FloorplanImage floorplan;
  raster::HeightVector height;
  int attempt = 0;
};

// Deterministic per (cfg.seed, index): room sampling, simulation and noise all
// draw from one stream derived from that pair (regeneration retries bump the
// stream lane).
GeneratedSample generate_sample(const DatasetConfig& cfg, long index);

// Writes dir/manifest.json, dir/rir.bin and dir/gt/sample_NNNNNN.pgm.
// Resumable: existing intact samples are kept and generation continues.
void generate_dataset(const DatasetConfig& cfg);

Dataset load_dataset(const std::string& dir);

std::string family_list_string(const std::vector<geometry::Family>& fams);

}  // namespace echolab::pipeline
