#include "echolab/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_set>
#include <condition_variable>
#include <map>
#include <mutex>
#include <thread>

#include "echolab/pgm.hpp"
#include "json.hpp"

namespace echolab::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kMaxRegenerates = 64;

std::string sample_pgm_name(long index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%06ld.pgm", index);
  return buf;
}

json sim_to_json(const SimConfig& s) {
  return json{{"fs", s.fs},
              {"n", s.n_samples},
              {"order_cap", s.order_cap},
              {"max_dist", s.max_dist},
              {"first_order_only", s.first_order_only},
              {"snr_db", {s.snr_lo_db, s.snr_hi_db}},
              {"mics", s.mic_count},
              {"mic_radius", s.mic_radius}};
}

SimConfig sim_from_json(const json& j) {
  SimConfig s;
  s.fs = j.at("fs").get<double>();
  s.n_samples = j.at("n").get<int>();
  s.order_cap = j.at("order_cap").get<int>();
  s.max_dist = j.at("max_dist").get<double>();
  s.first_order_only = j.at("first_order_only").get<bool>();
  s.snr_lo_db = j.at("snr_db")[0].get<double>();
  s.snr_hi_db = j.at("snr_db")[1].get<double>();
  s.mic_count = j.at("mics").get<int>();
  s.mic_radius = j.at("mic_radius").get<double>();
  return s;
}

}  // namespace

std::string family_list_string(const std::vector<geometry::Family>& fams) {
  std::string out;
  for (const auto f : fams) out += (out.empty() ? "" : ",") + geometry::to_string(f);
  return out;
}

GeneratedSample generate_sample(const DatasetConfig& cfg, long index) {
  GeneratedSample out;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= kMaxRegenerates)
      throw PipelineError("sample " + std::to_string(index) + ": no valid room after " +
                          std::to_string(kMaxRegenerates) + " regenerations");
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(attempt));
    try {
      if (!cfg.layout_file.empty()) {
        out.spec = geometry::import_layout(cfg.layout_file, rng);
        out.spec.seed = static_cast<std::uint64_t>(index);
      } else {
        const auto family = cfg.families[static_cast<std::size_t>(index) % cfg.families.size()];
        out.spec = geometry::sample_standard_room(family, rng, static_cast<std::uint64_t>(index));
      }
      out.floorplan = raster::rasterize_floorplan(out.spec, cfg.b, cfg.pixel_size);
      out.height = raster::rasterize_height(out.spec, cfg.h, cfg.pixel_size);

      const auto array = acoustics::MicArray::for_device(out.spec.device, cfg.sim.mic_count, cfg.sim.mic_radius);
      auto images = acoustics::enumerate_image_sources(out.spec, cfg.sim.resolved_max_dist(), cfg.sim.order_cap);
      if (cfg.sim.first_order_only) images = acoustics::truncate_first_order(std::move(images));
      const auto clean = acoustics::synthesize_rir(images, array, cfg.sim.fs, cfg.sim.n_samples);
      out.rir = acoustics::add_noise(clean, cfg.sim.snr_lo_db, cfg.sim.snr_hi_db, rng);
      out.attempt = attempt;
      return out;
    } catch (const geometry::RoomRegenerate&) {
      continue;
    } catch (const raster::RasterError&) {
      // a rotated far corner can poke out of the device-centered canvas;
      // reject the draw like any other invalid room
      continue;
    }
  }
}

void generate_dataset(const DatasetConfig& cfg) {
  if (cfg.count <= 0) throw PipelineError("dataset count must be positive");
  fs::create_directories(cfg.dir);
  fs::create_directories(fs::path(cfg.dir) / "gt");
  const fs::path manifest_path = fs::path(cfg.dir) / "manifest.json";
  const fs::path rir_path = fs::path(cfg.dir) / "rir.bin";

  const std::size_t record_bytes = static_cast<std::size_t>(cfg.sim.mic_count) * cfg.sim.n_samples * 4;

  // resume: keep the longest intact prefix of an earlier run
  std::vector<json> rows;
  long start = 0;
  if (fs::exists(manifest_path) && fs::exists(rir_path)) {
    try {
      json m;
      std::ifstream in(manifest_path);
      in >> m;
      if (m.at("dataset").at("seed").get<std::uint64_t>() == cfg.seed &&
          m.at("dataset").at("sim") == sim_to_json(cfg.sim)) {
        const auto& samples = m.at("samples");
        const std::size_t usable =
            std::min<std::size_t>(samples.size(), fs::file_size(rir_path) / record_bytes);
        for (std::size_t i = 0; i < usable && i < static_cast<std::size_t>(cfg.count); ++i) {
          if (!fs::exists(fs::path(cfg.dir) / "gt" / sample_pgm_name(static_cast<long>(i)))) break;
          rows.push_back(samples[i]);
          ++start;
        }
      }
    } catch (const json::exception&) {
      rows.clear();
      start = 0;
    }
  }
  if (start > 0) {
    fs::resize_file(rir_path, static_cast<std::uintmax_t>(start) * record_bytes);
  } else {
    std::ofstream(rir_path, std::ios::binary | std::ios::trunc);
  }

  std::ofstream rir_out(rir_path, std::ios::binary | std::ios::app);
  if (!rir_out) throw PipelineError("cannot open " + rir_path.string());

  auto write_sample = [&](long i, const GeneratedSample& sample) {
    const std::uint64_t offset = static_cast<std::uint64_t>(i) * record_bytes;
    rir_out.write(reinterpret_cast<const char*>(sample.rir.samples.data()),
                  static_cast<std::streamsize>(sample.rir.samples.size() * 4));
    if (!rir_out) throw PipelineError("short write to " + rir_path.string());

    std::vector<double> gt(sample.floorplan.pixels.size());
    for (std::size_t p = 0; p < gt.size(); ++p) gt[p] = sample.floorplan.pixels[p];
    pgm::write_pgm((fs::path(cfg.dir) / "gt" / sample_pgm_name(i)).string(), gt, cfg.b, cfg.b);

    std::string height_line(sample.height.pixels.size(), '0');
    for (std::size_t p = 0; p < height_line.size(); ++p)
      if (sample.height.pixels[p]) height_line[p] = '1';

    json verts = json::array();
    for (const auto& v : sample.spec.polygon.vertices()) verts.push_back({v.x, v.y});
    rows.push_back(json{{"id", i},
                        {"family", geometry::to_string(sample.spec.family)},
                        {"stream", {cfg.seed, i, sample.attempt}},
                        {"los", geometry::to_string(sample.spec.los_label)},
                        {"polygon", std::move(verts)},
                        {"device", {sample.spec.device.x, sample.spec.device.y, sample.spec.device.z}},
                        {"height", sample.spec.height},
                        {"materials",
                         {{"floor", std::string(sample.spec.materials.floor.id)},
                          {"ceiling", std::string(sample.spec.materials.ceiling.id)},
                          {"sidewall", std::string(sample.spec.materials.sidewall.id)}}},
                        {"snr_db", sample.rir.snr_db},
                        {"rir_offset", offset},
                        {"height_pixels", std::move(height_line)}});
  };

  // samples draw from independent per-index streams, so they are generated in
  // parallel; the writer consumes strictly in index order to keep the output
  // bytes identical to a sequential run
  const long todo = cfg.count - start;
  const unsigned workers =
      static_cast<unsigned>(std::min<long>(todo, std::min(4u, std::max(1u, std::thread::hardware_concurrency()))));
  if (workers <= 1) {
    for (long i = start; i < cfg.count; ++i) write_sample(i, generate_sample(cfg, i));
  } else {
    std::mutex mu;
    std::condition_variable cv_produce, cv_consume;
    std::map<long, GeneratedSample> done;
    long next_claim = start;
    long next_write = start;
    const long window = 2 * static_cast<long>(workers) + 2;
    bool stop = false;
    std::exception_ptr worker_error;

    auto worker = [&] {
      for (;;) {
        long idx = -1;
        {
          std::unique_lock lk(mu);
          cv_produce.wait(lk, [&] {
            return stop || next_claim >= cfg.count || next_claim < next_write + window;
          });
          if (stop || next_claim >= cfg.count) return;
          idx = next_claim++;
        }
        try {
          GeneratedSample sample = generate_sample(cfg, idx);
          std::lock_guard lk(mu);
          done.emplace(idx, std::move(sample));
          cv_consume.notify_all();
        } catch (...) {
          std::lock_guard lk(mu);
          if (!worker_error) worker_error = std::current_exception();
          stop = true;
          cv_consume.notify_all();
          cv_produce.notify_all();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);

    try {
      for (long i = start; i < cfg.count; ++i) {
        GeneratedSample sample;
        {
          std::unique_lock lk(mu);
          cv_consume.wait(lk, [&] { return done.count(i) != 0 || (stop && done.count(i) == 0); });
          if (done.count(i) == 0) break;  // a worker failed before producing i
          sample = std::move(done.at(i));
          done.erase(i);
          next_write = i + 1;
          cv_produce.notify_all();
        }
        write_sample(i, sample);
      }
    } catch (...) {
      {
        std::lock_guard lk(mu);
        stop = true;
        if (!worker_error) worker_error = std::current_exception();
        cv_produce.notify_all();
        cv_consume.notify_all();
      }
      for (auto& t : pool) t.join();
      std::rethrow_exception(worker_error);
    }
    {
      std::lock_guard lk(mu);
      stop = true;
      cv_produce.notify_all();
      cv_consume.notify_all();
    }
    for (auto& t : pool) t.join();
    if (worker_error) std::rethrow_exception(worker_error);
  }
  rir_out.flush();

  json manifest{{"format", 1},
                {"dataset",
                 {{"count", cfg.count},
                  {"seed", cfg.seed},
                  {"families", family_list_string(cfg.families)},
                  {"layout_file", cfg.layout_file},
                  {"b", cfg.b},
                  {"h", cfg.h},
                  {"pixel_size", cfg.pixel_size},
                  {"sim", sim_to_json(cfg.sim)}}},
                {"samples", rows}};
  const fs::path tmp = manifest_path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << manifest.dump(1) << "\n";
    if (!out) throw PipelineError("cannot write " + tmp.string());
  }
  fs::rename(tmp, manifest_path);
}

Dataset load_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw PipelineError("cannot open " + manifest_path.string());
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw PipelineError("manifest parse: " + std::string(e.what()));
  }

  Dataset ds;
  try {
    const auto& d = m.at("dataset");
    ds.cfg.dir = dir;
    ds.cfg.count = d.at("count").get<long>();
    ds.cfg.seed = d.at("seed").get<std::uint64_t>();
    ds.cfg.b = d.at("b").get<int>();
    ds.cfg.h = d.at("h").get<int>();
    ds.cfg.pixel_size = d.at("pixel_size").get<double>();
    ds.cfg.sim = sim_from_json(d.at("sim"));
    ds.cfg.layout_file = d.value("layout_file", std::string());

    const auto& samples = m.at("samples");
    const std::size_t count = samples.size();
    const std::size_t stride = static_cast<std::size_t>(ds.cfg.sim.mic_count) * ds.cfg.sim.n_samples;
    ds.meta.reserve(count);
    ds.rirs.resize(count * stride);
    ds.floorplans.resize(count * static_cast<std::size_t>(ds.cfg.b) * ds.cfg.b);
    ds.heights.resize(count * static_cast<std::size_t>(ds.cfg.h));

    std::ifstream rir_in(fs::path(dir) / "rir.bin", std::ios::binary);
    if (!rir_in) throw PipelineError("cannot open rir.bin in " + dir);

    std::unordered_set<long> ids;
    for (std::size_t i = 0; i < count; ++i) {
      const auto& row = samples[i];
      SampleMeta meta;
      meta.id = row.at("id").get<long>();
      if (!ids.insert(meta.id).second) throw PipelineError("duplicate sample id in manifest");
      meta.family = geometry::family_from_string(row.at("family").get<std::string>());
      meta.stream_seed = row.at("stream")[0].get<std::uint64_t>();
      meta.stream_index = row.at("stream")[1].get<long>();
      meta.attempt = row.at("stream")[2].get<int>();
      meta.los = row.at("los").get<std::string>() == "LOS" ? geometry::Visibility::LOS
                                                           : geometry::Visibility::NLOS;
      for (const auto& v : row.at("polygon")) meta.polygon.push_back({v[0].get<double>(), v[1].get<double>()});
      meta.device = {row.at("device")[0].get<double>(), row.at("device")[1].get<double>(),
                     row.at("device")[2].get<double>()};
      meta.height_m = row.at("height").get<double>();
      meta.snr_db = row.at("snr_db").get<double>();
      meta.rir_offset = row.at("rir_offset").get<std::uint64_t>();
      if (meta.rir_offset != i * stride * 4)
        throw PipelineError("manifest rir_offset does not match record layout");

      rir_in.seekg(static_cast<std::streamoff>(meta.rir_offset));
      rir_in.read(reinterpret_cast<char*>(ds.rirs.data() + i * stride),
                  static_cast<std::streamsize>(stride * 4));
      if (rir_in.gcount() != static_cast<std::streamsize>(stride * 4))
        throw PipelineError("rir.bin record " + std::to_string(i) + " is truncated");

      const auto img = pgm::read_pgm((fs::path(dir) / "gt" / sample_pgm_name(meta.id)).string());
      if (img.width != ds.cfg.b || img.height != ds.cfg.b) throw PipelineError("gt pgm size mismatch");
      for (std::size_t p = 0; p < img.bytes.size(); ++p)
        ds.floorplans[i * img.bytes.size() + p] = img.bytes[p] >= 128 ? 1 : 0;

      const std::string line = row.at("height_pixels").get<std::string>();
      if (static_cast<int>(line.size()) != ds.cfg.h) throw PipelineError("height line length mismatch");
      for (int k = 0; k < ds.cfg.h; ++k)
        ds.heights[i * static_cast<std::size_t>(ds.cfg.h) + k] = line[static_cast<std::size_t>(k)] == '1';

      ds.meta.push_back(std::move(meta));
    }
  } catch (const json::exception& e) {
    throw PipelineError("manifest fields: " + std::string(e.what()));
  }
  return ds;
}

}  // namespace echolab::pipeline
