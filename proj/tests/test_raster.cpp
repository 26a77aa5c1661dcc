#include <filesystem>

#include "doctest.h"
#include "echolab/pgm.hpp"
#include "echolab/raster.hpp"
#include "support/oracles.hpp"

using namespace echolab;
using namespace echolab::geometry;
using namespace echolab::raster;

namespace {

RoomSpec axis_aligned_room(double sl, double sw, double height, DevicePose device) {
  RoomSpec spec;
  spec.polygon = make_shoebox_vertices({sl, sw, height});
  spec.height = height;
  spec.device = device;
  spec.family = Family::Shoebox;
  return spec;
}

}  // namespace

TEST_CASE("floorplan raster of a centered 4x4 room is a 20x20 block at the middle") {
  const RoomSpec spec = axis_aligned_room(2, 2, 3, {0, 0, 1.2});
  const FloorplanImage img = rasterize_floorplan(spec, 100, 0.2);
  CHECK(img.count() == 400);
  for (int row = 0; row < 100; ++row)
    for (int col = 0; col < 100; ++col) {
      const bool inside = row >= 40 && row < 60 && col >= 40 && col < 60;
      REQUIRE(img.at(row, col) == (inside ? 1 : 0));
    }
  CHECK(img.at(50, 50) == 1);  // device pixel
}

TEST_CASE("device offset shifts the block the opposite way") {
  const RoomSpec spec = axis_aligned_room(2, 2, 3, {1.0, 0.0, 1.2});
  const FloorplanImage img = rasterize_floorplan(spec, 100, 0.2);
  CHECK(img.count() == 400);
  for (int row = 40; row < 60; ++row)
    for (int col = 35; col < 55; ++col) REQUIRE(img.at(row, col) == 1);
  CHECK(img.at(50, 34) == 0);
  CHECK(img.at(50, 55) == 0);
}

TEST_CASE("floorplan raster agrees with a per-pixel point-in-polygon oracle") {
  int fully_connected = 0, sampled = 0;
  for (int i = 0; i < 25; ++i) {
    Rng rng = Rng::stream(404, static_cast<std::uint64_t>(i));
    RoomSpec spec;
    try {
      spec = sample_standard_room(i % 2 ? Family::L : Family::T, rng);
    } catch (const RoomRegenerate&) {
      continue;
    }
    ++sampled;
    const FloorplanImage img = rasterize_floorplan(spec, 100, 0.2);
    for (int row = 0; row < 100; ++row)
      for (int col = 0; col < 100; ++col) {
        const Vec2 p{spec.device.x + (col - 50 + 0.5) * 0.2, spec.device.y + (row - 50 + 0.5) * 0.2};
        REQUIRE(img.at(row, col) == (oracles::winding_contains(spec.polygon.vertices(), p) ? 1 : 0));
      }

    // the device pixel's 4-connected component covers the interior; a
    // crumpled notch can pinch below one pixel, so a stray pixel is tolerated
    std::vector<std::uint8_t> seen(img.pixels.size(), 0);
    std::vector<std::pair<int, int>> queue{{50, 50}};
    REQUIRE(img.at(50, 50) == 1);
    seen[50 * 100 + 50] = 1;
    long reached = 0;
    while (!queue.empty()) {
      const auto [r, c] = queue.back();
      queue.pop_back();
      ++reached;
      const int dr[] = {1, -1, 0, 0}, dc[] = {0, 0, 1, -1};
      for (int d = 0; d < 4; ++d) {
        const int nr = r + dr[d], nc = c + dc[d];
        if (nr < 0 || nr >= 100 || nc < 0 || nc >= 100) continue;
        if (!img.at(nr, nc) || seen[static_cast<std::size_t>(nr) * 100 + nc]) continue;
        seen[static_cast<std::size_t>(nr) * 100 + nc] = 1;
        queue.push_back({nr, nc});
      }
    }
    REQUIRE(reached >= img.count() - 1);
    REQUIRE(reached * 100 >= img.count() * 99);
    if (reached == img.count()) ++fully_connected;
  }
  CHECK(sampled >= 20);
  CHECK(fully_connected * 25 >= sampled * 24);  // at most one pinched room in the seeded set
}

TEST_CASE("raster raises when the room does not fit") {
  RoomSpec spec = axis_aligned_room(6, 6, 3, {4.5, 0, 1.2});
  CHECK_THROWS_AS(rasterize_floorplan(spec, 100, 0.2), RoomExceedsCanvas);
  CHECK_NOTHROW(rasterize_floorplan(spec, 160, 0.2));

  RoomSpec tall = axis_aligned_room(2, 2, 9, {0, 0, 1.0});
  CHECK_THROWS_AS(rasterize_height(tall, 40, 0.2), HeightExceedsCanvas);
}

TEST_CASE("height raster worked example: 4 m room, device at 1.2 m") {
  const RoomSpec spec = axis_aligned_room(2, 2, 4.0, {0, 0, 1.2});
  const HeightVector hv = rasterize_height(spec, 40, 0.2);
  CHECK(hv.count() == 20);
  for (int k = 0; k < 40; ++k) REQUIRE(hv.pixels[static_cast<std::size_t>(k)] == (k >= 14 && k <= 33 ? 1 : 0));
}

TEST_CASE("height raster is symmetric when the device sits at mid-height") {
  const RoomSpec spec = axis_aligned_room(2, 2, 4.0, {0, 0, 2.0});
  const HeightVector hv = rasterize_height(spec, 40, 0.2);
  for (int k = 0; k < 40; ++k) REQUIRE(hv.pixels[static_cast<std::size_t>(k)] == hv.pixels[static_cast<std::size_t>(39 - k)]);
  // interior pixel count is the quantized room height, within one pixel
  CHECK(std::abs(hv.count() - 20) <= 1);
}

TEST_CASE("height pixel count tracks height/pixel_size within one pixel") {
  for (int i = 0; i < 200; ++i) {
    Rng rng = Rng::stream(405, static_cast<std::uint64_t>(i));
    const double height = rng.uniform(3.0, 5.0);
    const RoomSpec spec = axis_aligned_room(2, 2, height, {0, 0, rng.uniform(1.0, 1.5)});
    const HeightVector hv = rasterize_height(spec, 40, 0.2);
    CHECK(std::abs(hv.count() - height / 0.2) <= 1.0);
    // interior pixels are contiguous (one run, possibly touching an edge)
    int transitions = 0;
    for (int k = 1; k < 40; ++k)
      if (hv.pixels[static_cast<std::size_t>(k)] != hv.pixels[static_cast<std::size_t>(k - 1)]) ++transitions;
    CHECK(transitions >= 1);
    CHECK(transitions <= 2);
  }
}

TEST_CASE("extrude_3d is the outer AND of floorplan and height") {
  FloorplanImage fp;
  fp.b = 4;
  fp.pixels.assign(16, 1);
  HeightVector hv;
  hv.h = 3;
  hv.pixels.assign(3, 1);
  CHECK(extrude_3d(fp, hv).count() == 48);

  hv.pixels.assign(3, 0);
  CHECK(extrude_3d(fp, hv).count() == 0);

  const RoomSpec spec = axis_aligned_room(2, 2, 4.0, {0, 0, 1.2});
  const FloorplanImage room_fp = rasterize_floorplan(spec, 100, 0.2);
  const HeightVector room_hv = rasterize_height(spec, 40, 0.2);
  const VoxelGrid grid = extrude_3d(room_fp, room_hv);
  CHECK(grid.count() == 400 * 20);
  CHECK(grid.count() == room_fp.count() * room_hv.count());
  CHECK(grid.at(50, 50, 20) == 1);
  CHECK(grid.at(50, 50, 5) == 0);
}

TEST_CASE("translation covariance: one pixel of device shift moves the raster one pixel") {
  const RoomSpec base = axis_aligned_room(2.5, 3.1, 3.4, {0.13, -0.22, 1.2});
  RoomSpec shifted = base;
  shifted.device.x += 0.2;
  const FloorplanImage a = rasterize_floorplan(base, 64, 0.2);
  const FloorplanImage b = rasterize_floorplan(shifted, 64, 0.2);
  for (int row = 0; row < 64; ++row)
    for (int col = 0; col < 63; ++col) REQUIRE(b.at(row, col) == a.at(row, col + 1));
}

TEST_CASE("pgm round trip") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "raster_roundtrip.pgm").string();
  std::vector<double> values = {0.0, 1.0, 0.5, 0.25, 1.0, 0.0};
  pgm::write_pgm(path, values, 3, 2);
  const pgm::PgmImage img = pgm::read_pgm(path);
  CHECK(img.width == 3);
  CHECK(img.height == 2);
  CHECK(img.bytes == std::vector<std::uint8_t>{0, 255, 128, 64, 255, 0});
}
