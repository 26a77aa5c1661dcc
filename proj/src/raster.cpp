#include "echolab/raster.hpp"

#include <algorithm>
#include <numeric>

namespace echolab::raster {

using geometry::Vec2;

long FloorplanImage::count() const {
  return std::accumulate(pixels.begin(), pixels.end(), 0L, [](long a, std::uint8_t v) { return a + v; });
}
long HeightVector::count() const {
  return std::accumulate(pixels.begin(), pixels.end(), 0L, [](long a, std::uint8_t v) { return a + v; });
}
long VoxelGrid::count() const {
  return std::accumulate(voxels.begin(), voxels.end(), 0L, [](long a, std::uint8_t v) { return a + v; });
}

FloorplanImage rasterize_floorplan(const geometry::RoomSpec& spec, int b, double pixel_size) {
  const Vec2 device = spec.device.xy();
  Vec2 lo, hi;
  spec.polygon.bounding_box(lo, hi);
  const double half_span = 0.5 * b * pixel_size;
  if (lo.x - device.x < -half_span || hi.x - device.x > half_span ||
      lo.y - device.y < -half_span || hi.y - device.y > half_span)
    throw RoomExceedsCanvas();

  FloorplanImage img;
  img.b = b;
  img.pixel_size = pixel_size;
  img.pixels.assign(static_cast<std::size_t>(b) * b, 0);
  for (int row = 0; row < b; ++row) {
    const double y = device.y + (row - b / 2 + 0.5) * pixel_size;
    for (int col = 0; col < b; ++col) {
      const double x = device.x + (col - b / 2 + 0.5) * pixel_size;
      if (spec.polygon.contains({x, y})) img.pixels[static_cast<std::size_t>(row) * b + col] = 1;
    }
  }
  return img;
}

HeightVector rasterize_height(const geometry::RoomSpec& spec, int h, double pixel_size) {
  const double z0 = -spec.device.z;               // floor, relative to device
  const double z1 = spec.height - spec.device.z;  // ceiling
  const double half_span = 0.5 * h * pixel_size;
  if (z0 < -half_span || z1 > half_span) throw HeightExceedsCanvas();

  HeightVector hv;
  hv.h = h;
  hv.pixel_size = pixel_size;
  hv.pixels.assign(static_cast<std::size_t>(h), 0);
  for (int k = 0; k < h; ++k) {
    const double z = (k - h / 2 + 0.5) * pixel_size;
    if (z >= z0 && z <= z1) hv.pixels[static_cast<std::size_t>(k)] = 1;
  }
  return hv;
}

VoxelGrid extrude_3d(const FloorplanImage& fp, const HeightVector& hv) {
  VoxelGrid grid;
  grid.b = fp.b;
  grid.h = hv.h;
  grid.voxels.assign(static_cast<std::size_t>(fp.b) * fp.b * hv.h, 0);
  std::size_t out = 0;
  for (std::size_t cell = 0; cell < fp.pixels.size(); ++cell) {
    const std::uint8_t fpx = fp.pixels[cell];
    for (int k = 0; k < hv.h; ++k) grid.voxels[out++] = fpx & hv.pixels[static_cast<std::size_t>(k)];
  }
  return grid;
}

}  // namespace echolab::raster
