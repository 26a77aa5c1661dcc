#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "echolab/geometry.hpp"

namespace echolab::raster {

struct RasterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RoomExceedsCanvas : RasterError {
  RoomExceedsCanvas() : RasterError("room does not fit in the device-centered canvas") {}
};
struct HeightExceedsCanvas : RasterError {
  HeightExceedsCanvas() : RasterError("room height does not fit in the vertical canvas") {}
};

// Device-centered binary floorplan. Pixel (row, col) covers the square
// [(col - b/2) * px, (col - b/2 + 1) * px) x [(row - b/2) * px, ...) in room
// coordinates relative to the device, so the device always falls into pixel
// (b/2, b/2). Row index grows with +y, column index with +x.
struct FloorplanImage {
  int b = 100;
  double pixel_size = 0.2;
  std::vector<std::uint8_t> pixels;  // row-major, b*b entries of {0,1}

  std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * b + col]; }
  long count() const;
};

// Device-centered binary height column; index 0 is the lowest voxel.
struct HeightVector {
  int h = 40;
  double pixel_size = 0.2;
  std::vector<std::uint8_t> pixels;  // h entries of {0,1}

  long count() const;
};

struct VoxelGrid {
  int b = 100;
  int h = 40;
  std::vector<std::uint8_t> voxels;  // [row][col][k], row-major then k

  std::uint8_t at(int row, int col, int k) const {
    return voxels[(static_cast<std::size_t>(row) * b + col) * h + k];
  }
  long count() const;
};

FloorplanImage rasterize_floorplan(const geometry::RoomSpec& spec, int b = 100, double pixel_size = 0.2);
HeightVector rasterize_height(const geometry::RoomSpec& spec, int h = 40, double pixel_size = 0.2);
VoxelGrid extrude_3d(const FloorplanImage& fp, const HeightVector& hv);

}  // namespace echolab::raster
