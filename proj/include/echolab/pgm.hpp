#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace echolab::pgm {

struct PgmError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 8-bit binary PGM (P5). `values` are row-major in [0, 1] and are quantized
// as round(255 * v).
void write_pgm(const std::string& path, const std::vector<double>& values, int width, int height);
void write_pgm_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes, int width, int height);

struct PgmImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bytes;
};

PgmImage read_pgm(const std::string& path);

}  // namespace echolab::pgm
