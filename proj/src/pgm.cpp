#include "echolab/pgm.hpp"

#include <cmath>
#include <fstream>

namespace echolab::pgm {

void write_pgm_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes, int width, int height) {
  if (static_cast<std::size_t>(width) * height != bytes.size())
    throw PgmError("pgm: byte count does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PgmError("pgm: cannot open " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PgmError("pgm: short write to " + path);
}

void write_pgm(const std::string& path, const std::vector<double>& values, int width, int height) {
  std::vector<std::uint8_t> bytes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (v < 0.0 || v > 1.0 || !std::isfinite(v)) throw PgmError("pgm: value outside [0, 1]");
    bytes[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  write_pgm_bytes(path, bytes, width, height);
}

PgmImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PgmError("pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw PgmError("pgm: not a P5 file: " + path);
  int width = 0, height = 0, maxval = 0;
  in >> width >> height >> maxval;
  if (!in || width <= 0 || height <= 0 || maxval != 255) throw PgmError("pgm: bad header in " + path);
  in.get();  // single whitespace after maxval
  PgmImage img;
  img.width = width;
  img.height = height;
  img.bytes.resize(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(img.bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.bytes.size())) throw PgmError("pgm: truncated " + path);
  return img;
}

}  // namespace echolab::pgm
