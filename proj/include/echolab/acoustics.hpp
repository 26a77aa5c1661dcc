#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "echolab/geometry.hpp"
#include "echolab/materials.hpp"
#include "echolab/rng.hpp"

namespace echolab::acoustics {

inline constexpr double kSpeedOfSound = 343.0;  // m/s
inline constexpr int kMaxReflectionOrder = 16;

struct AcousticsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ZeroEnergyRir : AcousticsError {
  ZeroEnergyRir() : AcousticsError("cannot scale noise against a zero-energy RIR") {}
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(Vec3 o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(Vec3 o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

// Ring of omnidirectional microphones around the loudspeaker, coplanar at
// device height. The source sits at the ring center.
struct MicArray {
  Vec3 source;
  std::vector<Vec3> mics;

  static MicArray for_device(const geometry::DevicePose& device, int mic_count = 6, double radius = 0.05);
};

// Mirrored source after `order` >= 1 specular bounces. `amplitude` is the
// product of per-bounce reflection factors sqrt(1 - alpha).
struct ImageSource {
  Vec3 position;
  int order = 0;
  double amplitude = 1.0;
  std::array<std::uint8_t, kMaxReflectionOrder> path{};  // wall indices, first bounce first
};

struct RirSet {
  int channels = 6;
  int length = 1024;
  double fs = 8000.0;
  double snr_db = std::numeric_limits<double>::quiet_NaN();  // NaN until noise is applied
  std::vector<float> samples;  // channel-major [channels][length]

  float at(int ch, int i) const { return samples[static_cast<std::size_t>(ch) * length + i]; }
  double energy() const;
};

// All image sources with travel distance within `max_dist` of the device
// (plus the mic ring radius) and order <= order_cap. Each image is validated
// by tracing its reflection path against the finite walls, so occluded
// images of non-convex rooms are dropped. The direct source is excluded.
std::vector<ImageSource> enumerate_image_sources(const geometry::RoomSpec& spec, double max_dist,
                                                 int order_cap = 10);

std::vector<ImageSource> truncate_first_order(std::vector<ImageSource> images);

RirSet synthesize_rir(const std::vector<ImageSource>& images, const MicArray& array, double fs = 8000.0,
                      int length = 1024, double c = kSpeedOfSound);

RirSet add_noise(const RirSet& rir, double snr_lo_db, double snr_hi_db, Rng& rng);

}  // namespace echolab::acoustics
