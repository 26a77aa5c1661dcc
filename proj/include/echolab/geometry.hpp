#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "echolab/materials.hpp"
#include "echolab/rng.hpp"

namespace echolab::geometry {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CrumpleFailed : GeometryError {
  CrumpleFailed() : GeometryError("crumple: no simple polygon within retry budget") {}
};
struct PlacementFailed : GeometryError {
  PlacementFailed() : GeometryError("place_device: no interior point within rejection budget") {}
};
struct DeviceOutsidePolygon : GeometryError {
  DeviceOutsidePolygon() : GeometryError("device position is not strictly inside the polygon") {}
};
struct NonSimplePolygon : GeometryError {
  NonSimplePolygon() : GeometryError("polygon is self-intersecting or degenerate") {}
};
struct ParseError : GeometryError {
  using GeometryError::GeometryError;
};
// Raised by sample_standard_room when a draw must be retried with a new stream.
struct RoomRegenerate : GeometryError {
  using GeometryError::GeometryError;
};

// Curved wall segment of an imported layout: replaces the straight edge that
// starts at vertex `start_index`, sweeping `sweep` radians about `center`.
struct ArcSegment {
  int start_index = 0;
  Vec2 center;
  double radius = 0.0;
  double sweep = 0.0;
};

// Closed floorplan polygon, vertices in meters. Vertex order is kept as
// constructed (room builders emit a fixed order); algorithms below do not
// depend on orientation.
class Polygon2D {
 public:
  Polygon2D() = default;
  explicit Polygon2D(std::vector<Vec2> vertices, std::vector<ArcSegment> arcs = {});

  const std::vector<Vec2>& vertices() const { return verts_; }
  const std::vector<ArcSegment>& arc_segments() const { return arcs_; }
  std::size_t size() const { return verts_.size(); }

  double signed_area() const;
  double area() const { return std::abs(signed_area()); }
  Vec2 centroid() const;  // area centroid
  bool is_simple() const;
  bool contains(Vec2 p) const;  // even-odd crossing test
  void bounding_box(Vec2& lo, Vec2& hi) const;

  Polygon2D rotated(double theta) const;
  Polygon2D scaled_about(Vec2 c, double factor) const;

  bool operator==(const Polygon2D& o) const { return verts_ == o.verts_; }

 private:
  std::vector<Vec2> verts_;
  std::vector<ArcSegment> arcs_;
};

// Room size parameters: half-length, half-width (the room spans twice these)
// and full height.
struct SizeParams {
  double half_length = 0.0;  // s_l
  double half_width = 0.0;   // s_w
  double height = 0.0;       // s_h
};

struct DevicePose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;  // above the floor

  Vec2 xy() const { return {x, y}; }
  bool operator==(const DevicePose&) const = default;
};

enum class Family : std::uint8_t { Shoebox, Pentagonal, Hexagonal, L, T, Imported };
enum class Visibility : std::uint8_t { LOS, NLOS };

std::string to_string(Family f);
std::string to_string(Visibility v);
Family family_from_string(const std::string& s);

struct RoomSpec {
  Polygon2D polygon;
  double height = 0.0;
  acoustics::MaterialAssignment materials;
  DevicePose device;
  Family family = Family::Shoebox;
  Visibility los_label = Visibility::LOS;
  std::uint64_t seed = 0;
};

// --- room construction -------------------------------------------------

Polygon2D make_shoebox_vertices(const SizeParams& s);
Polygon2D make_regular_polygon_vertices(int sides, const SizeParams& s);
Polygon2D make_L_vertices(const SizeParams& s, double mu_l, double mu_w);
Polygon2D make_T_vertices(const SizeParams& s, double mu_l1, double mu_l2, double mu_w);

Polygon2D crumple(const Polygon2D& p, Rng& rng, double max_shift = 0.5);
Polygon2D rotate(const Polygon2D& p, double theta);
DevicePose place_device(const Polygon2D& p, double height, Rng& rng);
Visibility classify_los(const Polygon2D& p, Vec2 device_xy);

RoomSpec sample_standard_room(Family family, Rng& rng, std::uint64_t seed_label = 0);
RoomSpec import_layout(const std::string& path, Rng& rng);

}  // namespace echolab::geometry
