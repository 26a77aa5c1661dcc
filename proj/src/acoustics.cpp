#include "echolab/acoustics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace echolab::acoustics {

using geometry::Vec2;

namespace {

// Finite wall of the polygonal prism: a vertical rectangle over a floorplan
// edge, or the floor/ceiling polygon itself.
struct Wall {
  enum class Kind : std::uint8_t { Side, Floor, Ceiling } kind;
  Vec3 point;    // a point on the plane
  Vec3 normal;   // unit
  Vec2 a, b;     // side walls: edge endpoints
  double inv_len2 = 0.0;
  double alpha = 0.0;
};

std::vector<Wall> build_walls(const geometry::RoomSpec& spec) {
  const auto& v = spec.polygon.vertices();
  std::vector<Wall> walls;
  walls.reserve(v.size() + 2);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 a = v[i];
    const Vec2 b = v[(i + 1) % v.size()];
    const Vec2 e = b - a;
    const double len = geometry::norm(e);
    Wall w;
    w.kind = Wall::Kind::Side;
    w.point = {a.x, a.y, 0.0};
    w.normal = {-e.y / len, e.x / len, 0.0};
    w.a = a;
    w.b = b;
    w.inv_len2 = 1.0 / (len * len);
    w.alpha = spec.materials.sidewall.alpha;
    walls.push_back(w);
  }
  Wall floor;
  floor.kind = Wall::Kind::Floor;
  floor.point = {0.0, 0.0, 0.0};
  floor.normal = {0.0, 0.0, 1.0};
  floor.alpha = spec.materials.floor.alpha;
  walls.push_back(floor);
  Wall ceiling;
  ceiling.kind = Wall::Kind::Ceiling;
  ceiling.point = {0.0, 0.0, spec.height};
  ceiling.normal = {0.0, 0.0, 1.0};
  ceiling.alpha = spec.materials.ceiling.alpha;
  walls.push_back(ceiling);
  return walls;
}

Vec3 mirror(Vec3 p, const Wall& w) {
  const double d = dot(p - w.point, w.normal);
  return p - w.normal * (2.0 * d);
}

// closed membership: points on the boundary belong to the face
bool face_xy(const geometry::Polygon2D& poly, Vec2 p, double tol) {
  if (poly.contains(p)) return true;
  const auto& v = poly.vertices();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 a = v[i], b = v[(i + 1) % v.size()];
    const Vec2 e = b - a;
    const Vec2 ap = p - a;
    const double t = std::clamp(geometry::dot(ap, e) / geometry::dot(e, e), 0.0, 1.0);
    const Vec2 diff{ap.x - t * e.x, ap.y - t * e.y};
    if (geometry::dot(diff, diff) <= tol * tol) return true;
  }
  return false;
}

bool point_on_wall_face(const Wall& w, const geometry::Polygon2D& poly, double height, Vec3 p) {
  constexpr double kEdgeTol = 1e-9;
  switch (w.kind) {
    case Wall::Kind::Side: {
      const Vec2 ap{p.x - w.a.x, p.y - w.a.y};
      const double t = (ap.x * (w.b.x - w.a.x) + ap.y * (w.b.y - w.a.y)) * w.inv_len2;
      return t >= -kEdgeTol && t <= 1.0 + kEdgeTol && p.z >= -kEdgeTol && p.z <= height + kEdgeTol;
    }
    case Wall::Kind::Floor:
    case Wall::Kind::Ceiling:
      return face_xy(poly, {p.x, p.y}, kEdgeTol);
  }
  return false;
}

// Does the open segment (u, v) hit any wall other than skip_a/skip_b?
bool segment_blocked(const std::vector<Wall>& walls, const geometry::Polygon2D& poly, double height,
                     Vec3 u, Vec3 v, int skip_a, int skip_b) {
  constexpr double kTol = 1e-9;
  const Vec3 d = v - u;
  for (std::size_t i = 0; i < walls.size(); ++i) {
    if (static_cast<int>(i) == skip_a || static_cast<int>(i) == skip_b) continue;
    const Wall& w = walls[i];
    const double denom = dot(d, w.normal);
    if (std::abs(denom) < 1e-15) continue;  // parallel: grazing contact only
    const double t = dot(w.point - u, w.normal) / denom;
    if (t <= kTol || t >= 1.0 - kTol) continue;
    if (point_on_wall_face(w, poly, height, u + d * t)) return true;
  }
  return false;
}

// Borish-style validity test: walk the reflection path backwards from the
// receiver, requiring every leg to hit its wall inside the finite face and to
// reach it unobstructed. `final_image` is the image after the whole path;
// intermediate images are recovered by un-mirroring (mirroring is an
// involution), so no per-path chain storage is needed.
bool path_valid(const std::vector<Wall>& walls, const geometry::RoomSpec& spec, Vec3 final_image,
                Vec3 source, Vec3 receiver, const std::array<std::uint8_t, kMaxReflectionOrder>& path,
                int order) {
  Vec3 x = receiver;
  Vec3 img = final_image;
  int wall_at_x = -1;
  for (int j = order - 1; j >= 0; --j) {
    const Wall& w = walls[path[static_cast<std::size_t>(j)]];
    const Vec3 d = img - x;
    const double num = dot(w.point - x, w.normal);
    if (std::abs(num) < 1e-12) {
      // the walk point already sits on this wall's plane: a degenerate
      // corner bounce (retroreflection) with a zero-length leg
      if (!point_on_wall_face(w, spec.polygon, spec.height, x)) return false;
      wall_at_x = path[static_cast<std::size_t>(j)];
      img = mirror(img, w);
      continue;
    }
    const double denom = dot(d, w.normal);
    if (std::abs(denom) < 1e-15) return false;
    const double t = num / denom;
    if (t <= 0.0 || t > 1.0) return false;
    const Vec3 hit = x + d * t;
    if (!point_on_wall_face(w, spec.polygon, spec.height, hit)) return false;
    if (segment_blocked(walls, spec.polygon, spec.height, x, hit, wall_at_x, path[static_cast<std::size_t>(j)]))
      return false;
    x = hit;
    wall_at_x = path[static_cast<std::size_t>(j)];
    img = mirror(img, w);  // now the image one bounce earlier
  }
  (void)img;
  return !segment_blocked(walls, spec.polygon, spec.height, x, source, wall_at_x, -1);
}

}  // namespace

MicArray MicArray::for_device(const geometry::DevicePose& device, int mic_count, double radius) {
  MicArray array;
  array.source = {device.x, device.y, device.z};
  array.mics.resize(static_cast<std::size_t>(mic_count));
  for (int m = 0; m < mic_count; ++m) {
    const double a = 2.0 * std::numbers::pi * m / mic_count;
    array.mics[static_cast<std::size_t>(m)] = {device.x + radius * std::cos(a),
                                               device.y + radius * std::sin(a), device.z};
  }
  return array;
}

double RirSet::energy() const {
  double e = 0.0;
  for (float s : samples) e += static_cast<double>(s) * s;
  return e;
}

std::vector<ImageSource> enumerate_image_sources(const geometry::RoomSpec& spec, double max_dist,
                                                 int order_cap) {
  if (order_cap < 1 || order_cap > kMaxReflectionOrder)
    throw AcousticsError("reflection order cap out of range");
  const std::vector<Wall> walls = build_walls(spec);
  if (walls.size() > 255) throw AcousticsError("too many walls for image-source enumeration");

  const Vec3 device{spec.device.x, spec.device.y, spec.device.z};
  const double accept_dist = max_dist + 0.06;  // mic ring slack
  const auto& pv = spec.polygon.vertices();
  Vec2 blo, bhi;
  spec.polygon.bounding_box(blo, bhi);

  // distance from a point to the room prism; the unfolded prefix of a valid
  // path ends on a wall, so dist(image, prism) lower-bounds the full path
  auto prism_dist = [&](Vec3 p) {
    const double dz = std::max({0.0 - p.z, 0.0, p.z - spec.height});
    const double bx = std::max({blo.x - p.x, 0.0, p.x - bhi.x});
    const double by = std::max({blo.y - p.y, 0.0, p.y - bhi.y});
    const double box_bound = std::sqrt(bx * bx + by * by + dz * dz);
    if (box_bound > accept_dist) return box_bound;  // the bbox already excludes it
    double dxy = 0.0;
    if (!spec.polygon.contains({p.x, p.y})) {
      double best2 = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const Vec2 a = pv[i], b = pv[(i + 1) % pv.size()];
        const Vec2 e = b - a;
        const Vec2 ap{p.x - a.x, p.y - a.y};
        const double t = std::clamp(geometry::dot(ap, e) / geometry::dot(e, e), 0.0, 1.0);
        const Vec2 diff{ap.x - t * e.x, ap.y - t * e.y};
        best2 = std::min(best2, geometry::dot(diff, diff));
      }
      dxy = std::sqrt(best2);
    }
    return std::sqrt(dxy * dxy + dz * dz);
  };

  // interior side of each wall plane: a reflecting image must come from it.
  // Walls whose local interior cannot be probed are left unculled.
  std::vector<int> inward(walls.size(), 0);
  for (std::size_t i = 0; i < walls.size(); ++i) {
    const Wall& w = walls[i];
    if (w.kind == Wall::Kind::Floor) {
      inward[i] = 1;  // interior above the floor
      continue;
    }
    if (w.kind == Wall::Kind::Ceiling) {
      inward[i] = -1;
      continue;
    }
    constexpr double kProbe = 1e-7;
    const Vec2 mid{0.5 * (w.a.x + w.b.x), 0.5 * (w.a.y + w.b.y)};
    const bool in_plus = spec.polygon.contains({mid.x + kProbe * w.normal.x, mid.y + kProbe * w.normal.y});
    const bool in_minus = spec.polygon.contains({mid.x - kProbe * w.normal.x, mid.y - kProbe * w.normal.y});
    if (in_plus != in_minus) inward[i] = in_plus ? 1 : -1;
  }

  // distance from a point to a finite wall face; a valid path reflecting off
  // that wall has an unfolded prefix at least this long
  auto face_dist = [&](const Wall& w, Vec3 p) {
    if (w.kind != Wall::Kind::Side) {
      // lower-bound the floor/ceiling face by its plane slab over the bbox
      const double dz = std::abs(p.z - w.point.z);
      const double dx = std::max({blo.x - p.x, 0.0, p.x - bhi.x});
      const double dy = std::max({blo.y - p.y, 0.0, p.y - bhi.y});
      return std::sqrt(dz * dz + dx * dx + dy * dy);
    }
    const Vec2 e = w.b - w.a;
    const Vec2 ap{p.x - w.a.x, p.y - w.a.y};
    const double t = std::clamp((ap.x * e.x + ap.y * e.y) * w.inv_len2, 0.0, 1.0);
    const double dx = ap.x - t * e.x, dy = ap.y - t * e.y;
    const double dz = std::max({0.0 - p.z, 0.0, p.z - spec.height});
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  };

  struct NodeState {
    Vec3 pos;
    double amp;
    int order;
    std::array<std::uint8_t, kMaxReflectionOrder> path;
  };

  std::vector<ImageSource> out;
  std::vector<NodeState> stack;
  stack.push_back({device, 1.0, 0, {}});

  while (!stack.empty()) {
    const NodeState node = stack.back();
    stack.pop_back();
    for (std::uint8_t wi = 0; wi < walls.size(); ++wi) {
      if (node.order > 0 && node.path[static_cast<std::size_t>(node.order - 1)] == wi) continue;
      // a specular bounce only happens when the incoming image sits on the
      // interior side of the wall plane
      if (inward[wi] != 0) {
        const double side = dot(node.pos - walls[wi].point, walls[wi].normal) * inward[wi];
        if (side <= 1e-12) continue;
      }
      // any valid path bouncing off this wall is at least as long as the
      // image-to-face distance
      if (face_dist(walls[wi], node.pos) > accept_dist) continue;
      const Vec3 pos = mirror(node.pos, walls[wi]);
      if (prism_dist(pos) > accept_dist) continue;
      NodeState child = node;
      child.pos = pos;
      child.amp = node.amp * std::sqrt(1.0 - walls[wi].alpha);
      child.path[static_cast<std::size_t>(node.order)] = wi;
      child.order = node.order + 1;
      if (norm(pos - device) <= accept_dist &&
          path_valid(walls, spec, pos, device, device, child.path, child.order)) {
        ImageSource img;
        img.position = pos;
        img.order = child.order;
        img.amplitude = child.amp;
        img.path = child.path;
        out.push_back(img);
      }
      if (child.order < order_cap) stack.push_back(child);
    }
  }

  std::sort(out.begin(), out.end(), [&](const ImageSource& a, const ImageSource& b) {
    if (a.order != b.order) return a.order < b.order;
    const double da = norm(a.position - device), db = norm(b.position - device);
    if (da != db) return da < db;
    if (a.position.x != b.position.x) return a.position.x < b.position.x;
    if (a.position.y != b.position.y) return a.position.y < b.position.y;
    return a.position.z < b.position.z;
  });
  // distinct wall sequences can fold onto one physical path; keep one copy
  const auto same_image = [](const ImageSource& a, const ImageSource& b) {
    return a.order == b.order && std::abs(a.position.x - b.position.x) < 1e-9 &&
           std::abs(a.position.y - b.position.y) < 1e-9 && std::abs(a.position.z - b.position.z) < 1e-9;
  };
  out.erase(std::unique(out.begin(), out.end(), same_image), out.end());
  return out;
}

std::vector<ImageSource> truncate_first_order(std::vector<ImageSource> images) {
  std::erase_if(images, [](const ImageSource& img) { return img.order != 1; });
  return images;
}

RirSet synthesize_rir(const std::vector<ImageSource>& images, const MicArray& array, double fs, int length,
                      double c) {
  RirSet rir;
  rir.channels = static_cast<int>(array.mics.size());
  rir.length = length;
  rir.fs = fs;
  std::vector<double> acc(static_cast<std::size_t>(rir.channels) * length, 0.0);
  for (int ch = 0; ch < rir.channels; ++ch) {
    const Vec3 mic = array.mics[static_cast<std::size_t>(ch)];
    double* row = acc.data() + static_cast<std::size_t>(ch) * length;
    for (const ImageSource& img : images) {
      const double dist = norm(img.position - mic);
      const double t = dist * fs / c;
      const int i0 = static_cast<int>(std::floor(t));
      if (i0 >= length) continue;
      const double frac = t - i0;
      const double a = img.amplitude / dist;
      if (i0 >= 0) row[i0] += a * (1.0 - frac);
      if (i0 + 1 < length && i0 + 1 >= 0) row[i0 + 1] += a * frac;
    }
  }
  rir.samples.resize(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) rir.samples[i] = static_cast<float>(acc[i]);
  return rir;
}

RirSet add_noise(const RirSet& rir, double snr_lo_db, double snr_hi_db, Rng& rng) {
  const double e = rir.energy();
  if (e <= 0.0) throw ZeroEnergyRir();
  const double snr_db = rng.uniform(snr_lo_db, snr_hi_db);
  const double noise_energy = e / std::pow(10.0, snr_db / 10.0);
  const double sigma = std::sqrt(noise_energy / static_cast<double>(rir.samples.size()));
  RirSet out = rir;
  out.snr_db = snr_db;
  for (float& s : out.samples) s += static_cast<float>(sigma * rng.normal());
  return out;
}

}  // namespace echolab::acoustics
