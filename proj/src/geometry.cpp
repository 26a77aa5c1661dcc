#include "echolab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"

namespace echolab::geometry {

namespace {

constexpr double kPi = std::numbers::pi;

double orient(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  // assumes p collinear with (a, b)
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

// Any contact between the two closed segments counts as an intersection.
bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 p3, Vec2 p4) {
  const double d1 = orient(p3, p4, p1);
  const double d2 = orient(p3, p4, p2);
  const double d3 = orient(p1, p2, p3);
  const double d4 = orient(p1, p2, p4);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  if (d1 == 0 && on_segment(p3, p4, p1)) return true;
  if (d2 == 0 && on_segment(p3, p4, p2)) return true;
  if (d3 == 0 && on_segment(p1, p2, p3)) return true;
  if (d4 == 0 && on_segment(p1, p2, p4)) return true;
  return false;
}

struct Interval {
  double lo, hi;
};

// Solve a + b*t >= 0 for t, intersected into `iv`. Returns false if empty.
bool clip_halfline(double a, double b, Interval& iv) {
  if (b == 0.0) return a >= 0.0;
  const double t = -a / b;
  if (b > 0.0)
    iv.lo = std::max(iv.lo, t);
  else
    iv.hi = std::min(iv.hi, t);
  return iv.lo < iv.hi;
}

// Parameter interval of wall A->B shadowed by occluder P->Q as seen from d,
// i.e. the t for which the sight line d -> A + t(B-A) crosses [P, Q].
std::optional<Interval> shadow_interval(Vec2 d, Vec2 A, Vec2 B, Vec2 P, Vec2 Q) {
  const double side_d = orient(P, Q, d);
  const double wedge = orient(d, P, Q);
  if (side_d == 0.0 || wedge == 0.0) return std::nullopt;  // degenerate: zero-measure shadow

  Interval iv{0.0, 1.0};
  // beyond the occluder line (opposite side from d)
  const double na = orient(P, Q, A), nb = orient(P, Q, B);
  if (!clip_halfline(-side_d * na, -side_d * (nb - na), iv)) return std::nullopt;
  // inside the angular wedge spanned by rays d->P and d->Q
  const double c1a = orient(d, P, A), c1b = orient(d, P, B);
  if (!clip_halfline(wedge * c1a, wedge * (c1b - c1a), iv)) return std::nullopt;
  const double c2a = orient(d, Q, A), c2b = orient(d, Q, B);
  if (!clip_halfline(-wedge * c2a, -wedge * (c2b - c2a), iv)) return std::nullopt;
  return iv;
}

void subtract_interval(std::vector<Interval>& set, Interval cut) {
  std::vector<Interval> out;
  out.reserve(set.size() + 1);
  for (const Interval& iv : set) {
    if (cut.hi <= iv.lo || cut.lo >= iv.hi) {
      out.push_back(iv);
      continue;
    }
    if (cut.lo > iv.lo) out.push_back({iv.lo, cut.lo});
    if (cut.hi < iv.hi) out.push_back({cut.hi, iv.hi});
  }
  set = std::move(out);
}

bool has_degenerate_corner(const std::vector<Vec2>& v) {
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 prev = v[(i + n - 1) % n];
    const Vec2 next = v[(i + 1) % n];
    const Vec2 e1 = v[i] - prev;
    const Vec2 e2 = next - v[i];
    if (e1 == Vec2{} || e2 == Vec2{}) return true;  // repeated vertex
    if (cross(e1, e2) == 0.0 && dot(e1, e2) < 0.0) return true;  // zero interior angle
  }
  return false;
}

}  // namespace

Polygon2D::Polygon2D(std::vector<Vec2> vertices, std::vector<ArcSegment> arcs)
    : verts_(std::move(vertices)), arcs_(std::move(arcs)) {
  if (verts_.size() < 3) throw NonSimplePolygon();
}

double Polygon2D::signed_area() const {
  double s = 0.0;
  for (std::size_t i = 0; i < verts_.size(); ++i) {
    const Vec2 a = verts_[i];
    const Vec2 b = verts_[(i + 1) % verts_.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

Vec2 Polygon2D::centroid() const {
  double a6 = 0.0;
  Vec2 c{0.0, 0.0};
  for (std::size_t i = 0; i < verts_.size(); ++i) {
    const Vec2 p = verts_[i];
    const Vec2 q = verts_[(i + 1) % verts_.size()];
    const double w = p.x * q.y - q.x * p.y;
    a6 += w;
    c.x += (p.x + q.x) * w;
    c.y += (p.y + q.y) * w;
  }
  if (a6 == 0.0) throw NonSimplePolygon();
  return {c.x / (3.0 * a6), c.y / (3.0 * a6)};
}

bool Polygon2D::is_simple() const {
  const std::size_t n = verts_.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    if (verts_[i] == verts_[(i + 1) % n]) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(verts_[i], verts_[(i + 1) % n], verts_[j], verts_[(j + 1) % n]))
        return false;
    }
  }
  // adjacent edges may only share their common vertex
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = verts_[i];
    const Vec2 b = verts_[(i + 1) % n];
    const Vec2 c = verts_[(i + 2) % n];
    if (orient(a, b, c) == 0.0 && on_segment(a, b, c) && !(c == a)) return false;
  }
  return true;
}

bool Polygon2D::contains(Vec2 p) const {
  bool inside = false;
  const std::size_t n = verts_.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = verts_[i];
    const Vec2 b = verts_[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xint = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

void Polygon2D::bounding_box(Vec2& lo, Vec2& hi) const {
  lo = hi = verts_.front();
  for (const Vec2& v : verts_) {
    lo.x = std::min(lo.x, v.x);
    lo.y = std::min(lo.y, v.y);
    hi.x = std::max(hi.x, v.x);
    hi.y = std::max(hi.y, v.y);
  }
}

Polygon2D Polygon2D::rotated(double theta) const {
  const double c = std::cos(theta), s = std::sin(theta);
  auto rot = [&](Vec2 v) { return Vec2{c * v.x - s * v.y, s * v.x + c * v.y}; };
  std::vector<Vec2> out(verts_.size());
  for (std::size_t i = 0; i < verts_.size(); ++i) out[i] = rot(verts_[i]);
  std::vector<ArcSegment> arcs = arcs_;
  for (ArcSegment& a : arcs) a.center = rot(a.center);
  return Polygon2D(std::move(out), std::move(arcs));
}

Polygon2D Polygon2D::scaled_about(Vec2 c, double factor) const {
  std::vector<Vec2> out(verts_.size());
  for (std::size_t i = 0; i < verts_.size(); ++i) out[i] = c + (verts_[i] - c) * factor;
  std::vector<ArcSegment> arcs = arcs_;
  for (ArcSegment& a : arcs) {
    a.center = c + (a.center - c) * factor;
    a.radius *= factor;
  }
  return Polygon2D(std::move(out), std::move(arcs));
}

std::string to_string(Family f) {
  switch (f) {
    case Family::Shoebox: return "shoebox";
    case Family::Pentagonal: return "pentagonal";
    case Family::Hexagonal: return "hexagonal";
    case Family::L: return "L";
    case Family::T: return "T";
    case Family::Imported: return "imported";
  }
  return "?";
}

std::string to_string(Visibility v) { return v == Visibility::LOS ? "LOS" : "NLOS"; }

Family family_from_string(const std::string& s) {
  if (s == "shoebox") return Family::Shoebox;
  if (s == "pentagonal") return Family::Pentagonal;
  if (s == "hexagonal") return Family::Hexagonal;
  if (s == "L") return Family::L;
  if (s == "T") return Family::T;
  if (s == "imported") return Family::Imported;
  throw ParseError("unknown room family: " + s);
}

Polygon2D make_shoebox_vertices(const SizeParams& s) {
  return Polygon2D({{-s.half_length, -s.half_width},
                    {-s.half_length, s.half_width},
                    {s.half_length, s.half_width},
                    {s.half_length, -s.half_width}});
}

Polygon2D make_regular_polygon_vertices(int sides, const SizeParams& s) {
  if (sides != 5 && sides != 6) throw GeometryError("regular polygon rooms have 5 or 6 sides");
  std::vector<Vec2> v(static_cast<std::size_t>(sides));
  for (int k = 1; k <= sides; ++k) {
    const double a = 2.0 * kPi * k / sides;
    v[static_cast<std::size_t>(k - 1)] = {s.half_length * std::cos(a), s.half_width * std::sin(a)};
  }
  return Polygon2D(std::move(v));
}

Polygon2D make_L_vertices(const SizeParams& s, double mu_l, double mu_w) {
  const double l = s.half_length, w = s.half_width;
  if (mu_l == 0.0 || mu_w == 0.0) return make_shoebox_vertices(s);  // cut collapses
  return Polygon2D({{-l, -w},
                    {-l, w},
                    {l - mu_l, w},
                    {l - mu_l, w - mu_w},
                    {l, w - mu_w},
                    {l, -w}});
}

Polygon2D make_T_vertices(const SizeParams& s, double mu_l1, double mu_l2, double mu_w) {
  const double l = s.half_length, w = s.half_width;
  return Polygon2D({{mu_l1, -w},
                    {mu_l1, mu_w},
                    {-l, mu_w},
                    {-l, w},
                    {l, w},
                    {l, mu_w},
                    {mu_l2, mu_w},
                    {mu_l2, -w}});
}

Polygon2D crumple(const Polygon2D& p, Rng& rng, double max_shift) {
  constexpr int kRetries = 100;
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    std::vector<Vec2> v = p.vertices();
    for (Vec2& vert : v) {
      vert.x += rng.uniform(-max_shift, max_shift);
      vert.y += rng.uniform(-max_shift, max_shift);
    }
    Polygon2D cand(std::move(v), p.arc_segments());
    if (cand.is_simple() && !has_degenerate_corner(cand.vertices())) return cand;
  }
  throw CrumpleFailed();
}

Polygon2D rotate(const Polygon2D& p, double theta) { return p.rotated(theta); }

DevicePose place_device(const Polygon2D& p, double height, Rng& rng) {
  constexpr int kRejections = 1000;
  const Polygon2D inner = p.scaled_about(p.centroid(), 0.7);
  Vec2 lo, hi;
  inner.bounding_box(lo, hi);
  for (int i = 0; i < kRejections; ++i) {
    const Vec2 pt{rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y)};
    if (inner.contains(pt) && p.contains(pt)) {
      DevicePose pose;
      pose.x = pt.x;
      pose.y = pt.y;
      pose.z = rng.uniform(1.0, 1.5);
      (void)height;  // device height range is fixed; rooms are >= 3 m tall
      return pose;
    }
  }
  throw PlacementFailed();
}

Visibility classify_los(const Polygon2D& p, Vec2 device_xy) {
  if (!p.contains(device_xy)) throw DeviceOutsidePolygon();
  const std::size_t n = p.size();
  const auto& v = p.vertices();
  constexpr double kMinVisible = 1e-9;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = v[i], b = v[(i + 1) % n];
    std::vector<Interval> visible{{0.0, 1.0}};
    for (std::size_t j = 0; j < n && !visible.empty(); ++j) {
      if (j == i) continue;
      if (auto sh = shadow_interval(device_xy, a, b, v[j], v[(j + 1) % n]))
        subtract_interval(visible, *sh);
    }
    double measure = 0.0;
    for (const Interval& iv : visible) measure += iv.hi - iv.lo;
    if (measure <= kMinVisible) return Visibility::NLOS;
  }
  return Visibility::LOS;
}

RoomSpec sample_standard_room(Family family, Rng& rng, std::uint64_t seed_label) {
  SizeParams s;
  s.half_length = rng.uniform(2.0, 5.0);
  s.half_width = rng.uniform(2.0, 5.0);
  s.height = rng.uniform(3.0, 5.0);

  Polygon2D proto;
  switch (family) {
    case Family::Shoebox:
      proto = make_shoebox_vertices(s);
      break;
    case Family::Pentagonal:
      proto = make_regular_polygon_vertices(5, s);
      break;
    case Family::Hexagonal:
      proto = make_regular_polygon_vertices(6, s);
      break;
    case Family::L: {
      const double mu_l = rng.uniform(0.0, 0.5 * s.half_length);
      const double mu_w = rng.uniform(0.0, 0.5 * s.half_width);
      proto = make_L_vertices(s, mu_l, mu_w);
      break;
    }
    case Family::T: {
      const double mu_l1 = rng.uniform(-0.75 * s.half_length, -0.25 * s.half_length);
      const double mu_l2 = rng.uniform(0.25 * s.half_length, 0.75 * s.half_length);
      const double mu_w = rng.uniform(-0.5 * s.half_width, 0.0);
      proto = make_T_vertices(s, mu_l1, mu_l2, mu_w);
      break;
    }
    case Family::Imported:
      throw GeometryError("imported rooms come from import_layout, not sampling");
  }

  RoomSpec spec;
  try {
    const Polygon2D crumpled = crumple(proto, rng);
    spec.polygon = rotate(crumpled, rng.uniform(0.0, 2.0 * kPi));
    spec.device = place_device(spec.polygon, s.height, rng);
  } catch (const CrumpleFailed& e) {
    throw RoomRegenerate(e.what());
  } catch (const PlacementFailed& e) {
    throw RoomRegenerate(e.what());
  }
  spec.height = s.height;
  spec.family = family;
  spec.los_label = classify_los(spec.polygon, spec.device.xy());
  spec.materials = acoustics::assign_materials(rng);
  spec.seed = seed_label;
  return spec;
}

RoomSpec import_layout(const std::string& path, Rng& rng) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open layout file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("layout JSON: ") + e.what());
  }

  try {
    if (!j.contains("vertices") || !j["vertices"].is_array() || j["vertices"].size() < 2)
      throw ParseError("layout needs at least 2 vertices");
    std::vector<Vec2> base;
    for (const auto& entry : j["vertices"]) {
      if (!entry.is_array() || entry.size() != 2) throw ParseError("vertex must be [x, y]");
      base.push_back({entry[0].get<double>(), entry[1].get<double>()});
    }
    const double height = j.at("height").get<double>();
    if (!(height > 0.0)) throw ParseError("height must be positive");

    std::vector<ArcSegment> arcs;
    if (j.contains("arcs")) {
      for (const auto& a : j["arcs"]) {
        ArcSegment arc;
        arc.start_index = a.at("start").get<int>();
        arc.center = {a.at("center")[0].get<double>(), a.at("center")[1].get<double>()};
        arc.radius = a.at("radius").get<double>();
        arc.sweep = a.at("sweep").get<double>();
        if (arc.start_index < 0 || arc.start_index >= static_cast<int>(base.size()))
          throw ParseError("arc start index out of range");
        if (!(arc.radius > 0.0)) throw ParseError("arc radius must be positive");
        arcs.push_back(arc);
      }
    }

    // discretize arcs into chords with at most 10 cm sagitta
    constexpr double kChordError = 0.1;
    std::vector<Vec2> verts;
    const std::size_t n = base.size();
    for (std::size_t i = 0; i < n; ++i) {
      verts.push_back(base[i]);
      const auto arc_it = std::find_if(arcs.begin(), arcs.end(), [&](const ArcSegment& a) {
        return a.start_index == static_cast<int>(i);
      });
      if (arc_it == arcs.end()) continue;
      const ArcSegment& arc = *arc_it;
      const Vec2 radial = base[i] - arc.center;
      if (std::abs(norm(radial) - arc.radius) > 1e-3 * std::max(1.0, arc.radius))
        throw ParseError("arc start vertex is not on the circle");
      const double cos_half = std::clamp(1.0 - kChordError / arc.radius, -1.0, 1.0);
      const double max_step = 2.0 * std::acos(cos_half);
      const int segments = std::max(1, static_cast<int>(std::ceil(std::abs(arc.sweep) / max_step)));
      const Vec2 end_expected = base[(i + 1) % n];
      const double ca = std::cos(arc.sweep), sa = std::sin(arc.sweep);
      const Vec2 end_actual = arc.center + Vec2{ca * radial.x - sa * radial.y, sa * radial.x + ca * radial.y};
      if (norm(end_actual - end_expected) > 1e-3 * std::max(1.0, arc.radius))
        throw ParseError("arc does not end on the next vertex");
      for (int k = 1; k < segments; ++k) {
        const double a = arc.sweep * k / segments;
        const double c = std::cos(a), sn = std::sin(a);
        verts.push_back(arc.center + Vec2{c * radial.x - sn * radial.y, sn * radial.x + c * radial.y});
      }
    }

    Polygon2D poly(std::move(verts), std::move(arcs));
    if (!poly.is_simple()) throw NonSimplePolygon();

    RoomSpec spec;
    spec.polygon = std::move(poly);
    spec.height = height;
    spec.family = Family::Imported;
    if (j.contains("device") && !j["device"].is_null()) {
      const auto& d = j["device"];
      if (!d.is_array() || d.size() != 3) throw ParseError("device must be [x, y, z] or null");
      spec.device = {d[0].get<double>(), d[1].get<double>(), d[2].get<double>()};
      if (!spec.polygon.contains(spec.device.xy())) throw ParseError("device outside the floorplan");
      if (spec.device.z <= 0.0 || spec.device.z >= height) throw ParseError("device height outside the room");
    } else {
      spec.device = place_device(spec.polygon, height, rng);
    }
    spec.los_label = classify_los(spec.polygon, spec.device.xy());
    spec.materials = acoustics::assign_materials(rng);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("layout JSON: ") + e.what());
  }
}

}  // namespace echolab::geometry
