#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "echolab/geometry.hpp"
#include "support/oracles.hpp"

using namespace echolab;
using namespace echolab::geometry;

namespace {

SizeParams size(double l, double w, double h = 3.0) { return {l, w, h}; }

bool is_convex(const Polygon2D& p) {
  const auto& v = p.vertices();
  const std::size_t n = v.size();
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = v[i], b = v[(i + 1) % n], c = v[(i + 2) % n];
    const double cr = cross(b - a, c - b);
    if (cr == 0.0) continue;
    const int s = cr > 0 ? 1 : -1;
    if (sign == 0)
      sign = s;
    else if (s != sign)
      return false;
  }
  return true;
}

std::string write_temp_layout(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << body;
  return path.string();
}

}  // namespace

TEST_CASE("shoebox vertices match the construction rule") {
  const Polygon2D p = make_shoebox_vertices(size(2, 3));
  const std::vector<Vec2> want{{-2, -3}, {-2, 3}, {2, 3}, {2, -3}};
  REQUIRE(p.vertices() == want);

  const Polygon2D unit = make_shoebox_vertices(size(1, 1));
  CHECK(unit.area() == doctest::Approx(4.0));

  const Polygon2D wide = make_shoebox_vertices(size(5, 2));
  CHECK(wide.area() == doctest::Approx(40.0));
  CHECK(oracles::shoelace_area(wide.vertices()) == doctest::Approx(40.0));
}

TEST_CASE("regular polygon rooms") {
  const Polygon2D hex = make_regular_polygon_vertices(6, size(1, 1));
  REQUIRE(hex.size() == 6);
  for (const Vec2& v : hex.vertices()) CHECK(norm(v) == doctest::Approx(1.0));

  const Polygon2D pent = make_regular_polygon_vertices(5, size(2, 2));
  REQUIRE(pent.size() == 5);
  for (const Vec2& v : pent.vertices()) CHECK(norm(v) == doctest::Approx(2.0));

  const Polygon2D squished = make_regular_polygon_vertices(6, size(3, 2));
  const double want = 1.5 * std::sqrt(3.0) * 3.0 * 2.0;  // (3*sqrt(3)/2) * s_l * s_w
  CHECK(squished.area() == doctest::Approx(want));
  CHECK(oracles::shoelace_area(squished.vertices()) == doctest::Approx(want));
  CHECK(squished.area() == doctest::Approx(15.588457).epsilon(1e-5));
}

TEST_CASE("L rooms cut one corner") {
  CHECK(make_L_vertices(size(2, 2), 0.0, 0.7).size() == 4);
  CHECK(make_L_vertices(size(2, 2), 0.7, 0.0).size() == 4);
  CHECK(make_L_vertices(size(2, 2), 0.0, 0.0).area() == doctest::Approx(16.0));

  const Polygon2D l = make_L_vertices(size(2, 2), 1.0, 1.0);
  REQUIRE(l.size() == 6);
  CHECK(l.area() == doctest::Approx(15.0));
  CHECK(oracles::shoelace_area(l.vertices()) == doctest::Approx(15.0));
  CHECK(l.is_simple());
  CHECK_FALSE(is_convex(l));

  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const double sl = rng.uniform(2, 5), sw = rng.uniform(2, 5);
    const double ml = rng.uniform(0.01, 0.5 * sl), mw = rng.uniform(0.01, 0.5 * sw);
    const Polygon2D poly = make_L_vertices(size(sl, sw), ml, mw);
    CHECK_FALSE(is_convex(poly));
    CHECK(poly.area() == doctest::Approx(4 * sl * sw - ml * mw));
  }
}

TEST_CASE("T rooms cut two notches from the -y edge") {
  const Polygon2D t = make_T_vertices(size(2, 2), -1.0, 1.0, -1.0);
  REQUIRE(t.size() == 8);
  CHECK(t.area() == doctest::Approx(14.0));
  CHECK(oracles::shoelace_area(t.vertices()) == doctest::Approx(14.0));
  CHECK(t.is_simple());
  CHECK_FALSE(is_convex(t));

  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const double sl = rng.uniform(2, 5), sw = rng.uniform(2, 5);
    const double m1 = rng.uniform(-0.75 * sl, -0.25 * sl);
    const double m2 = rng.uniform(0.25 * sl, 0.75 * sl);
    const double mw = rng.uniform(-0.5 * sw, -1e-6);
    const Polygon2D poly = make_T_vertices(size(sl, sw), m1, m2, mw);
    REQUIRE(poly.size() == 8);
    CHECK_FALSE(is_convex(poly));
    const double expected = 4 * sl * sw - (m1 + sl) * (mw + sw) - (sl - m2) * (mw + sw);
    CHECK(poly.area() == doctest::Approx(expected));
    CHECK(poly.area() == doctest::Approx(oracles::shoelace_area(poly.vertices())));
  }
}

TEST_CASE("crumple shifts vertices by bounded offsets and keeps polygons simple") {
  const Polygon2D square = make_shoebox_vertices(size(1, 1));

  Rng rng0(11);
  const Polygon2D same = crumple(square, rng0, 0.0);
  CHECK(same.vertices() == square.vertices());

  Rng rng1(12);
  const Polygon2D moved = crumple(square, rng1, 0.5);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(moved.vertices()[i].x - square.vertices()[i].x) <= 0.5);
    CHECK(std::abs(moved.vertices()[i].y - square.vertices()[i].y) <= 0.5);
  }

  Rng rng2(13);
  for (int i = 0; i < 1000; ++i) {
    const Polygon2D c = crumple(square, rng2, 0.5);
    CHECK(oracles::brute_force_simple(c.vertices()));
  }
}

TEST_CASE("rotate preserves area and maps vertices as expected") {
  const Polygon2D square = make_shoebox_vertices(size(2, 2));
  CHECK(rotate(square, 0.0).vertices() == square.vertices());

  const Polygon2D flipped = rotate(square, std::numbers::pi);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(flipped.vertices()[i].x == doctest::Approx(-square.vertices()[i].x));
    CHECK(flipped.vertices()[i].y == doctest::Approx(-square.vertices()[i].y));
  }

  const Polygon2D tilted = rotate(square, std::numbers::pi / 4);
  CHECK(std::abs(tilted.area() - 16.0) / 16.0 < 1e-9);
}

TEST_CASE("place_device stays inside the 70% region and the room") {
  const Polygon2D square = make_shoebox_vertices(size(1, 1));
  Rng rng(21);
  for (int i = 0; i < 2000; ++i) {
    const DevicePose d = place_device(square, 3.0, rng);
    CHECK(std::abs(d.x) <= 0.7);
    CHECK(std::abs(d.y) <= 0.7);
    CHECK(d.z >= 1.0);
    CHECK(d.z <= 1.5);
  }

  const Polygon2D l = make_L_vertices(size(3, 3), 1.5, 1.5);
  Rng rng2(22);
  for (int i = 0; i < 10000; ++i) {
    const DevicePose d = place_device(l, 3.0, rng2);
    CHECK(oracles::winding_contains(l.vertices(), d.xy()));
  }
}

TEST_CASE("classify_los basics") {
  const Polygon2D square = make_shoebox_vertices(size(2, 2));
  CHECK(classify_los(square, {0.3, -0.9}) == Visibility::LOS);
  CHECK(classify_los(make_regular_polygon_vertices(6, size(3, 2)), {0.5, 0.4}) == Visibility::LOS);

  // big L room, device tucked far into the +x arm: the far end of the other
  // arm is hidden behind the inner corner
  const Polygon2D l = make_L_vertices(size(5, 5), 2.5, 2.5);
  CHECK(classify_los(l, {4.0, -4.0}) == Visibility::NLOS);
  CHECK(oracles::raycast_los(l.vertices(), {4.0, -4.0}) == false);

  CHECK_THROWS_AS(classify_los(square, {5.0, 5.0}), DeviceOutsidePolygon);
}

TEST_CASE("classify_los agrees with the ray-casting oracle on 1000 rooms") {
  const Family fams[] = {Family::Shoebox, Family::Pentagonal, Family::Hexagonal, Family::L, Family::T};
  int nlos_count = 0;
  for (int i = 0; i < 1000; ++i) {
    Rng rng = Rng::stream(777, static_cast<std::uint64_t>(i));
    RoomSpec spec;
    int attempt = 0;
    for (;; ++attempt) {
      try {
        Rng r = Rng::stream(777, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(attempt));
        spec = sample_standard_room(fams[i % 5], r, static_cast<std::uint64_t>(i));
        break;
      } catch (const RoomRegenerate&) {
        REQUIRE(attempt < 50);
      }
    }
    (void)rng;
    const bool oracle_los = oracles::raycast_los(spec.polygon.vertices(), spec.device.xy());
    const bool impl_los = classify_los(spec.polygon, spec.device.xy()) == Visibility::LOS;
    CAPTURE(i);
    CHECK(impl_los == oracle_los);
    if (!impl_los) ++nlos_count;
  }
  CHECK(nlos_count > 0);  // the seeded set exercises both labels
}

TEST_CASE("convex families always classify LOS after crumpling") {
  const Family fams[] = {Family::Shoebox, Family::Pentagonal, Family::Hexagonal};
  for (int i = 0; i < 300; ++i) {
    Rng rng = Rng::stream(31, static_cast<std::uint64_t>(i));
    try {
      const RoomSpec spec = sample_standard_room(fams[i % 3], rng);
      if (is_convex(spec.polygon)) CHECK(spec.los_label == Visibility::LOS);
    } catch (const RoomRegenerate&) {
    }
  }
}

TEST_CASE("sample_standard_room is deterministic and respects size ranges") {
  Rng a = Rng::stream(99, 4);
  Rng b = Rng::stream(99, 4);
  const RoomSpec s1 = sample_standard_room(Family::T, a, 4);
  const RoomSpec s2 = sample_standard_room(Family::T, b, 4);
  CHECK(s1.polygon.vertices() == s2.polygon.vertices());
  CHECK(s1.device == s2.device);
  CHECK(s1.height == s2.height);
  CHECK(s1.materials == s2.materials);
  CHECK(s1.los_label == s2.los_label);

  const Family fams[] = {Family::Shoebox, Family::Pentagonal, Family::Hexagonal, Family::L, Family::T};
  std::set<std::string> labels;
  for (int i = 0; i < 10000; ++i) {
    Rng rng = Rng::stream(123, static_cast<std::uint64_t>(i));
    try {
      const RoomSpec spec = sample_standard_room(fams[i % 5], rng);
      CHECK(spec.height >= 3.0);
      CHECK(spec.height <= 5.0);
      CHECK(spec.polygon.is_simple());
      CHECK(spec.polygon.contains(spec.device.xy()));
      if (spec.family == Family::L || spec.family == Family::T)
        labels.insert(to_string(spec.los_label));
    } catch (const RoomRegenerate&) {
    }
  }
  CHECK(labels.count("LOS") == 1);
  CHECK(labels.count("NLOS") == 1);
}

TEST_CASE("import_layout reads squares, arcs and rejects bad files") {
  Rng rng(55);
  const std::string square = write_temp_layout(
      "layout_square.json",
      R"({"vertices": [[-2,-2],[-2,2],[2,2],[2,-2]], "height": 3.0, "device": [0.5, 0.5, 1.2]})");
  const RoomSpec spec = import_layout(square, rng);
  CHECK(spec.polygon.size() == 4);
  CHECK(spec.family == Family::Imported);
  CHECK(spec.device.x == doctest::Approx(0.5));

  // half-disc: straight edge plus a semicircular arc of radius 2
  const std::string halfdisc = write_temp_layout(
      "layout_halfdisc.json",
      R"({"vertices": [[2,0],[-2,0]], "arcs": [{"start": 0, "center": [0,0], "radius": 2.0, "sweep": 3.14159265358979}], "height": 3.2, "device": [0.0, 0.8, 1.1]})");
  const RoomSpec arc_spec = import_layout(halfdisc, rng);
  CHECK(arc_spec.polygon.size() > 4);
  // every discretized chord must deviate from the circle by at most 10 cm
  const auto& v = arc_spec.polygon.vertices();
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    if (norm(v[i]) < 1.9) continue;  // only arc points lie on the circle
    if (norm(v[i + 1]) < 1.9) continue;
    const Vec2 mid = (v[i] + v[i + 1]) * 0.5;
    const double sagitta = 2.0 - norm(mid);
    CHECK(sagitta >= -1e-9);
    CHECK(sagitta <= 0.1 + 1e-9);
  }

  const std::string bad = write_temp_layout("layout_bad.json", "{\"vertices\": [[0,0],[1,0]]");
  CHECK_THROWS_AS(import_layout(bad, rng), ParseError);

  const std::string twisted = write_temp_layout(
      "layout_twisted.json",
      R"({"vertices": [[0,0],[2,2],[2,0],[0,2]], "height": 3.0})");
  CHECK_THROWS_AS(import_layout(twisted, rng), NonSimplePolygon);
}
