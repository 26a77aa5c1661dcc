#pragma once

// Test-only reference implementations, kept independent of the library code
// they are used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "echolab/geometry.hpp"

namespace oracles {

using echolab::geometry::Vec2;

// Shoelace formula on a raw vertex list.
inline double shoelace_area(const std::vector<Vec2>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 a = v[i];
    const Vec2 b = v[(i + 1) % v.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return std::abs(0.5 * s);
}

// Winding-number point-in-polygon test (different route than the library's
// even-odd crossing test).
inline bool winding_contains(const std::vector<Vec2>& v, Vec2 p) {
  int wn = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 a = v[i];
    const Vec2 b = v[(i + 1) % v.size()];
    const double is_left = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
    if (a.y <= p.y) {
      if (b.y > p.y && is_left > 0) ++wn;
    } else {
      if (b.y <= p.y && is_left < 0) --wn;
    }
  }
  return wn != 0;
}

// Brute-force LOS test: cast `rays` equally spaced rays from the device and
// mark the nearest wall hit by each. LOS iff every wall is hit at least once.
inline bool raycast_los(const std::vector<Vec2>& v, Vec2 d, int rays = 3600) {
  const std::size_t n = v.size();
  std::vector<char> seen(n, 0);
  for (int r = 0; r < rays; ++r) {
    const double a = 2.0 * std::numbers::pi * (r + 0.5) / rays;
    const Vec2 u{std::cos(a), std::sin(a)};
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_wall = n;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 A = v[i];
      const Vec2 B = v[(i + 1) % n];
      const Vec2 e = B - A;
      const double denom = u.x * e.y - u.y * e.x;
      if (denom == 0.0) continue;
      const Vec2 w = A - d;
      const double dist = (w.x * e.y - w.y * e.x) / denom;
      const double t = (w.x * u.y - w.y * u.x) / denom;
      if (dist > 1e-12 && t >= 0.0 && t <= 1.0 && dist < best) {
        best = dist;
        best_wall = i;
      }
    }
    if (best_wall < n) seen[best_wall] = 1;
  }
  return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
}

// Simplicity check by brute-force sampling of segment pairs.
inline bool brute_force_simple(const std::vector<Vec2>& v) {
  const std::size_t n = v.size();
  auto seg_hit = [](Vec2 p1, Vec2 p2, Vec2 p3, Vec2 p4) {
    auto ori = [](Vec2 a, Vec2 b, Vec2 c) {
      return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    };
    const double d1 = ori(p3, p4, p1), d2 = ori(p3, p4, p2);
    const double d3 = ori(p1, p2, p3), d4 = ori(p1, p2, p4);
    if (((d1 > 0) != (d2 > 0)) && d1 != 0 && d2 != 0 && ((d3 > 0) != (d4 > 0)) && d3 != 0 && d4 != 0)
      return true;
    auto between = [](Vec2 a, Vec2 b, Vec2 c) {
      return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) &&
             std::min(a.y, b.y) <= c.y && c.y <= std::max(a.y, b.y);
    };
    if (d1 == 0 && between(p3, p4, p1)) return true;
    if (d2 == 0 && between(p3, p4, p2)) return true;
    if (d3 == 0 && between(p1, p2, p3)) return true;
    if (d4 == 0 && between(p1, p2, p4)) return true;
    return false;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (seg_hit(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n])) return false;
    }
  return true;
}

}  // namespace oracles
