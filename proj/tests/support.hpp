#pragma once

#include "doctest.h"
#include "mmloc/common.hpp"
#include "mmloc/geometry.hpp"

#include <string>
#include <vector>

namespace testing {

using mmloc::Vec2;

// Crossing-number point-in-polygon, kept apart from the library's own test.
inline bool inside_polygon(const std::vector<Vec2>& poly, Vec2 p) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

inline Vec2 random_interior(const mmloc::Room& room, mmloc::Rng& rng, double margin = 0.05) {
  const Vec2 lo = room.min_corner(), hi = room.max_corner();
  std::uniform_real_distribution<double> ux(lo.x, hi.x), uy(lo.y, hi.y);
  for (;;) {
    const Vec2 p{ux(rng), uy(rng)};
    if (inside_polygon(room.vertices(), p) && room.boundary_distance(p) > margin) return p;
  }
}

inline mmloc::Room rect_room() { return mmloc::Room({{0, 0}, {15, 0}, {15, 10}, {0, 10}}); }
inline mmloc::Room l_room() { return mmloc::Room({{0, 0}, {14, 0}, {14, 18}, {6, 18}, {6, 10}, {0, 10}}); }

}  // namespace testing

#define CHECK_THROWS_CODE(expr, want)                  \
  do {                                                 \
    std::string got_code_;                             \
    try {                                              \
      (void)(expr);                                    \
    } catch (const mmloc::Error& e) {                  \
      got_code_ = e.code();                            \
    }                                                  \
    CHECK(got_code_ == std::string(want));             \
  } while (0)
