#include "mmloc/geometry.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace mmloc {

namespace {

double signed_area(const std::vector<Vec2>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += cross(v[i], v[(i + 1) % v.size()]);
  return 0.5 * s;
}

// Closed-segment intersection test used for the simplicity check.
bool segments_touch(const Segment& s, const Segment& t) {
  auto orient = [](Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); };
  auto on_seg = [](Vec2 a, Vec2 b, Vec2 p) {
    return std::min(a.x, b.x) - kGeomTol <= p.x && p.x <= std::max(a.x, b.x) + kGeomTol &&
           std::min(a.y, b.y) - kGeomTol <= p.y && p.y <= std::max(a.y, b.y) + kGeomTol;
  };
  const double d1 = orient(t.a, t.b, s.a);
  const double d2 = orient(t.a, t.b, s.b);
  const double d3 = orient(s.a, s.b, t.a);
  const double d4 = orient(s.a, s.b, t.b);
  if (((d1 > kGeomTol && d2 < -kGeomTol) || (d1 < -kGeomTol && d2 > kGeomTol)) &&
      ((d3 > kGeomTol && d4 < -kGeomTol) || (d3 < -kGeomTol && d4 > kGeomTol)))
    return true;
  if (std::abs(d1) <= kGeomTol && on_seg(t.a, t.b, s.a)) return true;
  if (std::abs(d2) <= kGeomTol && on_seg(t.a, t.b, s.b)) return true;
  if (std::abs(d3) <= kGeomTol && on_seg(s.a, s.b, t.a)) return true;
  if (std::abs(d4) <= kGeomTol && on_seg(s.a, s.b, t.b)) return true;
  return false;
}

Vec2 closest_on_segment(const Segment& s, Vec2 p) {
  const Vec2 e = s.b - s.a;
  const double len2 = dot(e, e);
  double u = len2 > 0.0 ? dot(p - s.a, e) / len2 : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  return s.a + u * e;
}

// Inward unit normal of a wall of a counter-clockwise polygon.
Vec2 inward_normal(const Segment& s) {
  const Vec2 e = s.b - s.a;
  const double len = norm(e);
  return {-e.y / len, e.x / len};
}

bool in_front_of(const Segment& wall, Vec2 p) {
  return cross(wall.b - wall.a, p - wall.a) > kGeomTol * norm(wall.b - wall.a);
}

}  // namespace

Room::Room(std::vector<Vec2> vertices) : vertices_(std::move(vertices)) {
  const std::size_t n = vertices_.size();
  if (n < 3) throw Error("invalid_scenario", "room needs at least 3 vertices");
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = vertices_[i];
    const Vec2 b = vertices_[(i + 1) % n];
    if (!std::isfinite(a.x) || !std::isfinite(a.y))
      throw Error("invalid_scenario", "room vertex is not finite");
    if (distance(a, b) <= kGeomTol)
      throw Error("invalid_scenario", "room has a zero-length wall");
    walls_.push_back({a, b});
  }
  const double area = signed_area(vertices_);
  if (area <= 0.0)
    throw Error("invalid_scenario", "room vertices must be counter-clockwise with positive area");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) {
        // Adjacent walls share one vertex; they must not fold back onto each other.
        const Segment& s = walls_[i];
        const Segment& t = walls_[j];
        const Vec2 shared = (j == i + 1) ? s.b : s.a;
        const Vec2 far_s = (j == i + 1) ? s.a : s.b;
        const Vec2 far_t = (j == i + 1) ? t.b : t.a;
        const Vec2 u = far_s - shared;
        const Vec2 v = far_t - shared;
        if (std::abs(cross(u, v)) <= kGeomTol * norm(u) * norm(v) && dot(u, v) > 0.0)
          throw Error("invalid_scenario", "room walls overlap");
        continue;
      }
      if (segments_touch(walls_[i], walls_[j]))
        throw Error("invalid_scenario", "room polygon is not simple");
    }
  }
}

double Room::area() const { return signed_area(vertices_); }

Vec2 Room::centroid() const {
  double cx = 0.0;
  double cy = 0.0;
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    const Vec2 p = vertices_[i];
    const Vec2 q = vertices_[(i + 1) % vertices_.size()];
    const double c = cross(p, q);
    cx += (p.x + q.x) * c;
    cy += (p.y + q.y) * c;
  }
  const double a6 = 6.0 * area();
  return {cx / a6, cy / a6};
}

Vec2 Room::min_corner() const {
  Vec2 m{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (auto v : vertices_) m = {std::min(m.x, v.x), std::min(m.y, v.y)};
  return m;
}

Vec2 Room::max_corner() const {
  Vec2 m{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (auto v : vertices_) m = {std::max(m.x, v.x), std::max(m.y, v.y)};
  return m;
}

double Room::boundary_distance(Vec2 p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& w : walls_) d = std::min(d, distance(p, closest_on_segment(w, p)));
  return d;
}

bool Room::strictly_contains(Vec2 p) const {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  bool inside = false;
  for (const auto& w : walls_) {
    const Vec2 a = w.a;
    const Vec2 b = w.b;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside && boundary_distance(p) > kGeomTol;
}

Vec2 Room::project_inside(Vec2 p) const {
  constexpr double kNudge = 1e-6;
  for (int iter = 0; iter < 4 && !strictly_contains(p); ++iter) {
    double best = std::numeric_limits<double>::infinity();
    Vec2 q = p;
    Vec2 n{};
    for (const auto& w : walls_) {
      const Vec2 c = closest_on_segment(w, p);
      const double d = distance(p, c);
      if (d < best) {
        best = d;
        q = c;
        n = inward_normal(w);
      }
    }
    p = q + kNudge * n;
  }
  if (!strictly_contains(p)) {
    // Corner cases the nudges did not resolve: step toward the centroid.
    const Vec2 c = centroid();
    for (double s = 1e-4; s <= 1.0 && !strictly_contains(p); s *= 2.0) p = p + s * (c - p);
  }
  return p;
}

std::string AnchorRoster::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[128];
  for (const auto& a : anchors) {
    const int len = std::snprintf(buf, sizeof buf, "%d:%d:%.17g,%.17g:%d:%d;", a.id,
                                  a.kind == AnchorKind::physical ? 0 : 1, a.position.x, a.position.y,
                                  a.source_ap, a.generating_wall);
    for (int i = 0; i < len; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Vec2 mirror_point(Vec2 p, const Segment& wall) {
  const Vec2 e = wall.b - wall.a;
  const double len2 = dot(e, e);
  if (!(len2 > kGeomTol * kGeomTol))
    throw Error("invalid_scenario", "cannot mirror across a zero-length wall");
  const double u = dot(p - wall.a, e) / len2;
  const Vec2 foot = wall.a + u * e;
  return 2.0 * foot - p;
}

bool segment_blocked(Vec2 p, Vec2 q, const Room& room, std::optional<std::size_t> ignore_wall) {
  const Vec2 d = q - p;
  const double len = norm(d);
  if (len <= kGeomTol) return false;
  const auto& walls = room.walls();
  for (std::size_t i = 0; i < walls.size(); ++i) {
    if (ignore_wall && *ignore_wall == i) continue;
    const Vec2 e = walls[i].b - walls[i].a;
    const double denom = cross(d, e);
    const double elen = norm(e);
    if (std::abs(denom) <= kGeomTol * len * elen) continue;  // parallel
    const Vec2 ap = walls[i].a - p;
    const double t = cross(ap, e) / denom;
    const double u = cross(ap, d) / denom;
    if (t * len > kGeomTol && (1.0 - t) * len > kGeomTol && u * elen >= -kGeomTol &&
        (1.0 - u) * elen >= -kGeomTol)
      return true;
  }
  return false;
}

double bearing_to(Vec2 from, Vec2 to) { return wrap_angle(std::atan2(to.y - from.y, to.x - from.x)); }

std::optional<Vec2> reflection_point(Vec2 client, const Anchor& anchor, const Room& room) {
  const auto wall_index = static_cast<std::size_t>(anchor.generating_wall);
  const Segment& wall = room.walls().at(wall_index);
  if (!in_front_of(wall, client) || !in_front_of(wall, anchor.source_position)) return std::nullopt;
  const Vec2 d = anchor.position - client;
  const Vec2 e = wall.b - wall.a;
  const double denom = cross(d, e);
  const double elen = norm(e);
  if (std::abs(denom) <= kGeomTol * norm(d) * elen) return std::nullopt;
  const Vec2 ap = wall.a - client;
  const double t = cross(ap, e) / denom;
  const double u = cross(ap, d) / denom;
  if (!(t > 0.0 && t < 1.0) || u * elen < -kGeomTol || (1.0 - u) * elen < -kGeomTol) return std::nullopt;
  const Vec2 r = wall.a + std::clamp(u, 0.0, 1.0) * e;
  if (segment_blocked(client, r, room, wall_index)) return std::nullopt;
  if (segment_blocked(r, anchor.source_position, room, wall_index)) return std::nullopt;
  return r;
}

std::optional<double> exact_aoa(Vec2 client, const Anchor& anchor, const Room& room) {
  if (!room.strictly_contains(client))
    throw Error("client_outside_room", "client position is not strictly inside the room");
  if (anchor.kind == AnchorKind::physical) {
    if (segment_blocked(client, anchor.position, room)) return std::nullopt;
    return bearing_to(client, anchor.position);
  }
  if (!reflection_point(client, anchor, room)) return std::nullopt;
  return bearing_to(client, anchor.position);
}

std::vector<Vec2> interior_grid(const Room& room, double pitch) {
  if (!(pitch > 0.0)) throw Error("invalid_scenario", "probe grid pitch must be positive");
  const Vec2 lo = room.min_corner();
  const Vec2 hi = room.max_corner();
  const auto nx = static_cast<long>(std::ceil((hi.x - lo.x) / pitch));
  const auto ny = static_cast<long>(std::ceil((hi.y - lo.y) / pitch));
  std::vector<Vec2> out;
  for (long j = 0; j < ny; ++j) {
    for (long i = 0; i < nx; ++i) {
      const Vec2 p{lo.x + (static_cast<double>(i) + 0.5) * pitch, lo.y + (static_cast<double>(j) + 0.5) * pitch};
      if (room.strictly_contains(p)) out.push_back(p);
    }
  }
  return out;
}

double path_coverage(const Anchor& anchor, const Room& room, const std::vector<Vec2>& probes) {
  if (probes.empty()) return 0.0;
  const long n = static_cast<long>(probes.size());
  long hits = 0;
#pragma omp parallel for reduction(+ : hits) schedule(static)
  for (long i = 0; i < n; ++i) {
    if (exact_aoa(probes[static_cast<std::size_t>(i)], anchor, room)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

void validate_scenario(const Scenario& scenario) {
  if (scenario.aps.empty()) throw Error("invalid_scenario", "scenario has no access points");
  for (std::size_t i = 0; i < scenario.aps.size(); ++i) {
    if (!scenario.room.strictly_contains(scenario.aps[i]))
      throw Error("invalid_scenario", "access point " + std::to_string(i) + " is not strictly inside the room");
  }
  if (!(scenario.va_coverage_threshold >= 0.0 && scenario.va_coverage_threshold <= 1.0))
    throw Error("invalid_scenario", "va_coverage_threshold must lie in [0, 1]");
  if (!(scenario.probe_grid_m > 0.0)) throw Error("invalid_scenario", "probe_grid_m must be positive");
}

AnchorRoster build_anchor_roster(const Scenario& scenario) {
  validate_scenario(scenario);
  const Room& room = scenario.room;
  const auto probes = interior_grid(room, scenario.probe_grid_m);
  AnchorRoster roster;
  for (std::size_t ap = 0; ap < scenario.aps.size(); ++ap) {
    Anchor phys;
    phys.kind = AnchorKind::physical;
    phys.position = scenario.aps[ap];
    phys.source_ap = static_cast<int>(ap);
    phys.source_position = scenario.aps[ap];
    phys.id = static_cast<int>(roster.anchors.size());
    roster.anchors.push_back(phys);
    roster.coverage.push_back(path_coverage(phys, room, probes));

    for (std::size_t w = 0; w < room.wall_count(); ++w) {
      const Segment& wall = room.walls()[w];
      // An AP behind the wall's reflective face never produces this path.
      if (!in_front_of(wall, scenario.aps[ap])) continue;
      Anchor va;
      va.kind = AnchorKind::virtual_anchor;
      va.position = mirror_point(scenario.aps[ap], wall);
      va.source_ap = static_cast<int>(ap);
      va.generating_wall = static_cast<int>(w);
      va.source_position = scenario.aps[ap];
      const double cov = path_coverage(va, room, probes);
      if (cov <= 0.0 || cov < scenario.va_coverage_threshold) continue;
      va.id = static_cast<int>(roster.anchors.size());
      roster.anchors.push_back(va);
      roster.coverage.push_back(cov);
    }
  }
  return roster;
}

}  // namespace mmloc
