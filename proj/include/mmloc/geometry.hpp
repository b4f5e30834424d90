#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mmloc/common.hpp"

namespace mmloc {

struct Segment {
  Vec2 a;
  Vec2 b;
};

/// Simple polygon, counter-clockwise. Wall i runs from vertex i to vertex i+1.
class Room {
 public:
  Room() = default;
  /// Validates simplicity, orientation and area. Clockwise input is rejected.
  explicit Room(std::vector<Vec2> vertices);

  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<Segment>& walls() const { return walls_; }
  std::size_t wall_count() const { return walls_.size(); }

  double area() const;
  Vec2 centroid() const;
  Vec2 min_corner() const;
  Vec2 max_corner() const;

  /// True when p is inside and farther than kGeomTol from every wall.
  bool strictly_contains(Vec2 p) const;
  double boundary_distance(Vec2 p) const;
  /// Nearest point that is strictly inside; p itself when already inside.
  Vec2 project_inside(Vec2 p) const;

 private:
  std::vector<Vec2> vertices_;
  std::vector<Segment> walls_;
};

enum class AnchorKind { physical, virtual_anchor };

struct Anchor {
  int id = 0;
  AnchorKind kind = AnchorKind::physical;
  Vec2 position;
  int source_ap = 0;
  int generating_wall = -1;  // virtual anchors only
  Vec2 source_position;      // position of the physical AP behind this anchor
};

struct Scenario {
  std::string name;
  Room room;
  std::vector<Vec2> aps;
  double va_coverage_threshold = 0.5;
  double probe_grid_m = 0.25;
};

struct AnchorRoster {
  std::vector<Anchor> anchors;
  /// Share of probe-grid points on which each anchor's path is valid.
  std::vector<double> coverage;

  std::size_t size() const { return anchors.size(); }
  const Anchor& operator[](std::size_t i) const { return anchors[i]; }
  /// Stable hash of anchor kinds, positions and source walls.
  std::string fingerprint() const;
};

Vec2 mirror_point(Vec2 p, const Segment& wall);

/// True iff the open segment pq properly crosses a wall other than
/// `ignore_wall`. Endpoints lying on a wall do not block.
bool segment_blocked(Vec2 p, Vec2 q, const Room& room, std::optional<std::size_t> ignore_wall = {});

/// Global-frame bearing from `from` to `to`, in (-pi, pi].
double bearing_to(Vec2 from, Vec2 to);

/// Noise-free AoA of the anchor's path at `client`, or nothing if the path
/// does not exist (blocked LOS, reflection point off the wall, occluded legs).
std::optional<double> exact_aoa(Vec2 client, const Anchor& anchor, const Room& room);

/// Reflection point of a valid virtual-anchor path.
std::optional<Vec2> reflection_point(Vec2 client, const Anchor& anchor, const Room& room);

/// Cell-centred probe points at the given pitch that lie strictly inside.
std::vector<Vec2> interior_grid(const Room& room, double pitch);

/// Fraction of `probes` at which the anchor's path is valid (OpenMP).
double path_coverage(const Anchor& anchor, const Room& room, const std::vector<Vec2>& probes);

void validate_scenario(const Scenario& scenario);
AnchorRoster build_anchor_roster(const Scenario& scenario);

}  // namespace mmloc
