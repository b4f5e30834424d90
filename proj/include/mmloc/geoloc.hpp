#pragma once

#include <vector>

#include "mmloc/features.hpp"
#include "mmloc/geometry.hpp"

namespace mmloc {

struct LocalizeOptions {
  double grid_pitch = 0.25;  // meters, coarse initialization grid
  double step_tol = 1e-6;    // meters
  int max_iterations = 50;
  double lambda_init = 1e-3;
  double lambda_factor = 10.0;
};

struct GeoEstimate {
  Vec2 position;
  double residual_norm = 0.0;  // radians
  int iterations = 0;
  bool converged = false;
  std::vector<int> used_anchors;
};

/// Bearing from x to the anchor, (-pi, pi]. Throws for coincident points.
double bearing(Vec2 x, Vec2 anchor);
/// Gradient of bearing(x, anchor) with respect to x.
Vec2 bearing_gradient(Vec2 x, Vec2 anchor);

/// Wrapped residuals of the valid ADoA entries at candidate position x.
std::vector<double> adoa_residuals(Vec2 x, const FeatureVector& fv, const AnchorRoster& roster);

/// Grid-initialized, damped Gauss-Newton ADoA solver. The initialization
/// grid is built once per room.
class Localizer {
 public:
  Localizer(const Room& room, const AnchorRoster& roster, LocalizeOptions options = {});

  GeoEstimate localize(const FeatureVector& fv) const;

  const std::vector<Vec2>& grid() const { return grid_; }

 private:
  const Room* room_;
  const AnchorRoster* roster_;
  LocalizeOptions options_;
  std::vector<Vec2> grid_;
  // Per-anchor bearings at each grid point, anchor-major.
  std::vector<double> grid_bearings_;
};

GeoEstimate localize(const FeatureVector& fv, const AnchorRoster& roster, const Room& room,
                     const LocalizeOptions& options = {});

struct LabelOptions {
  LocalizeOptions localize;
  /// Averages geometric estimates over this many consecutive trajectory
  /// steps (centred). 0 or 1 labels each snapshot independently.
  int smoothing_window = 0;
};

/// Replaces labels by geometric estimates; drops samples the solver rejects.
Dataset label_dataset(const Dataset& ds, const AnchorRoster& roster, const Room& room,
                      const LabelOptions& options = {}, int jobs = 0);

namespace detail {
Dataset assemble_labels(const Dataset& ds, const std::vector<std::optional<GeoEstimate>>& estimates,
                        int smoothing_window);
}

}  // namespace mmloc
