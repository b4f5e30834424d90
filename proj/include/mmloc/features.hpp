#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmloc/angle.hpp"
#include "mmloc/geometry.hpp"

namespace mmloc {

/// Value held by ADoA slots whose anchor was not observed.
inline constexpr double kMissingAdoa = -10.0;

struct Reading {
  int anchor_id = 0;
  Angle aoa;  // client-local frame; meaningless when !valid
  bool valid = false;
};

struct Measurement {
  Vec2 client_truth;
  double orientation = 0.0;
  std::vector<Reading> readings;

  /// Same snapshot seen by a client turned by `phi` more radians.
  Measurement rotated(double phi) const;
  /// Adds a common offset to every valid reading.
  Measurement biased(double beta) const;
};

struct FeatureVector {
  std::vector<double> adoa;
  int ref_anchor = 0;
  std::vector<std::uint8_t> mask;

  std::size_t size() const { return adoa.size(); }
  /// Roster index of ADoA slot k (the reference slot is skipped).
  std::size_t anchor_of(std::size_t k) const {
    return k < static_cast<std::size_t>(ref_anchor) ? k : k + 1;
  }
  std::size_t valid_count() const;
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

enum class LabelSource { truth, geometric };

const char* to_string(LabelSource s);
LabelSource label_source_from_string(const std::string& s);

struct Sample {
  int traj = 0;
  int step = 0;
  FeatureVector features;
  Vec2 label;
  Vec2 truth;
  LabelSource label_source = LabelSource::truth;

  // Geometric labeling audit trail.
  bool has_audit = false;
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  std::string fingerprint;
  std::size_t n_anchors = 0;
  double sigma = 0.0;  // radians
  std::uint64_t seed = 0;
  std::size_t dropped = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

Measurement synth_measurement(Vec2 client, double orientation, const AnchorRoster& roster, const Room& room,
                              double sigma, Rng& rng);

/// Reference is the first valid reading in roster order. Throws
/// Error("unlocalizable") with fewer than two valid readings.
FeatureVector compute_features(const Measurement& m, const AnchorRoster& roster);

struct TrajectoryOptions {
  int n_waypoints = 4;
  int max_leg_attempts = 1000;
};

/// Random-waypoint path sampled at equal arc-length spacing.
std::vector<Vec2> generate_trajectory(const Room& room, int n_points, Rng& rng,
                                      const TrajectoryOptions& options = {});

struct DatasetRequest {
  int n_trajectories = 30;
  int n_points = 30;
  double sigma = 0.0;  // radians
  LabelSource labeling = LabelSource::truth;
  std::uint64_t seed = 0;
  TrajectoryOptions trajectory;
};

/// Trajectories fan out over OpenMP threads, each with its own seed-derived
/// stream; output order and content do not depend on `jobs`.
Dataset build_dataset(const Scenario& scenario, const AnchorRoster& roster, const DatasetRequest& request,
                      int jobs = 0);

/// (trajectories, points) used for a requested training-set size:
/// 30 points per trajectory when it divides, else 10, else 1.
std::pair<int, int> split_size(int n_samples);

namespace detail {
void check_drop_rate(std::size_t kept, std::size_t dropped);
std::vector<Sample> simulate_trajectory(const Scenario& scenario, const AnchorRoster& roster,
                                        const DatasetRequest& request, int traj, std::size_t& dropped);
}  // namespace detail

}  // namespace mmloc
