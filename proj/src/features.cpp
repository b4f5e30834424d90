#include "mmloc/features.hpp"

#include <algorithm>
#include <optional>

#include "mmloc/geoloc.hpp"
#include "mmloc/parallel.hpp"

namespace mmloc {

Measurement Measurement::rotated(double phi) const {
  Measurement out = *this;
  out.orientation = orientation + phi;
  const Angle turn = Angle::from_radians(phi);
  for (auto& r : out.readings)
    if (r.valid) r.aoa = r.aoa - turn;
  return out;
}

Measurement Measurement::biased(double beta) const {
  Measurement out = *this;
  const Angle shift = Angle::from_radians(beta);
  for (auto& r : out.readings)
    if (r.valid) r.aoa = r.aoa + shift;
  return out;
}

std::size_t FeatureVector::valid_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

const char* to_string(LabelSource s) { return s == LabelSource::truth ? "truth" : "geometric"; }

LabelSource label_source_from_string(const std::string& s) {
  if (s == "truth") return LabelSource::truth;
  if (s == "geometric" || s == "geo") return LabelSource::geometric;
  throw Error("schema", "unknown label source '" + s + "'");
}

Measurement synth_measurement(Vec2 client, double orientation, const AnchorRoster& roster, const Room& room,
                              double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw Error("invalid_argument", "noise sigma must be non-negative");
  if (!room.strictly_contains(client))
    throw Error("client_outside_room", "client position is not strictly inside the room");
  Measurement m;
  m.client_truth = client;
  m.orientation = orientation;
  m.readings.reserve(roster.size());
  const Angle heading = Angle::from_radians(orientation);
  std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
  for (const auto& anchor : roster.anchors) {
    Reading r;
    r.anchor_id = anchor.id;
    if (auto aoa = exact_aoa(client, anchor, room)) {
      r.valid = true;
      r.aoa = Angle::from_radians(*aoa) - heading;
      if (sigma > 0.0) r.aoa = r.aoa + Angle::from_radians(noise(rng));
    }
    m.readings.push_back(r);
  }
  return m;
}

FeatureVector compute_features(const Measurement& m, const AnchorRoster& roster) {
  if (m.readings.size() != roster.size())
    throw Error("schema", "measurement does not match the anchor roster");
  const auto ref = std::find_if(m.readings.begin(), m.readings.end(), [](const Reading& r) { return r.valid; });
  const auto valid = std::count_if(m.readings.begin(), m.readings.end(), [](const Reading& r) { return r.valid; });
  if (valid < 2) throw Error("unlocalizable", "fewer than two valid AoA readings");

  FeatureVector fv;
  fv.ref_anchor = static_cast<int>(ref - m.readings.begin());
  fv.adoa.reserve(m.readings.size() - 1);
  fv.mask.reserve(m.readings.size() - 1);
  for (std::size_t j = 0; j < m.readings.size(); ++j) {
    if (static_cast<int>(j) == fv.ref_anchor) continue;
    const Reading& r = m.readings[j];
    if (r.valid) {
      fv.adoa.push_back((r.aoa - ref->aoa).radians());
      fv.mask.push_back(1);
    } else {
      fv.adoa.push_back(kMissingAdoa);
      fv.mask.push_back(0);
    }
  }
  return fv;
}

namespace {

Vec2 uniform_interior_point(const Room& room, Rng& rng) {
  const Vec2 lo = room.min_corner();
  const Vec2 hi = room.max_corner();
  std::uniform_real_distribution<double> ux(lo.x, hi.x);
  std::uniform_real_distribution<double> uy(lo.y, hi.y);
  for (;;) {
    const Vec2 p{ux(rng), uy(rng)};
    if (room.strictly_contains(p)) return p;
  }
}

}  // namespace

std::vector<Vec2> generate_trajectory(const Room& room, int n_points, Rng& rng, const TrajectoryOptions& options) {
  if (n_points < 2) throw Error("invalid_argument", "a trajectory needs at least 2 points");
  const int n_waypoints = std::max(2, options.n_waypoints);

  std::vector<Vec2> waypoints{uniform_interior_point(room, rng)};
  while (static_cast<int>(waypoints.size()) < n_waypoints) {
    const Vec2 from = waypoints.back();
    std::optional<Vec2> next;
    for (int attempt = 0; attempt < options.max_leg_attempts && !next; ++attempt) {
      const Vec2 cand = uniform_interior_point(room, rng);
      if (!segment_blocked(from, cand, room)) next = cand;
    }
    if (!next) {
      const Vec2 c = room.centroid();
      Vec2 cand = from + 0.5 * (c - from);
      for (int i = 0; i < 30 && (segment_blocked(from, cand, room) || !room.strictly_contains(cand)); ++i)
        cand = from + 0.5 * (cand - from);
      next = cand;
    }
    waypoints.push_back(*next);
  }

  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < waypoints.size(); ++i)
    cum.push_back(cum.back() + distance(waypoints[i - 1], waypoints[i]));
  const double total = cum.back();

  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(n_points));
  out.push_back(waypoints.front());
  std::size_t leg = 1;
  for (int k = 1; k + 1 < n_points; ++k) {
    const double s = total * static_cast<double>(k) / static_cast<double>(n_points - 1);
    while (leg + 1 < cum.size() && cum[leg] < s) ++leg;
    const double len = cum[leg] - cum[leg - 1];
    const double u = len > 0.0 ? (s - cum[leg - 1]) / len : 0.0;
    out.push_back(room.project_inside(waypoints[leg - 1] + u * (waypoints[leg] - waypoints[leg - 1])));
  }
  out.push_back(waypoints.back());
  return out;
}

std::pair<int, int> split_size(int n_samples) {
  if (n_samples < 0) throw Error("invalid_argument", "training size must be non-negative");
  if (n_samples % 30 == 0) return {n_samples / 30, 30};
  if (n_samples % 10 == 0) return {n_samples / 10, 10};
  return {n_samples, 1};
}

namespace detail {

void check_drop_rate(std::size_t kept, std::size_t dropped) {
  if (dropped > 0 && 2 * dropped > kept + dropped)
    throw Error("dataset_degenerate", "more than half of the samples were dropped (" + std::to_string(dropped) +
                                          " of " + std::to_string(kept + dropped) + ")");
}

std::vector<Sample> simulate_trajectory(const Scenario& scenario, const AnchorRoster& roster,
                                        const DatasetRequest& request, int traj, std::size_t& dropped) {
  Rng rng = make_stream(request.seed, static_cast<std::uint64_t>(traj));
  std::uniform_real_distribution<double> heading(0.0, 2.0 * kPi);
  std::vector<Sample> out;
  dropped = 0;
  if (request.n_points < 1) return out;
  std::vector<Vec2> path;
  if (request.n_points == 1) {
    path = generate_trajectory(scenario.room, 2, rng, request.trajectory);
    path.resize(1);
  } else {
    path = generate_trajectory(scenario.room, request.n_points, rng, request.trajectory);
  }
  for (std::size_t step = 0; step < path.size(); ++step) {
    const double orientation = heading(rng);
    const Measurement m = synth_measurement(path[step], orientation, roster, scenario.room, request.sigma, rng);
    Sample s;
    try {
      s.features = compute_features(m, roster);
    } catch (const Error&) {
      ++dropped;
      continue;
    }
    s.traj = traj;
    s.step = static_cast<int>(step);
    s.truth = path[step];
    s.label = path[step];
    s.label_source = LabelSource::truth;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

Dataset build_dataset(const Scenario& scenario, const AnchorRoster& roster, const DatasetRequest& request,
                      int jobs) {
  if (request.n_trajectories < 0) throw Error("invalid_argument", "trajectory count must be non-negative");
  Dataset ds;
  ds.fingerprint = roster.fingerprint();
  ds.n_anchors = roster.size();
  ds.sigma = request.sigma;
  ds.seed = request.seed;

  const int n = request.n_trajectories;
  std::vector<std::vector<Sample>> per_traj(static_cast<std::size_t>(n));
  std::vector<std::size_t> drops(static_cast<std::size_t>(n), 0);
  const int threads = resolve_jobs(jobs);
  FirstError err;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (int t = 0; t < n; ++t) {
    const auto i = static_cast<std::size_t>(t);
    err.run([&] { per_traj[i] = detail::simulate_trajectory(scenario, roster, request, t, drops[i]); });
  }
  err.rethrow();
  for (int t = 0; t < n; ++t) {
    auto& v = per_traj[static_cast<std::size_t>(t)];
    ds.samples.insert(ds.samples.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
    ds.dropped += drops[static_cast<std::size_t>(t)];
  }
  detail::check_drop_rate(ds.samples.size(), ds.dropped);

  if (request.labeling == LabelSource::geometric) {
    ds = label_dataset(ds, roster, scenario.room, {}, jobs);
  }
  return ds;
}

}  // namespace mmloc
