#include "mmloc/serial.hpp"

namespace mmloc::serial {

double path_coverage(const Anchor& anchor, const Room& room, const std::vector<Vec2>& probes) {
  if (probes.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& p : probes)
    if (exact_aoa(p, anchor, room)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(probes.size());
}

Dataset build_dataset(const Scenario& scenario, const AnchorRoster& roster, const DatasetRequest& request) {
  if (request.n_trajectories < 0) throw Error("invalid_argument", "trajectory count must be non-negative");
  Dataset ds;
  ds.fingerprint = roster.fingerprint();
  ds.n_anchors = roster.size();
  ds.sigma = request.sigma;
  ds.seed = request.seed;
  for (int t = 0; t < request.n_trajectories; ++t) {
    std::size_t dropped = 0;
    auto samples = detail::simulate_trajectory(scenario, roster, request, t, dropped);
    ds.dropped += dropped;
    for (auto& s : samples) ds.samples.push_back(std::move(s));
  }
  detail::check_drop_rate(ds.samples.size(), ds.dropped);
  if (request.labeling == LabelSource::geometric) ds = serial::label_dataset(ds, roster, scenario.room, LabelOptions{});
  return ds;
}

Dataset label_dataset(const Dataset& ds, const AnchorRoster& roster, const Room& room, const LabelOptions& options) {
  if (!ds.fingerprint.empty() && ds.fingerprint != roster.fingerprint())
    throw Error("fingerprint_mismatch", "dataset was generated for a different anchor roster");
  const Localizer solver(room, roster, options.localize);
  std::vector<std::optional<GeoEstimate>> estimates;
  estimates.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    try {
      estimates.emplace_back(solver.localize(s.features));
    } catch (const Error&) {
      estimates.emplace_back(std::nullopt);
    }
  }
  return detail::assemble_labels(ds, estimates, options.smoothing_window);
}

}  // namespace mmloc::serial
