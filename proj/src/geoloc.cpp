#include "mmloc/geoloc.hpp"

#include <algorithm>
#include <limits>
#include <optional>

#include "mmloc/parallel.hpp"

namespace mmloc {

double bearing(Vec2 x, Vec2 anchor) {
  if (distance(x, anchor) <= kGeomTol) throw Error("degenerate", "bearing undefined for coincident points");
  return bearing_to(x, anchor);
}

Vec2 bearing_gradient(Vec2 x, Vec2 anchor) {
  const Vec2 d = anchor - x;
  const double d2 = dot(d, d);
  return {d.y / d2, -d.x / d2};
}

namespace {

struct Slot {
  Vec2 anchor;
  double adoa;
};

struct Problem {
  Vec2 ref;
  std::vector<Slot> slots;
};

Problem make_problem(const FeatureVector& fv, const AnchorRoster& roster) {
  if (fv.adoa.size() + 1 != roster.size() || fv.mask.size() != fv.adoa.size())
    throw Error("schema", "feature vector does not match the anchor roster");
  if (fv.ref_anchor < 0 || static_cast<std::size_t>(fv.ref_anchor) >= roster.size())
    throw Error("schema", "reference anchor out of range");
  Problem p;
  p.ref = roster[static_cast<std::size_t>(fv.ref_anchor)].position;
  for (std::size_t k = 0; k < fv.adoa.size(); ++k) {
    if (!fv.mask[k]) continue;
    p.slots.push_back({roster[fv.anchor_of(k)].position, fv.adoa[k]});
  }
  return p;
}

// Sum of squared wrapped residuals; infinite where a bearing is undefined.
double cost_at(const Problem& p, Vec2 x) {
  if (distance(x, p.ref) <= kGeomTol) return std::numeric_limits<double>::infinity();
  const double ref = bearing_to(x, p.ref);
  double c = 0.0;
  for (const auto& s : p.slots) {
    if (distance(x, s.anchor) <= kGeomTol) return std::numeric_limits<double>::infinity();
    const double r = wrap_angle(s.adoa - (bearing_to(x, s.anchor) - ref));
    c += r * r;
  }
  return c;
}

}  // namespace

std::vector<double> adoa_residuals(Vec2 x, const FeatureVector& fv, const AnchorRoster& roster) {
  const Problem p = make_problem(fv, roster);
  if (p.slots.empty()) throw Error("unlocalizable", "fewer than 2 usable anchors");
  const double ref = bearing(x, p.ref);
  std::vector<double> out;
  out.reserve(p.slots.size());
  for (const auto& s : p.slots) out.push_back(wrap_angle(s.adoa - (bearing(x, s.anchor) - ref)));
  return out;
}

Localizer::Localizer(const Room& room, const AnchorRoster& roster, LocalizeOptions options)
    : room_(&room), roster_(&roster), options_(options), grid_(interior_grid(room, options.grid_pitch)) {
  const std::size_t n = grid_.size();
  grid_bearings_.resize(roster.size() * n);
  for (std::size_t a = 0; a < roster.size(); ++a) {
    for (std::size_t g = 0; g < n; ++g) {
      const Vec2 pos = roster[a].position;
      grid_bearings_[a * n + g] = distance(grid_[g], pos) <= kGeomTol
                                      ? std::numeric_limits<double>::quiet_NaN()
                                      : bearing_to(grid_[g], pos);
    }
  }
}

GeoEstimate Localizer::localize(const FeatureVector& fv) const {
  const Problem prob = make_problem(fv, *roster_);
  if (prob.slots.size() < 2) throw Error("unlocalizable", "need at least 3 usable anchors for a 2D fix");

  GeoEstimate est;
  est.used_anchors.push_back(fv.ref_anchor);
  for (std::size_t k = 0; k < fv.adoa.size(); ++k)
    if (fv.mask[k]) est.used_anchors.push_back(static_cast<int>(fv.anchor_of(k)));
  std::sort(est.used_anchors.begin(), est.used_anchors.end());

  // Coarse search over the precomputed bearing table.
  const std::size_t n = grid_.size();
  const double* ref_b = &grid_bearings_[static_cast<std::size_t>(fv.ref_anchor) * n];
  std::vector<const double*> slot_b;
  std::vector<double> slot_adoa;
  for (std::size_t k = 0; k < fv.adoa.size(); ++k) {
    if (!fv.mask[k]) continue;
    slot_b.push_back(&grid_bearings_[fv.anchor_of(k) * n]);
    slot_adoa.push_back(fv.adoa[k]);
  }
  double best_cost = std::numeric_limits<double>::infinity();
  Vec2 x = room_->centroid();
  for (std::size_t g = 0; g < n; ++g) {
    double c = 0.0;
    for (std::size_t j = 0; j < slot_b.size() && c < best_cost; ++j) {
      const double r = wrap_angle(slot_adoa[j] - (slot_b[j][g] - ref_b[g]));
      c += r * r;
    }
    if (c < best_cost) {  // NaN never compares less
      best_cost = c;
      x = grid_[g];
    }
  }
  x = room_->project_inside(x);
  double cost = cost_at(prob, x);

  // Damped Gauss-Newton refinement.
  double lambda = options_.lambda_init;
  for (int it = 0; it < options_.max_iterations; ++it) {
    est.iterations = it + 1;
    const double ref = bearing_to(x, prob.ref);
    const Vec2 gref = bearing_gradient(x, prob.ref);
    double h00 = 0.0, h01 = 0.0, h11 = 0.0, g0 = 0.0, g1 = 0.0;
    for (const auto& s : prob.slots) {
      const double r = wrap_angle(s.adoa - (bearing_to(x, s.anchor) - ref));
      const Vec2 gs = bearing_gradient(x, s.anchor);
      const Vec2 j{gref.x - gs.x, gref.y - gs.y};  // d r / d x
      h00 += j.x * j.x;
      h01 += j.x * j.y;
      h11 += j.y * j.y;
      g0 += j.x * r;
      g1 += j.y * r;
    }
    const double a = h00 + lambda;
    const double d = h11 + lambda;
    const double det = a * d - h01 * h01;
    if (!(det > 0.0) || !std::isfinite(det)) break;
    const Vec2 step{-(d * g0 - h01 * g1) / det, -(a * g1 - h01 * g0) / det};
    const Vec2 trial = room_->project_inside(x + step);
    const double moved = distance(trial, x);
    if (moved < options_.step_tol) {
      const double trial_cost = cost_at(prob, trial);
      if (trial_cost <= cost) {
        x = trial;
        cost = trial_cost;
      }
      est.converged = true;
      break;
    }
    const double trial_cost = cost_at(prob, trial);
    if (trial_cost < cost) {
      x = trial;
      cost = trial_cost;
      lambda /= options_.lambda_factor;
    } else {
      lambda *= options_.lambda_factor;
    }
  }
  est.position = x;
  est.residual_norm = std::sqrt(cost);
  return est;
}

GeoEstimate localize(const FeatureVector& fv, const AnchorRoster& roster, const Room& room,
                     const LocalizeOptions& options) {
  return Localizer(room, roster, options).localize(fv);
}

namespace detail {

Dataset assemble_labels(const Dataset& ds, const std::vector<std::optional<GeoEstimate>>& estimates,
                        int smoothing_window) {
  Dataset out;
  out.fingerprint = ds.fingerprint;
  out.n_anchors = ds.n_anchors;
  out.sigma = ds.sigma;
  out.seed = ds.seed;
  out.dropped = ds.dropped;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (!estimates[i]) {
      ++out.dropped;
      continue;
    }
    Sample s = ds.samples[i];
    s.label = estimates[i]->position;
    s.label_source = LabelSource::geometric;
    s.has_audit = true;
    s.residual_norm = estimates[i]->residual_norm;
    s.converged = estimates[i]->converged;
    s.iterations = estimates[i]->iterations;
    out.samples.push_back(std::move(s));
    kept.push_back(i);
  }
  if (smoothing_window > 1) {
    const int half = smoothing_window / 2;
    std::vector<Vec2> raw;
    for (const auto& s : out.samples) raw.push_back(s.label);
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      Vec2 sum{};
      int count = 0;
      for (std::size_t j = 0; j < out.samples.size(); ++j) {
        if (out.samples[j].traj != out.samples[i].traj) continue;
        if (std::abs(out.samples[j].step - out.samples[i].step) > half) continue;
        sum = sum + raw[j];
        ++count;
      }
      out.samples[i].label = (1.0 / count) * sum;
    }
  }
  detail::check_drop_rate(out.samples.size(), out.dropped - ds.dropped);
  return out;
}

}  // namespace detail

Dataset label_dataset(const Dataset& ds, const AnchorRoster& roster, const Room& room, const LabelOptions& options,
                      int jobs) {
  if (!ds.fingerprint.empty() && ds.fingerprint != roster.fingerprint())
    throw Error("fingerprint_mismatch", "dataset was generated for a different anchor roster");
  const Localizer solver(room, roster, options.localize);
  const long n = static_cast<long>(ds.samples.size());
  std::vector<std::optional<GeoEstimate>> estimates(ds.samples.size());
#pragma omp parallel for schedule(dynamic, 8) num_threads(resolve_jobs(jobs))
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      estimates[k] = solver.localize(ds.samples[k].features);
    } catch (const Error&) {
      estimates[k].reset();
    }
  }
  return detail::assemble_labels(ds, estimates, options.smoothing_window);
}

}  // namespace mmloc
