#include "support.hpp"

#include "mmloc/eval.hpp"
#include "mmloc/geoloc.hpp"
#include "mmloc/io.hpp"
#include "mmloc/serial.hpp"

#include <cmath>

using namespace mmloc;

namespace {

FeatureVector features_at(Vec2 c, const Scenario& s, const AnchorRoster& roster, double sigma, Rng& rng) {
  return compute_features(synth_measurement(c, 0.4, roster, s.room, sigma, rng), roster);
}

double residual_norm(Vec2 x, const FeatureVector& fv, const AnchorRoster& roster) {
  double ss = 0.0;
  for (double r : adoa_residuals(x, fv, roster)) ss += r * r;
  return std::sqrt(ss);
}

Vec2 rotate(Vec2 p, Vec2 c, double th) {
  const Vec2 d = p - c;
  return c + Vec2{std::cos(th) * d.x - std::sin(th) * d.y, std::sin(th) * d.x + std::cos(th) * d.y};
}

}  // namespace

TEST_SUITE("geoloc") {

TEST_CASE("bearing examples") {
  CHECK(bearing({0, 0}, {1, 0}) == 0.0);
  CHECK(bearing({0, 0}, {0, 5}) == doctest::Approx(kPi / 2));
  CHECK(bearing({4, 3}, {-4, 3}) == doctest::Approx(kPi));
  CHECK_THROWS_CODE(bearing({1, 1}, {1, 1}), "degenerate");
}

TEST_CASE("bearing gradient matches central differences") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-10, 10);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec2 x{u(rng), u(rng)}, a{u(rng), u(rng)};
    if (distance(x, a) < 0.5) continue;
    const Vec2 g = bearing_gradient(x, a);
    const double h = 1e-6;
    const double fx = wrap_angle(bearing(x + Vec2{h, 0}, a) - bearing(x - Vec2{h, 0}, a)) / (2 * h);
    const double fy = wrap_angle(bearing(x + Vec2{0, h}, a) - bearing(x - Vec2{0, h}, a)) / (2 * h);
    const double scale = std::max(norm(g), 1e-3);
    worst = std::max({worst, std::abs(fx - g.x) / scale, std::abs(fy - g.y) / scale});
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("adoa residuals") {
  const Scenario s = io::stock_scenario("rect3");
  const AnchorRoster roster = build_anchor_roster(s);
  Rng rng(2);
  const Vec2 c{6.2, 3.7};
  const FeatureVector fv = features_at(c, s, roster, 0.0, rng);
  for (double r : adoa_residuals(c, fv, roster)) CHECK(std::abs(r) < 1e-12);
  std::uniform_real_distribution<double> ang(0, 2 * kPi);
  for (int i = 0; i < 50; ++i) {
    const double t = ang(rng);
    CHECK(residual_norm(c + Vec2{std::cos(t), std::sin(t)}, fv, roster) > 1e-3);
  }

  // Dropping a non-reference entry removes exactly that component.
  const Vec2 x{8.0, 5.0};
  const auto full = adoa_residuals(x, fv, roster);
  FeatureVector less = fv;
  less.mask[3] = 0;
  less.adoa[3] = kMissingAdoa;
  auto expect = full;
  expect.erase(expect.begin() + 3);
  CHECK(adoa_residuals(x, less, roster) == expect);
}

TEST_CASE("noiseless recovery on a 0.5 m client grid in both rooms") {
  for (const char* name : {"rect3", "lroom3"}) {
    const Scenario s = io::stock_scenario(name);
    const AnchorRoster roster = build_anchor_roster(s);
    const Localizer solver(s.room, roster);
    Rng rng(3);
    double worst = 0.0;
    int n = 0;
    for (Vec2 c : interior_grid(s.room, 0.5)) {
      const Measurement m = synth_measurement(c, 1.3, roster, s.room, 0.0, rng);
      int valid = 0;
      for (const Reading& r : m.readings) valid += r.valid;
      if (valid < 3) continue;
      const GeoEstimate e = solver.localize(compute_features(m, roster));
      worst = std::max(worst, distance(e.position, c));
      ++n;
    }
    INFO(name);
    CHECK(n > 500);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("refinement never ends worse than the best grid start") {
  const Scenario s = io::stock_scenario("lroom3");
  const AnchorRoster roster = build_anchor_roster(s);
  const Localizer solver(s.room, roster);
  Rng rng(4);
  for (int i = 0; i < 60; ++i) {
    const Vec2 c = testing::random_interior(s.room, rng);
    FeatureVector fv;
    try {
      fv = features_at(c, s, roster, deg2rad(7.0), rng);
    } catch (const Error&) {
      continue;
    }
    const GeoEstimate e = solver.localize(fv);
    double best_grid = 1e300;
    for (Vec2 g : solver.grid()) best_grid = std::min(best_grid, residual_norm(g, fv, roster));
    CHECK(e.residual_norm <= best_grid + 1e-12);
    CHECK(e.residual_norm == doctest::Approx(residual_norm(e.position, fv, roster)).epsilon(1e-9));
    CHECK(s.room.strictly_contains(e.position));
    CHECK(e.iterations <= 50);
  }
}

TEST_CASE("rotating the whole scene rotates the estimate") {
  const Scenario s = io::stock_scenario("rect3");
  const AnchorRoster roster = build_anchor_roster(s);
  const double th = 0.7;
  const Vec2 pivot = s.room.centroid();
  Scenario r = s;
  std::vector<Vec2> verts;
  for (Vec2 v : s.room.vertices()) verts.push_back(rotate(v, pivot, th));
  r.room = Room(verts);
  for (Vec2& a : r.aps) a = rotate(a, pivot, th);
  const AnchorRoster rroster = build_anchor_roster(r);
  REQUIRE(rroster.size() == roster.size());

  const Localizer a(s.room, roster), b(r.room, rroster);
  Rng rng(5);
  int compared = 0;
  for (int i = 0; i < 100; ++i) {
    const Vec2 c = testing::random_interior(s.room, rng, 0.3);
    const FeatureVector fv = features_at(c, s, roster, deg2rad(5.0), rng);
    const GeoEstimate ea = a.localize(fv), eb = b.localize(fv);
    if (!ea.converged || !eb.converged) continue;
    // Both solutions strictly inside, away from the projection step.
    if (s.room.boundary_distance(ea.position) < 1e-3) continue;
    ++compared;
    CHECK(distance(rotate(ea.position, pivot, th), eb.position) < 1e-6);
  }
  CHECK(compared > 80);
}

TEST_CASE("degenerate and unlocalizable inputs") {
  const Scenario s = io::stock_scenario("rect3");
  const AnchorRoster roster = build_anchor_roster(s);
  const Localizer solver(s.room, roster);

  FeatureVector one;
  one.ref_anchor = 0;
  one.adoa.assign(roster.size() - 1, kMissingAdoa);
  one.mask.assign(roster.size() - 1, 0);
  one.adoa[0] = 0.3;
  one.mask[0] = 1;
  CHECK_THROWS_CODE(solver.localize(one), "unlocalizable");

  // Every anchor reported in the same direction: no consistent position.
  FeatureVector flat = one;
  std::fill(flat.adoa.begin(), flat.adoa.end(), 0.0);
  std::fill(flat.mask.begin(), flat.mask.end(), 1);
  const GeoEstimate e = solver.localize(flat);
  CHECK(std::isfinite(e.residual_norm));
  CHECK(s.room.strictly_contains(e.position));
}

TEST_CASE("geometric labeling") {
  const Scenario s = io::stock_scenario("rect3");
  const AnchorRoster roster = build_anchor_roster(s);
  DatasetRequest rq;
  rq.n_trajectories = 5;
  rq.n_points = 20;
  rq.seed = 8;
  const Dataset clean = build_dataset(s, roster, rq);
  const Dataset labeled = label_dataset(clean, roster, s.room);
  REQUIRE(labeled.size() == clean.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const Sample& x = labeled.samples[i];
    CHECK(x.label_source == LabelSource::geometric);
    CHECK(x.has_audit);
    CHECK(x.truth == clean.samples[i].truth);
    CHECK(distance(x.label, x.truth) < 1e-3);
  }

  Scenario other = s;
  other.aps[0].x += 1.0;
  CHECK_THROWS_CODE(label_dataset(clean, build_anchor_roster(other), s.room), "fingerprint_mismatch");
}

TEST_CASE("L-room labels at 5 degrees are in the expected error band") {
  const Scenario s = io::stock_scenario("lroom3");
  const AnchorRoster roster = build_anchor_roster(s);
  DatasetRequest rq;
  rq.sigma = deg2rad(5.0);
  rq.seed = 1;
  const Dataset ds = build_dataset(s, roster, rq);
  const Dataset a = label_dataset(ds, roster, s.room, {}, 1);
  std::vector<double> err;
  for (const Sample& x : a.samples) err.push_back(distance(x.label, x.truth));
  const double med = eval::percentile(err, 0.5);
  CHECK(med >= 0.3);
  CHECK(med <= 1.0);
  CHECK(a.size() + a.dropped >= 900);

  // Relabeling, thread count and the serial reference all agree.
  const std::string csv = io::dataset_to_csv(a, true);
  CHECK(io::dataset_to_csv(label_dataset(ds, roster, s.room, {}, 3), true) == csv);
  CHECK(io::dataset_to_csv(label_dataset(a, roster, s.room), true) == csv);
  CHECK(io::dataset_to_csv(serial::label_dataset(ds, roster, s.room), true) == csv);
}

TEST_CASE("trajectory smoothing averages neighbouring estimates") {
  const Scenario s = io::stock_scenario("rect3");
  const AnchorRoster roster = build_anchor_roster(s);
  DatasetRequest rq;
  rq.n_trajectories = 3;
  rq.n_points = 30;
  rq.sigma = deg2rad(10.0);
  rq.seed = 2;
  const Dataset ds = build_dataset(s, roster, rq);
  const Dataset raw = label_dataset(ds, roster, s.room);
  LabelOptions opt;
  opt.smoothing_window = 5;
  const Dataset smooth = label_dataset(ds, roster, s.room, opt);
  REQUIRE(smooth.size() == raw.size());
  // An interior sample gets the plain mean of its five neighbours' raw labels.
  const std::size_t k = 10;
  Vec2 mean{0, 0};
  for (std::size_t j = k - 2; j <= k + 2; ++j) mean = mean + 0.2 * raw.samples[j].label;
  CHECK(smooth.samples[k].label.x == doctest::Approx(mean.x).epsilon(1e-12));
  CHECK(smooth.samples[k].label.y == doctest::Approx(mean.y).epsilon(1e-12));
}

}  // TEST_SUITE
