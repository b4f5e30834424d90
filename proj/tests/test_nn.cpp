#include "support.hpp"

#include "mmloc/io.hpp"
#include "mmloc/nn.hpp"

#include <cmath>

using namespace mmloc;
using namespace mmloc::nn;

namespace {

Model random_model(LayerDims dims, Rng& rng) {
  Model m(dims, 0.7);
  std::normal_distribution<double> g(0.0, 0.7);
  for (double& p : m.params()) p = g(rng);
  m.feature_mean.assign(static_cast<std::size_t>(dims.n_input), 0.0);
  m.feature_std.assign(static_cast<std::size_t>(dims.n_input), 1.0);
  return m;
}

double loss_at(const Model& m, const std::vector<double>& x, Vec2 truth) {
  ForwardCache c;
  forward_normalized(m, x, ForwardMode::infer(), c);
  return mse_loss(truth, c.output);
}

// Tiny dataset in the features-module shape: n_traj trajectories of n_step
// samples with a smooth synthetic label.
Dataset synthetic_dataset(int n_traj, int n_step, int width, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Dataset ds;
  ds.n_anchors = static_cast<std::size_t>(width + 1);
  ds.fingerprint = "synthetic";
  for (int t = 0; t < n_traj; ++t)
    for (int s = 0; s < n_step; ++s) {
      Sample x;
      x.traj = t;
      x.step = s;
      x.features.adoa.resize(static_cast<std::size_t>(width));
      x.features.mask.assign(static_cast<std::size_t>(width), 1);
      for (double& v : x.features.adoa) v = u(rng);
      x.label = {3.0 + x.features.adoa[0] - 0.5 * x.features.adoa[1], 2.0 + 0.8 * x.features.adoa[1]};
      x.truth = x.label;
      ds.samples.push_back(x);
    }
  return ds;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("layer_sizes examples") {
  CHECK(layer_sizes(19, 0.7) == LayerDims{18, 13, 7, 2});
  CHECK(layer_sizes(15, 0.7) == LayerDims{14, 10, 5, 2});
  CHECK(layer_sizes(3, 0.6) == LayerDims{2, 2, 1, 2});
  CHECK(layer_sizes(11, 0.7) == LayerDims{10, 7, 4, 2});  // 10 * 0.7 is not quite 7 in binary
  CHECK(layer_sizes(19, 0.7).parameter_count() == 361);
  CHECK(layer_sizes(19, 0.7).parameter_count() < 1000);
}

TEST_CASE("layer_sizes follows the ceiling rule for every roster size") {
  for (std::size_t na = 3; na <= 40; ++na)
    for (double k : {0.6, 0.7, 0.8, 1.0}) {
      const LayerDims d = layer_sizes(na, k);
      const int n = static_cast<int>(na) - 1;
      // Integer oracle: smallest h with 10h >= k10 * n.
      const int k10 = static_cast<int>(std::lround(k * 10));
      const int h1 = (k10 * n + 9) / 10;
      CHECK(d == LayerDims{n, h1, (h1 + 1) / 2, 2});
    }
}

TEST_CASE("forward: zero parameters give the origin") {
  Model m(LayerDims{4, 3, 2, 2}, 0.7);
  m.feature_mean.assign(4, 0.0);
  m.feature_std.assign(4, 1.0);
  ForwardCache c;
  forward_normalized(m, {1.0, -2.0, 3.0, -10.0}, ForwardMode::infer(), c);
  CHECK(c.output == Vec2{0.0, 0.0});
}

TEST_CASE("forward: hand-evaluated 2-2-1-2 network") {
  Model m(LayerDims{2, 2, 1, 2}, 0.6);
  m.feature_mean = {1.0, -1.0};
  m.feature_std = {2.0, 0.5};
  // Layer 1.
  m.weight(0, 0, 0) = 0.5;
  m.weight(0, 0, 1) = -1.0;
  m.weight(0, 1, 0) = 0.25;
  m.weight(0, 1, 1) = 0.75;
  m.bias(0, 0) = 0.1;
  m.bias(0, 1) = -0.2;
  // Layer 2.
  m.weight(1, 0, 0) = 2.0;
  m.weight(1, 1, 0) = -0.5;
  m.bias(1, 0) = 0.3;
  // Output.
  m.weight(2, 0, 0) = 1.5;
  m.weight(2, 0, 1) = -2.0;
  m.bias(2, 0) = 4.0;
  m.bias(2, 1) = 1.0;

  FeatureVector fv{{3.0, 0.0}, 0, {1, 1}};
  // Normalized input: ((3-1)/2, (0+1)/0.5) = (1, 2)
  // h1 = relu(1*0.5 + 2*0.25 + 0.1, 1*-1 + 2*0.75 - 0.2) = (1.1, 0.3)
  // h2 = relu(1.1*2 - 0.3*0.5 + 0.3) = 2.35
  // y  = (2.35*1.5 + 4, 2.35*-2 + 1) = (7.525, -3.7)
  const Vec2 y = predict(m, fv);
  CHECK(y.x == doctest::Approx(7.525).epsilon(1e-14));
  CHECK(y.y == doctest::Approx(-3.7).epsilon(1e-14));

  // Missing entries bypass standardization.
  FeatureVector missing{{kMissingAdoa, 0.0}, 0, {0, 1}};
  CHECK(normalize(m, missing) == std::vector<double>{kMissingAdoa, 2.0});
}

TEST_CASE("forward: dropout off means train and infer agree") {
  Rng rng(1);
  const Model m = random_model({6, 5, 3, 2}, rng);
  const std::vector<double> x{0.1, -0.4, 1.2, -10.0, 0.3, 0.9};
  ForwardCache a, b;
  forward_normalized(m, x, ForwardMode::infer(), a);
  Rng drng(2);
  forward_normalized(m, x, ForwardMode::train(0.0, drng), b);
  CHECK(a.output == b.output);
}

TEST_CASE("mse_loss examples") {
  CHECK(mse_loss({1, 2}, {1, 2}) == 0.0);
  CHECK(mse_loss({0, 0}, {3, 4}) == 25.0);
  CHECK(mse_loss({-1, 1}, {1, -1}) == 8.0);
}

TEST_CASE("backward matches central finite differences on 20 random models") {
  Rng rng(2024);
  std::uniform_int_distribution<int> width(2, 8);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n_in = width(rng);
    const int h1 = width(rng);
    const LayerDims dims{n_in, h1, (h1 + 1) / 2, 2};
    Model m = random_model(dims, rng);
    std::vector<double> x(static_cast<std::size_t>(n_in));
    for (double& v : x) v = g(rng);
    if (n_in > 3) x[1] = kMissingAdoa;
    const Vec2 truth{g(rng) * 3, g(rng) * 3};

    ForwardCache c;
    forward_normalized(m, x, ForwardMode::infer(), c);
    const std::vector<double> grad = backward(m, c, truth);
    const double h = 1e-5;
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      const double keep = m.params()[i];
      m.params()[i] = keep + h;
      const double up = loss_at(m, x, truth);
      m.params()[i] = keep - h;
      const double dn = loss_at(m, x, truth);
      m.params()[i] = keep;
      const double fd = (up - dn) / (2 * h);
      const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-2});
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("backward: exact output gives zero output-bias gradient") {
  Rng rng(3);
  const Model m = random_model({5, 4, 2, 2}, rng);
  ForwardCache c;
  forward_normalized(m, {0.2, 0.1, -0.3, 1.0, 0.5}, ForwardMode::infer(), c);
  const auto grad = backward(m, c, c.output);
  CHECK(grad[m.bias_offset(2)] == 0.0);
  CHECK(grad[m.bias_offset(2) + 1] == 0.0);
}

TEST_CASE("backward: dropped units get exactly zero gradient") {
  Rng rng(4);
  const Model m = random_model({6, 8, 4, 2}, rng);
  const std::vector<double> x{0.5, -0.5, 1.0, 0.25, -1.5, 2.0};
  Rng drng(9);
  int dropped = 0;
  for (int rep = 0; rep < 20; ++rep) {
    ForwardCache c;
    forward_normalized(m, x, ForwardMode::train(0.5, drng), c);
    const auto grad = backward(m, c, {1.0, 2.0});
    for (int j = 0; j < 8; ++j) {
      if (c.keep1[static_cast<std::size_t>(j)] != 0.0) continue;
      ++dropped;
      CHECK(grad[m.bias_offset(0) + static_cast<std::size_t>(j)] == 0.0);
      for (int i = 0; i < 6; ++i) CHECK(grad[m.weight_offset(0) + static_cast<std::size_t>(i * 8 + j)] == 0.0);
      for (int k = 0; k < 4; ++k) CHECK(grad[m.weight_offset(1) + static_cast<std::size_t>(j * 4 + k)] == 0.0);
    }
  }
  CHECK(dropped > 0);
}

TEST_CASE("backward rejects a cache from another model") {
  Rng rng(5);
  const Model a = random_model({3, 2, 1, 2}, rng);
  const Model b = random_model({4, 3, 2, 2}, rng);
  ForwardCache c;
  forward_normalized(a, {0.1, 0.2, 0.3}, ForwardMode::infer(), c);
  CHECK_THROWS_CODE(backward(b, c, {0, 0}), "stale_cache");
}

TEST_CASE("dropout preserves the expected activation") {
  Rng rng(6);
  const Model m = random_model({5, 6, 3, 2}, rng);
  const std::vector<double> x{0.3, 0.8, -0.2, 1.1, 0.5};
  ForwardCache ref;
  forward_normalized(m, x, ForwardMode::infer(), ref);
  std::vector<double> acc(6, 0.0);
  Rng drng(7);
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    ForwardCache c;
    forward_normalized(m, x, ForwardMode::train(0.1, drng), c);
    for (std::size_t j = 0; j < 6; ++j) acc[j] += c.out1[j];
  }
  for (std::size_t j = 0; j < 6; ++j) {
    if (ref.out1[j] == 0.0) {
      CHECK(acc[j] == 0.0);
    } else {
      CHECK(std::abs(acc[j] / n - ref.out1[j]) <= 0.02 * ref.out1[j]);
    }
  }
}

TEST_CASE("adam: zero gradient leaves parameters alone") {
  std::vector<double> p{1.0, -2.0, 3.0};
  AdamState st(3);
  adam_step(st, p, {0.0, 0.0, 0.0}, 0.01);
  CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
  CHECK(st.step == 1);
}

TEST_CASE("adam: first step moves each coordinate by about -r*sign(g)") {
  std::vector<double> p{0.0, 0.0, 0.0, 0.0};
  AdamState st(4);
  const double r = 0.002;
  adam_step(st, p, {3.0, -0.01, 1e4, -7.0}, r);
  CHECK(p[0] == doctest::Approx(-r).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(r).epsilon(1e-5));
  CHECK(p[2] == doctest::Approx(-r).epsilon(1e-6));
  CHECK(p[3] == doctest::Approx(r).epsilon(1e-6));
  CHECK_THROWS_CODE(adam_step(st, p, {std::nan(""), 0.0, 0.0, 0.0}, r), "non_finite");
}

TEST_CASE("adam reaches the least-squares solution of a linear model") {
  // y = a x + b, full batch. Closed form from the normal equations.
  Rng rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> xs(50), ys(50);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = u(rng);
    ys[i] = 0.7 * xs[i] - 0.3 + 0.05 * u(rng);
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double a_ls = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double b_ls = (sy - a_ls * sx) / n;

  std::vector<double> p{0.0, 0.0};
  AdamState st(2);
  for (int step = 0; step < 300; ++step) {
    std::vector<double> g{0.0, 0.0};
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double e = p[0] * xs[i] + p[1] - ys[i];
      g[0] += 2 * e * xs[i] / n;
      g[1] += 2 * e / n;
    }
    adam_step(st, p, g, 0.05);
  }
  CHECK(std::abs(p[0] - a_ls) < 1e-3);
  CHECK(std::abs(p[1] - b_ls) < 1e-3);
}

TEST_CASE("train memorizes a single repeated sample") {
  Dataset ds = synthetic_dataset(10, 8, 4, 1);
  for (Sample& s : ds.samples) {
    s.features = ds.samples.front().features;
    s.label = s.truth = {5.0, 3.0};
  }
  TrainConfig cfg;
  cfg.dropout = 0.0;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  const TrainResult r = train(ds, cfg);
  double best = 1e9;
  for (const auto& e : r.history) best = std::min(best, e.train_mse);
  CHECK(best < 1e-4);
}

TEST_CASE("train is deterministic and ignores input sample order") {
  const Dataset ds = synthetic_dataset(12, 10, 5, 2);
  TrainConfig cfg;
  cfg.max_epochs = 40;
  cfg.seed = 5;
  const TrainResult a = train(ds, cfg);
  const TrainResult b = train(ds, cfg);
  CHECK(a.model.params() == b.model.params());
  Dataset shuffled = ds;
  Rng rng(3);
  std::shuffle(shuffled.samples.begin(), shuffled.samples.end(), rng);
  const TrainResult c = train(shuffled, cfg);
  CHECK(a.model.params() == c.model.params());
  REQUIRE(a.history.size() == c.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_mse == c.history[i].train_mse);
    CHECK(a.history[i].validation_mse == c.history[i].validation_mse);
  }
  CHECK(a.best_epoch >= 1);
  CHECK(a.best_validation_mse == a.history[static_cast<std::size_t>(a.best_epoch - 1)].validation_mse);
  cfg.seed = 6;
  CHECK(train(ds, cfg).model.params() != a.model.params());
}

TEST_CASE("validation split is by trajectory and never feeds normalization") {
  const Dataset ds = synthetic_dataset(10, 10, 4, 3);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  const TrainResult a = train(ds, cfg);
  CHECK(a.validation_trajectories.size() == 2);

  Dataset tampered = ds;
  Rng rng(4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (Sample& s : tampered.samples)
    if (std::find(a.validation_trajectories.begin(), a.validation_trajectories.end(), s.traj) !=
        a.validation_trajectories.end())
      for (double& v : s.features.adoa) v = u(rng);
  const TrainResult b = train(tampered, cfg);
  CHECK(b.validation_trajectories == a.validation_trajectories);
  CHECK(b.model.feature_mean == a.model.feature_mean);
  CHECK(b.model.feature_std == a.model.feature_std);
}

TEST_CASE("train errors") {
  const Dataset one = synthetic_dataset(1, 20, 3, 1);
  CHECK_THROWS_CODE(train(one, TrainConfig{}), "empty_split");
  CHECK_THROWS_CODE(train(Dataset{}, TrainConfig{}), "empty_split");
  TrainConfig bad;
  bad.dropout = 1.0;
  CHECK_THROWS_CODE(train(synthetic_dataset(4, 4, 3, 1), bad), "invalid_config");
  bad = TrainConfig{};
  bad.node_factor = 0.0;
  CHECK_THROWS_CODE(bad.validate(), "invalid_config");
}

TEST_CASE("predict agrees with forward and keeps batch order") {
  const Dataset ds = synthetic_dataset(6, 10, 4, 4);
  TrainConfig cfg;
  cfg.max_epochs = 20;
  const Model m = train(ds, cfg).model;
  std::vector<FeatureVector> batch;
  for (const Sample& s : ds.samples) batch.push_back(s.features);
  const auto out = predict(m, batch);
  REQUIRE(out.size() == batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ForwardCache c;
    CHECK(forward(m, batch[i], ForwardMode::infer(), c) == out[i]);
    CHECK(predict(m, batch[i]) == out[i]);
  }
  FeatureVector wrong{{0.0}, 0, {1}};
  CHECK_THROWS_CODE(predict(m, wrong), "schema");
}

TEST_CASE("learning-rate ladder and default grid") {
  const auto r = log_ladder(1e-4, 1e-2, 10);
  REQUIRE(r.size() == 21);
  CHECK(r.front() == doctest::Approx(1e-4));
  CHECK(r.back() == doctest::Approx(1e-2));
  for (std::size_t i = 1; i < r.size(); ++i) CHECK(r[i] / r[i - 1] == doctest::Approx(std::pow(10.0, 0.1)));
  const TuneGrid g = default_grid();
  CHECK(g.size() == 189);
  CHECK(g.node_factors == std::vector<double>{0.6, 0.7, 0.8});
  CHECK(g.dropouts == std::vector<double>{0.0, 0.05, 0.1});
}

TEST_CASE("tune: single cell, leaderboard order, and bit-exact retraining") {
  const Dataset ds = synthetic_dataset(8, 10, 4, 5);
  TrainConfig base;
  base.max_epochs = 15;
  base.seed = 9;

  TuneGrid one{{0.8}, {0.1}, {0.003}};
  const TuneResult single = tune(ds, one, base);
  CHECK(single.best.node_factor == 0.8);
  CHECK(single.best.dropout == 0.1);
  CHECK(single.best.learning_rate == 0.003);
  CHECK(single.leaderboard.size() == 1);

  TuneGrid grid{{0.6, 1.0}, {0.0, 0.05}, {0.001, 0.01}};
  const TuneResult a = tune(ds, grid, base, 1);
  const TuneResult b = tune(ds, grid, base, 4);
  REQUIRE(a.leaderboard.size() == 8);
  for (std::size_t i = 1; i < a.leaderboard.size(); ++i)
    CHECK(a.leaderboard[i - 1].validation_mse <= a.leaderboard[i].validation_mse);
  CHECK(a.best == b.best);
  CHECK(a.model.params() == b.model.params());
  CHECK(train(ds, a.best).model.params() == a.model.params());
}

TEST_CASE("model JSON round trip is value-exact") {
  const Dataset ds = synthetic_dataset(6, 10, 5, 6);
  TrainConfig cfg;
  cfg.max_epochs = 10;
  const Model m = train(ds, cfg).model;
  const std::string text = io::model_to_json(m);
  const Model back = io::model_from_json(text);
  CHECK(back.dims() == m.dims());
  CHECK(back.node_factor() == m.node_factor());
  CHECK(back.params() == m.params());
  CHECK(back.feature_mean == m.feature_mean);
  CHECK(back.feature_std == m.feature_std);
  CHECK(back.roster_fingerprint == m.roster_fingerprint);
  CHECK(back.meta.seed == m.meta.seed);
  CHECK(io::model_to_json(back) == text);
  CHECK_THROWS_CODE(io::model_from_json(R"({"dims":[2,2,1,2]})"), "schema");
}

}  // TEST_SUITE
