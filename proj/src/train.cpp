#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "mmloc/nn.hpp"
#include "mmloc/parallel.hpp"

namespace mmloc::nn {

void TrainConfig::validate() const {
  if (!(node_factor > 0.0 && node_factor <= 1.0)) throw Error("invalid_config", "node_factor must lie in (0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("invalid_config", "dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw Error("invalid_config", "learning_rate must be positive");
  if (batch_size < 1) throw Error("invalid_config", "batch_size must be positive");
  if (max_epochs < 1) throw Error("invalid_config", "max_epochs must be positive");
  if (patience < 1) throw Error("invalid_config", "patience must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw Error("invalid_config", "validation_fraction must lie in (0, 1)");
}

namespace {

struct Prepared {
  std::vector<std::vector<double>> inputs;
  std::vector<Vec2> labels;
};

Prepared prepare(const Model& model, const Dataset& ds, const std::vector<std::size_t>& idx) {
  Prepared p;
  p.inputs.reserve(idx.size());
  p.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    p.inputs.push_back(normalize(model, ds.samples[i].features));
    p.labels.push_back(ds.samples[i].label);
  }
  return p;
}

double evaluate_mse(const Model& model, const Prepared& data, ForwardCache& cache) {
  double sum = 0.0;
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    forward_normalized(model, data.inputs[i], ForwardMode::infer(), cache);
    sum += mse_loss(data.labels[i], cache.output);
  }
  return sum / static_cast<double>(data.inputs.size());
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& config) {
  config.validate();
  if (ds.empty()) throw Error("empty_split", "training dataset is empty");
  if (ds.n_anchors < 3) throw Error("schema", "dataset roster has fewer than 3 anchors");
  for (const auto& s : ds.samples)
    if (s.features.size() + 1 != ds.n_anchors) throw Error("schema", "sample width does not match the roster");

  // Canonical order makes the result independent of the input sample order.
  std::vector<std::size_t> order(ds.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = ds.samples[a];
    const auto& sb = ds.samples[b];
    return std::tie(sa.traj, sa.step) < std::tie(sb.traj, sb.step);
  });

  std::vector<int> trajs;
  for (std::size_t i : order)
    if (trajs.empty() || trajs.back() != ds.samples[i].traj) trajs.push_back(ds.samples[i].traj);
  if (trajs.size() < 2) throw Error("empty_split", "need at least two trajectories to hold out a validation split");

  Rng split_rng = make_stream(config.seed, 1);
  std::vector<int> shuffled = trajs;
  std::shuffle(shuffled.begin(), shuffled.end(), split_rng);
  auto n_val = static_cast<std::size_t>(std::lround(config.validation_fraction * static_cast<double>(trajs.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, trajs.size() - 1);
  std::vector<int> val_trajs(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(val_trajs.begin(), val_trajs.end());

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  for (std::size_t i : order) {
    const bool is_val = std::binary_search(val_trajs.begin(), val_trajs.end(), ds.samples[i].traj);
    (is_val ? val_idx : train_idx).push_back(i);
  }

  const LayerDims dims = layer_sizes(ds.n_anchors, config.node_factor);
  Model model(dims, config.node_factor);
  model.roster_fingerprint = ds.fingerprint;

  // Standardization statistics from the training split only, valid entries only.
  for (std::size_t k = 0; k < static_cast<std::size_t>(dims.n_input); ++k) {
    double sum = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i : train_idx) {
      const auto& f = ds.samples[i].features;
      if (f.mask[k]) {
        sum += f.adoa[k];
        ++cnt;
      }
    }
    const double mean = cnt ? sum / static_cast<double>(cnt) : 0.0;
    double ss = 0.0;
    for (std::size_t i : train_idx) {
      const auto& f = ds.samples[i].features;
      if (f.mask[k]) ss += (f.adoa[k] - mean) * (f.adoa[k] - mean);
    }
    const double sd = cnt > 1 ? std::sqrt(ss / static_cast<double>(cnt)) : 0.0;
    model.feature_mean[k] = mean;
    model.feature_std[k] = sd > 1e-12 ? sd : 1.0;
  }

  Rng init_rng = make_stream(config.seed, 2);
  model.initialize(init_rng);
  Rng rng = make_stream(config.seed, 3);

  const Prepared train_data = prepare(model, ds, train_idx);
  const Prepared val_data = prepare(model, ds, val_idx);
  const std::size_t n_train = train_data.inputs.size();

  TrainResult result;
  result.validation_trajectories = val_trajs;
  AdamState adam(model.params().size());
  std::vector<double> grad(model.params().size());
  ForwardCache cache;
  std::vector<std::size_t> perm(n_train);
  std::iota(perm.begin(), perm.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_params = model.params();
  int since_best = 0;
  const ForwardMode mode = ForwardMode::train(config.dropout, rng);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(n_train, start + static_cast<std::size_t>(config.batch_size));
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = perm[b];
        forward_normalized(model, train_data.inputs[i], mode, cache);
        loss_sum += mse_loss(train_data.labels[i], cache.output);
        backward_accumulate(model, cache, train_data.labels[i], scale, grad);
      }
      adam_step(adam, model, grad, config.learning_rate);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = loss_sum / static_cast<double>(n_train);
    rec.validation_mse = evaluate_mse(model, val_data, cache);
    if (!std::isfinite(rec.train_mse) || !std::isfinite(rec.validation_mse))
      throw Error("non_finite", "training loss became non-finite at epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    if (rec.validation_mse < best) {
      best = rec.validation_mse;
      best_params = model.params();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  model.params() = best_params;
  model.meta.sigma = ds.sigma;
  model.meta.label_source = ds.samples.front().label_source == LabelSource::truth ? "truth" : "geometric";
  model.meta.seed = config.seed;
  model.meta.dropout = config.dropout;
  model.meta.learning_rate = config.learning_rate;
  model.meta.best_epoch = result.best_epoch;
  model.meta.validation_mse = best;
  model.meta.n_train = ds.size();
  result.best_validation_mse = best;
  result.model = std::move(model);
  return result;
}

std::vector<double> log_ladder(double lo, double hi, int per_decade) {
  if (!(lo > 0.0 && hi >= lo) || per_decade < 1) throw Error("invalid_argument", "bad learning-rate ladder");
  const double decades = std::log10(hi / lo);
  const auto steps = static_cast<int>(std::lround(decades * per_decade));
  std::vector<double> out;
  for (int i = 0; i <= steps; ++i)
    out.push_back(std::pow(10.0, std::log10(lo) + static_cast<double>(i) / per_decade));
  return out;
}

TuneGrid default_grid() { return {{0.6, 0.7, 0.8}, {0.0, 0.05, 0.10}, log_ladder(1e-4, 1e-2, 10)}; }

TuneResult tune(const Dataset& ds, const TuneGrid& grid, const TrainConfig& base, int jobs) {
  if (grid.size() == 0) throw Error("invalid_argument", "tuning grid is empty");
  std::vector<TrainConfig> cells;
  for (double k : grid.node_factors)
    for (double p : grid.dropouts)
      for (double r : grid.learning_rates) {
        TrainConfig c = base;
        c.node_factor = k;
        c.dropout = p;
        c.learning_rate = r;
        cells.push_back(c);
      }

  const long n = static_cast<long>(cells.size());
  std::vector<LeaderboardEntry> board(cells.size());
  std::vector<std::optional<Model>> models(cells.size());
#pragma omp parallel for schedule(dynamic) num_threads(resolve_jobs(jobs))
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    LeaderboardEntry& e = board[k];
    e.config = cells[k];
    try {
      e.parameter_count = layer_sizes(ds.n_anchors, cells[k].node_factor).parameter_count();
      TrainResult r = train(ds, cells[k]);
      e.validation_mse = r.best_validation_mse;
      e.best_epoch = r.best_epoch;
      models[k] = std::move(r.model);
    } catch (const std::exception& ex) {
      e.error = ex.what();
      e.validation_mse = std::numeric_limits<double>::infinity();
    }
  }

  std::vector<std::size_t> rank(cells.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = board[a];
    const auto& y = board[b];
    if (x.error.empty() != y.error.empty()) return x.error.empty();
    return std::tie(x.validation_mse, x.parameter_count, x.config.learning_rate, x.config.dropout) <
           std::tie(y.validation_mse, y.parameter_count, y.config.learning_rate, y.config.dropout);
  });

  TuneResult out;
  for (std::size_t i : rank) out.leaderboard.push_back(board[i]);
  if (!out.leaderboard.front().error.empty())
    throw Error("tune_failed", "every grid cell failed: " + out.leaderboard.front().error);
  out.best = board[rank.front()].config;
  out.model = std::move(*models[rank.front()]);
  return out;
}

}  // namespace mmloc::nn
