#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mmloc/features.hpp"

namespace mmloc::nn {

struct LayerDims {
  int n_input = 0;
  int n_hidden1 = 0;
  int n_hidden2 = 0;
  int n_output = 2;

  std::array<int, 4> widths() const { return {n_input, n_hidden1, n_hidden2, n_output}; }
  std::size_t parameter_count() const;
  friend bool operator==(const LayerDims&, const LayerDims&) = default;
};

/// Layer widths for a roster of `n_anchors` anchors and node factor k:
/// inputs N_a - 1, hidden ceil(k * inputs) then half of that (rounded up), 2 outputs.
LayerDims layer_sizes(std::size_t n_anchors, double node_factor);

struct TrainingMeta {
  double sigma = 0.0;  // radians
  std::string label_source = "truth";
  std::uint64_t seed = 0;
  double dropout = 0.0;
  double learning_rate = 0.0;
  int best_epoch = 0;
  double validation_mse = 0.0;
  std::size_t n_train = 0;  // samples offered to train(), before the validation split
};

/// Three dense layers. Weights of layer l form an (n_{l-1} x n_l) row-major
/// matrix; every parameter lives in one flat vector so optimizers and
/// gradient checks can treat them uniformly.
class Model {
 public:
  Model() = default;
  Model(LayerDims dims, double node_factor);

  const LayerDims& dims() const { return dims_; }
  double node_factor() const { return node_factor_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::size_t weight_offset(int layer) const { return offsets_[static_cast<std::size_t>(2 * layer)]; }
  std::size_t bias_offset(int layer) const { return offsets_[static_cast<std::size_t>(2 * layer + 1)]; }
  int fan_in(int layer) const { return dims_.widths()[static_cast<std::size_t>(layer)]; }
  int fan_out(int layer) const { return dims_.widths()[static_cast<std::size_t>(layer + 1)]; }

  double& weight(int layer, int i, int j) { return params_[weight_offset(layer) + static_cast<std::size_t>(i * fan_out(layer) + j)]; }
  double weight(int layer, int i, int j) const { return params_[weight_offset(layer) + static_cast<std::size_t>(i * fan_out(layer) + j)]; }
  double& bias(int layer, int j) { return params_[bias_offset(layer) + static_cast<std::size_t>(j)]; }
  double bias(int layer, int j) const { return params_[bias_offset(layer) + static_cast<std::size_t>(j)]; }

  /// He-normal weights (std sqrt(2 / fan_in)), zero biases.
  void initialize(Rng& rng);

  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  std::string roster_fingerprint;
  std::string reference_rule = "first_valid";
  TrainingMeta meta;

  /// Throws Error("schema") on inconsistent shapes or non-finite values.
  void validate() const;

 private:
  LayerDims dims_;
  double node_factor_ = 0.0;
  std::array<std::size_t, 6> offsets_{};
  std::vector<double> params_;
};

/// Activations retained for backpropagation.
struct ForwardCache {
  std::vector<double> input;   // normalized features
  std::vector<double> pre1, out1, keep1;
  std::vector<double> pre2, out2, keep2;
  Vec2 output;
};

/// Dropout configuration of a forward pass; inference when rate is 0 or rng is null.
struct ForwardMode {
  double dropout = 0.0;
  Rng* rng = nullptr;

  static ForwardMode infer() { return {}; }
  static ForwardMode train(double p, Rng& rng) { return {p, &rng}; }
};

/// Standardized network input: valid entries use the model statistics,
/// missing entries keep the sentinel value.
std::vector<double> normalize(const Model& model, const FeatureVector& fv);

void forward_normalized(const Model& model, const std::vector<double>& input, const ForwardMode& mode,
                        ForwardCache& cache);
Vec2 forward(const Model& model, const FeatureVector& fv, const ForwardMode& mode, ForwardCache& cache);

/// Squared Euclidean error between truth and estimate.
double mse_loss(Vec2 truth, Vec2 estimate);

/// Gradient of mse_loss(truth, cache.output) with respect to model.params().
std::vector<double> backward(const Model& model, const ForwardCache& cache, Vec2 truth);
void backward_accumulate(const Model& model, const ForwardCache& cache, Vec2 truth, double scale,
                         std::vector<double>& grad);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grad, double lr);
inline void adam_step(AdamState& state, Model& model, const std::vector<double>& grad, double lr) {
  adam_step(state, model.params(), grad, lr);
}

struct TrainConfig {
  double node_factor = 0.7;
  double dropout = 0.05;
  double learning_rate = 0.002;
  int batch_size = 16;
  int max_epochs = 3000;
  int patience = 300;
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;
  double validation_mse = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_validation_mse = 0.0;
  std::vector<int> validation_trajectories;
};

/// Mini-batch Adam with trajectory-stratified validation split and early
/// stopping. Returns parameters of the best validation epoch.
TrainResult train(const Dataset& ds, const TrainConfig& config);

Vec2 predict(const Model& model, const FeatureVector& fv);
std::vector<Vec2> predict(const Model& model, const std::vector<FeatureVector>& batch);

struct TuneGrid {
  std::vector<double> node_factors;
  std::vector<double> dropouts;
  std::vector<double> learning_rates;

  std::size_t size() const { return node_factors.size() * dropouts.size() * learning_rates.size(); }
};

/// Learning-rate ladder from `lo` to `hi` with `per_decade` multiplicative steps per decade.
std::vector<double> log_ladder(double lo, double hi, int per_decade);
/// k in {0.6, 0.7, 0.8}, p in {0, 0.05, 0.1}, r on the 1e-4..1e-2 ladder (ten per decade).
TuneGrid default_grid();

struct LeaderboardEntry {
  TrainConfig config;
  std::size_t parameter_count = 0;
  double validation_mse = 0.0;
  int best_epoch = 0;
  std::string error;  // non-empty when training failed
};

struct TuneResult {
  TrainConfig best;
  Model model;
  std::vector<LeaderboardEntry> leaderboard;  // best first, failures last
};

/// Exhaustive grid search. Each cell trains with `base.seed`, so the winning
/// config retrains to the same model. Cells run concurrently.
TuneResult tune(const Dataset& ds, const TuneGrid& grid, const TrainConfig& base, int jobs = 0);

}  // namespace mmloc::nn
