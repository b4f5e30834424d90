#include "mmloc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmloc::nn {

std::size_t LayerDims::parameter_count() const {
  const auto w = widths();
  std::size_t n = 0;
  for (std::size_t l = 0; l < 3; ++l)
    n += static_cast<std::size_t>(w[l]) * static_cast<std::size_t>(w[l + 1]) + static_cast<std::size_t>(w[l + 1]);
  return n;
}

LayerDims layer_sizes(std::size_t n_anchors, double node_factor) {
  if (n_anchors < 3) throw Error("invalid_argument", "need at least 3 anchors");
  if (!(node_factor > 0.0 && node_factor <= 1.0)) throw Error("invalid_argument", "node factor must lie in (0, 1]");
  LayerDims d;
  d.n_input = static_cast<int>(n_anchors) - 1;
  // Guard against k * n landing a hair above an integer (0.7 * 10 = 7.000000000000001).
  d.n_hidden1 = static_cast<int>(std::ceil(static_cast<double>(d.n_input) * node_factor - 1e-9));
  d.n_hidden2 = (d.n_hidden1 + 1) / 2;
  d.n_output = 2;
  return d;
}

Model::Model(LayerDims dims, double node_factor) : dims_(dims), node_factor_(node_factor) {
  const auto w = dims.widths();
  for (int v : w)
    if (v <= 0) throw Error("schema", "layer widths must be positive");
  std::size_t off = 0;
  for (std::size_t l = 0; l < 3; ++l) {
    offsets_[2 * l] = off;
    off += static_cast<std::size_t>(w[l]) * static_cast<std::size_t>(w[l + 1]);
    offsets_[2 * l + 1] = off;
    off += static_cast<std::size_t>(w[l + 1]);
  }
  params_.assign(off, 0.0);
  feature_mean.assign(static_cast<std::size_t>(dims.n_input), 0.0);
  feature_std.assign(static_cast<std::size_t>(dims.n_input), 1.0);
}

void Model::initialize(Rng& rng) {
  std::fill(params_.begin(), params_.end(), 0.0);
  for (int l = 0; l < 3; ++l) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in(l)));
    const std::size_t n = static_cast<std::size_t>(fan_in(l)) * static_cast<std::size_t>(fan_out(l));
    for (std::size_t i = 0; i < n; ++i) params_[weight_offset(l) + i] = dist(rng);
  }
}

void Model::validate() const {
  if (params_.size() != dims_.parameter_count()) throw Error("schema", "parameter count does not match layer dims");
  if (feature_mean.size() != static_cast<std::size_t>(dims_.n_input) ||
      feature_std.size() != static_cast<std::size_t>(dims_.n_input))
    throw Error("schema", "normalization statistics do not match the input width");
  for (double p : params_)
    if (!std::isfinite(p)) throw Error("schema", "model has non-finite parameters");
  for (std::size_t i = 0; i < feature_std.size(); ++i) {
    if (!std::isfinite(feature_mean[i]) || !(feature_std[i] > 0.0) || !std::isfinite(feature_std[i]))
      throw Error("schema", "normalization statistics must be finite with positive std");
  }
}

std::vector<double> normalize(const Model& model, const FeatureVector& fv) {
  const auto n = static_cast<std::size_t>(model.dims().n_input);
  if (fv.adoa.size() != n || fv.mask.size() != n)
    throw Error("schema", "feature length " + std::to_string(fv.adoa.size()) + " does not match model input " +
                              std::to_string(n));
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(fv.adoa[i])) throw Error("schema", "non-finite feature value");
    x[i] = fv.mask[i] ? (fv.adoa[i] - model.feature_mean[i]) / model.feature_std[i] : kMissingAdoa;
  }
  return x;
}

namespace {

// out_j = sum_i in_i W_ij + b_j
void dense(const Model& m, int layer, const std::vector<double>& in, std::vector<double>& out) {
  const int fi = m.fan_in(layer);
  const int fo = m.fan_out(layer);
  const double* w = &m.params()[m.weight_offset(layer)];
  const double* b = &m.params()[m.bias_offset(layer)];
  out.assign(b, b + fo);
  for (int i = 0; i < fi; ++i) {
    const double xi = in[static_cast<std::size_t>(i)];
    if (xi == 0.0) continue;
    const double* row = w + static_cast<std::ptrdiff_t>(i) * fo;
    for (int j = 0; j < fo; ++j) out[static_cast<std::size_t>(j)] += xi * row[j];
  }
}

void activate(const std::vector<double>& pre, const ForwardMode& mode, std::vector<double>& out,
              std::vector<double>& keep) {
  const std::size_t n = pre.size();
  out.resize(n);
  keep.assign(n, 1.0);
  const bool drop = mode.rng != nullptr && mode.dropout > 0.0;
  std::bernoulli_distribution survive(drop ? 1.0 - mode.dropout : 1.0);
  const double scale = drop ? 1.0 / (1.0 - mode.dropout) : 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (drop) keep[j] = survive(*mode.rng) ? scale : 0.0;
    out[j] = (pre[j] > 0.0 ? pre[j] : 0.0) * keep[j];
  }
}

}  // namespace

void forward_normalized(const Model& model, const std::vector<double>& input, const ForwardMode& mode,
                        ForwardCache& cache) {
  if (input.size() != static_cast<std::size_t>(model.dims().n_input))
    throw Error("schema", "input length does not match model");
  if (mode.rng && !(mode.dropout >= 0.0 && mode.dropout < 1.0))
    throw Error("invalid_argument", "dropout rate must lie in [0, 1)");
  cache.input = input;
  dense(model, 0, cache.input, cache.pre1);
  activate(cache.pre1, mode, cache.out1, cache.keep1);
  dense(model, 1, cache.out1, cache.pre2);
  activate(cache.pre2, mode, cache.out2, cache.keep2);
  std::vector<double> out;
  dense(model, 2, cache.out2, out);  // identity output layer
  cache.output = {out[0], out[1]};
}

Vec2 forward(const Model& model, const FeatureVector& fv, const ForwardMode& mode, ForwardCache& cache) {
  forward_normalized(model, normalize(model, fv), mode, cache);
  return cache.output;
}

double mse_loss(Vec2 truth, Vec2 estimate) {
  const double dx = truth.x - estimate.x;
  const double dy = truth.y - estimate.y;
  return dx * dx + dy * dy;
}

void backward_accumulate(const Model& model, const ForwardCache& cache, Vec2 truth, double scale,
                         std::vector<double>& grad) {
  const auto& d = model.dims();
  if (grad.size() != model.params().size()) throw Error("schema", "gradient buffer has wrong size");
  if (cache.input.size() != static_cast<std::size_t>(d.n_input) ||
      cache.pre1.size() != static_cast<std::size_t>(d.n_hidden1) ||
      cache.pre2.size() != static_cast<std::size_t>(d.n_hidden2))
    throw Error("stale_cache", "activation cache does not match the model");

  // Output layer.
  const std::vector<double> delta3{2.0 * (cache.output.x - truth.x) * scale, 2.0 * (cache.output.y - truth.y) * scale};
  std::vector<double> delta2(static_cast<std::size_t>(d.n_hidden2), 0.0);
  std::vector<double> delta1(static_cast<std::size_t>(d.n_hidden1), 0.0);

  auto layer_back = [&](int layer, const std::vector<double>& in, const std::vector<double>& delta_out,
                        std::vector<double>* delta_in) {
    const int fi = model.fan_in(layer);
    const int fo = model.fan_out(layer);
    double* gw = &grad[model.weight_offset(layer)];
    double* gb = &grad[model.bias_offset(layer)];
    const double* w = &model.params()[model.weight_offset(layer)];
    for (int j = 0; j < fo; ++j) gb[j] += delta_out[static_cast<std::size_t>(j)];
    for (int i = 0; i < fi; ++i) {
      const double xi = in[static_cast<std::size_t>(i)];
      const double* wrow = w + static_cast<std::ptrdiff_t>(i) * fo;
      double* grow = gw + static_cast<std::ptrdiff_t>(i) * fo;
      double back = 0.0;
      for (int j = 0; j < fo; ++j) {
        grow[j] += xi * delta_out[static_cast<std::size_t>(j)];
        back += wrow[j] * delta_out[static_cast<std::size_t>(j)];
      }
      if (delta_in) (*delta_in)[static_cast<std::size_t>(i)] = back;
    }
  };

  layer_back(2, cache.out2, delta3, &delta2);
  for (std::size_t j = 0; j < delta2.size(); ++j)
    delta2[j] = cache.pre2[j] > 0.0 ? delta2[j] * cache.keep2[j] : 0.0;
  layer_back(1, cache.out1, delta2, &delta1);
  for (std::size_t j = 0; j < delta1.size(); ++j)
    delta1[j] = cache.pre1[j] > 0.0 ? delta1[j] * cache.keep1[j] : 0.0;
  layer_back(0, cache.input, delta1, nullptr);
}

std::vector<double> backward(const Model& model, const ForwardCache& cache, Vec2 truth) {
  std::vector<double> grad(model.params().size(), 0.0);
  backward_accumulate(model, cache, truth, 1.0, grad);
  return grad;
}

void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grad, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size() || grad.size() != params.size())
    throw Error("schema", "optimizer state does not match the model");
  for (double g : grad)
    if (!std::isfinite(g)) throw Error("non_finite", "non-finite gradient; training aborted");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

Vec2 predict(const Model& model, const FeatureVector& fv) {
  ForwardCache cache;
  return forward(model, fv, ForwardMode::infer(), cache);
}

std::vector<Vec2> predict(const Model& model, const std::vector<FeatureVector>& batch) {
  std::vector<Vec2> out;
  out.reserve(batch.size());
  ForwardCache cache;
  for (const auto& fv : batch) out.push_back(forward(model, fv, ForwardMode::infer(), cache));
  return out;
}

}  // namespace mmloc::nn
