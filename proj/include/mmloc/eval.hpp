#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmloc/features.hpp"
#include "mmloc/geoloc.hpp"
#include "mmloc/nn.hpp"

namespace mmloc::eval {

double euclidean_error(Vec2 estimate, Vec2 truth);

struct ErrorSummary {
  std::vector<double> errors;
  double p10 = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double p90 = 0.0;
  double mean = 0.0;
  double submeter = 0.0;  // fraction of errors below 1 m
  std::size_t n = 0;

  double iqr() const { return q3 - q1; }
};

/// Linear interpolation between order statistics; q in [0, 1].
double percentile(std::vector<double> values, double q);
ErrorSummary summarize(const std::vector<double>& errors);
/// Right-continuous empirical CDF as (error, fraction <= error) pairs.
std::vector<std::pair<double, double>> error_cdf(const std::vector<double>& errors);

/// Per-sample errors of a trained network against the dataset's truth.
std::vector<double> nn_errors(const nn::Model& model, const Dataset& test);
/// Per-sample errors of the geometric localizer; unlocalizable samples are skipped.
std::vector<double> geo_errors(const Localizer& solver, const Dataset& test);

struct ExperimentSpec {
  std::string name = "experiment";
  std::string scenario = "rect3";
  std::vector<double> sigmas_deg{5.0};
  std::vector<LabelSource> label_sources{LabelSource::truth};
  std::vector<int> train_sizes{900};
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> algorithms{"nn", "geo"};
  int test_trajectories = 30;
  int test_points = 30;
  /// Test sets use seed + offset so they never share streams with training.
  std::uint64_t test_seed_offset = 1000;
  nn::TrainConfig train;
  std::optional<nn::TuneGrid> tune;
  LabelOptions labeling;
  int trajectory_index = 0;
};

ExperimentSpec parse_experiment_spec(const std::string& json_text);

struct SeedRun {
  std::uint64_t seed = 0;
  std::optional<ErrorSummary> summary;
  std::string error;
  std::optional<nn::TrainConfig> chosen;  // tuned or fixed config of NN runs
};

struct TrajectoryRow {
  int step = 0;
  Vec2 truth;
  std::optional<Vec2> estimate;
};

struct ConfigResult {
  std::string key;
  std::string scenario;
  double sigma_deg = 0.0;
  std::string algo;          // "nn" or "geo"
  std::string label_source;  // "truth", "geometric", or "-" for geo
  int n_train = 0;
  std::vector<SeedRun> runs;
  /// Median over successful seeds of each statistic.
  std::optional<ErrorSummary> seed_median;
  std::vector<double> pooled_errors;
  std::vector<TrajectoryRow> trajectory;  // first seed, chosen test trajectory
};

struct ExperimentReport {
  std::string name;
  std::vector<ConfigResult> configs;  // sorted by key

  const ConfigResult* find(const std::string& key) const;
};

std::string config_key(const std::string& scenario, double sigma_deg, const std::string& algo,
                       const std::string& label, int n_train);

ExperimentReport run_experiment(const ExperimentSpec& spec, int jobs = 0);

/// summary.csv header plus one row per seed run and one seed-median row per configuration.
std::string summary_csv(const ExperimentReport& report);
std::string summary_header();
std::string summary_row(const ConfigResult& c, const std::string& seed, bool seed_median, const ErrorSummary* s,
                        const std::string& error);
std::string cdf_csv(const std::vector<double>& errors);
std::string trajectory_csv(const std::vector<TrajectoryRow>& rows);

/// Writes summary.csv, cdf_<key>.csv and trajectory_<key>.csv under `dir`.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace mmloc::eval
