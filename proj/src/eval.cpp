#include "mmloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>

#include "json.hpp"
#include "mmloc/io.hpp"
#include "mmloc/parallel.hpp"

namespace mmloc::eval {

double euclidean_error(Vec2 estimate, Vec2 truth) { return distance(estimate, truth); }

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("empty_input", "percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ErrorSummary summarize(const std::vector<double>& errors) {
  if (errors.empty()) throw Error("empty_input", "cannot summarize an empty error set");
  ErrorSummary s;
  s.errors = errors;
  s.n = errors.size();
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  s.p10 = percentile(sorted, 0.10);
  s.q1 = percentile(sorted, 0.25);
  s.median = percentile(sorted, 0.50);
  s.q3 = percentile(sorted, 0.75);
  s.p90 = percentile(sorted, 0.90);
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(s.n);
  const auto below = std::count_if(sorted.begin(), sorted.end(), [](double e) { return e < 1.0; });
  s.submeter = static_cast<double>(below) / static_cast<double>(s.n);
  return s;
}

std::vector<std::pair<double, double>> error_cdf(const std::vector<double>& errors) {
  if (errors.empty()) throw Error("empty_input", "cannot build the CDF of an empty error set");
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<double, double>> out;
  const auto n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    out.emplace_back(sorted[i], static_cast<double>(i + 1) / n);
  }
  return out;
}

std::vector<double> nn_errors(const nn::Model& model, const Dataset& test) {
  std::vector<double> out;
  out.reserve(test.size());
  nn::ForwardCache cache;
  for (const auto& s : test.samples)
    out.push_back(euclidean_error(nn::forward(model, s.features, nn::ForwardMode::infer(), cache), s.truth));
  return out;
}

std::vector<double> geo_errors(const Localizer& solver, const Dataset& test) {
  std::vector<std::optional<double>> tmp(test.size());
  const long n = static_cast<long>(test.size());
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      tmp[k] = euclidean_error(solver.localize(test.samples[k].features).position, test.samples[k].truth);
    } catch (const Error&) {
    }
  }
  std::vector<double> out;
  for (const auto& e : tmp)
    if (e) out.push_back(*e);
  return out;
}

const ConfigResult* ExperimentReport::find(const std::string& key) const {
  for (const auto& c : configs)
    if (c.key == key) return &c;
  return nullptr;
}

namespace {

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string config_key(const std::string& scenario, double sigma_deg, const std::string& algo,
                       const std::string& label, int n_train) {
  std::string k = scenario + "_s" + fmt_g(sigma_deg) + "_" + algo;
  if (algo == "nn") k += "_" + label + "_n" + std::to_string(n_train);
  return k;
}

ExperimentSpec parse_experiment_spec(const std::string& json_text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error("schema", std::string("malformed experiment spec: ") + e.what());
  }
  try {
    ExperimentSpec s;
    s.name = j.value("name", s.name);
    s.scenario = j.value("scenario", s.scenario);
    if (j.contains("sigmas_deg")) s.sigmas_deg = j["sigmas_deg"].get<std::vector<double>>();
    if (j.contains("label_sources")) {
      s.label_sources.clear();
      for (const auto& l : j["label_sources"]) s.label_sources.push_back(label_source_from_string(l.get<std::string>()));
    }
    if (j.contains("train_sizes")) s.train_sizes = j["train_sizes"].get<std::vector<int>>();
    if (j.contains("seeds")) s.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("algorithms")) s.algorithms = j["algorithms"].get<std::vector<std::string>>();
    for (const auto& a : s.algorithms)
      if (a != "nn" && a != "geo") throw Error("schema", "unknown algorithm '" + a + "'");
    s.test_trajectories = j.value("test_trajectories", s.test_trajectories);
    s.test_points = j.value("test_points", s.test_points);
    s.test_seed_offset = j.value("test_seed_offset", s.test_seed_offset);
    if (j.contains("train")) s.train = io::config_from_json(j["train"].dump(), s.train);
    if (j.contains("tune")) {
      const auto& t = j["tune"];
      nn::TuneGrid g = nn::default_grid();
      if (t.contains("node_factors")) g.node_factors = t["node_factors"].get<std::vector<double>>();
      if (t.contains("dropouts")) g.dropouts = t["dropouts"].get<std::vector<double>>();
      if (t.contains("learning_rates")) g.learning_rates = t["learning_rates"].get<std::vector<double>>();
      s.tune = g;
    }
    if (j.contains("smoothing_window")) s.labeling.smoothing_window = j["smoothing_window"].get<int>();
    s.trajectory_index = j.value("trajectory_index", s.trajectory_index);
    return s;
  } catch (const json::exception& e) {
    throw Error("schema", std::string("bad experiment spec: ") + e.what());
  }
}

namespace {

struct Job {
  std::size_t config;
  std::size_t seed_slot;
};

ErrorSummary median_of(const std::vector<const ErrorSummary*>& runs) {
  auto med = [&](auto field) {
    std::vector<double> v;
    for (const auto* r : runs) v.push_back(field(*r));
    return percentile(v, 0.5);
  };
  ErrorSummary s;
  s.p10 = med([](const ErrorSummary& r) { return r.p10; });
  s.q1 = med([](const ErrorSummary& r) { return r.q1; });
  s.median = med([](const ErrorSummary& r) { return r.median; });
  s.q3 = med([](const ErrorSummary& r) { return r.q3; });
  s.p90 = med([](const ErrorSummary& r) { return r.p90; });
  s.mean = med([](const ErrorSummary& r) { return r.mean; });
  s.submeter = med([](const ErrorSummary& r) { return r.submeter; });
  s.n = static_cast<std::size_t>(med([](const ErrorSummary& r) { return static_cast<double>(r.n); }));
  return s;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentSpec& spec, int jobs) {
  ExperimentReport report;
  report.name = spec.name;
  if (spec.algorithms.empty()) return report;

  const Scenario scenario = io::load_scenario(spec.scenario);
  const AnchorRoster roster = build_anchor_roster(scenario);
  const std::string scen_name = scenario.name.empty() ? spec.scenario : scenario.name;
  const Localizer solver(scenario.room, roster, spec.labeling.localize);

  // Configuration table.
  for (double sigma : spec.sigmas_deg) {
    for (const auto& algo : spec.algorithms) {
      if (algo == "geo") {
        ConfigResult c;
        c.algo = "geo";
        c.label_source = "-";
        c.sigma_deg = sigma;
        report.configs.push_back(c);
        continue;
      }
      for (auto label : spec.label_sources) {
        for (int size : spec.train_sizes) {
          ConfigResult c;
          c.algo = "nn";
          c.label_source = to_string(label);
          c.sigma_deg = sigma;
          c.n_train = size;
          report.configs.push_back(c);
        }
      }
    }
  }
  for (auto& c : report.configs) {
    c.scenario = scen_name;
    c.key = config_key(scen_name, c.sigma_deg, c.algo, c.label_source, c.n_train);
    c.runs.resize(spec.seeds.size());
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) c.runs[s].seed = spec.seeds[s];
  }
  std::sort(report.configs.begin(), report.configs.end(),
            [](const ConfigResult& a, const ConfigResult& b) { return a.key < b.key; });
  report.configs.erase(std::unique(report.configs.begin(), report.configs.end(),
                                   [](const ConfigResult& a, const ConfigResult& b) { return a.key == b.key; }),
                       report.configs.end());

  // Datasets, keyed by (sigma, seed) for tests and (sigma, seed, size, label) for training.
  using TestKey = std::pair<double, std::uint64_t>;
  using TrainKey = std::tuple<double, std::uint64_t, int, int>;
  std::map<TestKey, std::optional<Dataset>> tests;
  std::map<TrainKey, std::optional<Dataset>> trains;
  std::map<TrainKey, std::string> train_errors;
  std::map<TestKey, std::string> test_errors;
  for (const auto& c : report.configs) {
    for (const auto& run : c.runs) {
      const TestKey tk{c.sigma_deg, run.seed};
      if (!tests.count(tk)) {
        DatasetRequest req;
        req.n_trajectories = spec.test_trajectories;
        req.n_points = spec.test_points;
        req.sigma = deg2rad(c.sigma_deg);
        req.seed = run.seed + spec.test_seed_offset;
        try {
          tests[tk] = build_dataset(scenario, roster, req, jobs);
        } catch (const Error& e) {
          tests[tk].reset();
          test_errors[tk] = e.what();
        }
      }
      if (c.algo != "nn") continue;
      const int label = c.label_source == "truth" ? 0 : 1;
      const TrainKey key{c.sigma_deg, run.seed, c.n_train, label};
      if (trains.count(key)) continue;
      const TrainKey truth_key{c.sigma_deg, run.seed, c.n_train, 0};
      try {
        if (!trains.count(truth_key) || !trains[truth_key]) {
          const auto [traj, pts] = split_size(c.n_train);
          DatasetRequest req;
          req.n_trajectories = traj;
          req.n_points = pts;
          req.sigma = deg2rad(c.sigma_deg);
          req.seed = run.seed;
          trains[truth_key] = build_dataset(scenario, roster, req, jobs);
        }
        if (label == 1) trains[key] = label_dataset(*trains[truth_key], roster, scenario.room, spec.labeling, jobs);
      } catch (const Error& e) {
        trains[key].reset();
        train_errors[key] = e.what();
      }
    }
  }

  std::vector<Job> work;
  for (std::size_t ci = 0; ci < report.configs.size(); ++ci)
    for (std::size_t si = 0; si < spec.seeds.size(); ++si) work.push_back({ci, si});

  std::vector<std::vector<double>> errors(work.size());
  std::vector<std::vector<TrajectoryRow>> paths(work.size());
  const long n_work = static_cast<long>(work.size());
#pragma omp parallel for schedule(dynamic) num_threads(resolve_jobs(jobs))
  for (long w = 0; w < n_work; ++w) {
    const Job job = work[static_cast<std::size_t>(w)];
    ConfigResult& c = report.configs[job.config];
    SeedRun& run = c.runs[job.seed_slot];
    try {
      const TestKey tk{c.sigma_deg, run.seed};
      if (!tests.at(tk)) throw Error("stage_failed", "test set: " + test_errors.at(tk));
      const Dataset& test = *tests.at(tk);
      std::function<std::optional<Vec2>(const FeatureVector&)> estimate;
      std::optional<nn::Model> model;
      if (c.algo == "nn") {
        const TrainKey key{c.sigma_deg, run.seed, c.n_train, c.label_source == "truth" ? 0 : 1};
        if (!trains.at(key)) throw Error("stage_failed", "training set: " + train_errors.at(key));
        nn::TrainConfig cfg = spec.train;
        cfg.seed = run.seed;
        if (spec.tune) {
          auto tuned = nn::tune(*trains.at(key), *spec.tune, cfg, 1);
          run.chosen = tuned.best;
          model = std::move(tuned.model);
        } else {
          run.chosen = cfg;
          model = nn::train(*trains.at(key), cfg).model;
        }
        errors[static_cast<std::size_t>(w)] = nn_errors(*model, test);
        estimate = [&](const FeatureVector& fv) -> std::optional<Vec2> { return nn::predict(*model, fv); };
      } else {
        errors[static_cast<std::size_t>(w)] = geo_errors(solver, test);
        estimate = [&](const FeatureVector& fv) -> std::optional<Vec2> {
          try {
            return solver.localize(fv).position;
          } catch (const Error&) {
            return std::nullopt;
          }
        };
      }
      run.summary = summarize(errors[static_cast<std::size_t>(w)]);
      if (job.seed_slot == 0) {
        for (const auto& s : test.samples) {
          if (s.traj != spec.trajectory_index) continue;
          paths[static_cast<std::size_t>(w)].push_back({s.step, s.truth, estimate(s.features)});
        }
      }
    } catch (const Error& e) {
      run.summary.reset();
      run.error = e.code() + ": " + e.what();
    } catch (const std::exception& e) {
      run.summary.reset();
      run.error = e.what();
    }
  }

  for (std::size_t w = 0; w < work.size(); ++w) {
    ConfigResult& c = report.configs[work[w].config];
    c.pooled_errors.insert(c.pooled_errors.end(), errors[w].begin(), errors[w].end());
    if (work[w].seed_slot == 0) c.trajectory = std::move(paths[w]);
  }
  for (auto& c : report.configs) {
    std::vector<const ErrorSummary*> ok;
    for (const auto& r : c.runs)
      if (r.summary) ok.push_back(&*r.summary);
    if (!ok.empty()) c.seed_median = median_of(ok);
  }
  return report;
}

std::string summary_header() {
  return "config,scenario,sigma_deg,algo,label_source,n_train,seed,seed_median,n,p10,q1,median,q3,p90,mean,submeter,"
         "error\n";
}

std::string summary_row(const ConfigResult& c, const std::string& seed, bool seed_median, const ErrorSummary* s,
                        const std::string& error) {
  std::string row = c.key + ',' + c.scenario + ',' + fmt_g(c.sigma_deg) + ',' + c.algo + ',' + c.label_source + ',' +
                    std::to_string(c.n_train) + ',' + seed + ',' + (seed_median ? "1" : "0");
  if (s) {
    row += ',' + std::to_string(s->n);
    for (double v : {s->p10, s->q1, s->median, s->q3, s->p90, s->mean, s->submeter}) row += ',' + io::fmt_double(v);
  } else {
    row += ",,,,,,,,";
  }
  std::string clean = error;
  std::replace(clean.begin(), clean.end(), ',', ';');
  std::replace(clean.begin(), clean.end(), '\n', ' ');
  return row + ',' + clean + '\n';
}

std::string summary_csv(const ExperimentReport& report) {
  std::string out = summary_header();
  for (const auto& c : report.configs) {
    for (const auto& r : c.runs)
      out += summary_row(c, std::to_string(r.seed), false, r.summary ? &*r.summary : nullptr, r.error);
    out += summary_row(c, "median", true, c.seed_median ? &*c.seed_median : nullptr,
                       c.seed_median ? "" : "all seeds failed");
  }
  return out;
}

std::string cdf_csv(const std::vector<double>& errors) {
  std::string out = "error_m,fraction\n";
  if (errors.empty()) return out;
  for (const auto& [e, f] : error_cdf(errors)) out += io::fmt_double(e) + ',' + io::fmt_double(f) + '\n';
  return out;
}

std::string trajectory_csv(const std::vector<TrajectoryRow>& rows) {
  std::string out = "step,truth_x,truth_y,est_x,est_y\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + ',' + io::fmt_double(r.truth.x) + ',' + io::fmt_double(r.truth.y) + ',';
    out += r.estimate ? io::fmt_double(r.estimate->x) + ',' + io::fmt_double(r.estimate->y) : std::string(",");
    out += '\n';
  }
  return out;
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_atomic(dir / "summary.csv", summary_csv(report));
  for (const auto& c : report.configs) {
    io::write_atomic(dir / ("cdf_" + c.key + ".csv"), cdf_csv(c.pooled_errors));
    io::write_atomic(dir / ("trajectory_" + c.key + ".csv"), trajectory_csv(c.trajectory));
  }
}

}  // namespace mmloc::eval
