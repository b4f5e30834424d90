// mmloc: command-line front end for scenarios, datasets, labeling, training,
// tuning, evaluation and scripted experiments.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmloc/eval.hpp"
#include "mmloc/geoloc.hpp"
#include "mmloc/io.hpp"
#include "mmloc/nn.hpp"

namespace {

using namespace mmloc;

void emit(const std::string& out_path, const std::string& contents) {
  if (out_path.empty() || out_path == "-") {
    std::fwrite(contents.data(), 1, contents.size(), stdout);
  } else {
    io::write_atomic(out_path, contents);
  }
}

struct Common {
  std::string scenario = "rect3";
  std::uint64_t seed = 0;
  int jobs = 0;
};

void add_common(CLI::App* cmd, Common& c, bool with_seed = true) {
  cmd->add_option("--scenario", c.scenario, "Stock scenario (rect3, rect4, lroom3) or scenario JSON path")
      ->capture_default_str();
  if (with_seed) cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--jobs", c.jobs, "Worker threads (0 = OpenMP default); outputs do not depend on it")
      ->capture_default_str();
}

struct TrainOverrides {
  std::string config_path;
  std::optional<double> node_factor;
  std::optional<double> dropout;
  std::optional<double> learning_rate;
  std::optional<int> batch_size;
  std::optional<int> max_epochs;
  std::optional<int> patience;
  std::optional<double> validation_fraction;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Training config JSON");
    cmd->add_option("--node-factor", node_factor, "Hidden-layer node factor k");
    cmd->add_option("--dropout", dropout, "Dropout rate p");
    cmd->add_option("--lr", learning_rate, "Adam learning rate r");
    cmd->add_option("--batch-size", batch_size, "Mini-batch size");
    cmd->add_option("--epochs", max_epochs, "Maximum epochs");
    cmd->add_option("--patience", patience, "Early-stopping patience (epochs)");
    cmd->add_option("--validation-fraction", validation_fraction, "Share of trajectories held out");
  }

  nn::TrainConfig resolve(CLI::App* cmd, std::uint64_t seed) const {
    nn::TrainConfig c;
    if (!config_path.empty()) c = io::config_from_json(io::read_file(config_path));
    if (node_factor) c.node_factor = *node_factor;
    if (dropout) c.dropout = *dropout;
    if (learning_rate) c.learning_rate = *learning_rate;
    if (batch_size) c.batch_size = *batch_size;
    if (max_epochs) c.max_epochs = *max_epochs;
    if (patience) c.patience = *patience;
    if (validation_fraction) c.validation_fraction = *validation_fraction;
    if (cmd->count("--seed") || config_path.empty()) c.seed = seed;
    c.validate();
    return c;
  }
};

Dataset load_dataset(const std::string& path, const AnchorRoster& roster) {
  return io::dataset_from_csv(io::read_file(path), roster);
}

std::string history_csv(const nn::TrainResult& r) {
  std::string out = "epoch,train_mse,validation_mse\n";
  for (const auto& h : r.history)
    out += std::to_string(h.epoch) + ',' + io::fmt_double(h.train_mse) + ',' + io::fmt_double(h.validation_mse) + '\n';
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmloc - angle-based mmWave indoor localization toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // scenario-validate
  std::string validate_target;
  auto* sv = app.add_subcommand("scenario-validate", "Validate a scenario and report its anchor count");
  sv->add_option("scenario", validate_target, "Stock scenario name or JSON path")->required();
  bool sv_verbose = false;
  sv->add_flag("-v,--verbose", sv_verbose, "List every anchor");

  // dataset-gen
  Common gen;
  int gen_traj = 30, gen_points = 30;
  std::optional<int> gen_size;
  double gen_sigma = 5.0;
  std::string gen_label = "truth", gen_out;
  bool gen_audit = false;
  auto* dg = app.add_subcommand("dataset-gen", "Simulate trajectories and write a dataset CSV");
  add_common(dg, gen);
  dg->add_option("--trajectories", gen_traj, "Number of trajectories")->capture_default_str();
  dg->add_option("--points", gen_points, "Points per trajectory")->capture_default_str();
  dg->add_option("--train-size", gen_size, "Total samples; picks trajectories x points (overrides both)");
  dg->add_option("--sigma-deg", gen_sigma, "AoA noise standard deviation, degrees")->capture_default_str();
  dg->add_option("--labeling", gen_label, "Label source")->check(CLI::IsMember({"truth", "geo"}))->capture_default_str();
  dg->add_option("-o,--out", gen_out, "Output CSV (default stdout)");
  dg->add_flag("--audit", gen_audit, "Append residual_norm,converged,iterations columns");

  // label
  Common lab;
  std::string lab_in, lab_out;
  int lab_window = 0;
  auto* lb = app.add_subcommand("label", "Replace dataset labels by geometric ADoA estimates");
  add_common(lb, lab, false);
  lb->add_option("--in", lab_in, "Input dataset CSV")->required();
  lb->add_option("-o,--out", lab_out, "Output CSV (default stdout)");
  lb->add_option("--smoothing-window", lab_window, "Average estimates over this many trajectory steps")
      ->capture_default_str();

  // train
  Common tr;
  TrainOverrides tr_cfg;
  std::string tr_data, tr_out, tr_history;
  auto* tn = app.add_subcommand("train", "Train the network on a dataset CSV");
  add_common(tn, tr);
  tr_cfg.add(tn);
  tn->add_option("--data", tr_data, "Training dataset CSV")->required();
  tn->add_option("-o,--out", tr_out, "Model JSON (default stdout)");
  tn->add_option("--history", tr_history, "Per-epoch loss CSV");

  // tune
  Common tu;
  TrainOverrides tu_cfg;
  std::string tu_data, tu_grid, tu_best, tu_model, tu_board;
  auto* tg = app.add_subcommand("tune", "Grid-search node factor, dropout and learning rate");
  add_common(tg, tu);
  tu_cfg.add(tg);
  tg->add_option("--data", tu_data, "Training dataset CSV")->required();
  tg->add_option("--grid", tu_grid, "Grid JSON {node_factors, dropouts, learning_rates}; default full grid");
  tg->add_option("--out-config", tu_best, "Best config JSON")->required();
  tg->add_option("--out-model", tu_model, "Best model JSON");
  tg->add_option("--leaderboard", tu_board, "Leaderboard CSV");

  // predict
  Common pr;
  std::string pr_model, pr_data, pr_out;
  auto* pd = app.add_subcommand("predict", "Estimate locations with a trained model");
  add_common(pd, pr, false);
  pd->add_option("--model", pr_model, "Model JSON")->required();
  pd->add_option("--data", pr_data, "Dataset CSV")->required();
  pd->add_option("-o,--out", pr_out, "Predictions CSV (default stdout)");

  // eval
  Common ev;
  std::string ev_model, ev_data, ev_out;
  bool ev_geo = false;
  std::optional<double> ev_sigma;
  int ev_traj = 0;
  auto* evc = app.add_subcommand("eval", "Score a model or the geometric baseline on a test dataset");
  add_common(evc, ev);
  evc->add_option("--model", ev_model, "Model JSON");
  evc->add_flag("--geo", ev_geo, "Evaluate the geometric ADoA localizer instead of a model");
  evc->add_option("--data", ev_data, "Test dataset CSV")->required();
  evc->add_option("--sigma-deg", ev_sigma, "Noise level recorded in the report (default: from the model)");
  evc->add_option("--trajectory", ev_traj, "Test trajectory for the overlay table")->capture_default_str();
  evc->add_option("-o,--out", ev_out, "Report directory")->required();

  // experiment
  int ex_jobs = 0;
  std::string ex_spec, ex_out;
  auto* ex = app.add_subcommand("experiment", "Run a scripted experiment and write a report bundle");
  ex->add_option("--spec", ex_spec, "Experiment spec JSON")->required();
  ex->add_option("-o,--out", ex_out, "Report directory")->required();
  ex->add_option("--jobs", ex_jobs, "Worker threads")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sv) {
      const Scenario s = io::load_scenario(validate_target);
      const AnchorRoster roster = build_anchor_roster(s);
      std::printf("anchors=%zu\n", roster.size());
      if (sv_verbose) {
        for (std::size_t i = 0; i < roster.size(); ++i) {
          const auto& a = roster[i];
          std::printf("  %2zu %-8s ap=%d wall=%d pos=(%g, %g) coverage=%.3f\n", i,
                      a.kind == AnchorKind::physical ? "physical" : "virtual", a.source_ap, a.generating_wall,
                      a.position.x, a.position.y, roster.coverage[i]);
        }
      }
    } else if (*dg) {
      const Scenario s = io::load_scenario(gen.scenario);
      const AnchorRoster roster = build_anchor_roster(s);
      DatasetRequest req;
      if (gen_size) std::tie(gen_traj, gen_points) = split_size(*gen_size);
      req.n_trajectories = gen_traj;
      req.n_points = gen_points;
      req.sigma = deg2rad(gen_sigma);
      req.seed = gen.seed;
      req.labeling = label_source_from_string(gen_label);
      const Dataset ds = build_dataset(s, roster, req, gen.jobs);
      emit(gen_out, io::dataset_to_csv(ds, gen_audit || req.labeling == LabelSource::geometric));
      if (ds.dropped) std::fprintf(stderr, "dropped=%zu\n", ds.dropped);
    } else if (*lb) {
      const Scenario s = io::load_scenario(lab.scenario);
      const AnchorRoster roster = build_anchor_roster(s);
      LabelOptions opt;
      opt.smoothing_window = lab_window;
      const Dataset ds = label_dataset(load_dataset(lab_in, roster), roster, s.room, opt, lab.jobs);
      emit(lab_out, io::dataset_to_csv(ds, true));
      if (ds.dropped) std::fprintf(stderr, "dropped=%zu\n", ds.dropped);
    } else if (*tn) {
      const Scenario s = io::load_scenario(tr.scenario);
      const AnchorRoster roster = build_anchor_roster(s);
      const nn::TrainConfig cfg = tr_cfg.resolve(tn, tr.seed);
      const nn::TrainResult r = nn::train(load_dataset(tr_data, roster), cfg);
      if (!tr_history.empty()) io::write_atomic(tr_history, history_csv(r));
      emit(tr_out, io::model_to_json(r.model));
    } else if (*tg) {
      const Scenario s = io::load_scenario(tu.scenario);
      const AnchorRoster roster = build_anchor_roster(s);
      const nn::TrainConfig base = tu_cfg.resolve(tg, tu.seed);
      nn::TuneGrid grid = nn::default_grid();
      if (!tu_grid.empty()) {
        const auto j = nlohmann::json::parse(io::read_file(tu_grid));
        if (j.contains("node_factors")) grid.node_factors = j["node_factors"].get<std::vector<double>>();
        if (j.contains("dropouts")) grid.dropouts = j["dropouts"].get<std::vector<double>>();
        if (j.contains("learning_rates")) grid.learning_rates = j["learning_rates"].get<std::vector<double>>();
      }
      const nn::TuneResult r = nn::tune(load_dataset(tu_data, roster), grid, base, tu.jobs);
      io::write_atomic(tu_best, io::config_to_json(r.best));
      if (!tu_model.empty()) io::write_atomic(tu_model, io::model_to_json(r.model));
      if (!tu_board.empty()) {
        std::string out = "rank,node_factor,dropout,learning_rate,parameters,validation_mse,best_epoch,error\n";
        for (std::size_t i = 0; i < r.leaderboard.size(); ++i) {
          const auto& e = r.leaderboard[i];
          out += std::to_string(i + 1) + ',' + io::fmt_double(e.config.node_factor) + ',' +
                 io::fmt_double(e.config.dropout) + ',' + io::fmt_double(e.config.learning_rate) + ',' +
                 std::to_string(e.parameter_count) + ',' + io::fmt_double(e.validation_mse) + ',' +
                 std::to_string(e.best_epoch) + ',' + e.error + '\n';
        }
        io::write_atomic(tu_board, out);
      }
      std::printf("best node_factor=%g dropout=%g learning_rate=%g validation_mse=%.6g\n", r.best.node_factor,
                  r.best.dropout, r.best.learning_rate, r.leaderboard.front().validation_mse);
    } else if (*pd) {
      const Scenario s = io::load_scenario(pr.scenario);
      const AnchorRoster roster = build_anchor_roster(s);
      const nn::Model model = io::model_from_json(io::read_file(pr_model));
      if (!model.roster_fingerprint.empty() && model.roster_fingerprint != roster.fingerprint())
        throw Error("fingerprint_mismatch", "model was trained for a different anchor roster");
      const Dataset ds = load_dataset(pr_data, roster);
      std::string out = "traj,step,est_x,est_y\n";
      for (const auto& smp : ds.samples) {
        const Vec2 e = nn::predict(model, smp.features);
        out += std::to_string(smp.traj) + ',' + std::to_string(smp.step) + ',' + io::fmt_double(e.x) + ',' +
               io::fmt_double(e.y) + '\n';
      }
      emit(pr_out, out);
    } else if (*evc) {
      if (ev_geo == !ev_model.empty()) throw Error("usage", "pass exactly one of --model or --geo");
      const Scenario s = io::load_scenario(ev.scenario);
      const AnchorRoster roster = build_anchor_roster(s);
      const Dataset test = load_dataset(ev_data, roster);
      eval::ConfigResult c;
      c.scenario = s.name.empty() ? ev.scenario : s.name;
      std::vector<double> errors;
      std::function<std::optional<Vec2>(const FeatureVector&)> estimate;
      std::optional<nn::Model> model;
      const Localizer solver(s.room, roster);
      if (ev_geo) {
        c.algo = "geo";
        c.label_source = "-";
        c.sigma_deg = ev_sigma.value_or(0.0);
        errors = eval::geo_errors(solver, test);
        estimate = [&](const FeatureVector& fv) -> std::optional<Vec2> {
          try {
            return solver.localize(fv).position;
          } catch (const Error&) {
            return std::nullopt;
          }
        };
      } else {
        model = io::model_from_json(io::read_file(ev_model));
        if (!model->roster_fingerprint.empty() && model->roster_fingerprint != roster.fingerprint())
          throw Error("fingerprint_mismatch", "model was trained for a different anchor roster");
        c.algo = "nn";
        c.label_source = model->meta.label_source;
        c.n_train = static_cast<int>(model->meta.n_train);
        c.sigma_deg = ev_sigma.value_or(rad2deg(model->meta.sigma));
        errors = eval::nn_errors(*model, test);
        estimate = [&](const FeatureVector& fv) -> std::optional<Vec2> { return nn::predict(*model, fv); };
      }
      c.key = eval::config_key(c.scenario, c.sigma_deg, c.algo, c.label_source, c.n_train);
      const eval::ErrorSummary summary = eval::summarize(errors);
      const std::string seed = std::to_string(ev.seed);
      std::string csv = eval::summary_header() + eval::summary_row(c, seed, false, &summary, "") +
                        eval::summary_row(c, "median", true, &summary, "");
      for (const auto& smp : test.samples)
        if (smp.traj == ev_traj) c.trajectory.push_back({smp.step, smp.truth, estimate(smp.features)});
      std::filesystem::create_directories(ev_out);
      io::write_atomic(std::filesystem::path(ev_out) / "summary.csv", csv);
      io::write_atomic(std::filesystem::path(ev_out) / ("cdf_" + c.key + ".csv"), eval::cdf_csv(errors));
      io::write_atomic(std::filesystem::path(ev_out) / ("trajectory_" + c.key + ".csv"),
                       eval::trajectory_csv(c.trajectory));
      std::printf("%s median=%.4f submeter=%.4f n=%zu\n", c.key.c_str(), summary.median, summary.submeter, summary.n);
    } else if (*ex) {
      const eval::ExperimentSpec spec = eval::parse_experiment_spec(io::read_file(ex_spec));
      const eval::ExperimentReport report = eval::run_experiment(spec, ex_jobs);
      eval::write_report(report, ex_out);
      for (const auto& c : report.configs) {
        if (c.seed_median)
          std::printf("%s median=%.4f iqr=%.4f submeter=%.4f\n", c.key.c_str(), c.seed_median->median,
                      c.seed_median->iqr(), c.seed_median->submeter);
        else
          std::printf("%s failed\n", c.key.c_str());
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.code().c_str(), e.what());
    return e.code() == "usage" ? 2 : 1;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: schema: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
