// Copyright 2026 mortens authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mortens/backtest.hpp"
#include "mortens/evaluation.hpp"
#include "mortens/game.hpp"
#include "mortens/hmd.hpp"
#include "mortens/pipeline.hpp"
#include "mortens/weighting.hpp"

namespace {

using namespace mortens;
using namespace mortens::mortality;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::vector<int> iota_vec(int first, int last) {
  std::vector<int> v;
  for (int i = first; i <= last; ++i) v.push_back(i);
  return v;
}

std::pair<int, int> parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("expected range 'first:last'");
  return {std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
}

std::vector<ModelId> parse_models(const std::string& list) {
  std::vector<ModelId> out;
  std::istringstream ls(list);
  std::string tok;
  while (std::getline(ls, tok, ',')) {
    if (!tok.empty()) out.push_back(model_from_string(tok));
  }
  if (out.empty()) throw ConfigError("empty model list");
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << content;
}

MortalitySurface load_surface(const std::string& path, Gender gender) {
  for (auto& s : read_surface_csv_file(path)) {
    if (s.gender == gender) return std::move(s);
  }
  throw DataError("surface CSV '" + path + "' has no " +
                  std::string(to_string(gender)) + " rows");
}

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& data, const std::string& out,
               const std::string& years) {
  std::optional<std::pair<int, int>> range;
  if (!years.empty()) range = parse_range(years);
  const auto ingest = parse_hmd_file(data, range);
  std::ostringstream csv;
  write_surface_csv(csv, ingest.surfaces);
  write_text_file(out, csv.str());
  for (const auto& note : ingest.notes) std::cout << "note: " << note << "\n";
  std::cout << "repaired cells: " << ingest.repairs.size() << "\n";
  for (const auto& r : ingest.repairs) {
    std::cout << "repair: " << to_string(r.gender) << " age " << r.age << " year "
              << r.year << " " << r.action << "\n";
  }
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

int cmd_synth(const std::string& out, const std::string& genders,
              const std::string& years, const std::string& ages, double drift,
              double kappa_sigma, double noise_sigma, std::uint64_t seed) {
  const auto [y0, y1] = parse_range(years);
  const auto [a0, a1] = parse_range(ages);
  std::vector<MortalitySurface> surfaces;
  std::istringstream gs(genders);
  std::string g;
  std::uint64_t index = 0;
  while (std::getline(gs, g, ',')) {
    auto spec = default_synth_spec(iota_vec(a0, a1), iota_vec(y0, y1),
                                   gender_from_string(g), rng::derive_seed(seed, index++));
    spec.drift = drift;
    spec.kappa_sigma = kappa_sigma;
    spec.noise_sigma = noise_sigma;
    surfaces.push_back(synth_surface(spec).surface);
  }
  if (surfaces.empty()) throw ConfigError("no genders requested");
  std::ostringstream csv;
  write_surface_csv(csv, surfaces);
  write_text_file(out, csv.str());
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

int cmd_backtest(const std::string& surface_path, const std::string& gender,
                 int train_len, int val_len, int test_len, const std::string& target,
                 const std::string& models, int horizon, double alpha,
                 const std::string& out, const std::string& stats_out) {
  const auto surface = load_surface(surface_path, gender_from_string(gender));
  const auto plan = make_split(surface.years, train_len, val_len, test_len);
  const TargetSet ts = target == "test" ? TargetSet::test : TargetSet::validation;
  if (target != "test" && target != "validation") {
    throw ConfigError("target must be 'validation' or 'test'");
  }
  const auto wf =
      expanding_forecasts(surface, parse_models(models), plan, ts, horizon, alpha);
  std::ostringstream csv;
  write_window_forecasts_csv(csv, wf);
  write_text_file(out, csv.str());
  if (!stats_out.empty()) {
    std::ostringstream stats;
    write_fit_stats_csv(stats, wf);
    write_text_file(stats_out, stats.str());
  }
  for (const auto& gap : wf.gaps) {
    std::cout << "gap: " << to_string(gap.model) << " window " << gap.zeta << ": "
              << gap.message << "\n";
  }
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

struct StageFrame {
  int target_start = 0;
  int target_len = 0;
};

int cmd_weights(const std::string& forecasts, const std::string& surface_path,
                const std::string& gender, const StageFrame& frame, int horizon,
                double alpha, const std::string& scheme, std::size_t samples,
                std::uint64_t seed, const attribution::ForestHyperparams& forest,
                bool gap_tolerant, bool pool_horizons, const std::string& out,
                const std::string& trace_out, const std::string& stats_path) {
  const auto surface = load_surface(surface_path, gender_from_string(gender));
  std::ifstream fin(forecasts);
  if (!fin) throw DataError("cannot open '" + forecasts + "'");
  std::optional<std::ifstream> stats;
  if (!stats_path.empty()) {
    stats.emplace(stats_path);
    if (!*stats) throw DataError("cannot open '" + stats_path + "'");
  }
  const auto wf = read_window_forecasts_csv(fin, TargetSet::validation,
                                            frame.target_start, frame.target_len, horizon,
                                            alpha, stats ? &*stats : nullptr);
  const auto actuals = surface.year_range(frame.target_start,
                                          frame.target_start + frame.target_len - 1);

  std::vector<WeightVector> all;
  std::optional<ShapleyWeightTrace> trace;
  const bool want_all = scheme == "all";
  if (want_all || scheme == "equal") {
    all.push_back(equal_weights(wf.models, wf.gender));
  }
  if (want_all || scheme == "shapley") {
    ShapleyWeightOptions opt;
    opt.forest = forest;
    opt.samples = samples;
    opt.seed = seed;
    opt.pool_horizons = pool_horizons;
    opt.gap_tolerant = gap_tolerant;
    auto [w, t] = shapley_weights(wf, actuals, opt);
    all.push_back(std::move(w));
    trace = std::move(t);
  }
  if (want_all || scheme == "inv_mse") {
    all.push_back(inverse_mse_weights(wf, actuals, gap_tolerant));
  }
  if (want_all || scheme == "inv_aic") {
    if (!stats) throw ConfigError("inv_aic weights need --fit-stats");
    all.push_back(inverse_aic_weights(wf, gap_tolerant).weights);
  }
  if (all.empty()) throw ConfigError("unknown scheme '" + scheme + "'");

  std::ostringstream csv;
  csv << "scheme,gender,model_id,weight,phi_bar,phi_tilde\n";
  char buf[160];
  for (const auto& wv : all) {
    for (const auto& [id, w] : wv.weights) {
      csv << to_string(wv.scheme) << "," << to_string(wv.gender) << "," << to_string(id);
      std::snprintf(buf, sizeof buf, ",%.17g", w);
      csv << buf;
      if (wv.scheme == WeightScheme::shapley && trace) {
        for (std::size_t k = 0; k < trace->models.size(); ++k) {
          if (trace->models[k] == id) {
            std::snprintf(buf, sizeof buf, ",%.17g,%.17g", trace->phi_bar[k],
                          trace->phi_tilde[k]);
            csv << buf;
          }
        }
      } else {
        csv << ",,";
      }
      csv << "\n";
    }
  }
  write_text_file(out, csv.str());
  if (!trace_out.empty() && trace) {
    std::ostringstream tcsv;
    tcsv << "gender,model_id,age,horizon,phi_hat\n";
    for (std::size_t k = 0; k < trace->models.size(); ++k) {
      for (Eigen::Index x = 0; x < trace->phi_hat[k].rows(); ++x) {
        for (Eigen::Index h = 0; h < trace->phi_hat[k].cols(); ++h) {
          std::snprintf(buf, sizeof buf, "%.17g", trace->phi_hat[k](x, h));
          tcsv << to_string(wf.gender) << "," << to_string(trace->models[k]) << ","
               << wf.ages[static_cast<std::size_t>(x)] << "," << (h + 1) << "," << buf
               << "\n";
        }
      }
    }
    write_text_file(trace_out, tcsv.str());
  }
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

int cmd_combine(const std::string& forecasts, const std::string& weights_path,
                const std::string& scheme, const std::string& gender,
                const StageFrame& frame, int horizon, double alpha, bool gap_tolerant,
                const std::string& out) {
  std::ifstream fin(forecasts);
  if (!fin) throw DataError("cannot open '" + forecasts + "'");
  const auto wf = read_window_forecasts_csv(fin, TargetSet::test, frame.target_start,
                                            frame.target_len, horizon, alpha, nullptr);
  std::ifstream win(weights_path);
  if (!win) throw DataError("cannot open '" + weights_path + "'");
  const auto weights =
      read_weights_csv(win, scheme_from_string(scheme), gender_from_string(gender));
  const auto combined = combine(wf, weights, gap_tolerant);
  std::ostringstream csv;
  write_forecast_sets_csv(csv, combined);
  write_text_file(out, csv.str());
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& combined_path, const std::string& surface_path,
                 const std::string& gender, double alpha, const std::string& out_prefix) {
  const auto surface = load_surface(surface_path, gender_from_string(gender));
  std::ifstream cin_file(combined_path);
  if (!cin_file) throw DataError("cannot open '" + combined_path + "'");
  const auto sets = read_forecast_sets_csv(cin_file);
  const auto accuracy = point_scores(sets, surface);
  const auto interval = interval_scores(sets, surface, alpha);

  std::ostringstream acc;
  acc << "h,mse,mae\n";
  char buf[96];
  for (std::size_t i = 0; i < accuracy.horizons.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", accuracy.horizons[i],
                  accuracy.mse[i], accuracy.mae[i]);
    acc << buf;
  }
  std::snprintf(buf, sizeof buf, "Mean,%.6f,%.6f\n", accuracy.mean_mse,
                accuracy.mean_mae);
  acc << buf;
  write_text_file(out_prefix + "_accuracy.csv", acc.str());

  std::ostringstream inter;
  inter << "h,interval_score\n";
  for (std::size_t i = 0; i < interval.horizons.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%d,%.6f\n", interval.horizons[i], interval.score[i]);
    inter << buf;
  }
  std::snprintf(buf, sizeof buf, "Mean,%.6f\n", interval.mean_score);
  inter << buf;
  write_text_file(out_prefix + "_interval.csv", inter.str());
  std::cout << "wrote " << out_prefix << "_accuracy.csv and " << out_prefix
            << "_interval.csv\n";
  return kExitOk;
}

void print_audit(const game::AxiomReport& report) {
  std::cout << "efficiency: " << (report.efficient ? "pass" : "FAIL")
            << " (residual " << report.efficiency_residual << ")\n";
  if (report.symmetric_pairs.empty()) {
    std::cout << "symmetry: no symmetric pairs detected\n";
  }
  for (const auto& p : report.symmetric_pairs) {
    std::cout << "symmetry: players " << (p.i + 1) << "," << (p.j + 1) << " deviation "
              << p.deviation << (p.deviation <= 1e-9 ? " (pass)" : " (FAIL)") << "\n";
  }
  if (report.dummy_players.empty()) {
    std::cout << "dummy: no dummy players detected\n";
  }
  for (const auto& d : report.dummy_players) {
    std::cout << "dummy: player " << (d.player + 1) << " receives " << d.phi
              << (std::abs(d.phi) <= 1e-9 ? " (pass)" : " (FAIL)") << "\n";
  }
  if (report.additivity_residual) {
    std::cout << "additivity: residual " << *report.additivity_residual
              << (*report.additivity_residual <= 1e-9 ? " (pass)" : " (FAIL)") << "\n";
  }
}

int cmd_audit_axioms(const std::string& game_path, std::size_t samples,
                     std::uint64_t seed, bool appendix_a) {
  if (appendix_a) {
    // Two-model counterexample: the inverse-MSE rule fails efficiency on
    // the game v(S) = MSE of the equally weighted combination of S.
    const std::vector<double> actual{0.020, 0.025, 0.031, 0.018};
    const std::vector<double> f1{0.024, 0.023, 0.036, 0.021};
    const std::vector<double> f2{0.017, 0.029, 0.027, 0.016};
    auto mse_of = [&](const std::vector<double>& f) {
      double s = 0.0;
      for (std::size_t i = 0; i < actual.size(); ++i) {
        s += (f[i] - actual[i]) * (f[i] - actual[i]);
      }
      return s / static_cast<double>(actual.size());
    };
    auto value = [&](game::CoalitionMask mask) -> double {
      if (mask == 0) return 0.0;
      std::vector<double> blend(actual.size(), 0.0);
      double members = 0.0;
      for (std::size_t i = 0; i < actual.size(); ++i) {
        if (mask & 1) blend[i] += f1[i];
        if (mask & 2) blend[i] += f2[i];
      }
      members = static_cast<double>((mask & 1 ? 1 : 0) + (mask & 2 ? 1 : 0));
      for (double& b : blend) b /= members;
      return mse_of(blend);
    };
    const game::Game g(2, value);
    game::Allocation mse_alloc{{mse_of(f1), mse_of(f2)}};
    std::cout << "inverse-MSE allocation audit on the two-model construction:\n";
    print_audit(game::audit_allocation(g, mse_alloc));
    std::cout << "\nexact Shapley allocation audit on the same game:\n";
    print_audit(game::audit_allocation(g, game::exact_shapley(g)));
    return kExitOk;
  }
  std::ifstream in(game_path);
  if (!in) throw DataError("cannot open game file '" + game_path + "'");
  const game::Game g = game::load_game(in);
  const auto exact = game::exact_shapley(g);
  std::cout << "exact Shapley values:";
  for (double v : exact.values) std::cout << " " << v;
  std::cout << "\n";
  if (samples > 0) {
    const auto sampled = game::permutation_shapley(g, samples, seed);
    std::cout << "sampled estimates (M = " << samples << "):";
    for (std::size_t i = 0; i < sampled.estimates.size(); ++i) {
      std::cout << " " << sampled.estimates[i] << " (se " << sampled.std_errors[i] << ")";
    }
    std::cout << "\n";
  }
  print_audit(game::audit_allocation(g, exact));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mortens: mortality model ensembles with Shapley-value weights"};
  app.require_subcommand(1);

  // ingest
  std::string in_data, in_out = "surface.csv", in_years;
  auto* ingest = app.add_subcommand("ingest", "parse an HMD 1x1 rate file into surface CSV");
  ingest->add_option("--data", in_data, "HMD Mx 1x1 file")->required();
  ingest->add_option("--out", in_out, "output surface CSV");
  ingest->add_option("--years", in_years, "year range first:last");

  // synth
  std::string sy_out = "surface.csv", sy_genders = "female,male",
              sy_years = "1940:2019", sy_ages = "0:100";
  double sy_drift = -1.2, sy_ksigma = 0.35, sy_nsigma = 0.02;
  std::uint64_t sy_seed = 20260810;
  auto* synth = app.add_subcommand("synth", "generate a synthetic surface CSV");
  synth->add_option("--out", sy_out, "output surface CSV");
  synth->add_option("--genders", sy_genders, "comma-separated genders");
  synth->add_option("--years", sy_years, "year range first:last");
  synth->add_option("--ages", sy_ages, "age range first:last");
  synth->add_option("--drift", sy_drift, "period index drift");
  synth->add_option("--kappa-sigma", sy_ksigma, "random-walk innovation sd");
  synth->add_option("--noise-sigma", sy_nsigma, "log-scale observation noise sd");
  synth->add_option("--seed", sy_seed, "generator seed");

  // backtest
  std::string bt_surface, bt_gender = "female", bt_target = "validation",
              bt_models = "LC_POISSON,APC,CBD,CBD_COHORT,LC_GAUSSIAN,LC_E0_ADJUST,"
                          "LC_NO_ADJUST,FTS",
              bt_out = "forecasts.csv", bt_stats;
  int bt_train = 60, bt_val = 10, bt_test = 10, bt_h = 10;
  double bt_alpha = 0.2;
  auto* backtest = app.add_subcommand("backtest", "expanding-window forecasts");
  backtest->add_option("--surface", bt_surface, "surface CSV")->required();
  backtest->add_option("--gender", bt_gender, "female|male");
  backtest->add_option("--train-len", bt_train, "training years");
  backtest->add_option("--val-len", bt_val, "validation years");
  backtest->add_option("--test-len", bt_test, "test years");
  backtest->add_option("--target", bt_target, "validation|test");
  backtest->add_option("--models", bt_models, "comma-separated roster");
  backtest->add_option("--horizon", bt_h, "max forecast horizon H");
  backtest->add_option("--alpha", bt_alpha, "interval level alpha");
  backtest->add_option("--out", bt_out, "output forecasts CSV");
  backtest->add_option("--fit-stats", bt_stats, "output fit-stats CSV");

  // weights
  std::string w_forecasts, w_surface, w_gender = "female", w_scheme = "all",
              w_out = "weights.csv", w_trace, w_stats;
  StageFrame w_frame;
  int w_h = 10;
  double w_alpha = 0.2;
  std::size_t w_samples = 2048;
  std::uint64_t w_seed = 20260810;
  attribution::ForestHyperparams w_forest;
  bool w_gap = false, w_pool = false;
  auto* weights = app.add_subcommand("weights", "compute combination weights");
  weights->add_option("--forecasts", w_forecasts, "validation forecasts CSV")->required();
  weights->add_option("--surface", w_surface, "surface CSV with actuals")->required();
  weights->add_option("--gender", w_gender, "female|male");
  weights->add_option("--target-start", w_frame.target_start, "first validation year")
      ->required();
  weights->add_option("--target-len", w_frame.target_len, "validation length")->required();
  weights->add_option("--horizon", w_h, "max horizon H");
  weights->add_option("--alpha", w_alpha, "interval level alpha");
  weights->add_option("--scheme", w_scheme, "all|equal|shapley|inv_mse|inv_aic");
  weights->add_option("--samples", w_samples, "attribution sample count M");
  weights->add_option("--seed", w_seed, "attribution seed");
  weights->add_option("--trees", w_forest.tree_count, "forest size");
  weights->add_option("--max-depth", w_forest.max_depth, "tree depth cap");
  weights->add_option("--min-leaf", w_forest.min_leaf_size, "min rows per leaf");
  weights->add_option("--mtry", w_forest.features_per_split, "features per split");
  weights->add_flag("--gap-tolerant", w_gap, "average over available windows");
  weights->add_flag("--pool-horizons", w_pool, "one forest across horizons");
  weights->add_option("--out", w_out, "output weights CSV");
  weights->add_option("--trace", w_trace, "output attribution trace CSV");
  weights->add_option("--fit-stats", w_stats, "fit-stats CSV (needed for inv_aic)");

  // combine
  std::string c_forecasts, c_weights, c_scheme = "shapley", c_gender = "female",
              c_out = "combined.csv";
  StageFrame c_frame;
  int c_h = 10;
  double c_alpha = 0.2;
  bool c_gap = false;
  auto* comb = app.add_subcommand("combine", "combine test forecasts under weights");
  comb->add_option("--forecasts", c_forecasts, "test forecasts CSV")->required();
  comb->add_option("--weights", c_weights, "weights CSV")->required();
  comb->add_option("--scheme", c_scheme, "scheme to read from the weights CSV");
  comb->add_option("--gender", c_gender, "female|male");
  comb->add_option("--target-start", c_frame.target_start, "first test year")->required();
  comb->add_option("--target-len", c_frame.target_len, "test length")->required();
  comb->add_option("--horizon", c_h, "max horizon H");
  comb->add_option("--alpha", c_alpha, "interval level alpha");
  comb->add_flag("--gap-tolerant", c_gap, "renormalize over available models");
  comb->add_option("--out", c_out, "output combined CSV");

  // evaluate
  std::string e_combined, e_surface, e_gender = "female", e_prefix = "scores";
  double e_alpha = 0.2;
  auto* eval = app.add_subcommand("evaluate", "score combined forecasts");
  eval->add_option("--combined", e_combined, "combined forecasts CSV")->required();
  eval->add_option("--surface", e_surface, "surface CSV with actuals")->required();
  eval->add_option("--gender", e_gender, "female|male");
  eval->add_option("--alpha", e_alpha, "interval level alpha");
  eval->add_option("--out-prefix", e_prefix, "output prefix");

  // report
  std::string r_config, r_data, r_out_dir;
  bool r_synth = false;
  std::uint64_t r_seed = 0;
  unsigned r_threads = 0;
  bool r_have_seed = false;
  auto* report = app.add_subcommand("report", "run the full pipeline");
  report->add_option("--config", r_config, "key = value config file");
  report->add_option("--data", r_data, "HMD rate file (overrides config)");
  report->add_flag("--synth", r_synth, "synthetic data (overrides config)");
  report->add_option("--out-dir", r_out_dir, "report directory (overrides config)");
  report->add_option("--seed", r_seed, "master seed (overrides config)")
      ->trigger_on_parse()
      ->each([&](const std::string&) { r_have_seed = true; });
  report->add_option("--threads", r_threads, "worker cap (0 = auto)");

  // audit-axioms
  std::string a_game;
  std::size_t a_samples = 0;
  std::uint64_t a_seed = 1;
  bool a_appendix = false;
  auto* audit = app.add_subcommand("audit-axioms", "audit allocations against the axioms");
  audit->add_option("--game", a_game, "game file (see README for the format)");
  audit->add_option("--samples", a_samples, "also run the sampling estimator with M draws");
  audit->add_option("--seed", a_seed, "sampling seed");
  audit->add_flag("--appendix-a", a_appendix, "run the built-in two-model counterexample");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(in_data, in_out, in_years);
    if (*synth) {
      return cmd_synth(sy_out, sy_genders, sy_years, sy_ages, sy_drift, sy_ksigma,
                       sy_nsigma, sy_seed);
    }
    if (*backtest) {
      return cmd_backtest(bt_surface, bt_gender, bt_train, bt_val, bt_test, bt_target,
                          bt_models, bt_h, bt_alpha, bt_out, bt_stats);
    }
    if (*weights) {
      return cmd_weights(w_forecasts, w_surface, w_gender, w_frame, w_h, w_alpha,
                         w_scheme, w_samples, w_seed, w_forest, w_gap, w_pool, w_out,
                         w_trace, w_stats);
    }
    if (*comb) {
      return cmd_combine(c_forecasts, c_weights, c_scheme, c_gender, c_frame, c_h,
                         c_alpha, c_gap, c_out);
    }
    if (*eval) return cmd_evaluate(e_combined, e_surface, e_gender, e_alpha, e_prefix);
    if (*report) {
      pipeline::PipelineConfig cfg;
      if (!r_config.empty()) cfg = pipeline::load_config_file(r_config);
      if (!r_data.empty()) cfg.data_path = r_data;
      if (r_synth) cfg.synth = true;
      if (!r_out_dir.empty()) cfg.out_dir = r_out_dir;
      if (r_have_seed) cfg.seed = r_seed;
      if (r_threads > 0) cfg.threads = r_threads;
      const auto res = pipeline::run_pipeline(cfg);
      std::cout << "report written to " << res.out_dir.string() << "\n";
      for (const auto& f : res.written_files) std::cout << "  " << f << "\n";
      return kExitOk;
    }
    if (*audit) {
      if (!a_appendix && a_game.empty()) {
        throw ConfigError("audit-axioms needs --game or --appendix-a");
      }
      return cmd_audit_axioms(a_game, a_samples, a_seed, a_appendix);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitConfig;
}
