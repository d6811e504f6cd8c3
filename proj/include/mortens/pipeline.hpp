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

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mortens/backtest.hpp"
#include "mortens/errors.hpp"
#include "mortens/evaluation.hpp"
#include "mortens/hmd.hpp"
#include "mortens/models.hpp"
#include "mortens/parallel.hpp"
#include "mortens/surface.hpp"
#include "mortens/weighting.hpp"

namespace mortens::pipeline {

inline constexpr const char* kVersion = "0.1.0";

using mortality::Gender;
using mortality::ModelId;
using mortality::WeightScheme;

/// End-to-end run configuration. Defaults reproduce the standard frame:
/// 1940-2019 observations, 60/10/10 split, H = 10, 80% intervals.
struct PipelineConfig {
  std::string data_path;        // HMD rate file; empty with synth = true
  bool synth = false;           // generate synthetic surfaces instead
  std::vector<Gender> genders = {Gender::female, Gender::male};
  int year_start = 1940;
  int year_end = 2019;
  int train_len = 60;
  int val_len = 10;
  int test_len = 10;
  std::vector<ModelId> models =
      std::vector<ModelId>(mortality::kAllModels.begin(), mortality::kAllModels.end());
  int horizon = 10;
  double alpha = 0.2;
  std::size_t attribution_samples = 2048;
  attribution::ForestHyperparams forest;
  std::uint64_t seed = 20260810;
  std::string out_dir = "out";
  bool gap_tolerant = false;
  bool pool_horizons = false;
  bool charts = true;
  unsigned threads = 0;  // 0 = hardware default

  void validate() const {
    if (!synth && data_path.empty()) {
      throw ConfigError("config: either a data path or synth mode is required");
    }
    if (genders.empty()) throw ConfigError("config: no genders selected");
    if (models.size() < 2) throw ConfigError("config: need at least two models");
    if (horizon < 1) throw ConfigError("config: horizon must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("config: alpha not in (0,1)");
    if (attribution_samples < 1) throw ConfigError("config: attribution samples >= 1");
  }
};

namespace detail {

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: bad boolean '" + v + "'");
}

template <class T, class Fn>
std::vector<T> parse_list(const std::string& v, Fn&& item) {
  std::vector<T> out;
  std::istringstream ls(v);
  std::string tok;
  while (std::getline(ls, tok, ',')) {
    if (!tok.empty()) out.push_back(item(tok));
  }
  return out;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  const auto b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace detail

/// Applies one `key = value` setting to the config.
inline void apply_config_entry(PipelineConfig& cfg, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  if (key == "data") {
    cfg.data_path = value;
  } else if (key == "synth") {
    cfg.synth = parse_bool(value);
  } else if (key == "genders") {
    cfg.genders = detail::parse_list<Gender>(
        value, [](const std::string& g) { return mortality::gender_from_string(g); });
  } else if (key == "year_start") {
    cfg.year_start = std::stoi(value);
  } else if (key == "year_end") {
    cfg.year_end = std::stoi(value);
  } else if (key == "train_len") {
    cfg.train_len = std::stoi(value);
  } else if (key == "val_len") {
    cfg.val_len = std::stoi(value);
  } else if (key == "test_len") {
    cfg.test_len = std::stoi(value);
  } else if (key == "models") {
    cfg.models = detail::parse_list<ModelId>(
        value, [](const std::string& m) { return mortality::model_from_string(m); });
  } else if (key == "horizon") {
    cfg.horizon = std::stoi(value);
  } else if (key == "alpha") {
    cfg.alpha = std::stod(value);
  } else if (key == "attribution_samples") {
    cfg.attribution_samples = static_cast<std::size_t>(std::stoul(value));
  } else if (key == "forest_trees") {
    cfg.forest.tree_count = std::stoi(value);
  } else if (key == "forest_max_depth") {
    cfg.forest.max_depth = std::stoi(value);
  } else if (key == "forest_min_leaf") {
    cfg.forest.min_leaf_size = std::stoi(value);
  } else if (key == "forest_mtry") {
    cfg.forest.features_per_split = std::stoi(value);
  } else if (key == "forest_bootstrap") {
    cfg.forest.bootstrap = parse_bool(value);
  } else if (key == "seed") {
    cfg.seed = std::stoull(value);
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else if (key == "gap_tolerant") {
    cfg.gap_tolerant = parse_bool(value);
  } else if (key == "pool_horizons") {
    cfg.pool_horizons = parse_bool(value);
  } else if (key == "charts") {
    cfg.charts = parse_bool(value);
  } else if (key == "threads") {
    cfg.threads = static_cast<unsigned>(std::stoul(value));
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

/// Key-value config file: `key = value` lines, `#` comments.
inline PipelineConfig load_config(std::istream& in) {
  PipelineConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_config_entry(cfg, detail::trim(stripped.substr(0, eq)),
                         detail::trim(stripped.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

inline PipelineConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return load_config(in);
}

inline std::string config_echo(const PipelineConfig& cfg) {
  std::ostringstream out;
  out << "version = " << kVersion << "\n";
  out << "data = " << cfg.data_path << "\n";
  out << "synth = " << (cfg.synth ? "true" : "false") << "\n";
  out << "genders = ";
  for (std::size_t i = 0; i < cfg.genders.size(); ++i) {
    out << (i ? "," : "") << mortality::to_string(cfg.genders[i]);
  }
  out << "\n";
  out << "year_start = " << cfg.year_start << "\n";
  out << "year_end = " << cfg.year_end << "\n";
  out << "train_len = " << cfg.train_len << "\n";
  out << "val_len = " << cfg.val_len << "\n";
  out << "test_len = " << cfg.test_len << "\n";
  out << "models = ";
  for (std::size_t i = 0; i < cfg.models.size(); ++i) {
    out << (i ? "," : "") << mortality::to_string(cfg.models[i]);
  }
  out << "\n";
  out << "horizon = " << cfg.horizon << "\n";
  out << "alpha = " << cfg.alpha << "\n";
  out << "attribution_samples = " << cfg.attribution_samples << "\n";
  out << "forest_trees = " << cfg.forest.tree_count << "\n";
  out << "forest_max_depth = " << cfg.forest.max_depth << "\n";
  out << "forest_min_leaf = " << cfg.forest.min_leaf_size << "\n";
  out << "forest_mtry = " << cfg.forest.features_per_split << "\n";
  out << "forest_bootstrap = " << (cfg.forest.bootstrap ? "true" : "false") << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "out_dir = " << cfg.out_dir << "\n";
  out << "gap_tolerant = " << (cfg.gap_tolerant ? "true" : "false") << "\n";
  out << "pool_horizons = " << (cfg.pool_horizons ? "true" : "false") << "\n";
  out << "charts = " << (cfg.charts ? "true" : "false") << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Per-gender results

struct GenderResults {
  Gender gender = Gender::female;
  std::map<WeightScheme, mortality::WeightVector> weights;
  mortality::ShapleyWeightTrace shapley_trace;
  mortality::AicWeightResult aic_result;
  std::map<WeightScheme, mortality::AccuracyTable> accuracy;
  std::map<WeightScheme, mortality::IntervalScoreTable> interval;
  mortality::DiagnosticsReport diagnostics;
  double jensen_max_excess = 0.0;
  std::size_t validation_gaps = 0;
  std::size_t test_gaps = 0;
};

struct PipelineResult {
  std::filesystem::path out_dir;
  std::vector<GenderResults> per_gender;
  std::vector<std::string> notes;
  std::vector<std::string> written_files;
};

inline constexpr std::array<WeightScheme, 4> kSchemeOrder = {
    WeightScheme::equal, WeightScheme::shapley, WeightScheme::inv_mse,
    WeightScheme::inv_aic};

namespace detail {

inline std::string fmt_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Writes content to `<dir>/<name>` via a temp file + rename.
inline void atomic_write(const std::filesystem::path& dir, const std::string& name,
                         const std::string& content, std::vector<std::string>& written) {
  const auto tmp = dir / (name + ".tmp");
  const auto final_path = dir / name;
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out << content;
  }
  std::filesystem::rename(tmp, final_path);
  written.push_back(name);
}

template <class Fn>
auto run_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + stage + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage " + stage + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError("stage " + stage + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("stage " + stage + ": " + e.what());
  } catch (const std::exception& e) {
    throw NumericError("stage " + stage + ": " + e.what());
  }
}

/// Paper-style table: h rows then a Mean row; (Female, Male) value pairs
/// per scheme in the order equal, shapley, inv_mse, inv_aic.
template <class ValueAt, class MeanOf>
std::string scheme_table_csv(const std::vector<GenderResults>& results, int horizons,
                             ValueAt&& value_at, MeanOf&& mean_of) {
  std::ostringstream out;
  out << "h";
  for (WeightScheme scheme : kSchemeOrder) {
    for (const auto& gr : results) {
      out << "," << mortality::to_string(scheme) << "_" << mortality::to_string(gr.gender);
    }
  }
  out << "\n";
  for (int h = 1; h <= horizons; ++h) {
    out << h;
    for (WeightScheme scheme : kSchemeOrder) {
      for (const auto& gr : results) out << "," << fmt_fixed(value_at(gr, scheme, h));
    }
    out << "\n";
  }
  out << "Mean";
  for (WeightScheme scheme : kSchemeOrder) {
    for (const auto& gr : results) out << "," << fmt_fixed(mean_of(gr, scheme));
  }
  out << "\n";
  return out.str();
}

/// Minimal static grouped bar chart of the four weight vectors.
inline std::string weights_chart_svg(const GenderResults& gr,
                                     const std::vector<ModelId>& models) {
  const int bar = 16, gap = 10, group_gap = 26, left = 150, top = 40;
  const double scale = 420.0;
  const int rows = static_cast<int>(models.size());
  const int height = top + rows * (4 * bar + gap + group_gap) + 60;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"680\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<text x=\"" << left << "\" y=\"20\" font-size=\"15\">combination weights ("
      << mortality::to_string(gr.gender) << ")</text>\n";
  static constexpr const char* kColors[4] = {"#888888", "#d62728", "#1f77b4", "#2ca02c"};
  for (std::size_t s = 0; s < kSchemeOrder.size(); ++s) {
    svg << "<rect x=\"" << left + 130 * static_cast<int>(s) << "\" y=\"26\" width=\"10\""
        << " height=\"10\" fill=\"" << kColors[s] << "\"/>"
        << "<text x=\"" << left + 130 * static_cast<int>(s) + 14 << "\" y=\"35\">"
        << mortality::to_string(kSchemeOrder[s]) << "</text>\n";
  }
  int y = top + 20;
  for (ModelId id : models) {
    svg << "<text x=\"10\" y=\"" << y + 2 * bar << "\">" << mortality::to_string(id)
        << "</text>\n";
    for (std::size_t s = 0; s < kSchemeOrder.size(); ++s) {
      const auto& wv = gr.weights.at(kSchemeOrder[s]);
      const auto it = wv.weights.find(id);
      const double w = it == wv.weights.end() ? 0.0 : it->second;
      svg << "<rect x=\"" << left << "\" y=\"" << y + static_cast<int>(s) * bar
          << "\" width=\"" << fmt_fixed(w * scale) << "\" height=\"" << bar - 2
          << "\" fill=\"" << kColors[s] << "\"/>\n";
      svg << "<text x=\"" << left + 4 + w * scale << "\" y=\""
          << y + static_cast<int>(s) * bar + bar - 5 << "\">" << fmt_fixed(w)
          << "</text>\n";
    }
    y += 4 * bar + gap + group_gap;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace detail

/// Runs the full weighting-and-evaluation flow for one gender: expanding
/// validation forecasts, the four weight schemes, expanding test
/// forecasts, combination, scoring, and diagnostics.
inline GenderResults run_gender(const PipelineConfig& cfg,
                                const mortality::MortalitySurface& surface,
                                const mortality::SplitPlan& plan) {
  using namespace mortality;
  GenderResults gr;
  gr.gender = surface.gender;

  const WindowForecasts validation = detail::run_stage("backtest-validation", [&] {
    return expanding_forecasts(surface, cfg.models, plan, TargetSet::validation,
                               cfg.horizon, cfg.alpha);
  });
  gr.validation_gaps = validation.gaps.size();

  detail::run_stage("weights", [&] {
    const MortalitySurface actuals = surface.year_range(plan.val_start, plan.val_end);
    gr.weights[WeightScheme::equal] = equal_weights(cfg.models, surface.gender);
    ShapleyWeightOptions opt;
    opt.forest = cfg.forest;
    opt.samples = cfg.attribution_samples;
    opt.seed = rng::derive_seed(cfg.seed, surface.gender == Gender::female ? 1 : 2);
    opt.pool_horizons = cfg.pool_horizons;
    opt.gap_tolerant = cfg.gap_tolerant;
    auto [sw, trace] = shapley_weights(validation, actuals, opt);
    gr.weights[WeightScheme::shapley] = std::move(sw);
    gr.shapley_trace = std::move(trace);
    gr.weights[WeightScheme::inv_mse] =
        inverse_mse_weights(validation, actuals, cfg.gap_tolerant);
    gr.aic_result = inverse_aic_weights(validation, cfg.gap_tolerant);
    gr.weights[WeightScheme::inv_aic] = gr.aic_result.weights;
    return 0;
  });

  const WindowForecasts test = detail::run_stage("backtest-test", [&] {
    return expanding_forecasts(surface, cfg.models, plan, TargetSet::test, cfg.horizon,
                               cfg.alpha);
  });
  gr.test_gaps = test.gaps.size();

  detail::run_stage("combine-evaluate", [&] {
    const MortalitySurface test_actuals = surface.year_range(plan.test_start, plan.test_end);
    for (WeightScheme scheme : kSchemeOrder) {
      const auto combined = combine(test, gr.weights.at(scheme), cfg.gap_tolerant);
      gr.jensen_max_excess =
          std::max(gr.jensen_max_excess,
                   jensen_violation(test, gr.weights.at(scheme), combined, test_actuals));
      gr.accuracy[scheme] = point_scores(combined, test_actuals);
      gr.interval[scheme] = interval_scores(combined, test_actuals, cfg.alpha);
    }
    const MortalitySurface val_actuals = surface.year_range(plan.val_start, plan.val_end);
    gr.diagnostics = diagnostics(validation, val_actuals);
    return 0;
  });

  if (gr.jensen_max_excess > 1e-9) {
    throw NumericError("combine-evaluate: Jensen dominance violated by " +
                       std::to_string(gr.jensen_max_excess));
  }
  return gr;
}

/// Full pipeline: ingest or synthesize, backtest, weight, combine, score,
/// and write the report directory. Any stage failure removes partial
/// outputs.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  using namespace mortality;
  cfg.validate();
  if (cfg.threads > 0) parallel::set_max_workers(cfg.threads);

  PipelineResult result;
  result.out_dir = cfg.out_dir;

  // Ingest or synthesize surfaces.
  std::vector<MortalitySurface> surfaces;
  detail::run_stage("ingest", [&] {
    if (cfg.synth) {
      for (Gender g : cfg.genders) {
        auto spec = default_synth_spec(
            [&] {
              std::vector<int> ages;
              for (int a = 0; a <= 100; ++a) ages.push_back(a);
              return ages;
            }(),
            [&] {
              std::vector<int> years;
              for (int y = cfg.year_start; y <= cfg.year_end; ++y) years.push_back(y);
              return years;
            }(),
            g, rng::derive_seed(cfg.seed, g == Gender::female ? 11 : 12));
        surfaces.push_back(synth_surface(spec).surface);
      }
      result.notes.push_back("synthetic surfaces generated");
    } else {
      auto ingest = parse_hmd_file(cfg.data_path,
                                   std::make_pair(cfg.year_start, cfg.year_end));
      for (Gender g : cfg.genders) surfaces.push_back(ingest.surface(g));
      for (const auto& note : ingest.notes) result.notes.push_back(note);
      result.notes.push_back("repaired cells: " + std::to_string(ingest.repairs.size()));
      for (const auto& rep : ingest.repairs) {
        result.notes.push_back("repair " + std::string(to_string(rep.gender)) + " age " +
                               std::to_string(rep.age) + " year " +
                               std::to_string(rep.year) + " " + rep.action);
      }
    }
    return 0;
  });

  const SplitPlan plan = detail::run_stage("split", [&] {
    return make_split(surfaces.front().years, cfg.train_len, cfg.val_len, cfg.test_len);
  });

  for (const auto& surface : surfaces) {
    result.per_gender.push_back(run_gender(cfg, surface, plan));
  }

  // Report artifacts: staged into the output directory, written atomically.
  detail::run_stage("report", [&] {
    std::filesystem::create_directories(result.out_dir);
    auto& written = result.written_files;
    try {
      // weights.csv with the Shapley trace columns
      std::ostringstream weights;
      weights << "scheme,gender,model_id,weight,phi_bar,phi_tilde\n";
      for (const auto& gr : result.per_gender) {
        for (WeightScheme scheme : kSchemeOrder) {
          const auto& wv = gr.weights.at(scheme);
          for (const auto& [id, w] : wv.weights) {
            weights << to_string(scheme) << "," << to_string(gr.gender) << ","
                    << to_string(id) << "," << detail::fmt_full(w);
            if (scheme == WeightScheme::shapley) {
              const auto& tr = gr.shapley_trace;
              for (std::size_t k = 0; k < tr.models.size(); ++k) {
                if (tr.models[k] == id) {
                  weights << "," << detail::fmt_full(tr.phi_bar[k]) << ","
                          << detail::fmt_full(tr.phi_tilde[k]);
                }
              }
            } else {
              weights << ",,";
            }
            weights << "\n";
          }
        }
      }
      detail::atomic_write(result.out_dir, "weights.csv", weights.str(), written);

      detail::atomic_write(
          result.out_dir, "accuracy_mse.csv",
          detail::scheme_table_csv(
              result.per_gender, cfg.horizon,
              [](const GenderResults& gr, WeightScheme s, int h) {
                return gr.accuracy.at(s).mse[static_cast<std::size_t>(h - 1)];
              },
              [](const GenderResults& gr, WeightScheme s) {
                return gr.accuracy.at(s).mean_mse;
              }),
          written);
      detail::atomic_write(
          result.out_dir, "accuracy_mae.csv",
          detail::scheme_table_csv(
              result.per_gender, cfg.horizon,
              [](const GenderResults& gr, WeightScheme s, int h) {
                return gr.accuracy.at(s).mae[static_cast<std::size_t>(h - 1)];
              },
              [](const GenderResults& gr, WeightScheme s) {
                return gr.accuracy.at(s).mean_mae;
              }),
          written);
      detail::atomic_write(
          result.out_dir, "interval_score.csv",
          detail::scheme_table_csv(
              result.per_gender, cfg.horizon,
              [](const GenderResults& gr, WeightScheme s, int h) {
                return gr.interval.at(s).score[static_cast<std::size_t>(h - 1)];
              },
              [](const GenderResults& gr, WeightScheme s) {
                return gr.interval.at(s).mean_score;
              }),
          written);

      std::ostringstream bias;
      bias << "gender,model_id,bias\n";
      for (const auto& gr : result.per_gender) {
        for (std::size_t mi = 0; mi < gr.diagnostics.models.size(); ++mi) {
          bias << to_string(gr.gender) << "," << to_string(gr.diagnostics.models[mi])
               << "," << detail::fmt_full(gr.diagnostics.bias[mi]) << "\n";
        }
      }
      detail::atomic_write(result.out_dir, "diagnostics_bias.csv", bias.str(), written);

      std::ostringstream corr;
      corr << "gender,model_a,model_b,correlation\n";
      for (const auto& gr : result.per_gender) {
        const auto& d = gr.diagnostics;
        for (std::size_t i = 0; i < d.models.size(); ++i) {
          for (std::size_t j = 0; j < d.models.size(); ++j) {
            corr << to_string(gr.gender) << "," << to_string(d.models[i]) << ","
                 << to_string(d.models[j]) << ",";
            if (d.correlation[i][j]) corr << detail::fmt_full(*d.correlation[i][j]);
            corr << "\n";
          }
        }
      }
      detail::atomic_write(result.out_dir, "diagnostics_corr.csv", corr.str(), written);

      std::ostringstream trace;
      trace << "gender,model_id,age,horizon,phi_hat\n";
      for (const auto& gr : result.per_gender) {
        const auto& tr = gr.shapley_trace;
        for (std::size_t k = 0; k < tr.models.size(); ++k) {
          for (Eigen::Index x = 0; x < tr.phi_hat[k].rows(); ++x) {
            for (Eigen::Index h = 0; h < tr.phi_hat[k].cols(); ++h) {
              trace << to_string(gr.gender) << "," << to_string(tr.models[k]) << ","
                    << x << "," << (h + 1) << ","
                    << detail::fmt_full(tr.phi_hat[k](x, h)) << "\n";
            }
          }
        }
      }
      detail::atomic_write(result.out_dir, "shapley_trace.csv", trace.str(), written);

      std::ostringstream manifest;
      manifest << "# mortens run manifest\n" << config_echo(cfg);
      for (const auto& gr : result.per_gender) {
        const std::string g = std::string(to_string(gr.gender));
        manifest << "validation_gaps_" << g << " = " << gr.validation_gaps << "\n";
        manifest << "test_gaps_" << g << " = " << gr.test_gaps << "\n";
        manifest << "jensen_max_excess_" << g << " = "
                 << detail::fmt_full(gr.jensen_max_excess) << "\n";
        manifest << "local_accuracy_worst_ratio_" << g << " = "
                 << detail::fmt_full(gr.shapley_trace.worst_local_accuracy_ratio) << "\n";
        manifest << "aic_shift_" << g << " = " << detail::fmt_full(gr.aic_result.shift)
                 << "\n";
      }
      for (const auto& note : result.notes) manifest << "note = " << note << "\n";
      detail::atomic_write(result.out_dir, "run_manifest.txt", manifest.str(), written);

      if (cfg.charts) {
        for (const auto& gr : result.per_gender) {
          detail::atomic_write(result.out_dir,
                               "weights_" + std::string(to_string(gr.gender)) + ".svg",
                               detail::weights_chart_svg(gr, cfg.models), written);
        }
      }
    } catch (...) {
      // Remove partial outputs before propagating.
      for (const auto& name : written) {
        std::error_code ec;
        std::filesystem::remove(result.out_dir / name, ec);
      }
      throw;
    }
    return 0;
  });

  return result;
}

}  // namespace mortens::pipeline
