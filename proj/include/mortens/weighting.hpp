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

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mortens/backtest.hpp"
#include "mortens/errors.hpp"
#include "mortens/forest.hpp"
#include "mortens/models.hpp"
#include "mortens/numeric.hpp"
#include "mortens/shap.hpp"
#include "mortens/surface.hpp"

namespace mortens::mortality {

enum class WeightScheme { equal, shapley, inv_mse, inv_aic };

inline std::string_view to_string(WeightScheme s) {
  switch (s) {
    case WeightScheme::equal: return "equal";
    case WeightScheme::shapley: return "shapley";
    case WeightScheme::inv_mse: return "inv_mse";
    case WeightScheme::inv_aic: return "inv_aic";
  }
  return "?";
}

inline WeightScheme scheme_from_string(std::string_view s) {
  for (WeightScheme w : {WeightScheme::equal, WeightScheme::shapley, WeightScheme::inv_mse,
                         WeightScheme::inv_aic}) {
    if (to_string(w) == s) return w;
  }
  throw ConfigError("unknown weight scheme '" + std::string(s) + "'");
}

/// Nonnegative combination weights summing to one.
struct WeightVector {
  WeightScheme scheme = WeightScheme::equal;
  Gender gender = Gender::female;
  std::map<ModelId, double> weights;

  void validate() const {
    double total = 0.0;
    for (const auto& [id, w] : weights) {
      if (w < 0.0 || !std::isfinite(w)) {
        throw NumericError("weight vector: negative or non-finite weight");
      }
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw NumericError("weight vector: weights sum to " + std::to_string(total));
    }
  }
};

/// Standardized scores (x - mean) / sd with the sample (n-1) sd; an
/// all-equal input (sd = 0) maps to all zeros, which softmax turns into
/// equal weights.
inline std::vector<double> standardized_scores(std::span<const double> values) {
  const double m = numeric::mean(values);
  const double sd = numeric::sample_sd(values);
  std::vector<double> out(values.size(), 0.0);
  if (sd > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - m) / sd;
  }
  return out;
}

inline std::vector<double> softmax(std::span<const double> scores) {
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - top);
    total += out[i];
  }
  for (double& w : out) w /= total;
  return out;
}

/// AIC = |R| ln(RSS / |R|) + 2p, with the RSS floored at 1e-300.
inline double aic_value(long n_resid, double rss, int parameter_count) {
  if (n_resid <= 0) throw std::invalid_argument("aic_value: empty residual set");
  const double n = static_cast<double>(n_resid);
  return n * std::log(std::max(rss, 1e-300) / n) + 2.0 * parameter_count;
}

/// Bookkeeping behind a Shapley weight vector: the per-(age, horizon)
/// attribution tensor, its absolute means, the standardization, and the
/// local-accuracy audit of every attribution the run emitted.
struct ShapleyWeightTrace {
  std::vector<ModelId> models;
  std::vector<Eigen::MatrixXd> phi_hat;  // per model: ages x horizons
  std::vector<double> phi_bar;
  std::vector<double> phi_tilde;
  std::vector<double> weights;
  double score_sd = 0.0;
  double worst_local_accuracy_ratio = 0.0;  // max |residual| / (4 aggregate SE)
};

struct ShapleyWeightOptions {
  attribution::ForestHyperparams forest;
  std::size_t samples = 2048;
  std::uint64_t seed = 0;
  bool pool_horizons = false;  // one forest across horizons instead of per h
  bool gap_tolerant = false;
};

namespace detail {

inline std::vector<std::size_t> eligible_models(const WindowForecasts& wf,
                                                bool gap_tolerant) {
  std::vector<std::size_t> out;
  for (std::size_t mi = 0; mi < wf.models.size(); ++mi) {
    bool complete = true;
    for (const auto& s : wf.sets[mi]) {
      if (!s) complete = false;
    }
    if (complete || gap_tolerant) out.push_back(mi);
  }
  if (!gap_tolerant && out.size() != wf.models.size()) {
    std::string missing;
    for (const auto& gap : wf.gaps) {
      missing += " " + std::string(to_string(gap.model)) + "@" + std::to_string(gap.zeta);
    }
    throw DataError("weighting: models have validation gaps:" + missing +
                    " (enable gap-tolerant mode to average over available windows)");
  }
  return out;
}

/// Windows where every listed model produced a forecast at horizon h.
inline std::vector<int> complete_windows(const WindowForecasts& wf,
                                         const std::vector<std::size_t>& models, int h) {
  std::vector<int> out;
  for (int zeta = 0; zeta + h <= wf.target_len; ++zeta) {
    bool ok = true;
    for (std::size_t mi : models) {
      const auto& s = wf.sets[mi][static_cast<std::size_t>(zeta)];
      if (!s || s->horizons < h) ok = false;
    }
    if (ok) out.push_back(zeta);
  }
  return out;
}

inline WeightVector weights_from_inverse(const WindowForecasts& wf,
                                         const std::vector<std::size_t>& models,
                                         const std::vector<double>& criteria,
                                         WeightScheme scheme) {
  WeightVector out;
  out.scheme = scheme;
  out.gender = wf.gender;
  std::vector<std::size_t> zeros;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (criteria[k] == 0.0) zeros.push_back(k);
  }
  if (!zeros.empty()) {
    // Perfect scores dominate: unit mass split over the zero-criterion models.
    for (std::size_t k = 0; k < models.size(); ++k) out.weights[wf.models[models[k]]] = 0.0;
    for (std::size_t k : zeros) {
      out.weights[wf.models[models[k]]] = 1.0 / static_cast<double>(zeros.size());
    }
  } else {
    double total = 0.0;
    for (double c : criteria) total += 1.0 / c;
    for (std::size_t k = 0; k < models.size(); ++k) {
      out.weights[wf.models[models[k]]] = (1.0 / criteria[k]) / total;
    }
  }
  out.validate();
  return out;
}

}  // namespace detail

/// Equal weights 1/N.
inline WeightVector equal_weights(const std::vector<ModelId>& models,
                                  Gender gender = Gender::female) {
  if (models.empty()) throw ConfigError("equal_weights: empty model list");
  WeightVector out;
  out.scheme = WeightScheme::equal;
  out.gender = gender;
  for (ModelId id : models) {
    out.weights[id] = 1.0 / static_cast<double>(models.size());
  }
  out.validate();
  return out;
}

/// Inverse mean-squared-error weights. Per horizon, the MSE averages
/// squared log-scale errors over ages and windows; the per-model criterion
/// is the mean over horizons, and weights are proportional to its inverse.
inline WeightVector inverse_mse_weights(const WindowForecasts& wf,
                                        const MortalitySurface& actuals,
                                        bool gap_tolerant = false) {
  const auto models = detail::eligible_models(wf, gap_tolerant);
  if (models.empty()) throw DataError("inverse_mse_weights: no eligible models");
  std::vector<double> mse_bar(models.size(), 0.0);
  for (std::size_t k = 0; k < models.size(); ++k) {
    const std::size_t mi = models[k];
    std::vector<double> per_h;
    for (int h = 1; h <= wf.horizons; ++h) {
      const auto windows = detail::complete_windows(wf, {mi}, h);
      if (windows.empty()) continue;
      std::vector<double> sq;
      sq.reserve(windows.size() * wf.ages.size());
      for (int zeta : windows) {
        const auto& set = *wf.sets[mi][static_cast<std::size_t>(zeta)];
        for (std::size_t xi = 0; xi < wf.ages.size(); ++xi) {
          const double err =
              std::log(set.point(static_cast<Eigen::Index>(xi), h - 1)) -
              detail::log_actual(actuals, wf.ages[xi], set.target_year(h));
          sq.push_back(err * err);
        }
      }
      per_h.push_back(numeric::mean(sq));
    }
    if (per_h.empty()) throw DataError("inverse_mse_weights: no scored windows");
    mse_bar[k] = numeric::mean(per_h);
  }
  return detail::weights_from_inverse(wf, models, mse_bar, WeightScheme::inv_mse);
}

struct AicWeightResult {
  WeightVector weights;
  std::vector<double> aic_bar;  // per eligible model, before any shift
  double shift = 0.0;           // applied when some mean AIC was <= 0
};

/// Inverse-AIC weights from full-training-set residual statistics. Mean
/// AICs are shifted by (1 - min) when any is non-positive so that the
/// inverse stays ordering-preserving.
inline AicWeightResult inverse_aic_weights(const WindowForecasts& wf,
                                           bool gap_tolerant = false) {
  const auto models = detail::eligible_models(wf, gap_tolerant);
  if (models.empty()) throw DataError("inverse_aic_weights: no eligible models");
  AicWeightResult out;
  out.aic_bar.resize(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) {
    std::vector<double> per_window;
    for (const auto& fs : wf.stats[models[k]]) {
      if (fs) per_window.push_back(aic_value(fs->n_resid, fs->rss, fs->parameter_count));
    }
    if (per_window.empty()) throw DataError("inverse_aic_weights: missing fit stats");
    out.aic_bar[k] = numeric::mean(per_window);
  }
  std::vector<double> criteria = out.aic_bar;
  const double lowest = *std::min_element(criteria.begin(), criteria.end());
  if (lowest <= 0.0) {
    out.shift = 1.0 - lowest;
    for (double& c : criteria) c += out.shift;
  }
  out.weights = detail::weights_from_inverse(wf, models, criteria, WeightScheme::inv_aic);
  return out;
}

/// Shapley-attribution weights. For each horizon the validation forecasts
/// form a panel with one feature per model (log scale); a regression
/// forest fit to that panel acts as the characteristic function, sampled
/// attributions are averaged over windows into phi_hat(x, h), absolute
/// values averaged into phi_bar, standardized, and passed through softmax.
inline std::pair<WeightVector, ShapleyWeightTrace> shapley_weights(
    const WindowForecasts& wf, const MortalitySurface& actuals,
    const ShapleyWeightOptions& options) {
  const auto models = detail::eligible_models(wf, options.gap_tolerant);
  if (models.size() < 2) {
    throw ConfigError("shapley_weights: need at least two eligible models");
  }
  const std::size_t n_models = models.size();
  const std::size_t n_ages = wf.ages.size();
  const int horizons = wf.horizons;

  ShapleyWeightTrace trace;
  for (std::size_t mi : models) trace.models.push_back(wf.models[mi]);
  trace.phi_hat.assign(n_models,
                       Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_ages), horizons));

  struct PanelRow {
    int h;
    std::size_t age_index;
  };

  // Build per-horizon panels (or one pooled panel) and attribute them.
  std::vector<Eigen::MatrixXd> sum_phi(
      n_models, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_ages), horizons));
  std::vector<Eigen::MatrixXd> count_phi(
      n_models, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_ages), horizons));

  auto run_panel = [&](const numeric::Table& features, std::span<const double> response,
                       const std::vector<PanelRow>& row_meta, std::uint64_t seed) {
    const auto forest = attribution::fit_forest(features, response, options.forest, seed);
    attribution::BackgroundSet background;
    background.rows = features;
    const auto results = attribution::attribute_panel(
        forest, features, background, options.samples, rng::derive_seed(seed, 0x51AB),
        attribution::AttributionMode::sampled, attribution::PanelSeedMode::per_row);
    for (std::size_t r = 0; r < results.size(); ++r) {
      const auto& res = results[r];
      const double denom = std::max(4.0 * res.aggregate_std_error, 1e-12);
      trace.worst_local_accuracy_ratio =
          std::max(trace.worst_local_accuracy_ratio,
                   std::abs(res.local_accuracy_residual()) / denom);
      const auto row = static_cast<Eigen::Index>(row_meta[r].age_index);
      const int col = row_meta[r].h - 1;
      for (std::size_t k = 0; k < n_models; ++k) {
        sum_phi[k](row, col) += res.phi[k];
        count_phi[k](row, col) += 1.0;
      }
    }
  };

  auto build_rows = [&](int h, std::vector<double>& features_flat,
                        std::vector<double>& response, std::vector<PanelRow>& meta) {
    const auto windows = detail::complete_windows(wf, models, h);
    for (int zeta : windows) {
      for (std::size_t xi = 0; xi < n_ages; ++xi) {
        for (std::size_t k = 0; k < n_models; ++k) {
          const auto& set = *wf.sets[models[k]][static_cast<std::size_t>(zeta)];
          features_flat.push_back(
              std::log(set.point(static_cast<Eigen::Index>(xi), h - 1)));
        }
        const auto& any_set = *wf.sets[models[0]][static_cast<std::size_t>(zeta)];
        response.push_back(
            detail::log_actual(actuals, wf.ages[xi], any_set.target_year(h)));
        meta.push_back({h, xi});
      }
    }
  };

  if (options.pool_horizons) {
    std::vector<double> features_flat, response;
    std::vector<PanelRow> meta;
    for (int h = 1; h <= horizons; ++h) build_rows(h, features_flat, response, meta);
    if (meta.empty()) throw DataError("shapley_weights: empty attribution panel");
    numeric::Table features(meta.size(), n_models, std::move(features_flat));
    run_panel(features, response, meta, rng::derive_seed(options.seed, 0));
  } else {
    for (int h = 1; h <= horizons; ++h) {
      std::vector<double> features_flat, response;
      std::vector<PanelRow> meta;
      build_rows(h, features_flat, response, meta);
      if (meta.empty()) continue;
      numeric::Table features(meta.size(), n_models, std::move(features_flat));
      run_panel(features, response, meta,
                rng::derive_seed(options.seed, static_cast<std::uint64_t>(h)));
    }
  }

  for (std::size_t k = 0; k < n_models; ++k) {
    trace.phi_hat[k] =
        (count_phi[k].array() > 0.0)
            .select(sum_phi[k].array() / count_phi[k].array().max(1.0), 0.0);
  }

  // Models whose validation forecasts are bitwise identical are
  // exchangeable players; the symmetry axiom forces equal attribution,
  // which a column-labeled forest cannot deliver on its own. Members of
  // an identical group therefore share their mean attribution.
  std::vector<std::size_t> group(n_models);
  for (std::size_t k = 0; k < n_models; ++k) group[k] = k;
  for (std::size_t i = 0; i < n_models; ++i) {
    for (std::size_t j = i + 1; j < n_models; ++j) {
      if (group[j] != j) continue;
      bool same = true;
      for (int zeta = 0; zeta < wf.target_len && same; ++zeta) {
        const auto& a = wf.sets[models[i]][static_cast<std::size_t>(zeta)];
        const auto& b = wf.sets[models[j]][static_cast<std::size_t>(zeta)];
        if (!a || !b) {
          same = (!a && !b);
        } else if (a->point != b->point) {
          same = false;
        }
      }
      if (same) group[j] = group[i];
    }
  }
  for (std::size_t leader = 0; leader < n_models; ++leader) {
    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < n_models; ++k) {
      if (group[k] == leader) members.push_back(k);
    }
    if (members.size() < 2) continue;
    Eigen::MatrixXd shared = Eigen::MatrixXd::Zero(trace.phi_hat[leader].rows(),
                                                   trace.phi_hat[leader].cols());
    for (std::size_t k : members) shared += trace.phi_hat[k];
    shared /= static_cast<double>(members.size());
    for (std::size_t k : members) trace.phi_hat[k] = shared;
  }

  trace.phi_bar.assign(n_models, 0.0);
  for (std::size_t k = 0; k < n_models; ++k) {
    trace.phi_bar[k] = trace.phi_hat[k].cwiseAbs().sum() /
                       (static_cast<double>(horizons) * static_cast<double>(n_ages));
  }
  trace.phi_tilde = standardized_scores(trace.phi_bar);
  trace.score_sd = numeric::sample_sd(trace.phi_bar);
  trace.weights = softmax(trace.phi_tilde);

  WeightVector out;
  out.scheme = WeightScheme::shapley;
  out.gender = wf.gender;
  for (std::size_t k = 0; k < n_models; ++k) {
    out.weights[trace.models[k]] = trace.weights[k];
  }
  out.validate();
  return {out, trace};
}

/// Convex combination of the per-model forecasts under a weight vector;
/// interval bounds pool linearly with the same weights. A missing model
/// forecast is an error unless gap-tolerant renormalization is requested.
inline std::vector<ForecastSet> combine(const WindowForecasts& wf,
                                        const WeightVector& weights,
                                        bool gap_tolerant = false) {
  weights.validate();
  std::vector<ForecastSet> out;
  for (int zeta = 0; zeta < wf.target_len; ++zeta) {
    std::vector<std::pair<std::size_t, double>> present;  // model index, weight
    double mass = 0.0;
    for (const auto& [id, w] : weights.weights) {
      const std::size_t mi = wf.model_index(id);
      if (wf.sets[mi][static_cast<std::size_t>(zeta)]) {
        present.push_back({mi, w});
        mass += w;
      } else if (!gap_tolerant) {
        throw DataError("combine: model " + std::string(to_string(id)) +
                        " missing window " + std::to_string(zeta));
      }
    }
    if (present.empty() || mass <= 0.0) {
      throw DataError("combine: no usable forecasts in window " + std::to_string(zeta));
    }
    ForecastSet combined;
    const auto& proto = *wf.sets[present.front().first][static_cast<std::size_t>(zeta)];
    combined.source = to_string(weights.scheme);
    combined.gender = wf.gender;
    combined.ages = proto.ages;
    combined.train_end_year = proto.train_end_year;
    combined.horizons = proto.horizons;
    combined.alpha = proto.alpha;
    const auto rows = static_cast<Eigen::Index>(proto.ages.size());
    combined.point = Eigen::MatrixXd::Zero(rows, proto.horizons);
    combined.lower = Eigen::MatrixXd::Zero(rows, proto.horizons);
    combined.upper = Eigen::MatrixXd::Zero(rows, proto.horizons);
    for (const auto& [mi, w] : present) {
      const auto& set = *wf.sets[mi][static_cast<std::size_t>(zeta)];
      const double scaled = w / mass;
      combined.point += scaled * set.point;
      combined.lower += scaled * set.lower;
      combined.upper += scaled * set.upper;
    }
    combined.validate();
    out.push_back(std::move(combined));
  }
  return out;
}

/// Weights CSV reader (columns scheme,gender,model_id,weight,...), keyed
/// by scheme and gender.
inline WeightVector read_weights_csv(std::istream& in, WeightScheme scheme,
                                     Gender gender) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("scheme,gender,model_id,weight", 0) != 0) {
    throw DataError("weights CSV: bad header");
  }
  WeightVector out;
  out.scheme = scheme;
  out.gender = gender;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string s, g, model, weight;
    if (!std::getline(ls, s, ',') || !std::getline(ls, g, ',') ||
        !std::getline(ls, model, ',') || !std::getline(ls, weight, ',')) {
      throw DataError("weights CSV: malformed row '" + line + "'");
    }
    if (s != to_string(scheme) || gender_from_string(g) != gender) continue;
    out.weights[model_from_string(model)] = std::stod(weight);
  }
  if (out.weights.empty()) {
    throw DataError("weights CSV: no rows for scheme '" +
                    std::string(to_string(scheme)) + "' and gender '" +
                    std::string(to_string(gender)) + "'");
  }
  out.validate();
  return out;
}

/// Jensen audit on the rate scale, where the combination is linear: the
/// combined squared error at a cell can exceed the weight-averaged squared
/// errors of the members only by rounding. Returns the worst excess.
inline double jensen_violation(const WindowForecasts& wf, const WeightVector& weights,
                               const std::vector<ForecastSet>& combined,
                               const MortalitySurface& actuals) {
  double worst = 0.0;
  for (int zeta = 0; zeta < wf.target_len; ++zeta) {
    const auto& comb = combined[static_cast<std::size_t>(zeta)];
    for (std::size_t xi = 0; xi < wf.ages.size(); ++xi) {
      for (int h = 1; h <= comb.horizons; ++h) {
        const double actual = actuals.rates(actuals.age_index(wf.ages[xi]),
                                            actuals.year_index(comb.target_year(h)));
        const double ce = comb.point(static_cast<Eigen::Index>(xi), h - 1) - actual;
        double averaged = 0.0;
        for (const auto& [id, w] : weights.weights) {
          const auto& set = *wf.sets[wf.model_index(id)][static_cast<std::size_t>(zeta)];
          const double e = set.point(static_cast<Eigen::Index>(xi), h - 1) - actual;
          averaged += w * e * e;
        }
        worst = std::max(worst, ce * ce - averaged);
      }
    }
  }
  return worst;
}

}  // namespace mortens::mortality
