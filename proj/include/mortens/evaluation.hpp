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

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mortens/backtest.hpp"
#include "mortens/errors.hpp"
#include "mortens/numeric.hpp"
#include "mortens/surface.hpp"

namespace mortens::mortality {

/// Point accuracy per horizon with a mean row; all errors on the log scale.
struct AccuracyTable {
  std::vector<int> horizons;
  std::vector<double> mse;
  std::vector<double> mae;
  double mean_mse = 0.0;
  double mean_mae = 0.0;
};

/// Mean interval score (x100) per horizon with a mean row.
struct IntervalScoreTable {
  std::vector<int> horizons;
  std::vector<double> score;  // already scaled by 100
  double mean_score = 0.0;
};

struct DiagnosticsReport {
  std::vector<ModelId> models;
  std::vector<double> bias;  // mean signed log-scale error per model
  // Pearson correlations between flattened log-forecast vectors; missing
  // when a vector is constant.
  std::vector<std::vector<std::optional<double>>> correlation;
};

/// Interval score S_alpha = width + (2/alpha) * distance outside the
/// interval. The score equals the width exactly when the observation
/// falls inside.
inline double interval_score(double lb, double ub, double observed, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("interval_score: alpha must be in (0,1)");
  }
  if (lb > ub) throw std::invalid_argument("interval_score: lb > ub");
  double s = ub - lb;
  if (observed < lb) s += (2.0 / alpha) * (lb - observed);
  if (observed > ub) s += (2.0 / alpha) * (observed - ub);
  return s;
}

namespace detail {

template <class CellFn>
void for_each_scored_cell(const std::vector<ForecastSet>& sets,
                          const MortalitySurface& actuals, int h, CellFn&& fn) {
  for (const auto& set : sets) {
    if (set.horizons < h) continue;
    for (std::size_t xi = 0; xi < set.ages.size(); ++xi) {
      const double actual = actuals.rates(actuals.age_index(set.ages[xi]),
                                          actuals.year_index(set.target_year(h)));
      fn(set, xi, actual);
    }
  }
}

inline int max_horizon(const std::vector<ForecastSet>& sets) {
  int h = 0;
  for (const auto& set : sets) h = std::max(h, set.horizons);
  return h;
}

}  // namespace detail

/// Log-scale MSE and MAE per horizon over all (age, window) cells.
inline AccuracyTable point_scores(const std::vector<ForecastSet>& sets,
                                  const MortalitySurface& actuals) {
  if (sets.empty()) throw DataError("point_scores: no forecast sets");
  AccuracyTable table;
  const int h_max = detail::max_horizon(sets);
  for (int h = 1; h <= h_max; ++h) {
    std::vector<double> sq, ab;
    detail::for_each_scored_cell(
        sets, actuals, h, [&](const ForecastSet& set, std::size_t xi, double actual) {
          const double err = std::log(set.point(static_cast<Eigen::Index>(xi), h - 1)) -
                             std::log(actual);
          sq.push_back(err * err);
          ab.push_back(std::abs(err));
        });
    if (sq.empty()) throw DataError("point_scores: no cells at horizon " + std::to_string(h));
    table.horizons.push_back(h);
    table.mse.push_back(numeric::mean(sq));
    table.mae.push_back(numeric::mean(ab));
  }
  table.mean_mse = numeric::mean(table.mse);
  table.mean_mae = numeric::mean(table.mae);
  return table;
}

/// Mean interval score per horizon, on log-transformed rates and bounds,
/// reported x100.
inline IntervalScoreTable interval_scores(const std::vector<ForecastSet>& sets,
                                          const MortalitySurface& actuals, double alpha) {
  if (sets.empty()) throw DataError("interval_scores: no forecast sets");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("interval_scores: alpha must be in (0,1)");
  }
  IntervalScoreTable table;
  const int h_max = detail::max_horizon(sets);
  for (int h = 1; h <= h_max; ++h) {
    std::vector<double> scores;
    detail::for_each_scored_cell(
        sets, actuals, h, [&](const ForecastSet& set, std::size_t xi, double actual) {
          scores.push_back(interval_score(
              std::log(set.lower(static_cast<Eigen::Index>(xi), h - 1)),
              std::log(set.upper(static_cast<Eigen::Index>(xi), h - 1)),
              std::log(actual), alpha));
        });
    if (scores.empty()) {
      throw DataError("interval_scores: no cells at horizon " + std::to_string(h));
    }
    table.horizons.push_back(h);
    table.score.push_back(100.0 * numeric::mean(scores));
  }
  table.mean_score = numeric::mean(table.score);
  return table;
}

/// Per-model signed bias and the between-model correlation matrix of
/// flattened log forecasts over all (age, window, horizon) cells.
inline DiagnosticsReport diagnostics(const WindowForecasts& wf,
                                     const MortalitySurface& actuals) {
  DiagnosticsReport report;
  report.models = wf.models;
  const std::size_t n = wf.models.size();

  // Flatten each model's forecasts over the cells every model covers.
  std::vector<std::vector<double>> flat(n);
  std::vector<double> flat_actual;
  for (int zeta = 0; zeta < wf.target_len; ++zeta) {
    bool all_present = true;
    for (std::size_t mi = 0; mi < n; ++mi) {
      if (!wf.sets[mi][static_cast<std::size_t>(zeta)]) all_present = false;
    }
    if (!all_present) continue;
    const auto& proto = *wf.sets[0][static_cast<std::size_t>(zeta)];
    for (int h = 1; h <= proto.horizons; ++h) {
      for (std::size_t xi = 0; xi < wf.ages.size(); ++xi) {
        for (std::size_t mi = 0; mi < n; ++mi) {
          const auto& set = *wf.sets[mi][static_cast<std::size_t>(zeta)];
          flat[mi].push_back(
              std::log(set.point(static_cast<Eigen::Index>(xi), h - 1)));
        }
        flat_actual.push_back(detail::log_actual(actuals, wf.ages[xi],
                                                 proto.target_year(h)));
      }
    }
  }
  if (flat_actual.empty()) throw DataError("diagnostics: no complete windows");

  report.bias.resize(n);
  for (std::size_t mi = 0; mi < n; ++mi) {
    std::vector<double> err(flat_actual.size());
    for (std::size_t i = 0; i < err.size(); ++i) err[i] = flat[mi][i] - flat_actual[i];
    report.bias[mi] = numeric::mean(err);
  }

  report.correlation.assign(n, std::vector<std::optional<double>>(n));
  std::vector<double> mean(n), sd(n);
  for (std::size_t mi = 0; mi < n; ++mi) {
    mean[mi] = numeric::mean(flat[mi]);
    sd[mi] = numeric::sample_sd(flat[mi]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    report.correlation[i][i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (sd[i] == 0.0 || sd[j] == 0.0) continue;  // undefined, reported missing
      std::vector<double> cross(flat_actual.size());
      for (std::size_t r = 0; r < cross.size(); ++r) {
        cross[r] = (flat[i][r] - mean[i]) * (flat[j][r] - mean[j]);
      }
      const double cov =
          numeric::pairwise_sum(cross) / static_cast<double>(cross.size() - 1);
      report.correlation[i][j] = cov / (sd[i] * sd[j]);
      report.correlation[j][i] = report.correlation[i][j];
    }
  }
  return report;
}

}  // namespace mortens::mortality
