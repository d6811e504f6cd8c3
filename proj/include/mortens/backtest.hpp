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
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mortens/errors.hpp"
#include "mortens/models.hpp"
#include "mortens/parallel.hpp"
#include "mortens/surface.hpp"

namespace mortens::mortality {

/// Contiguous train / validation / test blocks.
struct SplitPlan {
  int train_start = 0, train_end = 0;
  int val_start = 0, val_end = 0;
  int test_start = 0, test_end = 0;

  int train_len() const { return train_end - train_start + 1; }
  int val_len() const { return val_end - val_start + 1; }
  int test_len() const { return test_end - test_start + 1; }
};

/// Splits the available years into contiguous train/validation/test
/// blocks; the three lengths must exactly exhaust the range.
inline SplitPlan make_split(const std::vector<int>& years, int train_len, int val_len,
                            int test_len) {
  if (years.empty()) throw ConfigError("make_split: empty year range");
  if (train_len < 1 || val_len < 1 || test_len < 1) {
    throw ConfigError("make_split: window lengths must be positive");
  }
  const int available = years.back() - years.front() + 1;
  if (train_len + val_len + test_len != available) {
    throw ConfigError("make_split: train+validation+test = " +
                      std::to_string(train_len + val_len + test_len) +
                      " years but the range holds " + std::to_string(available));
  }
  SplitPlan plan;
  plan.train_start = years.front();
  plan.train_end = plan.train_start + train_len - 1;
  plan.val_start = plan.train_end + 1;
  plan.val_end = plan.val_start + val_len - 1;
  plan.test_start = plan.val_end + 1;
  plan.test_end = plan.test_start + test_len - 1;
  return plan;
}

enum class TargetSet { validation, test };

inline std::string_view to_string(TargetSet t) {
  return t == TargetSet::validation ? "validation" : "test";
}

namespace detail {
inline double log_actual(const MortalitySurface& actuals, int age, int year) {
  return std::log(actuals.rates(actuals.age_index(age), actuals.year_index(year)));
}
}  // namespace detail

struct ForecastGap {
  ModelId model;
  int zeta = 0;
  std::string message;
};

/// Per-(model, window) inputs for AIC weighting: full-training-set
/// residual statistics on the rate scale.
struct FitStats {
  double rss = 0.0;
  long n_resid = 0;
  int parameter_count = 0;
  bool fallback = false;
};

/// All expanding-window forecasts against one target block. For a window
/// offset zeta, models train on data through (target_start - 1 + zeta) and
/// forecast min(H, target_len - zeta) steps, so horizon h appears in
/// exactly target_len - h + 1 windows.
struct WindowForecasts {
  TargetSet target = TargetSet::validation;
  Gender gender = Gender::female;
  int target_start = 0;
  int target_len = 0;
  int horizons = 0;
  double alpha = 0.2;
  std::vector<int> ages;
  std::vector<ModelId> models;
  // sets[model_index][zeta]; nullopt marks a recorded gap
  std::vector<std::vector<std::optional<ForecastSet>>> sets;
  std::vector<std::vector<std::optional<FitStats>>> stats;
  std::vector<ForecastGap> gaps;

  int horizons_at(int zeta) const { return std::min(horizons, target_len - zeta); }

  /// Number of windows providing an h-step forecast: target_len - h + 1.
  int windows_at_horizon(int h) const { return target_len - h + 1; }

  std::size_t model_index(ModelId id) const {
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (models[i] == id) return i;
    }
    throw ConfigError("window forecasts: model not present");
  }

  bool has_gaps(ModelId id) const {
    const std::size_t mi = model_index(id);
    for (const auto& s : sets[mi]) {
      if (!s) return true;
    }
    return false;
  }
};

/// Runs the expanding-window scheme: one fit per (model, window offset),
/// in parallel, with failures recorded as explicit gaps rather than
/// silently dropped. With target = test, training data includes the
/// validation years.
inline WindowForecasts expanding_forecasts(const MortalitySurface& surface,
                                           const std::vector<ModelId>& models,
                                           const SplitPlan& plan, TargetSet target,
                                           int horizons, double alpha) {
  surface.validate();
  if (models.empty()) throw ConfigError("expanding_forecasts: empty model roster");
  if (surface.years.front() > plan.train_start ||
      surface.years.back() < plan.test_end) {
    throw DataError("expanding_forecasts: plan years outside the surface");
  }
  WindowForecasts out;
  out.target = target;
  out.gender = surface.gender;
  out.target_start = (target == TargetSet::validation) ? plan.val_start : plan.test_start;
  out.target_len =
      (target == TargetSet::validation) ? plan.val_len() : plan.test_len();
  out.horizons = horizons;
  out.alpha = alpha;
  out.ages = surface.ages;
  out.models = models;
  if (horizons < 1 || horizons > out.target_len) {
    throw ConfigError("expanding_forecasts: H must be in 1..target length");
  }

  const std::size_t n_models = models.size();
  const std::size_t n_windows = static_cast<std::size_t>(out.target_len);
  out.sets.assign(n_models, std::vector<std::optional<ForecastSet>>(n_windows));
  out.stats.assign(n_models, std::vector<std::optional<FitStats>>(n_windows));
  std::vector<std::optional<ForecastGap>> gap_slots(n_models * n_windows);

  parallel::for_each_index(n_models * n_windows, [&](std::size_t task) {
    const std::size_t mi = task / n_windows;
    const int zeta = static_cast<int>(task % n_windows);
    const int train_end = out.target_start - 1 + zeta;
    try {
      const MortalitySurface window = surface.year_range(plan.train_start, train_end);
      const auto fitted = fit(models[mi], window);
      const int h_count = out.horizons_at(zeta);
      out.sets[mi][static_cast<std::size_t>(zeta)] = fitted->forecast(h_count, alpha);
      FitStats fs;
      const Eigen::MatrixXd resid = fitted->residuals();
      fs.rss = resid.squaredNorm();
      fs.n_resid = static_cast<long>(resid.size());
      fs.parameter_count = fitted->parameter_count();
      fs.fallback = fitted->fallback_used();
      out.stats[mi][static_cast<std::size_t>(zeta)] = fs;
    } catch (const std::exception& e) {
      gap_slots[task] = ForecastGap{models[mi], zeta, e.what()};
    }
  });
  for (const auto& gap : gap_slots) {
    if (gap) out.gaps.push_back(*gap);
  }
  return out;
}

/// Long-format CSV: model_id, gender, age, target_year, horizon, point,
/// lb, ub, train_end_year.
inline void write_window_forecasts_csv(std::ostream& out, const WindowForecasts& wf) {
  out << "model_id,gender,age,target_year,horizon,point,lb,ub,train_end_year\n";
  char buf[256];
  for (std::size_t mi = 0; mi < wf.models.size(); ++mi) {
    for (const auto& set : wf.sets[mi]) {
      if (!set) continue;
      for (std::size_t xi = 0; xi < set->ages.size(); ++xi) {
        for (int h = 1; h <= set->horizons; ++h) {
          std::snprintf(buf, sizeof buf, "%s,%s,%d,%d,%d,%.17g,%.17g,%.17g,%d\n",
                        set->source.c_str(),
                        std::string(to_string(set->gender)).c_str(), set->ages[xi],
                        set->target_year(h), h,
                        set->point(static_cast<Eigen::Index>(xi), h - 1),
                        set->lower(static_cast<Eigen::Index>(xi), h - 1),
                        set->upper(static_cast<Eigen::Index>(xi), h - 1),
                        set->train_end_year);
          out << buf;
        }
      }
    }
  }
}

/// CSV of per-(model, window) AIC inputs.
inline void write_fit_stats_csv(std::ostream& out, const WindowForecasts& wf) {
  out << "model_id,gender,zeta,train_end_year,n_resid,rss,parameter_count,fallback\n";
  char buf[256];
  for (std::size_t mi = 0; mi < wf.models.size(); ++mi) {
    for (std::size_t z = 0; z < wf.stats[mi].size(); ++z) {
      const auto& fs = wf.stats[mi][z];
      if (!fs) continue;
      std::snprintf(buf, sizeof buf, "%s,%s,%zu,%d,%ld,%.17g,%d,%d\n",
                    std::string(to_string(wf.models[mi])).c_str(),
                    std::string(to_string(wf.gender)).c_str(), z,
                    wf.target_start - 1 + static_cast<int>(z), fs->n_resid, fs->rss,
                    fs->parameter_count, fs->fallback ? 1 : 0);
      out << buf;
    }
  }
}

/// Same long format for a flat list of forecast sets (combined forecasts
/// carry a scheme name in the model_id column).
inline void write_forecast_sets_csv(std::ostream& out,
                                    const std::vector<ForecastSet>& sets) {
  out << "model_id,gender,age,target_year,horizon,point,lb,ub,train_end_year\n";
  char buf[256];
  for (const auto& set : sets) {
    for (std::size_t xi = 0; xi < set.ages.size(); ++xi) {
      for (int h = 1; h <= set.horizons; ++h) {
        std::snprintf(buf, sizeof buf, "%s,%s,%d,%d,%d,%.17g,%.17g,%.17g,%d\n",
                      set.source.c_str(), std::string(to_string(set.gender)).c_str(),
                      set.ages[xi], set.target_year(h), h,
                      set.point(static_cast<Eigen::Index>(xi), h - 1),
                      set.lower(static_cast<Eigen::Index>(xi), h - 1),
                      set.upper(static_cast<Eigen::Index>(xi), h - 1),
                      set.train_end_year);
        out << buf;
      }
    }
  }
}

/// Reads a flat list of forecast sets grouped by (source, train_end).
inline std::vector<ForecastSet> read_forecast_sets_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      line.rfind("model_id,gender,age,target_year,horizon,point,lb,ub,train_end_year", 0) !=
          0) {
    throw DataError("forecast CSV: bad header");
  }
  struct Cell {
    double point, lb, ub;
  };
  std::map<std::pair<std::string, int>, std::map<int, std::map<int, Cell>>> data;
  std::map<std::pair<std::string, int>, Gender> genders;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string source, g;
    if (!std::getline(ls, source, ',') || !std::getline(ls, g, ',')) {
      throw DataError("forecast CSV line " + std::to_string(line_no));
    }
    int age, target_year, h, train_end;
    double point, lb, ub;
    char c;
    if (!(ls >> age >> c >> target_year >> c >> h >> c >> point >> c >> lb >> c >> ub >>
          c >> train_end)) {
      throw DataError("forecast CSV line " + std::to_string(line_no) + ": malformed row");
    }
    if (target_year != train_end + h) {
      throw DataError("forecast CSV line " + std::to_string(line_no) +
                      ": target_year != train_end + horizon");
    }
    const auto key = std::make_pair(source, train_end);
    data[key][age][h] = Cell{point, lb, ub};
    genders[key] = gender_from_string(g);
  }
  if (data.empty()) throw DataError("forecast CSV: no rows");

  std::vector<ForecastSet> out;
  for (const auto& [key, by_age] : data) {
    ForecastSet set;
    set.source = key.first;
    set.gender = genders.at(key);
    set.train_end_year = key.second;
    for (const auto& [age, _] : by_age) set.ages.push_back(age);
    set.horizons = static_cast<int>(by_age.begin()->second.size());
    const auto rows = static_cast<Eigen::Index>(set.ages.size());
    set.point.resize(rows, set.horizons);
    set.lower.resize(rows, set.horizons);
    set.upper.resize(rows, set.horizons);
    Eigen::Index x = 0;
    for (const auto& [age, by_h] : by_age) {
      if (by_h.size() != static_cast<std::size_t>(set.horizons)) {
        throw DataError("forecast CSV: ragged horizons for " + set.source);
      }
      for (const auto& [h, cell] : by_h) {
        if (h < 1 || h > set.horizons) {
          throw DataError("forecast CSV: non-contiguous horizons for " + set.source);
        }
        set.point(x, h - 1) = cell.point;
        set.lower(x, h - 1) = cell.lb;
        set.upper(x, h - 1) = cell.ub;
      }
      ++x;
    }
    out.push_back(std::move(set));
  }
  return out;
}

/// Rehydrates WindowForecasts from the long-format CSV (plus an optional
/// fit-stats CSV), for the stage-by-stage CLI flow.
inline WindowForecasts read_window_forecasts_csv(std::istream& in, TargetSet target,
                                                 int target_start, int target_len,
                                                 int horizons, double alpha,
                                                 std::istream* stats_in = nullptr) {
  WindowForecasts out;
  out.target = target;
  out.target_start = target_start;
  out.target_len = target_len;
  out.horizons = horizons;
  out.alpha = alpha;

  std::string line;
  if (!std::getline(in, line) ||
      line.rfind("model_id,gender,age,target_year,horizon,point,lb,ub,train_end_year", 0) !=
          0) {
    throw DataError("forecast CSV: bad header");
  }
  struct Cell {
    double point, lb, ub;
  };
  // (model, zeta) -> age -> h -> cell
  std::map<std::string, std::map<int, std::map<int, std::map<int, Cell>>>> data;
  std::optional<Gender> gender;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string model, g, rest;
    if (!std::getline(ls, model, ',') || !std::getline(ls, g, ',')) {
      throw DataError("forecast CSV line " + std::to_string(line_no));
    }
    int age, target_year, h, train_end;
    double point, lb, ub;
    char c;
    if (!(ls >> age >> c >> target_year >> c >> h >> c >> point >> c >> lb >> c >> ub >>
          c >> train_end)) {
      throw DataError("forecast CSV line " + std::to_string(line_no) + ": malformed row");
    }
    const Gender gg = gender_from_string(g);
    if (gender && *gender != gg) {
      throw DataError("forecast CSV: mixed genders in one file");
    }
    gender = gg;
    if (target_year != train_end + h) {
      throw DataError("forecast CSV line " + std::to_string(line_no) +
                      ": target_year != train_end + horizon");
    }
    const int zeta = train_end - (target_start - 1);
    if (zeta < 0 || zeta >= target_len) {
      throw DataError("forecast CSV line " + std::to_string(line_no) +
                      ": window outside the target block");
    }
    data[model][zeta][age][h] = Cell{point, lb, ub};
  }
  if (!gender) throw DataError("forecast CSV: no rows");
  out.gender = *gender;

  for (const auto& [model, by_zeta] : data) out.models.push_back(model_from_string(model));
  std::sort(out.models.begin(), out.models.end());
  const auto& first_ages = data.begin()->second.begin()->second;
  for (const auto& [age, _] : first_ages) out.ages.push_back(age);

  out.sets.assign(out.models.size(),
                  std::vector<std::optional<ForecastSet>>(
                      static_cast<std::size_t>(target_len)));
  out.stats.assign(out.models.size(), std::vector<std::optional<FitStats>>(
                                          static_cast<std::size_t>(target_len)));
  for (std::size_t mi = 0; mi < out.models.size(); ++mi) {
    const auto it = data.find(std::string(to_string(out.models[mi])));
    for (const auto& [zeta, by_age] : it->second) {
      ForecastSet set;
      set.source = to_string(out.models[mi]);
      set.gender = out.gender;
      set.ages = out.ages;
      set.train_end_year = target_start - 1 + zeta;
      set.horizons = out.horizons_at(zeta);
      set.alpha = alpha;
      const auto rows = static_cast<Eigen::Index>(out.ages.size());
      set.point.resize(rows, set.horizons);
      set.lower.resize(rows, set.horizons);
      set.upper.resize(rows, set.horizons);
      for (std::size_t xi = 0; xi < out.ages.size(); ++xi) {
        const auto age_it = by_age.find(out.ages[xi]);
        if (age_it == by_age.end() ||
            age_it->second.size() != static_cast<std::size_t>(set.horizons)) {
          throw DataError("forecast CSV: incomplete horizons for model " +
                          std::string(to_string(out.models[mi])) + " window " +
                          std::to_string(zeta));
        }
        for (const auto& [h, cell] : age_it->second) {
          set.point(static_cast<Eigen::Index>(xi), h - 1) = cell.point;
          set.lower(static_cast<Eigen::Index>(xi), h - 1) = cell.lb;
          set.upper(static_cast<Eigen::Index>(xi), h - 1) = cell.ub;
        }
      }
      out.sets[mi][static_cast<std::size_t>(zeta)] = std::move(set);
    }
    for (std::size_t z = 0; z < static_cast<std::size_t>(target_len); ++z) {
      if (!out.sets[mi][z]) {
        out.gaps.push_back({out.models[mi], static_cast<int>(z), "missing from CSV"});
      }
    }
  }

  if (stats_in) {
    std::string sline;
    if (!std::getline(*stats_in, sline) ||
        sline.rfind("model_id,gender,zeta,train_end_year,n_resid,rss,parameter_count,fallback",
                    0) != 0) {
      throw DataError("fit-stats CSV: bad header");
    }
    while (std::getline(*stats_in, sline)) {
      if (sline.empty()) continue;
      std::istringstream ls(sline);
      std::string model, g;
      if (!std::getline(ls, model, ',') || !std::getline(ls, g, ',')) {
        throw DataError("fit-stats CSV: malformed row");
      }
      std::size_t zeta;
      int train_end, pcount, fallback;
      long n_resid;
      double rss;
      char c;
      if (!(ls >> zeta >> c >> train_end >> c >> n_resid >> c >> rss >> c >> pcount >> c >>
            fallback)) {
        throw DataError("fit-stats CSV: malformed row");
      }
      const std::size_t mi = out.model_index(model_from_string(model));
      if (zeta < out.stats[mi].size()) {
        out.stats[mi][zeta] = FitStats{rss, n_resid, pcount, fallback != 0};
      }
    }
  }
  return out;
}

}  // namespace mortens::mortality
