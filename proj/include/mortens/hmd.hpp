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
#include <utility>
#include <vector>

#include "mortens/errors.hpp"
#include "mortens/surface.hpp"

namespace mortens::mortality {

inline constexpr int kTopAge = 100;  // ages above are clipped into the 100 row

struct RepairEntry {
  Gender gender = Gender::female;
  int age = 0;
  int year = 0;
  std::string action;  // "interpolated", "filled-left", "filled-right"
  double new_value = 0.0;
};

struct HmdIngest {
  std::vector<MortalitySurface> surfaces;  // female then male
  std::vector<RepairEntry> repairs;
  std::vector<std::string> notes;

  const MortalitySurface& surface(Gender g) const {
    for (const auto& s : surfaces) {
      if (s.gender == g) return s;
    }
    throw DataError("ingest: gender not present");
  }
};

namespace detail {

/// Repairs missing/non-positive cells of one age row by linear
/// interpolation of log rates across years; boundary gaps copy the nearest
/// good value. Returns false if the whole row is bad.
inline bool repair_age_row(Eigen::MatrixXd& rates, int age_idx, Gender gender,
                           const std::vector<int>& ages, const std::vector<int>& years,
                           std::vector<RepairEntry>& repairs) {
  const Eigen::Index n = rates.cols();
  std::vector<Eigen::Index> good;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double v = rates(age_idx, t);
    if (std::isfinite(v) && v > 0.0) good.push_back(t);
  }
  if (good.empty()) return false;
  if (good.size() == static_cast<std::size_t>(n)) return true;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double v = rates(age_idx, t);
    if (std::isfinite(v) && v > 0.0) continue;
    const auto right = std::lower_bound(good.begin(), good.end(), t);
    double repaired;
    std::string action;
    if (right == good.begin()) {
      repaired = rates(age_idx, *right);
      action = "filled-left";
    } else if (right == good.end()) {
      repaired = rates(age_idx, *(right - 1));
      action = "filled-right";
    } else {
      const Eigen::Index t0 = *(right - 1);
      const Eigen::Index t1 = *right;
      const double w = static_cast<double>(t - t0) / static_cast<double>(t1 - t0);
      repaired = std::exp((1.0 - w) * std::log(rates(age_idx, t0)) +
                          w * std::log(rates(age_idx, t1)));
      action = "interpolated";
    }
    rates(age_idx, t) = repaired;
    repairs.push_back({gender, ages[static_cast<std::size_t>(age_idx)],
                       years[static_cast<std::size_t>(t)], action, repaired});
  }
  return true;
}

inline std::optional<double> parse_rate(const std::string& tok) {
  if (tok == ".") return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') {
    throw DataError("unparseable rate '" + tok + "'");
  }
  return v;
}

}  // namespace detail

/// Parses an HMD 1x1 period death-rate file (columns Year, Age, Female,
/// Male, Total; missing values "."). Ages are clipped to 0..100 with the
/// age-100 row standing in for the open group; missing and non-positive
/// cells are repaired by log-scale interpolation across years within each
/// age. A year missing more than 20% of its ages aborts ingestion.
inline HmdIngest parse_hmd(std::istream& in,
                           std::optional<std::pair<int, int>> year_range = std::nullopt) {
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  // (year, age) -> (female, male); nullopt = missing marker
  std::map<int, std::map<int, std::pair<std::optional<double>, std::optional<double>>>> cells;

  HmdIngest out;
  bool clipped = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tok_year, tok_age, tok_f, tok_m;
    if (!(ls >> tok_year)) continue;
    if (!header_seen) {
      if (tok_year == "Year") header_seen = true;
      continue;
    }
    if (!(ls >> tok_age >> tok_f >> tok_m)) {
      throw DataError("HMD line " + std::to_string(line_no) + ": expected Year Age Female Male");
    }
    int year = 0, age = 0;
    try {
      year = std::stoi(tok_year);
    } catch (const std::exception&) {
      throw DataError("HMD line " + std::to_string(line_no) + ": bad year '" + tok_year + "'");
    }
    if (year_range && (year < year_range->first || year > year_range->second)) continue;
    const bool open_age = tok_age.size() > 1 && tok_age.back() == '+';
    try {
      age = std::stoi(open_age ? tok_age.substr(0, tok_age.size() - 1) : tok_age);
    } catch (const std::exception&) {
      throw DataError("HMD line " + std::to_string(line_no) + ": bad age '" + tok_age + "'");
    }
    if (age > kTopAge) {
      clipped = true;
      continue;
    }
    std::optional<double> f, m;
    try {
      f = detail::parse_rate(tok_f);
      m = detail::parse_rate(tok_m);
    } catch (const DataError& e) {
      throw DataError("HMD line " + std::to_string(line_no) + ": " + e.what());
    }
    cells[year][age] = {f, m};
  }
  if (!header_seen) throw DataError("HMD file: no 'Year Age ...' header found");
  if (cells.empty()) throw DataError("HMD file: no data rows in the requested year range");
  if (clipped) {
    out.notes.push_back("ages above " + std::to_string(kTopAge) +
                        " clipped into the open " + std::to_string(kTopAge) + "+ group");
  }

  std::vector<int> years;
  for (const auto& [year, _] : cells) years.push_back(year);
  for (std::size_t i = 1; i < years.size(); ++i) {
    if (years[i] != years[i - 1] + 1) {
      throw DataError("HMD file: years not contiguous near " + std::to_string(years[i]));
    }
  }
  std::vector<int> ages;
  for (const auto& [age, _] : cells.begin()->second) ages.push_back(age);

  // Missing-data budget per year, counted before repair.
  for (const auto& [year, row] : cells) {
    if (row.size() != ages.size()) {
      throw DataError("HMD file: year " + std::to_string(year) + " has a ragged age grid");
    }
    std::size_t missing = 0;
    for (const auto& [age, fm] : row) {
      if (!fm.first || *fm.first <= 0.0 || !fm.second || *fm.second <= 0.0) ++missing;
    }
    if (5 * missing > ages.size()) {
      throw DataError("HMD file: year " + std::to_string(year) +
                      " is missing more than 20% of ages");
    }
  }

  const double nan = std::nan("");
  for (const Gender gender : {Gender::female, Gender::male}) {
    MortalitySurface s;
    s.gender = gender;
    s.ages = ages;
    s.years = years;
    s.rates.resize(static_cast<Eigen::Index>(ages.size()),
                   static_cast<Eigen::Index>(years.size()));
    Eigen::Index t = 0;
    for (const auto& [year, row] : cells) {
      Eigen::Index x = 0;
      for (const auto& [age, fm] : row) {
        const std::optional<double>& v = (gender == Gender::female) ? fm.first : fm.second;
        s.rates(x, t) = (v && *v > 0.0) ? *v : nan;
        ++x;
      }
      ++t;
    }
    for (Eigen::Index x = 0; x < s.rates.rows(); ++x) {
      if (!detail::repair_age_row(s.rates, static_cast<int>(x), gender, ages, years,
                                  out.repairs)) {
        throw DataError("HMD file: age " + std::to_string(ages[static_cast<std::size_t>(x)]) +
                        " has no usable values for " + std::string(to_string(gender)));
      }
    }
    s.validate();
    out.surfaces.push_back(std::move(s));
  }
  return out;
}

inline HmdIngest parse_hmd_file(const std::string& path,
                                std::optional<std::pair<int, int>> year_range = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open HMD file '" + path + "'");
  return parse_hmd(in, year_range);
}

/// Canonical surface CSV: gender,age,year,rate with round-trip precision.
inline void write_surface_csv(std::ostream& out,
                              const std::vector<MortalitySurface>& surfaces) {
  out << "gender,age,year,rate\n";
  char buf[128];
  for (const auto& s : surfaces) {
    for (std::size_t x = 0; x < s.ages.size(); ++x) {
      for (std::size_t t = 0; t < s.years.size(); ++t) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%.17g\n",
                      std::string(to_string(s.gender)).c_str(), s.ages[x], s.years[t],
                      s.rates(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(t)));
        out << buf;
      }
    }
  }
}

inline std::vector<MortalitySurface> read_surface_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("gender,age,year,rate", 0) != 0) {
    throw DataError("surface CSV: bad header");
  }
  std::map<Gender, std::map<int, std::map<int, double>>> data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string g, age_s, year_s, rate_s;
    if (!std::getline(ls, g, ',') || !std::getline(ls, age_s, ',') ||
        !std::getline(ls, year_s, ',') || !std::getline(ls, rate_s)) {
      throw DataError("surface CSV line " + std::to_string(line_no) + ": malformed row");
    }
    try {
      data[gender_from_string(g)][std::stoi(age_s)][std::stoi(year_s)] = std::stod(rate_s);
    } catch (const std::exception& e) {
      throw DataError("surface CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::vector<MortalitySurface> out;
  for (const auto& [gender, by_age] : data) {
    MortalitySurface s;
    s.gender = gender;
    for (const auto& [age, _] : by_age) s.ages.push_back(age);
    for (const auto& [year, _] : by_age.begin()->second) s.years.push_back(year);
    s.rates.resize(static_cast<Eigen::Index>(s.ages.size()),
                   static_cast<Eigen::Index>(s.years.size()));
    Eigen::Index x = 0;
    for (const auto& [age, by_year] : by_age) {
      if (by_year.size() != s.years.size()) {
        throw DataError("surface CSV: ragged year grid at age " + std::to_string(age));
      }
      Eigen::Index t = 0;
      for (const auto& [year, rate] : by_year) s.rates(x, t++) = rate;
      ++x;
    }
    s.validate();
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError("surface CSV: no rows");
  return out;
}

inline std::vector<MortalitySurface> read_surface_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open surface CSV '" + path + "'");
  return read_surface_csv(in);
}

}  // namespace mortens::mortality
