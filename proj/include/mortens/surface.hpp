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
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mortens/errors.hpp"
#include "mortens/numeric.hpp"
#include "mortens/rng.hpp"

namespace mortens::mortality {

enum class Gender { female, male };

inline std::string_view to_string(Gender g) {
  return g == Gender::female ? "female" : "male";
}

inline Gender gender_from_string(std::string_view s) {
  if (s == "female" || s == "Female" || s == "f") return Gender::female;
  if (s == "male" || s == "Male" || s == "m") return Gender::male;
  throw ConfigError("unknown gender '" + std::string(s) + "'");
}

/// Rectangular age x year matrix of central death rates for one gender.
/// Ages are strictly increasing (the top age may represent an open group);
/// years are consecutive; all rates strictly positive.
struct MortalitySurface {
  Gender gender = Gender::female;
  std::vector<int> ages;
  std::vector<int> years;
  Eigen::MatrixXd rates;  // ages x years

  void validate() const {
    if (ages.empty() || years.empty()) throw DataError("surface: empty axes");
    if (rates.rows() != static_cast<Eigen::Index>(ages.size()) ||
        rates.cols() != static_cast<Eigen::Index>(years.size())) {
      throw DataError("surface: matrix shape does not match axes");
    }
    for (std::size_t i = 1; i < ages.size(); ++i) {
      if (ages[i] <= ages[i - 1]) throw DataError("surface: ages not strictly increasing");
    }
    for (std::size_t i = 1; i < years.size(); ++i) {
      if (years[i] != years[i - 1] + 1) throw DataError("surface: years not consecutive");
    }
    if (!(rates.array() > 0.0).all() || !rates.allFinite()) {
      throw DataError("surface: rates must be finite and strictly positive");
    }
  }

  Eigen::MatrixXd log_rates() const { return rates.array().log().matrix(); }

  int year_index(int year) const {
    if (years.empty() || year < years.front() || year > years.back()) {
      throw DataError("surface: year " + std::to_string(year) + " out of range");
    }
    return year - years.front();
  }

  int age_index(int age) const {
    const auto it = std::lower_bound(ages.begin(), ages.end(), age);
    if (it == ages.end() || *it != age) {
      throw DataError("surface: age " + std::to_string(age) + " not on the grid");
    }
    return static_cast<int>(it - ages.begin());
  }

  /// Sub-surface covering [first_year, last_year], all ages.
  MortalitySurface year_range(int first_year, int last_year) const {
    const int i0 = year_index(first_year);
    const int i1 = year_index(last_year);
    if (i1 < i0) throw DataError("surface: empty year range requested");
    MortalitySurface out;
    out.gender = gender;
    out.ages = ages;
    out.years.assign(years.begin() + i0, years.begin() + i1 + 1);
    out.rates = rates.middleCols(i0, i1 - i0 + 1);
    return out;
  }
};

/// Period life expectancy at birth from a single year's central death
/// rates. Uses q = 1 - exp(-m), a uniform half-year average survivorship
/// within age groups, and treats the final age as an open group with
/// L = l / m.
inline double life_expectancy_at_birth(const Eigen::VectorXd& m) {
  if (m.size() == 0) throw std::invalid_argument("life_expectancy_at_birth: empty rates");
  double l = 1.0;
  double total = 0.0;
  for (Eigen::Index x = 0; x + 1 < m.size(); ++x) {
    const double q = 1.0 - std::exp(-m[x]);
    const double l_next = l * (1.0 - q);
    total += 0.5 * (l + l_next);
    l = l_next;
  }
  total += l / m[m.size() - 1];  // open age group
  return total;
}

/// Generator spec for a Lee-Carter-style synthetic surface:
/// log m = a_x + b_x kappa_t (+ Gaussian observation noise), with kappa a
/// seeded random walk with drift. kappa is centered after generation so
/// the retrievable parameters satisfy the usual identification
/// constraints (sum b = 1, sum kappa = 0).
struct SynthSpec {
  std::vector<double> a;
  std::vector<double> b;  // must sum to 1
  double drift = -0.5;
  double kappa_sigma = 0.0;  // random-walk innovation sd
  double noise_sigma = 0.0;  // observation noise sd on the log scale
  std::uint64_t seed = 0;
  std::vector<int> ages;
  std::vector<int> years;
  Gender gender = Gender::female;
  double kappa_start = 0.0;
};

struct SynthResult {
  MortalitySurface surface;
  std::vector<double> kappa;  // centered period index actually used
};

inline SynthResult synth_surface(const SynthSpec& spec) {
  const std::size_t n_ages = spec.ages.size();
  const std::size_t n_years = spec.years.size();
  if (n_ages == 0 || n_years == 0) throw ConfigError("synth_surface: empty axes");
  if (spec.a.size() != n_ages || spec.b.size() != n_ages) {
    throw ConfigError("synth_surface: a/b length must match ages");
  }
  const double b_sum = numeric::pairwise_sum(spec.b);
  if (std::abs(b_sum - 1.0) > 1e-9) {
    throw ConfigError("synth_surface: b must sum to 1");
  }

  rng::Stream walk = rng::stream(spec.seed, 0);
  std::vector<double> kappa(n_years);
  double k = spec.kappa_start;
  for (std::size_t t = 0; t < n_years; ++t) {
    kappa[t] = k;
    double step = spec.drift;
    if (spec.kappa_sigma > 0.0) {
      step += spec.kappa_sigma * numeric::norm_ppf(walk.next_open_double());
    }
    k += step;
  }
  const double k_mean = numeric::mean(kappa);
  for (double& v : kappa) v -= k_mean;

  rng::Stream noise = rng::stream(spec.seed, 1);
  SynthResult out;
  out.kappa = kappa;
  out.surface.gender = spec.gender;
  out.surface.ages = spec.ages;
  out.surface.years = spec.years;
  out.surface.rates.resize(static_cast<Eigen::Index>(n_ages),
                           static_cast<Eigen::Index>(n_years));
  for (std::size_t x = 0; x < n_ages; ++x) {
    for (std::size_t t = 0; t < n_years; ++t) {
      double logm = spec.a[x] + spec.b[x] * kappa[t];
      if (spec.noise_sigma > 0.0) {
        logm += spec.noise_sigma * numeric::norm_ppf(noise.next_open_double());
      }
      out.surface.rates(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(t)) =
          std::exp(logm);
    }
  }
  out.surface.validate();
  return out;
}

/// Plausible default synthetic parameters on an age grid: a Gompertz-like
/// baseline curve and a mildly age-varying improvement profile.
inline SynthSpec default_synth_spec(std::vector<int> ages, std::vector<int> years,
                                    Gender gender, std::uint64_t seed) {
  SynthSpec spec;
  spec.ages = std::move(ages);
  spec.years = std::move(years);
  spec.gender = gender;
  spec.seed = seed;
  const std::size_t n = spec.ages.size();
  spec.a.resize(n);
  spec.b.resize(n);
  double b_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(spec.ages[i]);
    spec.a[i] = std::log(2e-4 + 3e-5 * std::exp(0.095 * x) + 8e-4 * std::exp(-x / 2.0));
    spec.b[i] = 1.2 - 0.008 * x;  // stronger improvement at young ages
    b_total += spec.b[i];
  }
  for (double& b : spec.b) b /= b_total;
  spec.drift = -1.2;
  spec.kappa_sigma = 0.35;
  spec.noise_sigma = 0.02;
  return spec;
}

}  // namespace mortens::mortality
