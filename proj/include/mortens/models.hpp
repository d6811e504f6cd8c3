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
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mortens/errors.hpp"
#include "mortens/numeric.hpp"
#include "mortens/surface.hpp"

namespace mortens::mortality {

// ---------------------------------------------------------------------------
// Model roster

enum class ModelId {
  lc_poisson,    // Lee-Carter, Poisson error structure
  apc,           // age-period-cohort
  cbd,           // Cairns-Blake-Dowd two-factor logit
  cbd_cohort,    // CBD with a cohort intercept
  lc_gaussian,   // Lee-Carter, Gaussian error (SVD)
  lc_e0_adjust,  // Lee-Carter with life-expectancy re-fit of the scores
  lc_no_adjust,  // Lee-Carter without score adjustment
  fts,           // functional time series (smoothing + principal components)
};

inline constexpr std::array<ModelId, 8> kAllModels = {
    ModelId::lc_poisson, ModelId::apc,         ModelId::cbd,
    ModelId::cbd_cohort, ModelId::lc_gaussian, ModelId::lc_e0_adjust,
    ModelId::lc_no_adjust, ModelId::fts,
};

inline std::string_view to_string(ModelId id) {
  switch (id) {
    case ModelId::lc_poisson: return "LC_POISSON";
    case ModelId::apc: return "APC";
    case ModelId::cbd: return "CBD";
    case ModelId::cbd_cohort: return "CBD_COHORT";
    case ModelId::lc_gaussian: return "LC_GAUSSIAN";
    case ModelId::lc_e0_adjust: return "LC_E0_ADJUST";
    case ModelId::lc_no_adjust: return "LC_NO_ADJUST";
    case ModelId::fts: return "FTS";
  }
  return "?";
}

inline ModelId model_from_string(std::string_view s) {
  for (ModelId id : kAllModels) {
    if (to_string(id) == s) return id;
  }
  throw ConfigError("unknown model id '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Forecasts

/// Point and interval forecasts for horizons 1..H over an age grid.
/// Invariants: lower <= point <= upper elementwise, all entries > 0.
struct ForecastSet {
  std::string source;  // model id or combination scheme name
  Gender gender = Gender::female;
  std::vector<int> ages;
  int train_end_year = 0;
  int horizons = 0;
  double alpha = 0.2;
  Eigen::MatrixXd point, lower, upper;  // ages x horizons

  int target_year(int h) const { return train_end_year + h; }

  void validate() const {
    if (!(lower.array() <= point.array()).all() ||
        !(point.array() <= upper.array()).all()) {
      throw NumericError("forecast set: interval ordering violated");
    }
    if (!(lower.array() > 0.0).all() || !point.allFinite() || !upper.allFinite()) {
      throw NumericError("forecast set: non-positive or non-finite entries");
    }
  }
};

/// Random-walk extrapolation of an index series. With drift: the drift is
/// the mean first difference and the h-step variance is
/// h*sigma^2 + h^2*var(drift); driftless: the level is held and the
/// innovation variance is the mean squared first difference.
struct RandomWalkForecast {
  double last = 0.0;
  double drift = 0.0;
  double sigma2 = 0.0;
  double drift_var = 0.0;

  double mean(int h) const { return last + h * drift; }
  double variance(int h) const {
    const double hh = static_cast<double>(h);
    return hh * sigma2 + hh * hh * drift_var;
  }
};

inline RandomWalkForecast fit_random_walk(std::span<const double> series,
                                          bool with_drift) {
  if (series.size() < 2) {
    throw std::invalid_argument("fit_random_walk: index history needs >= 2 points");
  }
  std::vector<double> diffs(series.size() - 1);
  for (std::size_t i = 0; i + 1 < series.size(); ++i) diffs[i] = series[i + 1] - series[i];
  RandomWalkForecast rw;
  rw.last = series.back();
  if (with_drift) {
    rw.drift = numeric::mean(diffs);
    rw.sigma2 = numeric::sample_variance(diffs);
    rw.drift_var = rw.sigma2 / static_cast<double>(diffs.size());
  } else {
    std::vector<double> sq(diffs.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) sq[i] = diffs[i] * diffs[i];
    rw.sigma2 = numeric::mean(sq);
  }
  return rw;
}

namespace detail {

enum class Link { log_rate, logit_q };

/// m from the link scale: exp for the log link; for the logit link on
/// q = 1 - exp(-m) the inverse works out to m = softplus(eta). Clamped
/// away from zero so extreme interval bounds stay strictly positive.
inline double rate_from_link(double eta, Link link) {
  double m;
  if (link == Link::log_rate) {
    m = std::exp(eta);
  } else if (eta > 35.0) {
    m = eta;
  } else if (eta < -35.0) {
    m = std::exp(eta);
  } else {
    m = std::log1p(std::exp(eta));
  }
  return std::max(m, 1e-300);
}

inline double logit_q_from_rate(double m) {
  const double q = std::min(1.0 - 1e-12, -std::expm1(-m));
  return std::log(q / (1.0 - q));
}

/// Fills one age row of a forecast set from link-scale means/variances.
/// Both link transforms are increasing, so the quantile bounds map through
/// directly and the interval ordering is automatic.
inline void fill_forecast_row(ForecastSet& out, Eigen::Index row, int h_count, Link link,
                              double z, const std::function<double(int)>& link_mean,
                              const std::function<double(int)>& link_var) {
  for (int h = 1; h <= h_count; ++h) {
    const double mu = link_mean(h);
    const double sd = std::sqrt(std::max(0.0, link_var(h)));
    out.point(row, h - 1) = rate_from_link(mu, link);
    out.lower(row, h - 1) = rate_from_link(mu - z * sd, link);
    out.upper(row, h - 1) = rate_from_link(mu + z * sd, link);
  }
}

inline void prepare_forecast(ForecastSet& out, const MortalitySurface& train,
                             std::string source, int horizons, double alpha) {
  if (horizons < 1) throw std::invalid_argument("forecast: H must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("forecast: alpha must be in (0,1)");
  }
  out.source = std::move(source);
  out.gender = train.gender;
  out.ages = train.ages;
  out.train_end_year = train.years.back();
  out.horizons = horizons;
  out.alpha = alpha;
  const auto rows = static_cast<Eigen::Index>(train.ages.size());
  out.point.resize(rows, horizons);
  out.lower.resize(rows, horizons);
  out.upper.resize(rows, horizons);
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fitted-model interface

class FittedModel {
 public:
  virtual ~FittedModel() = default;

  ModelId id() const { return id_; }
  const MortalitySurface& training() const { return train_; }
  bool fallback_used() const { return fallback_; }

  /// In-sample fitted rates, ages x years.
  virtual Eigen::MatrixXd fitted_values() const = 0;

  /// Residuals on the rate scale: observed - fitted.
  Eigen::MatrixXd residuals() const { return train_.rates - fitted_values(); }

  virtual ForecastSet forecast(int horizons, double alpha) const = 0;

  /// Effective parameter count after identification constraints; the
  /// breakdown is documented per model next to each override.
  virtual int parameter_count() const = 0;

 protected:
  FittedModel(ModelId id, MortalitySurface train) : id_(id), train_(std::move(train)) {}

  ModelId id_;
  MortalitySurface train_;
  bool fallback_ = false;
};

// ---------------------------------------------------------------------------
// Lee-Carter family

struct LeeCarterParams {
  Eigen::VectorXd a;      // age baseline, n_ages
  Eigen::VectorXd b;      // age loadings summing to 1
  Eigen::VectorXd kappa;  // period index summing to 0
  bool degenerate = false;
};

/// Rank-1 SVD of centered log rates under the standard identification
/// (sum b = 1, sum kappa = 0). A (near-)constant surface degenerates to
/// uniform loadings with a zero index.
inline LeeCarterParams lee_carter_svd(const Eigen::MatrixXd& log_rates) {
  LeeCarterParams p;
  p.a = log_rates.rowwise().mean();
  Eigen::MatrixXd centered = log_rates.colwise() - p.a;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double sigma = svd.singularValues()(0);
  Eigen::VectorXd u = svd.matrixU().col(0);
  Eigen::VectorXd v = svd.matrixV().col(0);
  const double scale = std::max(1.0, log_rates.cwiseAbs().maxCoeff());
  double u_sum = u.sum();
  if (sigma <= 1e-12 * scale || std::abs(u_sum) <= 1e-10) {
    p.degenerate = true;
    p.b = Eigen::VectorXd::Constant(log_rates.rows(),
                                    1.0 / static_cast<double>(log_rates.rows()));
    p.kappa = Eigen::VectorXd::Zero(log_rates.cols());
    return p;
  }
  if (u_sum < 0.0) {
    u = -u;
    v = -v;
    u_sum = -u_sum;
  }
  p.b = u / u_sum;
  p.kappa = (sigma * u_sum) * v;
  const double k_mean = p.kappa.mean();
  p.a += p.b * k_mean;
  p.kappa.array() -= k_mean;
  return p;
}

enum class LeeCarterVariant { gaussian, no_adjust, e0_adjust, poisson };

class LeeCarterModel final : public FittedModel {
 public:
  LeeCarterModel(ModelId id, LeeCarterVariant variant, const MortalitySurface& surface)
      : FittedModel(id, surface), variant_(variant) {
    params_ = lee_carter_svd(surface.log_rates());
    if (variant == LeeCarterVariant::poisson) refit_poisson();
    if (variant == LeeCarterVariant::e0_adjust) adjust_to_life_expectancy();
  }

  const LeeCarterParams& params() const { return params_; }

  Eigen::MatrixXd fitted_values() const override {
    const Eigen::MatrixXd link =
        (params_.b * params_.kappa.transpose()).colwise() + params_.a;
    return link.array().exp().matrix();
  }

  ForecastSet forecast(int horizons, double alpha) const override {
    const std::vector<double> kappa = detail::to_vector(params_.kappa);
    const RandomWalkForecast rw = fit_random_walk(kappa, /*with_drift=*/true);
    const double z = numeric::norm_ppf(1.0 - alpha / 2.0);
    ForecastSet out;
    detail::prepare_forecast(out, train_, std::string(to_string(id_)), horizons, alpha);
    for (Eigen::Index x = 0; x < params_.a.size(); ++x) {
      const double a = params_.a(x);
      const double b = params_.b(x);
      detail::fill_forecast_row(
          out, x, horizons, detail::Link::log_rate, z,
          [&](int h) { return a + b * rw.mean(h); },
          [&](int h) { return b * b * rw.variance(h); });
    }
    out.validate();
    return out;
  }

  /// a_x: n_ages; b_x: n_ages - 1 free; kappa_t: n_years - 1 free.
  int parameter_count() const override {
    return 2 * static_cast<int>(train_.ages.size()) +
           static_cast<int>(train_.years.size()) - 2;
  }

 private:
  static constexpr int kMaxIter = 200;
  static constexpr double kTol = 1e-8;

  /// Alternating Newton updates for the Poisson likelihood with unit
  /// exposures (deaths proxied by the rates themselves). Falls back to the
  /// SVD solution if the iteration produces non-finite values.
  void refit_poisson() {
    const Eigen::MatrixXd& d = train_.rates;  // deaths with exposure 1
    const LeeCarterParams svd = params_;
    Eigen::VectorXd a = params_.a;
    Eigen::VectorXd b = params_.b;
    Eigen::VectorXd k = params_.kappa;
    const Eigen::Index n_a = a.size();
    const Eigen::Index n_t = k.size();

    auto mu = [&](Eigen::Index x, Eigen::Index t) {
      return std::exp(a(x) + b(x) * k(t));
    };
    for (int iter = 0; iter < kMaxIter; ++iter) {
      double change = 0.0;
      for (Eigen::Index x = 0; x < n_a; ++x) {
        double num = 0.0, den = 0.0;
        for (Eigen::Index t = 0; t < n_t; ++t) {
          const double m = mu(x, t);
          num += d(x, t) - m;
          den += m;
        }
        if (den > 1e-12) {
          const double step = num / den;
          a(x) += step;
          change = std::max(change, std::abs(step));
        }
      }
      for (Eigen::Index t = 0; t < n_t; ++t) {
        double num = 0.0, den = 0.0;
        for (Eigen::Index x = 0; x < n_a; ++x) {
          const double m = mu(x, t);
          num += (d(x, t) - m) * b(x);
          den += m * b(x) * b(x);
        }
        if (den > 1e-12) {
          const double step = num / den;
          k(t) += step;
          change = std::max(change, std::abs(step));
        }
      }
      const double k_mean = k.mean();
      a += b * k_mean;
      k.array() -= k_mean;
      for (Eigen::Index x = 0; x < n_a; ++x) {
        double num = 0.0, den = 0.0;
        for (Eigen::Index t = 0; t < n_t; ++t) {
          const double m = mu(x, t);
          num += (d(x, t) - m) * k(t);
          den += m * k(t) * k(t);
        }
        if (den > 1e-12) {
          const double step = num / den;
          b(x) += step;
          change = std::max(change, std::abs(step));
        }
      }
      const double b_sum = b.sum();
      if (std::abs(b_sum) > 1e-12) {
        b /= b_sum;
        k *= b_sum;
      }
      if (!a.allFinite() || !b.allFinite() || !k.allFinite()) {
        params_ = svd;
        fallback_ = true;
        return;
      }
      if (change < kTol) break;
    }
    params_.a = a;
    params_.b = b;
    params_.kappa = k;
  }

  /// Re-fits each kappa_t so that the model-implied life expectancy at
  /// birth matches the observed one for that year (bisection on the
  /// monotone e0(kappa) map). Levels are re-centered afterwards, which
  /// leaves the per-year fitted rates unchanged.
  void adjust_to_life_expectancy() {
    const Eigen::Index n_t = params_.kappa.size();
    auto implied_e0 = [&](double kappa) {
      const Eigen::VectorXd m =
          (params_.a + params_.b * kappa).array().exp().matrix();
      return life_expectancy_at_birth(m);
    };
    for (Eigen::Index t = 0; t < n_t; ++t) {
      const double target = life_expectancy_at_birth(train_.rates.col(t));
      double lo = params_.kappa(t), hi = params_.kappa(t);
      double step = 1.0;
      bool bracketed = false;
      for (int i = 0; i < 60; ++i) {
        lo -= step;
        hi += step;
        step *= 2.0;
        if ((implied_e0(lo) - target) * (implied_e0(hi) - target) <= 0.0) {
          bracketed = true;
          break;
        }
      }
      if (!bracketed) {
        fallback_ = true;
        continue;
      }
      for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double sign_lo = implied_e0(lo) - target;
        const double sign_mid = implied_e0(mid) - target;
        if ((sign_lo <= 0.0) == (sign_mid <= 0.0)) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      params_.kappa(t) = 0.5 * (lo + hi);
    }
    const double k_mean = params_.kappa.mean();
    params_.a += params_.b * k_mean;
    params_.kappa.array() -= k_mean;
  }

  LeeCarterVariant variant_;
  LeeCarterParams params_;
};

// ---------------------------------------------------------------------------
// Cohort bookkeeping shared by APC and CBD-with-cohort

struct CohortIndex {
  std::vector<int> values;             // cohort birth years, consecutive
  std::vector<int> counts;             // observations per cohort
  std::vector<int> active_slot;        // -1 when pinned to zero
  int active_count = 0;
  int pinned_count = 0;
  int first_active = -1, last_active = -1;

  static constexpr int kMinObservations = 5;

  /// Pinned cohorts anchor gamma's level and trend through their zero
  /// values; explicit identification constraints are only required when
  /// fewer than two cohorts are pinned.
  bool needs_constraints() const { return pinned_count < 2; }

  static CohortIndex build(const std::vector<int>& ages, const std::vector<int>& years,
                           int min_age) {
    CohortIndex ci;
    const int c_min = years.front() - ages.back();
    const int c_max = years.back() - std::max(ages.front(), min_age);
    for (int c = c_min; c <= c_max; ++c) ci.values.push_back(c);
    ci.counts.assign(ci.values.size(), 0);
    for (int age : ages) {
      if (age < min_age) continue;
      for (int year : years) {
        ci.counts[static_cast<std::size_t>(year - age - c_min)] += 1;
      }
    }
    ci.active_slot.assign(ci.values.size(), -1);
    for (std::size_t i = 0; i < ci.values.size(); ++i) {
      if (ci.counts[i] >= kMinObservations) {
        ci.active_slot[i] = ci.active_count++;
        if (ci.first_active < 0) ci.first_active = static_cast<int>(i);
        ci.last_active = static_cast<int>(i);
      } else if (ci.counts[i] > 0) {
        ci.pinned_count += 1;
      }
    }
    return ci;
  }

  int slot_of(int cohort) const {
    const int idx = cohort - values.front();
    if (idx < 0 || idx >= static_cast<int>(values.size())) return -1;
    return active_slot[static_cast<std::size_t>(idx)];
  }
};

namespace detail {

/// Equality-constrained least squares via the KKT system
/// [M C^T; C 0] [theta; lambda] = [rhs; 0]. Constraints may be empty.
inline Eigen::VectorXd constrained_least_squares(const Eigen::MatrixXd& normal,
                                                 const Eigen::VectorXd& rhs,
                                                 const Eigen::MatrixXd& constraints) {
  const Eigen::Index p = normal.rows();
  const Eigen::Index c = constraints.rows();
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(p + c, p + c);
  kkt.topLeftCorner(p, p) = normal;
  if (c > 0) {
    kkt.topRightCorner(p, c) = constraints.transpose();
    kkt.bottomLeftCorner(c, p) = constraints;
  }
  Eigen::VectorXd full_rhs = Eigen::VectorXd::Zero(p + c);
  full_rhs.head(p) = rhs;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) {
    throw NumericError("constrained least squares: singular KKT system");
  }
  return lu.solve(full_rhs).head(p);
}

/// Cohort-trend constraint rows (sum gamma = 0, sum c~ gamma = 0) appended
/// into a constraint matrix starting at the given column offset.
inline void add_cohort_constraints(Eigen::MatrixXd& constraints, Eigen::Index row0,
                                   Eigen::Index col0, const CohortIndex& cohorts) {
  double mean_value = 0.0;
  for (std::size_t i = 0; i < cohorts.values.size(); ++i) {
    if (cohorts.active_slot[i] >= 0) mean_value += cohorts.values[i];
  }
  mean_value /= std::max(1, cohorts.active_count);
  for (std::size_t i = 0; i < cohorts.values.size(); ++i) {
    const int slot = cohorts.active_slot[i];
    if (slot < 0) continue;
    constraints(row0, col0 + slot) = 1.0;
    constraints(row0 + 1, col0 + slot) = cohorts.values[i] - mean_value;
  }
}

/// Driftless random walk on the active cohort levels; used to extrapolate
/// gamma beyond the last estimated cohort.
inline RandomWalkForecast cohort_walk(const Eigen::VectorXd& gamma,
                                      const CohortIndex& cohorts) {
  std::vector<double> series;
  for (std::size_t i = 0; i < cohorts.values.size(); ++i) {
    if (cohorts.active_slot[i] >= 0) series.push_back(gamma(cohorts.active_slot[i]));
  }
  if (series.size() < 2) {
    RandomWalkForecast flat;
    flat.last = series.empty() ? 0.0 : series.front();
    return flat;
  }
  return fit_random_walk(series, /*with_drift=*/false);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Age-period-cohort model

class ApcModel final : public FittedModel {
 public:
  explicit ApcModel(const MortalitySurface& surface)
      : FittedModel(ModelId::apc, surface),
        cohorts_(CohortIndex::build(surface.ages, surface.years, /*min_age=*/0)) {
    for (std::size_t i = 1; i < surface.ages.size(); ++i) {
      if (surface.ages[i] != surface.ages[i - 1] + 1) {
        throw DataError("APC: cohort structure needs a contiguous age grid");
      }
    }
    const Eigen::MatrixXd y = surface.log_rates();
    const Eigen::Index n_a = y.rows();
    const Eigen::Index n_t = y.cols();
    const Eigen::Index n_g = cohorts_.active_count;
    const Eigen::Index p = n_a + n_t + n_g;

    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (Eigen::Index x = 0; x < n_a; ++x) {
      for (Eigen::Index t = 0; t < n_t; ++t) {
        const int cohort = surface.years[static_cast<std::size_t>(t)] -
                           surface.ages[static_cast<std::size_t>(x)];
        const int slot = cohorts_.slot_of(cohort);
        Eigen::Index idx[3] = {x, n_a + t, -1};
        int used = 2;
        if (slot >= 0) idx[used++] = n_a + n_t + slot;
        for (int i = 0; i < used; ++i) {
          rhs(idx[i]) += y(x, t);
          for (int j = 0; j < used; ++j) normal(idx[i], idx[j]) += 1.0;
        }
      }
    }
    const Eigen::Index n_rows = cohorts_.needs_constraints() ? 3 : 1;
    Eigen::MatrixXd constraints = Eigen::MatrixXd::Zero(n_rows, p);
    constraints.row(0).segment(n_a, n_t).setOnes();  // sum kappa = 0
    if (n_rows == 3) detail::add_cohort_constraints(constraints, 1, n_a + n_t, cohorts_);

    const Eigen::VectorXd theta = detail::constrained_least_squares(normal, rhs, constraints);
    a_ = theta.head(n_a);
    kappa_ = theta.segment(n_a, n_t);
    gamma_ = theta.tail(n_g);
  }

  const Eigen::VectorXd& age_effects() const { return a_; }
  const Eigen::VectorXd& kappa() const { return kappa_; }
  double gamma_for_cohort(int cohort) const {
    const int slot = cohorts_.slot_of(cohort);
    return slot >= 0 ? gamma_(slot) : 0.0;
  }

  Eigen::MatrixXd fitted_values() const override {
    const Eigen::Index n_a = a_.size();
    const Eigen::Index n_t = kappa_.size();
    Eigen::MatrixXd out(n_a, n_t);
    for (Eigen::Index x = 0; x < n_a; ++x) {
      for (Eigen::Index t = 0; t < n_t; ++t) {
        const int cohort = train_.years[static_cast<std::size_t>(t)] -
                           train_.ages[static_cast<std::size_t>(x)];
        out(x, t) = std::exp(a_(x) + kappa_(t) + gamma_for_cohort(cohort));
      }
    }
    return out;
  }

  ForecastSet forecast(int horizons, double alpha) const override {
    const RandomWalkForecast rw_k =
        fit_random_walk(detail::to_vector(kappa_), /*with_drift=*/true);
    const RandomWalkForecast rw_g = detail::cohort_walk(gamma_, cohorts_);
    const int last_active_cohort =
        cohorts_.values[static_cast<std::size_t>(std::max(0, cohorts_.last_active))];
    const double z = numeric::norm_ppf(1.0 - alpha / 2.0);
    const int train_end = train_.years.back();

    ForecastSet out;
    detail::prepare_forecast(out, train_, std::string(to_string(id_)), horizons, alpha);
    for (Eigen::Index x = 0; x < a_.size(); ++x) {
      const int age = train_.ages[static_cast<std::size_t>(x)];
      detail::fill_forecast_row(
          out, x, horizons, detail::Link::log_rate, z,
          [&](int h) {
            const int cohort = train_end + h - age;
            const double g = (cohort <= last_active_cohort)
                                 ? gamma_for_cohort(cohort)
                                 : rw_g.mean(cohort - last_active_cohort);
            return a_(x) + rw_k.mean(h) + g;
          },
          [&](int h) {
            const int cohort = train_end + h - age;
            const double var_g = (cohort <= last_active_cohort)
                                     ? 0.0
                                     : rw_g.variance(cohort - last_active_cohort);
            return rw_k.variance(h) + var_g;
          });
    }
    out.validate();
    return out;
  }

  /// a_x: n_ages; kappa: n_years - 1 free; gamma: n_active - 2 free.
  int parameter_count() const override {
    return static_cast<int>(train_.ages.size()) + static_cast<int>(train_.years.size()) +
           cohorts_.active_count - 3;
  }

 private:
  CohortIndex cohorts_;
  Eigen::VectorXd a_, kappa_, gamma_;
};

// ---------------------------------------------------------------------------
// Cairns-Blake-Dowd family

/// Two-factor CBD on the logit of q = 1 - exp(-m) over ages >= 60, with an
/// optional cohort intercept. Younger ages delegate to a Lee-Carter fit on
/// the full surface so the model produces full-age forecasts.
class CbdModel final : public FittedModel {
 public:
  static constexpr int kMinAge = 60;

  CbdModel(ModelId id, bool with_cohort, const MortalitySurface& surface)
      : FittedModel(id, surface), with_cohort_(with_cohort) {
    for (int age : surface.ages) {
      if (age >= kMinAge) old_ages_.push_back(age);
    }
    if (old_ages_.size() < 3) {
      throw DataError("CBD: needs at least three ages >= 60");
    }
    if (old_ages_.size() < surface.ages.size()) {
      delegate_ = std::make_unique<LeeCarterModel>(ModelId::lc_gaussian,
                                                   LeeCarterVariant::gaussian, surface);
    }
    double sum_age = 0.0;
    for (int age : old_ages_) sum_age += age;
    x_bar_ = sum_age / static_cast<double>(old_ages_.size());

    if (with_cohort_) {
      for (std::size_t i = 1; i < old_ages_.size(); ++i) {
        if (old_ages_[i] != old_ages_[i - 1] + 1) {
          throw DataError("CBD cohort: contiguous ages >= 60 required");
        }
      }
      cohorts_ = CohortIndex::build(surface.ages, surface.years, kMinAge);
      fit_with_cohort();
    } else {
      fit_per_year();
    }
  }

  const Eigen::VectorXd& kappa1() const { return kappa1_; }
  const Eigen::VectorXd& kappa2() const { return kappa2_; }
  double age_center() const { return x_bar_; }

  Eigen::MatrixXd fitted_values() const override {
    Eigen::MatrixXd out = delegate_ ? delegate_->fitted_values()
                                    : Eigen::MatrixXd(train_.rates.rows(),
                                                      train_.rates.cols());
    const Eigen::Index n_t = kappa1_.size();
    for (std::size_t xi = 0; xi < train_.ages.size(); ++xi) {
      const int age = train_.ages[xi];
      if (age < kMinAge) continue;
      for (Eigen::Index t = 0; t < n_t; ++t) {
        const int cohort = train_.years[static_cast<std::size_t>(t)] - age;
        const double eta = kappa1_(t) + kappa2_(t) * (age - x_bar_) +
                           (with_cohort_ ? gamma_for_cohort(cohort) : 0.0);
        out(static_cast<Eigen::Index>(xi), t) =
            detail::rate_from_link(eta, detail::Link::logit_q);
      }
    }
    return out;
  }

  ForecastSet forecast(int horizons, double alpha) const override {
    const RandomWalkForecast rw1 =
        fit_random_walk(detail::to_vector(kappa1_), /*with_drift=*/true);
    const RandomWalkForecast rw2 =
        fit_random_walk(detail::to_vector(kappa2_), /*with_drift=*/true);
    const RandomWalkForecast rw_g =
        with_cohort_ ? detail::cohort_walk(gamma_, cohorts_) : RandomWalkForecast{};
    const int last_active_cohort =
        with_cohort_
            ? cohorts_.values[static_cast<std::size_t>(std::max(0, cohorts_.last_active))]
            : 0;
    const double z = numeric::norm_ppf(1.0 - alpha / 2.0);
    const int train_end = train_.years.back();

    std::optional<ForecastSet> young;
    if (delegate_) young = delegate_->forecast(horizons, alpha);

    ForecastSet out;
    detail::prepare_forecast(out, train_, std::string(to_string(id_)), horizons, alpha);
    for (std::size_t xi = 0; xi < train_.ages.size(); ++xi) {
      const int age = train_.ages[xi];
      const auto row = static_cast<Eigen::Index>(xi);
      if (age < kMinAge) {
        out.point.row(row) = young->point.row(row);
        out.lower.row(row) = young->lower.row(row);
        out.upper.row(row) = young->upper.row(row);
        continue;
      }
      detail::fill_forecast_row(
          out, row, horizons, detail::Link::logit_q, z,
          [&](int h) {
            double eta = rw1.mean(h) + rw2.mean(h) * (age - x_bar_);
            if (with_cohort_) {
              const int cohort = train_end + h - age;
              eta += (cohort <= last_active_cohort)
                         ? gamma_for_cohort(cohort)
                         : rw_g.mean(cohort - last_active_cohort);
            }
            return eta;
          },
          [&](int h) {
            double var = rw1.variance(h) +
                         (age - x_bar_) * (age - x_bar_) * rw2.variance(h);
            if (with_cohort_) {
              const int cohort = train_end + h - age;
              if (cohort > last_active_cohort) {
                var += rw_g.variance(cohort - last_active_cohort);
              }
            }
            return var;
          });
    }
    out.validate();
    return out;
  }

  /// kappa1, kappa2: 2 n_years; cohort gamma: n_active - 2 free; plus the
  /// young-age Lee-Carter delegate when the surface extends below 60.
  int parameter_count() const override {
    int p = 2 * static_cast<int>(train_.years.size());
    if (with_cohort_) p += cohorts_.active_count - 2;
    if (delegate_) p += delegate_->parameter_count();
    return p;
  }

 private:
  double gamma_for_cohort(int cohort) const {
    const int slot = cohorts_.slot_of(cohort);
    return slot >= 0 ? gamma_(slot) : 0.0;
  }

  /// Independent per-year OLS of logit q on (1, x - x_bar).
  void fit_per_year() {
    const Eigen::Index n_t = static_cast<Eigen::Index>(train_.years.size());
    kappa1_.resize(n_t);
    kappa2_.resize(n_t);
    for (Eigen::Index t = 0; t < n_t; ++t) {
      double sxx = 0.0, sxy = 0.0, sy = 0.0;
      for (int age : old_ages_) {
        const double xc = age - x_bar_;
        const double y = detail::logit_q_from_rate(
            train_.rates(train_.age_index(age), t));
        sxx += xc * xc;
        sxy += xc * y;
        sy += y;
      }
      kappa2_(t) = sxy / sxx;
      kappa1_(t) = sy / static_cast<double>(old_ages_.size());
    }
  }

  /// Joint least squares across years with a cohort intercept, under the
  /// usual level and trend constraints on gamma.
  void fit_with_cohort() {
    const Eigen::Index n_t = static_cast<Eigen::Index>(train_.years.size());
    const Eigen::Index n_g = cohorts_.active_count;
    const Eigen::Index p = 2 * n_t + n_g;
    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (int age : old_ages_) {
      const double xc = age - x_bar_;
      const Eigen::Index row = train_.age_index(age);
      for (Eigen::Index t = 0; t < n_t; ++t) {
        const double y = detail::logit_q_from_rate(train_.rates(row, t));
        const int cohort = train_.years[static_cast<std::size_t>(t)] - age;
        const int slot = cohorts_.slot_of(cohort);
        Eigen::Index idx[3] = {t, n_t + t, -1};
        double coef[3] = {1.0, xc, 1.0};
        int used = 2;
        if (slot >= 0) idx[used++] = 2 * n_t + slot;
        for (int i = 0; i < used; ++i) {
          rhs(idx[i]) += coef[i] * y;
          for (int j = 0; j < used; ++j) normal(idx[i], idx[j]) += coef[i] * coef[j];
        }
      }
    }
    const Eigen::Index n_rows = cohorts_.needs_constraints() ? 2 : 0;
    Eigen::MatrixXd constraints = Eigen::MatrixXd::Zero(n_rows, p);
    if (n_rows == 2) detail::add_cohort_constraints(constraints, 0, 2 * n_t, cohorts_);
    const Eigen::VectorXd theta = detail::constrained_least_squares(normal, rhs, constraints);
    kappa1_ = theta.head(n_t);
    kappa2_ = theta.segment(n_t, n_t);
    gamma_ = theta.tail(n_g);
  }

  bool with_cohort_;
  std::vector<int> old_ages_;
  double x_bar_ = 0.0;
  Eigen::VectorXd kappa1_, kappa2_, gamma_;
  CohortIndex cohorts_;
  std::unique_ptr<LeeCarterModel> delegate_;
};

// ---------------------------------------------------------------------------
// Functional time series model

/// Per-year Whittaker smoothing of the log-rate age curves (second
/// difference penalty, common lambda chosen by generalized cross
/// validation), followed by a rank-J principal-component decomposition
/// whose scores are forecast as random walks with drift.
class FtsModel final : public FittedModel {
 public:
  static constexpr int kComponents = 6;

  explicit FtsModel(const MortalitySurface& surface)
      : FittedModel(ModelId::fts, surface) {
    const Eigen::MatrixXd y = surface.log_rates();
    const Eigen::Index n_a = y.rows();
    const Eigen::Index n_t = y.cols();

    Eigen::MatrixXd penalty = Eigen::MatrixXd::Zero(n_a, n_a);
    if (n_a >= 3) {
      Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(n_a - 2, n_a);
      for (Eigen::Index i = 0; i + 2 < n_a; ++i) {
        d2(i, i) = 1.0;
        d2(i, i + 1) = -2.0;
        d2(i, i + 2) = 1.0;
      }
      penalty = d2.transpose() * d2;
    }

    double best_gcv = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd smoothed = y;
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n_a, n_a);
    for (int grid = 0; grid <= 20; ++grid) {
      const double lambda = std::pow(10.0, -4.0 + 0.5 * grid);
      const Eigen::MatrixXd smoother = (identity + lambda * penalty).ldlt().solve(identity);
      const Eigen::MatrixXd fit = smoother * y;
      const double trace = smoother.trace();
      const double dof = static_cast<double>(n_a) - trace;
      if (dof <= 1e-9) continue;
      const double rss = (y - fit).squaredNorm() / static_cast<double>(n_t);
      const double gcv = static_cast<double>(n_a) * rss / (dof * dof);
      if (gcv < best_gcv) {
        best_gcv = gcv;
        lambda_ = lambda;
        smoothed = fit;
      }
    }

    mean_curve_ = smoothed.rowwise().mean();
    const Eigen::MatrixXd centered = smoothed.colwise() - mean_curve_;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered,
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::Index j = std::min<Eigen::Index>(kComponents, std::min(n_a, n_t));
    basis_ = svd.matrixU().leftCols(j);
    scores_ = svd.matrixV().leftCols(j) * svd.singularValues().head(j).asDiagonal();
    for (Eigen::Index c = 0; c < j; ++c) {
      if (basis_.col(c).sum() < 0.0) {
        basis_.col(c) = -basis_.col(c);
        scores_.col(c) = -scores_.col(c);
      }
    }
  }

  double smoothing_lambda() const { return lambda_; }
  const Eigen::MatrixXd& scores() const { return scores_; }

  Eigen::MatrixXd fitted_values() const override {
    const Eigen::MatrixXd link =
        (basis_ * scores_.transpose()).colwise() + mean_curve_;
    return link.array().exp().matrix();
  }

  ForecastSet forecast(int horizons, double alpha) const override {
    const Eigen::Index j = basis_.cols();
    std::vector<RandomWalkForecast> walks;
    walks.reserve(static_cast<std::size_t>(j));
    for (Eigen::Index c = 0; c < j; ++c) {
      walks.push_back(
          fit_random_walk(detail::to_vector(scores_.col(c)), /*with_drift=*/true));
    }
    const double z = numeric::norm_ppf(1.0 - alpha / 2.0);
    ForecastSet out;
    detail::prepare_forecast(out, train_, std::string(to_string(id_)), horizons, alpha);
    for (Eigen::Index x = 0; x < mean_curve_.size(); ++x) {
      detail::fill_forecast_row(
          out, x, horizons, detail::Link::log_rate, z,
          [&](int h) {
            double eta = mean_curve_(x);
            for (Eigen::Index c = 0; c < j; ++c) eta += basis_(x, c) * walks[c].mean(h);
            return eta;
          },
          [&](int h) {
            double var = 0.0;
            for (Eigen::Index c = 0; c < j; ++c) {
              var += basis_(x, c) * basis_(x, c) * walks[c].variance(h);
            }
            return var;
          });
    }
    out.validate();
    return out;
  }

  /// Mean curve: n_ages; J basis curves and score series, one scale
  /// normalization each.
  int parameter_count() const override {
    const int j = static_cast<int>(basis_.cols());
    return static_cast<int>(train_.ages.size()) +
           j * (static_cast<int>(train_.ages.size()) +
                static_cast<int>(train_.years.size()) - 1);
  }

 private:
  double lambda_ = 0.0;
  Eigen::VectorXd mean_curve_;
  Eigen::MatrixXd basis_;   // n_ages x J
  Eigen::MatrixXd scores_;  // n_years x J
};

// ---------------------------------------------------------------------------
// Dispatcher

/// Fits one roster model to a training surface. The surface must span at
/// least 20 years; CBD-family models additionally need ages >= 60.
inline std::unique_ptr<FittedModel> fit(ModelId id, const MortalitySurface& surface) {
  surface.validate();
  if (surface.years.size() < 20) {
    throw DataError("fit: training surface needs at least 20 years");
  }
  switch (id) {
    case ModelId::lc_gaussian:
      return std::make_unique<LeeCarterModel>(id, LeeCarterVariant::gaussian, surface);
    case ModelId::lc_no_adjust:
      return std::make_unique<LeeCarterModel>(id, LeeCarterVariant::no_adjust, surface);
    case ModelId::lc_e0_adjust:
      return std::make_unique<LeeCarterModel>(id, LeeCarterVariant::e0_adjust, surface);
    case ModelId::lc_poisson:
      return std::make_unique<LeeCarterModel>(id, LeeCarterVariant::poisson, surface);
    case ModelId::apc:
      return std::make_unique<ApcModel>(surface);
    case ModelId::cbd:
      return std::make_unique<CbdModel>(id, /*with_cohort=*/false, surface);
    case ModelId::cbd_cohort:
      return std::make_unique<CbdModel>(id, /*with_cohort=*/true, surface);
    case ModelId::fts:
      return std::make_unique<FtsModel>(surface);
  }
  throw ConfigError("fit: unknown model id");
}

}  // namespace mortens::mortality
