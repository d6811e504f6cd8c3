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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "mortens/models.hpp"
#include "mortens/surface.hpp"

using namespace mortens;
using namespace mortens::mortality;
using Catch::Approx;

namespace {

std::vector<int> iota_vec(int first, int last) {
  std::vector<int> v;
  for (int i = first; i <= last; ++i) v.push_back(i);
  return v;
}

/// Noiseless Lee-Carter world with known parameters.
SynthResult lc_world(double drift, double kappa_sigma, std::uint64_t seed,
                     int n_years = 40) {
  SynthSpec spec = default_synth_spec(iota_vec(0, 100), iota_vec(1960, 1960 + n_years - 1),
                                      Gender::female, seed);
  spec.drift = drift;
  spec.kappa_sigma = kappa_sigma;
  spec.noise_sigma = 0.0;
  return synth_surface(spec);
}

MortalitySurface constant_surface(double rate, int n_years = 30) {
  MortalitySurface s;
  s.gender = Gender::male;
  s.ages = iota_vec(0, 100);
  s.years = iota_vec(1980, 1980 + n_years - 1);
  s.rates = Eigen::MatrixXd::Constant(101, n_years, rate);
  return s;
}

/// Logit-linear world on ages >= 60: logit q = k1_t + k2_t (x - 80); the
/// young ages carry an arbitrary smooth profile.
MortalitySurface cbd_world(std::vector<double>& k1_out, std::vector<double>& k2_out,
                           int n_years = 30) {
  MortalitySurface s;
  s.gender = Gender::female;
  s.ages = iota_vec(0, 100);
  s.years = iota_vec(1985, 1985 + n_years - 1);
  s.rates.resize(101, n_years);
  k1_out.resize(static_cast<std::size_t>(n_years));
  k2_out.resize(static_cast<std::size_t>(n_years));
  for (int t = 0; t < n_years; ++t) {
    const double k1 = -2.2 - 0.012 * t;
    const double k2 = 0.095 + 0.0004 * t;
    k1_out[static_cast<std::size_t>(t)] = k1;
    k2_out[static_cast<std::size_t>(t)] = k2;
    for (int x = 0; x <= 100; ++x) {
      double m;
      if (x >= 60) {
        const double eta = k1 + k2 * (x - 80.0);
        const double q = 1.0 / (1.0 + std::exp(-eta));
        m = -std::log1p(-q);
      } else {
        m = std::exp(-7.5 + 0.05 * x - 0.01 * t);
      }
      s.rates(x, t) = m;
    }
  }
  return s;
}

}  // namespace

TEST_CASE("LC Gaussian recovers the generator parameters on noiseless data") {
  const auto world = lc_world(-0.9, 0.4, 3);
  const LeeCarterModel model(ModelId::lc_gaussian, LeeCarterVariant::gaussian,
                             world.surface);
  const auto& p = model.params();

  CHECK(p.b.sum() == Approx(1.0).margin(1e-10));
  CHECK(p.kappa.sum() == Approx(0.0).margin(1e-10));
  for (Eigen::Index t = 0; t < p.kappa.size(); ++t) {
    REQUIRE(p.kappa(t) == Approx(world.kappa[static_cast<std::size_t>(t)]).margin(1e-8));
  }
  const Eigen::MatrixXd resid = model.residuals();
  CHECK(resid.cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(resid.rows() == 101);
  CHECK(resid.cols() == world.surface.rates.cols());
}

TEST_CASE("Poisson LC matches the exact solution on model-consistent data") {
  const auto world = lc_world(-0.7, 0.3, 9, 30);
  const LeeCarterModel model(ModelId::lc_poisson, LeeCarterVariant::poisson,
                             world.surface);
  CHECK_FALSE(model.fallback_used());
  CHECK(model.params().b.sum() == Approx(1.0).margin(1e-10));
  CHECK(model.params().kappa.sum() == Approx(0.0).margin(1e-8));
  CHECK(model.residuals().cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("life-expectancy adjustment reproduces observed e0 per year") {
  SynthSpec spec = default_synth_spec(iota_vec(0, 100), iota_vec(1970, 2009),
                                      Gender::female, 15);
  spec.noise_sigma = 0.05;  // noise so the SVD fit is not already exact
  const auto world = synth_surface(spec);
  const LeeCarterModel model(ModelId::lc_e0_adjust, LeeCarterVariant::e0_adjust,
                             world.surface);
  const auto fitted = model.fitted_values();
  for (Eigen::Index t = 0; t < fitted.cols(); ++t) {
    const double observed = life_expectancy_at_birth(world.surface.rates.col(t));
    const double implied = life_expectancy_at_birth(fitted.col(t));
    REQUIRE(implied == Approx(observed).margin(1e-8));
  }
}

TEST_CASE("every model fits a constant surface exactly") {
  const auto s = constant_surface(0.02);
  for (ModelId id : kAllModels) {
    const auto model = fit(id, s);
    const Eigen::MatrixXd fitted = model->fitted_values();
    INFO("model " << to_string(id));
    CHECK((fitted.array() - 0.02).abs().maxCoeff() <= 1e-10);
    const auto fc = model->forecast(5, 0.2);
    CHECK((fc.point.array() - 0.02).abs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("CBD recovers the logit-linear generator on old ages") {
  std::vector<double> k1, k2;
  const auto s = cbd_world(k1, k2);
  const CbdModel model(ModelId::cbd, /*with_cohort=*/false, s);
  CHECK(model.age_center() == Approx(80.0));
  for (std::size_t t = 0; t < k1.size(); ++t) {
    REQUIRE(model.kappa1()(static_cast<Eigen::Index>(t)) == Approx(k1[t]).margin(1e-8));
    REQUIRE(model.kappa2()(static_cast<Eigen::Index>(t)) == Approx(k2[t]).margin(1e-8));
  }
  // Old-age fitted values reproduce the surface; young ages come from the
  // Lee-Carter delegate.
  const auto fitted = model.fitted_values();
  for (int x = 60; x <= 100; ++x) {
    for (Eigen::Index t = 0; t < fitted.cols(); ++t) {
      REQUIRE(fitted(x, t) == Approx(s.rates(x, t)).margin(1e-8));
    }
  }
}

TEST_CASE("CBD cohort variant reproduces a cohort-shifted logit surface") {
  std::vector<double> k1, k2;
  auto s = cbd_world(k1, k2);
  // Cohort observation counts over the old-age block, mirroring the
  // model's pinning rule (< 5 observations -> gamma = 0).
  std::map<int, int> cohort_count;
  for (int x = 60; x <= 100; ++x) {
    for (int year : s.years) cohort_count[year - x] += 1;
  }
  // Add a smooth cohort effect (logit scale) on well-observed cohorts only,
  // so the generated surface lies exactly in the pinned model space.
  for (int x = 60; x <= 100; ++x) {
    for (Eigen::Index t = 0; t < s.rates.cols(); ++t) {
      const int cohort = s.years[static_cast<std::size_t>(t)] - x;
      if (cohort_count[cohort] < 5) continue;
      const double gamma = 0.06 * std::sin(0.21 * cohort);
      const double q_old = -std::expm1(-s.rates(x, t));
      const double eta = std::log(q_old / (1.0 - q_old)) + gamma;
      const double q = 1.0 / (1.0 + std::exp(-eta));
      s.rates(x, t) = -std::log1p(-q);
    }
  }
  const CbdModel model(ModelId::cbd_cohort, /*with_cohort=*/true, s);
  const auto fitted = model.fitted_values();
  for (int x = 60; x <= 100; ++x) {
    for (Eigen::Index t = 0; t < fitted.cols(); ++t) {
      REQUIRE(fitted(x, t) == Approx(s.rates(x, t)).epsilon(1e-8));
    }
  }
}

TEST_CASE("APC reproduces an additive age-period-cohort surface") {
  MortalitySurface s;
  s.gender = Gender::male;
  s.ages = iota_vec(0, 80);
  s.years = iota_vec(1970, 2004);
  s.rates.resize(81, 35);
  std::map<int, int> cohort_count;
  for (int x = 0; x <= 80; ++x) {
    for (int year : s.years) cohort_count[year - x] += 1;
  }
  for (int x = 0; x <= 80; ++x) {
    for (int t = 0; t < 35; ++t) {
      const int cohort = (1970 + t) - x;
      // Rare cohorts carry no effect, matching the model's pinning rule.
      const double gamma =
          cohort_count[cohort] >= 5 ? 0.15 * std::sin(cohort * 0.15) : 0.0;
      const double log_m = -6.5 + 0.045 * x - 0.02 * t + gamma;
      s.rates(x, t) = std::exp(log_m);
    }
  }
  const ApcModel model(s);
  const auto fitted = model.fitted_values();
  double worst = 0.0;
  for (Eigen::Index x = 0; x < fitted.rows(); ++x) {
    for (Eigen::Index t = 0; t < fitted.cols(); ++t) {
      worst = std::max(worst, std::abs(fitted(x, t) - s.rates(x, t)) / s.rates(x, t));
    }
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("random-walk extrapolation arithmetic") {
  // kappa_t = -0.5 t exactly: drift -0.5 and zero innovation variance.
  std::vector<double> kappa;
  for (int t = 0; t < 20; ++t) kappa.push_back(-0.5 * t);
  const auto rw = fit_random_walk(kappa, true);
  CHECK(rw.drift == Approx(-0.5).margin(1e-12));
  CHECK(rw.sigma2 == Approx(0.0).margin(1e-18));
  CHECK(rw.mean(4) == Approx(kappa.back() - 2.0).margin(1e-12));
  CHECK(rw.variance(4) == Approx(0.0).margin(1e-18));

  std::vector<double> one_point{1.0};
  CHECK_THROWS_AS(fit_random_walk(one_point, true), std::invalid_argument);
}

TEST_CASE("deterministic index path gives degenerate intervals") {
  const auto world = lc_world(-0.5, 0.0, 21);  // sigma = 0: exactly linear kappa
  const LeeCarterModel model(ModelId::lc_gaussian, LeeCarterVariant::gaussian,
                             world.surface);
  const auto fc = model.forecast(6, 0.2);
  CHECK((fc.upper - fc.lower).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((fc.point - fc.lower).cwiseAbs().maxCoeff() <= 1e-9);

  // Point forecasts follow the drift through the log link.
  const auto& p = model.params();
  const double drift =
      fit_random_walk(std::vector<double>(p.kappa.data(), p.kappa.data() + p.kappa.size()),
                      true)
          .drift;
  CHECK(drift == Approx(-0.5).margin(1e-8));
  for (int h = 1; h <= 6; ++h) {
    const double expected =
        std::exp(p.a(30) + p.b(30) * (p.kappa(p.kappa.size() - 1) + h * drift));
    REQUIRE(fc.point(30, h - 1) == Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("interval invariants hold across the roster on noisy data") {
  SynthSpec spec = default_synth_spec(iota_vec(0, 100), iota_vec(1965, 2004),
                                      Gender::female, 77);
  spec.noise_sigma = 0.03;
  const auto world = synth_surface(spec);
  const double z90 = numeric::norm_ppf(0.9);
  CHECK(z90 == Approx(1.2815515655446004).margin(1e-12));

  for (ModelId id : kAllModels) {
    const auto model = fit(id, world.surface);
    const auto fc = model->forecast(10, 0.2);
    INFO("model " << to_string(id));
    fc.validate();  // ordering + positivity
    // Monotone widening of the link-scale interval in h.
    for (Eigen::Index x = 0; x < fc.point.rows(); ++x) {
      for (int h = 1; h < 10; ++h) {
        const double w0 = std::log(fc.upper(x, h - 1)) - std::log(fc.lower(x, h - 1));
        const double w1 = std::log(fc.upper(x, h)) - std::log(fc.lower(x, h));
        REQUIRE(w1 >= w0 - 1e-9);
      }
    }
  }
}

TEST_CASE("refitting the same surface is bit-identical") {
  SynthSpec spec = default_synth_spec(iota_vec(0, 100), iota_vec(1970, 2004),
                                      Gender::male, 5);
  spec.noise_sigma = 0.02;
  const auto world = synth_surface(spec);
  for (ModelId id : kAllModels) {
    const auto m1 = fit(id, world.surface);
    const auto m2 = fit(id, world.surface);
    INFO("model " << to_string(id));
    CHECK(m1->fitted_values() == m2->fitted_values());
    const auto f1 = m1->forecast(5, 0.2);
    const auto f2 = m2->forecast(5, 0.2);
    CHECK(f1.point == f2.point);
    CHECK(f1.lower == f2.lower);
    CHECK(f1.upper == f2.upper);
  }
}

TEST_CASE("parameter counts follow the documented formulas") {
  const auto world = lc_world(-0.6, 0.2, 33, 30);
  const int n_a = 101, n_t = 30;
  CHECK(fit(ModelId::lc_gaussian, world.surface)->parameter_count() == 2 * n_a + n_t - 2);
  CHECK(fit(ModelId::fts, world.surface)->parameter_count() ==
        n_a + 6 * (n_a + n_t - 1));
  const auto cbd = fit(ModelId::cbd, world.surface);
  CHECK(cbd->parameter_count() == 2 * n_t + (2 * n_a + n_t - 2));
}

TEST_CASE("fit preconditions are enforced") {
  const auto short_world = lc_world(-0.5, 0.1, 40, 10);  // only 10 years
  CHECK_THROWS_AS(fit(ModelId::lc_gaussian, short_world.surface), DataError);
  CHECK_THROWS_AS(fit(ModelId::lc_gaussian, constant_surface(0.01))->forecast(0, 0.2),
                  std::invalid_argument);
  CHECK_THROWS_AS(fit(ModelId::lc_gaussian, constant_surface(0.01))->forecast(5, 1.5),
                  std::invalid_argument);

  // CBD needs old ages on the grid.
  SynthSpec spec = default_synth_spec(iota_vec(0, 40), iota_vec(1970, 1999),
                                      Gender::female, 4);
  const auto young = synth_surface(spec);
  CHECK_THROWS_AS(fit(ModelId::cbd, young.surface), DataError);
}

TEST_CASE("residual matrix shape matches the training surface") {
  const auto world = lc_world(-0.6, 0.25, 50, 25);
  for (ModelId id : {ModelId::apc, ModelId::cbd_cohort, ModelId::fts}) {
    const auto model = fit(id, world.surface);
    const auto resid = model->residuals();
    CHECK(resid.rows() == world.surface.rates.rows());
    CHECK(resid.cols() == world.surface.rates.cols());
  }
}
