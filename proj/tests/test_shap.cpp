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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "mortens/forest.hpp"
#include "mortens/rng.hpp"
#include "mortens/shap.hpp"

using namespace mortens;
using attribution::AttributionMode;
using attribution::BackgroundSet;
using attribution::LinearPredictor;
using Catch::Approx;

namespace {

BackgroundSet random_background(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  BackgroundSet bg;
  bg.rows = numeric::Table(rows, cols);
  rng::Stream rs = rng::stream(seed, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) bg.rows(r, c) = 2.0 * rs.next_double() - 1.0;
  }
  return bg;
}

std::vector<double> column_means(const numeric::Table& t) {
  std::vector<double> m(t.cols(), 0.0);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m[c] += t(r, c);
  }
  for (double& x : m) x /= static_cast<double>(t.rows());
  return m;
}

/// Independent oracle: averages marginal contributions over all n!
/// feature permutations with a full background sweep per evaluation.
std::vector<double> permutation_oracle(const attribution::Predictor& f,
                                       std::span<const double> instance,
                                       const BackgroundSet& bg) {
  const std::size_t n = f.feature_count();
  auto coalition_value = [&](const std::vector<bool>& in) {
    double total = 0.0;
    std::vector<double> composite(n);
    for (std::size_t b = 0; b < bg.row_count(); ++b) {
      for (std::size_t j = 0; j < n; ++j) {
        composite[j] = in[j] ? instance[j] : bg.rows(b, j);
      }
      total += f.predict(composite);
    }
    return total / static_cast<double>(bg.row_count());
  };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(n, 0.0);
  std::size_t count = 0;
  do {
    std::vector<bool> in(n, false);
    double prev = coalition_value(in);
    for (std::size_t j : order) {
      in[j] = true;
      const double val = coalition_value(in);
      phi[j] += val - prev;
      prev = val;
    }
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& x : phi) x /= static_cast<double>(count);
  return phi;
}

}  // namespace

TEST_CASE("exact attribution of a linear predictor matches the closed form") {
  for (std::size_t n = 3; n <= 8; ++n) {
    std::vector<double> coef(n);
    rng::Stream rs = rng::stream(100 + n, 0);
    for (double& c : coef) c = 4.0 * rs.next_double() - 2.0;
    const LinearPredictor f(coef, 0.3);
    const auto bg = random_background(20, n, 200 + n);
    std::vector<double> instance(n);
    for (double& x : instance) x = 2.0 * rs.next_double() - 1.0;

    const auto res = attribution::shap_attribute(f, instance, bg, 0, 0,
                                                 AttributionMode::exact);
    const auto means = column_means(bg.rows);
    for (std::size_t j = 0; j < n; ++j) {
      REQUIRE(res.phi[j] == Approx(coef[j] * (instance[j] - means[j])).margin(1e-10));
    }
    REQUIRE(std::abs(res.local_accuracy_residual()) <= 1e-10);
  }
}

TEST_CASE("exact attribution agrees with the permutation oracle at N=3") {
  const LinearPredictor linear({1.5, -2.0, 0.75}, 1.0);
  const auto bg = random_background(7, 3, 9);
  const std::vector<double> instance{0.4, -0.2, 0.9};
  const auto res =
      attribution::shap_attribute(linear, instance, bg, 0, 0, AttributionMode::exact);
  const auto oracle = permutation_oracle(linear, instance, bg);
  for (std::size_t j = 0; j < 3; ++j) {
    REQUIRE(res.phi[j] == Approx(oracle[j]).margin(1e-12));
  }
}

TEST_CASE("constant predictor attributes nothing") {
  const LinearPredictor f({0.0, 0.0, 0.0}, 5.5);
  const auto bg = random_background(6, 3, 4);
  const std::vector<double> instance{1.0, 2.0, 3.0};
  for (auto mode : {AttributionMode::exact, AttributionMode::sampled}) {
    const auto res = attribution::shap_attribute(f, instance, bg, 50, 3, mode);
    for (double p : res.phi) CHECK(p == 0.0);
    CHECK(res.baseline == Approx(5.5));
    CHECK(res.prediction == Approx(5.5));
  }
}

TEST_CASE("single feature takes the whole difference in exact mode") {
  const LinearPredictor f({2.0}, 0.0);
  BackgroundSet bg;
  bg.rows = numeric::Table(3, 1);
  bg.rows(0, 0) = 1.0;
  bg.rows(1, 0) = 2.0;
  bg.rows(2, 0) = 3.0;
  const std::vector<double> instance{5.0};
  const auto res = attribution::shap_attribute(f, instance, bg, 0, 0,
                                               AttributionMode::exact);
  CHECK(res.phi[0] == Approx(res.prediction - res.baseline).margin(1e-12));
}

TEST_CASE("dummy feature receives exactly zero in both modes") {
  // Predictor reads features 0 and 1 only.
  const LinearPredictor f({1.0, -2.0, 0.0}, 0.0);
  const auto bg = random_background(10, 3, 21);
  const std::vector<double> instance{0.5, 0.25, 9.0};
  const auto exact =
      attribution::shap_attribute(f, instance, bg, 0, 0, AttributionMode::exact);
  CHECK(exact.phi[2] == 0.0);
  const auto sampled =
      attribution::shap_attribute(f, instance, bg, 400, 8, AttributionMode::sampled);
  CHECK(sampled.phi[2] == 0.0);
  CHECK(sampled.std_errors[2] == 0.0);
}

TEST_CASE("symmetric features with equal values share attribution") {
  // f symmetric in features 0 and 1.
  struct SymPredictor final : attribution::Predictor {
    std::size_t feature_count() const override { return 3; }
    double predict(std::span<const double> x) const override {
      return x[0] * x[1] + 0.5 * (x[0] + x[1]) + 2.0 * x[2];
    }
  } f;
  auto bg = random_background(8, 3, 33);
  for (std::size_t r = 0; r < bg.row_count(); ++r) bg.rows(r, 1) = bg.rows(r, 0);
  const std::vector<double> instance{0.7, 0.7, -0.3};
  const auto res =
      attribution::shap_attribute(f, instance, bg, 0, 0, AttributionMode::exact);
  CHECK(res.phi[0] == Approx(res.phi[1]).margin(1e-10));
}

TEST_CASE("sampled estimates agree with exact values on a forest") {
  const std::size_t n = 5;
  numeric::Table features(80, n);
  std::vector<double> targets(80);
  rng::Stream rs = rng::stream(55, 0);
  for (std::size_t r = 0; r < 80; ++r) {
    for (std::size_t c = 0; c < n; ++c) features(r, c) = rs.next_double();
    targets[r] = features(r, 0) + 2.0 * features(r, 1) * features(r, 2) +
                 0.1 * rs.next_double();
  }
  attribution::ForestHyperparams hp;
  hp.tree_count = 40;
  const auto forest = attribution::fit_forest(features, targets, hp, 7);

  BackgroundSet bg;
  bg.rows = numeric::Table(16, n);
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < n; ++c) bg.rows(r, c) = features(r, c);
  }
  const auto instance = features.row(20);
  const auto exact =
      attribution::shap_attribute(forest, instance, bg, 0, 0, AttributionMode::exact);
  const auto sampled = attribution::shap_attribute(forest, instance, bg, 4000, 91,
                                                   AttributionMode::sampled);
  for (std::size_t j = 0; j < n; ++j) {
    const double tol = 4.0 * std::max(sampled.std_errors[j], 1e-12);
    REQUIRE(std::abs(sampled.phi[j] - exact.phi[j]) <= tol);
  }
  REQUIRE(std::abs(sampled.local_accuracy_residual()) <=
          4.0 * std::max(sampled.aggregate_std_error, 1e-12));
}

TEST_CASE("panel attribution matches per-row calls and handles duplicates") {
  const LinearPredictor f({1.0, -1.0, 2.0}, 0.0);
  const auto bg = random_background(12, 3, 61);
  numeric::Table panel(3, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    panel(0, c) = 0.1 * static_cast<double>(c + 1);
    panel(1, c) = panel(0, c);  // duplicate of row 0
    panel(2, c) = -0.2 * static_cast<double>(c + 1);
  }

  const auto shared = attribution::attribute_panel(f, panel, bg, 200, 17,
                                                   AttributionMode::sampled,
                                                   attribution::PanelSeedMode::shared);
  REQUIRE(shared.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(shared[0].phi[j] == shared[1].phi[j]);  // bit-identical under shared seed
  }

  const auto direct = attribution::shap_attribute(f, panel.row(0), bg, 200, 17,
                                                  AttributionMode::sampled);
  for (std::size_t j = 0; j < 3; ++j) CHECK(shared[0].phi[j] == direct.phi[j]);

  const auto single = attribution::attribute_panel(f, panel, bg, 200, 17,
                                                   AttributionMode::sampled);
  const auto row0 = attribution::shap_attribute(
      f, panel.row(0), bg, 200, rng::derive_seed(17, 0), AttributionMode::sampled);
  for (std::size_t j = 0; j < 3; ++j) CHECK(single[0].phi[j] == row0.phi[j]);
}

TEST_CASE("panel of linear rows matches the closed form in exact mode") {
  const LinearPredictor f({0.5, 1.5, -0.25, 2.0}, 0.1);
  const auto bg = random_background(9, 4, 71);
  const auto means = column_means(bg.rows);
  numeric::Table panel(5, 4);
  rng::Stream rs = rng::stream(72, 0);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 4; ++c) panel(r, c) = rs.next_double();
  }
  const auto results =
      attribution::attribute_panel(f, panel, bg, 0, 0, AttributionMode::exact);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t j = 0; j < 4; ++j) {
      REQUIRE(results[r].phi[j] ==
              Approx(f.coefficients()[j] * (panel(r, j) - means[j])).margin(1e-10));
    }
  }
}

TEST_CASE("attribution validation and CSV export") {
  const LinearPredictor f({1.0, 1.0}, 0.0);
  BackgroundSet empty;
  const std::vector<double> instance{1.0, 2.0};
  CHECK_THROWS_AS(
      attribution::shap_attribute(f, instance, empty, 10, 0, AttributionMode::sampled),
      std::invalid_argument);
  const auto bg = random_background(4, 2, 3);
  CHECK_THROWS_AS(
      attribution::shap_attribute(f, instance, bg, 0, 0, AttributionMode::sampled),
      std::invalid_argument);
  const std::vector<double> short_instance{1.0};
  CHECK_THROWS_AS(attribution::shap_attribute(f, short_instance, bg, 10, 0,
                                              AttributionMode::sampled),
                  std::invalid_argument);

  const auto res =
      attribution::shap_attribute(f, instance, bg, 32, 5, AttributionMode::sampled);
  std::ostringstream csv;
  const std::vector<attribution::AttributionResult> rows{res};
  attribution::write_attribution_csv(csv, rows);
  const std::string text = csv.str();
  CHECK(text.find("instance_id,feature_id,phi,std_error,baseline,prediction") !=
        std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);  // header + 2 rows
}
