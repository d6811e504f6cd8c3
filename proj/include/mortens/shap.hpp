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

#include <bit>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mortens/errors.hpp"
#include "mortens/forest.hpp"
#include "mortens/game.hpp"
#include "mortens/numeric.hpp"
#include "mortens/parallel.hpp"
#include "mortens/rng.hpp"

namespace mortens::attribution {

/// Reference feature rows defining the baseline expectation under
/// marginal (interventional) substitution.
struct BackgroundSet {
  numeric::Table rows;

  std::size_t row_count() const { return rows.rows(); }
  std::size_t feature_count() const { return rows.cols(); }
};

enum class AttributionMode { exact, sampled };

/// Additive decomposition of one prediction: baseline + sum(phi) equals
/// the prediction (exactly in exact mode, within Monte-Carlo error in
/// sampled mode).
struct AttributionResult {
  std::vector<double> phi;
  std::vector<double> std_errors;
  double baseline = 0.0;
  double prediction = 0.0;
  // Sum of the per-feature standard errors plus the background-sampling
  // scale of the baseline term. The local-accuracy residual equals the
  // Monte-Carlo error of the implicit sampled baseline, whose sd is the
  // population sd of the background predictions over sqrt(M); adding it to
  // the per-feature sum keeps the 4x budget well clear of the residual.
  double aggregate_std_error = 0.0;
  std::size_t sample_count = 0;
  AttributionMode mode = AttributionMode::sampled;

  double local_accuracy_residual() const {
    return baseline + numeric::pairwise_sum(phi) - prediction;
  }
};

inline constexpr std::size_t kMaxExactFeatures = 12;

namespace detail {

inline void validate_inputs(const Predictor& predictor, std::span<const double> instance,
                            const BackgroundSet& background) {
  if (background.row_count() == 0) {
    throw std::invalid_argument("shap_attribute: empty background set");
  }
  if (instance.size() != predictor.feature_count() ||
      background.feature_count() != predictor.feature_count()) {
    throw std::invalid_argument("shap_attribute: feature arity mismatch");
  }
}

struct BackgroundStats {
  double mean = 0.0;
  double population_sd = 0.0;  // sd over rows with the 1/B denominator
};

inline BackgroundStats background_prediction_stats(const Predictor& predictor,
                                                   const BackgroundSet& background) {
  std::vector<double> preds(background.row_count());
  parallel::for_each_index(background.row_count(), [&](std::size_t b) {
    preds[b] = predictor.predict(background.rows.row(b));
  });
  BackgroundStats stats;
  stats.mean = numeric::mean(preds);
  std::vector<double> sq(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - stats.mean;
    sq[i] = d * d;
  }
  stats.population_sd =
      std::sqrt(numeric::pairwise_sum(sq) / static_cast<double>(preds.size()));
  return stats;
}

inline AttributionResult attribute_exact(const Predictor& predictor,
                                         std::span<const double> instance,
                                         const BackgroundSet& background) {
  const std::size_t n = predictor.feature_count();
  if (n > kMaxExactFeatures) {
    throw std::invalid_argument("shap_attribute: exact mode limited to 12 features");
  }
  const std::size_t n_masks = std::size_t{1} << n;
  const std::size_t n_rows = background.row_count();

  // v(S) = mean over background rows of f(instance on S, row off S).
  std::vector<double> values(n_masks);
  parallel::for_each_index(n_masks, [&](std::size_t mask) {
    std::vector<double> composite(n);
    std::vector<double> preds(n_rows);
    for (std::size_t b = 0; b < n_rows; ++b) {
      const auto row = background.rows.row(b);
      for (std::size_t j = 0; j < n; ++j) {
        composite[j] = (mask >> j) & 1 ? instance[j] : row[j];
      }
      preds[b] = predictor.predict(composite);
    }
    values[mask] = numeric::mean(preds);
  });

  const std::vector<double> weights = game::detail::subset_weights(static_cast<int>(n));
  AttributionResult out;
  out.mode = AttributionMode::exact;
  out.phi.assign(n, 0.0);
  out.std_errors.assign(n, 0.0);
  out.baseline = values[0];
  out.prediction = predictor.predict(instance);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    std::vector<double> terms;
    terms.reserve(n_masks / 2);
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      const int size = std::popcount(mask);
      terms.push_back(weights[static_cast<std::size_t>(size)] *
                      (values[mask | bit] - values[mask]));
    }
    out.phi[j] = numeric::pairwise_sum(terms);
  }
  return out;
}

inline AttributionResult attribute_sampled(const Predictor& predictor,
                                           std::span<const double> instance,
                                           const BackgroundSet& background,
                                           std::size_t samples, std::uint64_t seed,
                                           bool parallel_samples,
                                           const BackgroundStats& background_stats) {
  if (samples == 0) throw std::invalid_argument("shap_attribute: M must be >= 1");
  const std::size_t n = predictor.feature_count();
  const std::size_t n_rows = background.row_count();

  numeric::Table marginals(samples, n);
  auto run_one = [&](std::size_t m) {
    rng::Stream rs = rng::stream(seed, m);
    const std::size_t b = static_cast<std::size_t>(rs.next_below(n_rows));
    std::vector<std::size_t> order = rng::identity_permutation(n);
    rs.shuffle(std::span<std::size_t>(order));
    std::vector<double> composite(background.rows.row(b).begin(),
                                  background.rows.row(b).end());
    // Marginals telescope: their sum is f(instance) - f(row b) exactly.
    double prev = predictor.predict(composite);
    for (std::size_t j : order) {
      composite[j] = instance[j];
      const double pred = predictor.predict(composite);
      marginals(m, j) = pred - prev;
      prev = pred;
    }
  };
  if (parallel_samples) {
    parallel::for_each_index(samples, run_one);
  } else {
    for (std::size_t m = 0; m < samples; ++m) run_one(m);
  }

  AttributionResult out;
  out.mode = AttributionMode::sampled;
  out.sample_count = samples;
  out.phi.assign(n, 0.0);
  out.std_errors.assign(n, 0.0);
  std::vector<double> column(samples);
  double se_total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t m = 0; m < samples; ++m) column[m] = marginals(m, j);
    out.phi[j] = numeric::mean(column);
    if (samples > 1) {
      out.std_errors[j] =
          numeric::sample_sd(column) / std::sqrt(static_cast<double>(samples));
    }
    se_total += out.std_errors[j];
  }
  out.aggregate_std_error =
      se_total +
      background_stats.population_sd / std::sqrt(static_cast<double>(samples));
  out.baseline = background_stats.mean;
  out.prediction = predictor.predict(instance);
  return out;
}

}  // namespace detail

/// SHAP-style additive attribution of one prediction. Exact mode
/// enumerates all feature subsets with the Shapley subset weights; sampled
/// mode draws M feature permutations, each paired with one uniformly drawn
/// background row, and averages marginal contributions.
inline AttributionResult shap_attribute(const Predictor& predictor,
                                        std::span<const double> instance,
                                        const BackgroundSet& background,
                                        std::size_t samples, std::uint64_t seed,
                                        AttributionMode mode) {
  detail::validate_inputs(predictor, instance, background);
  if (mode == AttributionMode::exact) {
    return detail::attribute_exact(predictor, instance, background);
  }
  const auto stats = detail::background_prediction_stats(predictor, background);
  return detail::attribute_sampled(predictor, instance, background, samples, seed, true,
                                   stats);
}

enum class PanelSeedMode {
  per_row,  // row r draws from seed derived from (seed, r)
  shared,   // every row reuses the master seed (duplicate rows attribute identically)
};

/// Attributes every row of a panel; rows run in parallel with per-row
/// deterministic seeds.
inline std::vector<AttributionResult> attribute_panel(
    const Predictor& predictor, const numeric::Table& instances,
    const BackgroundSet& background, std::size_t samples, std::uint64_t seed,
    AttributionMode mode = AttributionMode::sampled,
    PanelSeedMode seed_mode = PanelSeedMode::per_row) {
  if (instances.rows() == 0) return {};
  if (instances.cols() != predictor.feature_count()) {
    throw std::invalid_argument("attribute_panel: feature arity mismatch");
  }
  detail::validate_inputs(predictor, instances.row(0), background);

  const detail::BackgroundStats stats =
      (mode == AttributionMode::sampled)
          ? detail::background_prediction_stats(predictor, background)
          : detail::BackgroundStats{};
  std::vector<AttributionResult> out(instances.rows());
  parallel::for_each_index(instances.rows(), [&](std::size_t r) {
    const std::uint64_t row_seed =
        (seed_mode == PanelSeedMode::shared) ? seed : rng::derive_seed(seed, r);
    if (mode == AttributionMode::exact) {
      out[r] = detail::attribute_exact(predictor, instances.row(r), background);
    } else {
      out[r] = detail::attribute_sampled(predictor, instances.row(r), background, samples,
                                         row_seed, false, stats);
    }
  });
  return out;
}

/// CSV export: instance_id, feature_id, phi, std_error, baseline, prediction.
inline void write_attribution_csv(std::ostream& out,
                                  std::span<const AttributionResult> results) {
  out << "instance_id,feature_id,phi,std_error,baseline,prediction\n";
  char buf[512];
  for (std::size_t r = 0; r < results.size(); ++r) {
    const AttributionResult& res = results[r];
    for (std::size_t j = 0; j < res.phi.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", r, j, res.phi[j],
                    res.std_errors[j], res.baseline, res.prediction);
      out << buf;
    }
  }
}

}  // namespace mortens::attribution
