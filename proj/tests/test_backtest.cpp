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

#include <sstream>

#include "mortens/backtest.hpp"
#include "mortens/parallel.hpp"
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

MortalitySurface small_world(std::uint64_t seed, int first_year = 1960,
                             int last_year = 2019, int max_age = 100) {
  SynthSpec spec = default_synth_spec(iota_vec(0, max_age), iota_vec(first_year, last_year),
                                      Gender::female, seed);
  spec.noise_sigma = 0.03;
  return synth_surface(spec).surface;
}

}  // namespace

TEST_CASE("splits reproduce the canonical 60/10/10 frame") {
  const auto plan = make_split(iota_vec(1940, 2019), 60, 10, 10);
  CHECK(plan.train_start == 1940);
  CHECK(plan.train_end == 1999);
  CHECK(plan.val_start == 2000);
  CHECK(plan.val_end == 2009);
  CHECK(plan.test_start == 2010);
  CHECK(plan.test_end == 2019);

  const auto decades = make_split(iota_vec(1990, 2019), 10, 10, 10);
  CHECK(decades.train_len() == 10);
  CHECK(decades.val_len() == 10);
  CHECK(decades.test_len() == 10);

  CHECK_THROWS_AS(make_split(iota_vec(1941, 2019), 60, 10, 10), ConfigError);
}

TEST_CASE("expanding windows produce target_len - h + 1 forecasts per horizon") {
  const auto surface = small_world(7, 1970, 2019, 30);  // 50 years, LC-friendly ages
  const auto plan = make_split(surface.years, 30, 10, 10);
  const std::vector<ModelId> roster{ModelId::lc_gaussian, ModelId::lc_no_adjust};
  const auto wf =
      expanding_forecasts(surface, roster, plan, TargetSet::validation, 10, 0.2);

  REQUIRE(wf.gaps.empty());
  for (int h = 1; h <= 10; ++h) {
    CHECK(wf.windows_at_horizon(h) == 11 - h);
    for (std::size_t mi = 0; mi < roster.size(); ++mi) {
      int count = 0;
      for (const auto& set : wf.sets[mi]) {
        if (set && set->horizons >= h) ++count;
      }
      REQUIRE(count == 11 - h);
    }
  }
}

TEST_CASE("single-window target produces exactly one forecast") {
  const auto surface = small_world(8, 1980, 2011, 25);
  const auto plan = make_split(surface.years, 30, 1, 1);
  const auto wf = expanding_forecasts(surface, {ModelId::lc_gaussian}, plan,
                                      TargetSet::validation, 1, 0.2);
  REQUIRE(wf.sets[0].size() == 1);
  REQUIRE(wf.sets[0][0].has_value());
  CHECK(wf.sets[0][0]->horizons == 1);
}

TEST_CASE("alignment: training always ends exactly h years before the target") {
  const auto surface = small_world(9, 1970, 2019, 30);
  const auto plan = make_split(surface.years, 30, 10, 10);
  for (auto target : {TargetSet::validation, TargetSet::test}) {
    const auto wf =
        expanding_forecasts(surface, {ModelId::lc_gaussian}, plan, target, 10, 0.2);
    const int target_start =
        target == TargetSet::validation ? plan.val_start : plan.test_start;
    for (std::size_t z = 0; z < wf.sets[0].size(); ++z) {
      const auto& set = wf.sets[0][z];
      REQUIRE(set.has_value());
      CHECK(set->train_end_year == target_start - 1 + static_cast<int>(z));
      for (int h = 1; h <= set->horizons; ++h) {
        // No leakage: the forecast for target year y used data through y - h.
        CHECK(set->target_year(h) - h == set->train_end_year);
      }
    }
  }
}

TEST_CASE("test-target training includes the validation block") {
  const auto surface = small_world(10, 1970, 2019, 25);
  const auto plan = make_split(surface.years, 30, 10, 10);
  const auto wf =
      expanding_forecasts(surface, {ModelId::lc_gaussian}, plan, TargetSet::test, 5, 0.2);
  CHECK(wf.sets[0][0]->train_end_year == plan.val_end);  // zeta = 0
  CHECK(wf.sets[0][9]->train_end_year == plan.test_end - 1);
}

TEST_CASE("runs are bit-identical across worker counts") {
  const auto surface = small_world(11, 1975, 2014, 20);
  const auto plan = make_split(surface.years, 20, 10, 10);
  const std::vector<ModelId> roster{ModelId::lc_gaussian, ModelId::fts};

  std::ostringstream a, b;
  parallel::set_max_workers(1);
  write_window_forecasts_csv(
      a, expanding_forecasts(surface, roster, plan, TargetSet::validation, 10, 0.2));
  parallel::set_max_workers(4);
  write_window_forecasts_csv(
      b, expanding_forecasts(surface, roster, plan, TargetSet::validation, 10, 0.2));
  parallel::set_max_workers(0);
  CHECK(a.str() == b.str());
}

TEST_CASE("fit failures are recorded as gaps, not dropped") {
  // CBD cannot fit a surface with no ages >= 60; LC can.
  const auto surface = small_world(12, 1970, 2019, 40);
  const auto plan = make_split(surface.years, 30, 10, 10);
  const std::vector<ModelId> roster{ModelId::lc_gaussian, ModelId::cbd};
  const auto wf =
      expanding_forecasts(surface, roster, plan, TargetSet::validation, 10, 0.2);
  CHECK(wf.gaps.size() == 10);  // every CBD window
  for (const auto& gap : wf.gaps) CHECK(gap.model == ModelId::cbd);
  CHECK(wf.has_gaps(ModelId::cbd));
  CHECK_FALSE(wf.has_gaps(ModelId::lc_gaussian));
  for (const auto& set : wf.sets[wf.model_index(ModelId::lc_gaussian)]) {
    CHECK(set.has_value());
  }
}

TEST_CASE("window forecasts round-trip through CSV") {
  const auto surface = small_world(13, 1975, 2014, 20);
  const auto plan = make_split(surface.years, 20, 10, 10);
  // Enum order: the CSV reader canonicalizes the roster ordering.
  const std::vector<ModelId> roster{ModelId::lc_poisson, ModelId::lc_gaussian};
  const auto wf =
      expanding_forecasts(surface, roster, plan, TargetSet::validation, 10, 0.2);

  std::ostringstream csv, stats;
  write_window_forecasts_csv(csv, wf);
  write_fit_stats_csv(stats, wf);

  std::istringstream csv_in(csv.str()), stats_in(stats.str());
  const auto back = read_window_forecasts_csv(csv_in, TargetSet::validation,
                                              plan.val_start, plan.val_len(), 10, 0.2,
                                              &stats_in);
  REQUIRE(back.models == wf.models);
  REQUIRE(back.ages == wf.ages);
  for (std::size_t mi = 0; mi < wf.models.size(); ++mi) {
    for (std::size_t z = 0; z < wf.sets[mi].size(); ++z) {
      REQUIRE(back.sets[mi][z].has_value());
      CHECK(back.sets[mi][z]->point == wf.sets[mi][z]->point);
      CHECK(back.sets[mi][z]->lower == wf.sets[mi][z]->lower);
      CHECK(back.sets[mi][z]->upper == wf.sets[mi][z]->upper);
      REQUIRE(back.stats[mi][z].has_value());
      CHECK(back.stats[mi][z]->rss == wf.stats[mi][z]->rss);
      CHECK(back.stats[mi][z]->parameter_count == wf.stats[mi][z]->parameter_count);
    }
  }
}

TEST_CASE("expanding forecast preconditions") {
  const auto surface = small_world(14, 1980, 2009, 15);
  const auto plan = make_split(surface.years, 10, 10, 10);
  CHECK_THROWS_AS(expanding_forecasts(surface, {}, plan, TargetSet::validation, 10, 0.2),
                  ConfigError);
  CHECK_THROWS_AS(expanding_forecasts(surface, {ModelId::lc_gaussian}, plan,
                                      TargetSet::validation, 11, 0.2),
                  ConfigError);
}
