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
#include <cstdint>
#include <memory>
#include <numeric>
#include <vector>

#include "mortens/game.hpp"
#include "mortens/rng.hpp"

namespace mortens::testing {

/// Game backed by an explicit dense value table (index = coalition mask).
inline game::Game table_game(int n, std::vector<double> values) {
  auto table = std::make_shared<std::vector<double>>(std::move(values));
  return game::Game(n, [table](game::CoalitionMask s) { return (*table)[s]; });
}

/// Independent Shapley oracle: full enumeration of all n! permutations,
/// averaging marginal contributions. Deliberately does not share any code
/// with the subset-enumeration implementation it checks.
inline std::vector<double> brute_force_shapley(const game::Game& g) {
  const int n = g.n_players();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
  std::size_t count = 0;
  do {
    game::CoalitionMask mask = 0;
    double prev = 0.0;
    for (int player : order) {
      mask |= game::CoalitionMask{1} << player;
      const double val = g.value(mask);
      sums[static_cast<std::size_t>(player)] += val - prev;
      prev = val;
    }
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& s : sums) s /= static_cast<double>(count);
  return sums;
}

/// Random game with coalition values uniform in [-1, 1] and v(empty) = 0.
inline game::Game random_game(int n, std::uint64_t seed) {
  rng::Stream rs = rng::stream(seed, 0);
  std::vector<double> values(std::size_t{1} << n, 0.0);
  for (std::size_t s = 1; s < values.size(); ++s) values[s] = 2.0 * rs.next_double() - 1.0;
  return table_game(n, std::move(values));
}

/// The worked three-player example: v({1})=1, v({2})=2, v({3})=3,
/// v(pairs)=4, v(N)=8. Exact Shapley values are (13/6, 8/3, 19/6).
inline game::Game example_one_game() {
  std::vector<double> v(8, 0.0);
  v[0b001] = 1.0;
  v[0b010] = 2.0;
  v[0b100] = 3.0;
  v[0b011] = 4.0;
  v[0b101] = 4.0;
  v[0b110] = 4.0;
  v[0b111] = 8.0;
  return table_game(3, std::move(v));
}

}  // namespace mortens::testing
