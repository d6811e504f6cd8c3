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
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mortens/errors.hpp"
#include "mortens/numeric.hpp"
#include "mortens/parallel.hpp"
#include "mortens/rng.hpp"

namespace mortens::game {

/// Coalitions are bitmasks over players 0..n-1 (player i <-> bit i).
using CoalitionMask = std::uint64_t;

inline constexpr int kMaxPlayers = 63;       // bitmask limit for sampling
inline constexpr int kMaxExactPlayers = 20;  // 2^n enumeration limit

/// Characteristic-function game (N, v) with v(empty) = 0. The value
/// function must be safe for concurrent read-only invocation; a dense
/// pre-populated cache can be attached for n <= kMaxExactPlayers.
class Game {
 public:
  Game(int n_players, std::function<double(CoalitionMask)> value_fn)
      : n_(n_players), fn_(std::move(value_fn)) {
    if (n_ < 1 || n_ > kMaxPlayers) {
      throw std::invalid_argument("Game: n_players must be in [1, 63]");
    }
    if (fn_(0) != 0.0) {
      throw std::invalid_argument("Game: value of the empty coalition must be 0");
    }
  }

  int n_players() const { return n_; }

  CoalitionMask grand_coalition() const {
    return (n_ == 64) ? ~CoalitionMask{0} : ((CoalitionMask{1} << n_) - 1);
  }

  double value(CoalitionMask s) const {
    if (s == 0) return 0.0;
    if (cache_) return (*cache_)[s];
    return fn_(s);
  }

  /// Evaluates and stores all 2^n coalition values (n <= 20). After this
  /// call value() never invokes the characteristic function again.
  void populate_cache() {
    if (cache_) return;
    if (n_ > kMaxExactPlayers) {
      throw std::invalid_argument("Game: dense cache limited to n <= 20");
    }
    auto table = std::make_shared<std::vector<double>>(std::size_t{1} << n_);
    auto& values = *table;
    parallel::for_each_index(values.size(),
                             [&](std::size_t m) { values[m] = (m == 0) ? 0.0 : fn_(m); });
    cache_ = std::move(table);
  }

  bool has_cache() const { return cache_ != nullptr; }

 private:
  int n_;
  std::function<double(CoalitionMask)> fn_;
  std::shared_ptr<const std::vector<double>> cache_;
};

/// Allocation of the total worth across players.
struct Allocation {
  std::vector<double> values;
};

/// Monte-Carlo Shapley estimate from M sampled permutations.
struct SampledShapley {
  std::vector<double> estimates;
  std::vector<double> std_errors;  // sample sd of marginals / sqrt(M)
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;
};

struct SymmetricPairFinding {
  int i = 0;
  int j = 0;
  double deviation = 0.0;  // |phi_i - phi_j|
};

struct DummyPlayerFinding {
  int player = 0;
  double phi = 0.0;
};

/// Audit of an allocation against the four Shapley axioms. Residuals are
/// reported even when the corresponding boolean verdict is true.
struct AxiomReport {
  bool efficient = false;
  double efficiency_residual = 0.0;  // sum(phi) - v(N)
  std::vector<SymmetricPairFinding> symmetric_pairs;
  std::vector<DummyPlayerFinding> dummy_players;
  std::optional<double> additivity_residual;
};

/// Additivity audit inputs. Non-Shapley rules have no canonical combined
/// allocation, so the caller supplies the rule's allocation on the peer
/// game w and on the combined game v+w.
struct AdditivityCheck {
  Game peer_game;
  Allocation peer_allocation;
  Allocation combined_allocation;
};

namespace detail {

inline std::vector<double> dense_values(const Game& g) {
  const std::size_t size = std::size_t{1} << g.n_players();
  std::vector<double> values(size);
  parallel::for_each_index(size, [&](std::size_t m) { values[m] = g.value(m); });
  return values;
}

/// Subset weights w_s = s! (n-s-1)! / n! = 1 / (n * C(n-1, s)).
inline std::vector<double> subset_weights(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    w[static_cast<std::size_t>(s)] =
        1.0 / (static_cast<double>(n) *
               numeric::binomial(static_cast<unsigned>(n - 1), static_cast<unsigned>(s)));
  }
  return w;
}

}  // namespace detail

/// Exact Shapley value by subset enumeration with factorial weights,
/// O(n 2^n) instead of the O(n n!) permutation sum.
inline Allocation exact_shapley(const Game& g) {
  const int n = g.n_players();
  if (n > kMaxExactPlayers) {
    throw std::invalid_argument("exact_shapley: limited to n <= 20 players");
  }
  const std::vector<double> values = detail::dense_values(g);
  const std::vector<double> weights = detail::subset_weights(n);

  Allocation out;
  out.values.assign(static_cast<std::size_t>(n), 0.0);
  parallel::for_each_index(static_cast<std::size_t>(n), [&](std::size_t pi) {
    const CoalitionMask bit = CoalitionMask{1} << pi;
    std::vector<double> terms;
    terms.reserve(values.size() / 2);
    for (CoalitionMask s = 0; s < values.size(); ++s) {
      if (s & bit) continue;
      const int size = std::popcount(s);
      terms.push_back(weights[static_cast<std::size_t>(size)] *
                      (values[s | bit] - values[s]));
    }
    out.values[pi] = numeric::pairwise_sum(terms);
  });
  return out;
}

/// Permutation-sampling Shapley estimator: averages marginal contributions
/// over M uniformly random player orders. Each permutation draws from an
/// independent stream keyed by (seed, index), so results are bit-identical
/// for any worker count.
inline SampledShapley permutation_shapley(const Game& g, std::size_t samples,
                                          std::uint64_t seed) {
  if (samples == 0) throw std::invalid_argument("permutation_shapley: M must be >= 1");
  const int n = g.n_players();
  const std::size_t un = static_cast<std::size_t>(n);

  // Row m holds x(O_m): the marginal contribution of every player.
  numeric::Table marginals(samples, un);
  parallel::for_each_index(samples, [&](std::size_t m) {
    rng::Stream rs = rng::stream(seed, m);
    std::vector<std::size_t> order = rng::identity_permutation(un);
    rs.shuffle(std::span<std::size_t>(order));
    CoalitionMask mask = 0;
    double prev = 0.0;
    for (std::size_t k = 0; k < un; ++k) {
      mask |= CoalitionMask{1} << order[k];
      const double val = g.value(mask);
      marginals(m, order[k]) = val - prev;
      prev = val;
    }
  });

  SampledShapley out;
  out.sample_count = samples;
  out.seed = seed;
  out.estimates.assign(un, 0.0);
  out.std_errors.assign(un, 0.0);
  std::vector<double> column(samples);
  for (std::size_t i = 0; i < un; ++i) {
    for (std::size_t m = 0; m < samples; ++m) column[m] = marginals(m, i);
    out.estimates[i] = numeric::mean(column);
    if (samples > 1) {
      out.std_errors[i] =
          numeric::sample_sd(column) / std::sqrt(static_cast<double>(samples));
    }
  }
  return out;
}

/// Audits an allocation against Axioms 1-4 by exhaustive coalition scan
/// (n <= 20). Symmetric pairs and dummies are structural facts about the
/// game; the report pairs them with the allocation's behaviour.
inline AxiomReport audit_allocation(const Game& g, const Allocation& allocation,
                                    const std::optional<AdditivityCheck>& additivity =
                                        std::nullopt,
                                    double value_tol = 1e-12,
                                    double efficiency_tol = 1e-9) {
  const int n = g.n_players();
  if (n > kMaxExactPlayers) {
    throw std::invalid_argument("audit_allocation: limited to n <= 20 players");
  }
  if (allocation.values.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("audit_allocation: allocation length mismatch");
  }
  const std::vector<double> values = detail::dense_values(g);

  AxiomReport report;
  report.efficiency_residual =
      numeric::pairwise_sum(allocation.values) - values[g.grand_coalition()];
  const double scale = std::max(1.0, std::abs(values[g.grand_coalition()]));
  report.efficient = std::abs(report.efficiency_residual) <= efficiency_tol * scale;

  for (int i = 0; i < n; ++i) {
    const CoalitionMask bi = CoalitionMask{1} << i;
    for (int j = i + 1; j < n; ++j) {
      const CoalitionMask bj = CoalitionMask{1} << j;
      bool symmetric = true;
      for (CoalitionMask s = 0; s < values.size(); ++s) {
        if (s & (bi | bj)) continue;
        if (std::abs(values[s | bi] - values[s | bj]) > value_tol) {
          symmetric = false;
          break;
        }
      }
      if (symmetric) {
        report.symmetric_pairs.push_back(
            {i, j, std::abs(allocation.values[static_cast<std::size_t>(i)] -
                            allocation.values[static_cast<std::size_t>(j)])});
      }
    }
    bool dummy = true;
    for (CoalitionMask s = 0; s < values.size(); ++s) {
      if (s & bi) continue;
      if (std::abs(values[s | bi] - values[s]) > value_tol) {
        dummy = false;
        break;
      }
    }
    if (dummy) {
      report.dummy_players.push_back({i, allocation.values[static_cast<std::size_t>(i)]});
    }
  }

  if (additivity) {
    if (additivity->peer_game.n_players() != n) {
      throw std::invalid_argument("audit_allocation: peer game has mismatched n_players");
    }
    if (additivity->peer_allocation.values.size() != static_cast<std::size_t>(n) ||
        additivity->combined_allocation.values.size() != static_cast<std::size_t>(n)) {
      throw std::invalid_argument("audit_allocation: peer allocation length mismatch");
    }
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t ui = static_cast<std::size_t>(i);
      worst = std::max(worst, std::abs(additivity->combined_allocation.values[ui] -
                                       allocation.values[ui] -
                                       additivity->peer_allocation.values[ui]));
    }
    report.additivity_residual = worst;
  }
  return report;
}

/// Sum game (v+w)(S) = v(S) + w(S).
inline Game sum_game(const Game& a, const Game& b) {
  if (a.n_players() != b.n_players()) {
    throw std::invalid_argument("sum_game: player count mismatch");
  }
  return Game(a.n_players(),
              [a, b](CoalitionMask s) { return a.value(s) + b.value(s); });
}

/// Loads a game from the text format:
///   n <count>
///   <comma-separated 1-based player ids> <value>
/// Missing coalitions default to 0. A literal id `0` denotes the empty
/// coalition and must carry value 0.
inline Game load_game(std::istream& in) {
  std::string line;
  int n = 0;
  bool have_n = false;
  auto table = std::make_shared<std::vector<std::pair<CoalitionMask, double>>>();
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head)) continue;  // blank line
    if (head == "#") continue;
    if (!have_n) {
      double count = 0;
      if (head != "n" || !(ls >> count) || count < 1 || count > kMaxPlayers ||
          count != std::floor(count)) {
        throw DataError("game file line " + std::to_string(line_no) +
                        ": expected header 'n <count>' with 1 <= count <= 63");
      }
      n = static_cast<int>(count);
      have_n = true;
      continue;
    }
    double value = 0.0;
    if (!(ls >> value)) {
      throw DataError("game file line " + std::to_string(line_no) + ": missing value");
    }
    CoalitionMask mask = 0;
    std::istringstream ids(head);
    std::string tok;
    while (std::getline(ids, tok, ',')) {
      if (tok.empty()) {
        throw DataError("game file line " + std::to_string(line_no) + ": empty player id");
      }
      long id = 0;
      try {
        std::size_t pos = 0;
        id = std::stol(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw DataError("game file line " + std::to_string(line_no) +
                        ": bad player id '" + tok + "'");
      }
      if (id == 0) continue;  // empty-coalition marker
      if (id < 1 || id > n) {
        throw DataError("game file line " + std::to_string(line_no) + ": player id " +
                        std::to_string(id) + " outside 1.." + std::to_string(n));
      }
      mask |= CoalitionMask{1} << (id - 1);
    }
    if (mask == 0) {
      if (value != 0.0) {
        throw DataError("game file line " + std::to_string(line_no) +
                        ": empty coalition must have value 0");
      }
      continue;
    }
    table->push_back({mask, value});
  }
  if (!have_n) throw DataError("game file: missing 'n <count>' header");
  auto lookup = std::make_shared<std::vector<double>>();
  if (n <= kMaxExactPlayers) {
    lookup->assign(std::size_t{1} << n, 0.0);
    for (const auto& [mask, value] : *table) (*lookup)[mask] = value;
    return Game(n, [lookup](CoalitionMask s) { return (*lookup)[s]; });
  }
  return Game(n, [table](CoalitionMask s) {
    // Later lines override earlier ones, matching the dense path.
    for (auto it = table->rbegin(); it != table->rend(); ++it) {
      if (it->first == s) return it->second;
    }
    return 0.0;
  });
}

}  // namespace mortens::game
