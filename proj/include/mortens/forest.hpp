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
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mortens/errors.hpp"
#include "mortens/numeric.hpp"
#include "mortens/parallel.hpp"
#include "mortens/rng.hpp"

namespace mortens::attribution {

/// Deterministic, side-effect-free prediction interface. Implementations
/// must be safe for concurrent predict() calls.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::size_t feature_count() const = 0;
  virtual double predict(std::span<const double> features) const = 0;
};

/// f(x) = intercept + sum_j coefficients[j] * x[j]; used as a closed-form
/// oracle in attribution tests.
class LinearPredictor final : public Predictor {
 public:
  LinearPredictor(std::vector<double> coefficients, double intercept = 0.0)
      : coefficients_(std::move(coefficients)), intercept_(intercept) {}

  std::size_t feature_count() const override { return coefficients_.size(); }

  double predict(std::span<const double> x) const override {
    double acc = intercept_;
    for (std::size_t j = 0; j < coefficients_.size(); ++j) acc += coefficients_[j] * x[j];
    return acc;
  }

  const std::vector<double>& coefficients() const { return coefficients_; }
  double intercept() const { return intercept_; }

 private:
  std::vector<double> coefficients_;
  double intercept_;
};

struct ForestHyperparams {
  int tree_count = 300;
  int max_depth = 8;
  int min_leaf_size = 5;
  int features_per_split = 0;  // 0 -> ceil(N / 3)
  bool bootstrap = true;
};

/// Regression forest with axis-aligned variance-reduction splits. Split
/// points sit at midpoints between adjacent distinct feature values; leaf
/// predictions are in-leaf target means, so every forest prediction lies
/// within [min(targets), max(targets)].
class RegressionForest final : public Predictor {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    int samples = 0;
  };
  struct Tree {
    std::vector<Node> nodes;
  };

  RegressionForest() = default;

  std::size_t feature_count() const override { return n_features_; }

  double predict(std::span<const double> x) const override {
    std::vector<double> leaf(trees_.size());
    for (std::size_t t = 0; t < trees_.size(); ++t) leaf[t] = predict_tree(trees_[t], x);
    return numeric::pairwise_sum(leaf) / static_cast<double>(trees_.size());
  }

  const std::vector<Tree>& trees() const { return trees_; }
  const ForestHyperparams& hyperparams() const { return params_; }
  std::uint64_t seed() const { return seed_; }

  void save(std::ostream& out) const {
    out << "mortens-forest v1\n";
    out << "features " << n_features_ << "\n";
    out << "params " << params_.tree_count << " " << params_.max_depth << " "
        << params_.min_leaf_size << " " << params_.features_per_split << " "
        << (params_.bootstrap ? 1 : 0) << " " << seed_ << "\n";
    out << "trees " << trees_.size() << "\n";
    char buf[64];
    for (const Tree& tree : trees_) {
      out << "tree " << tree.nodes.size() << "\n";
      for (const Node& n : tree.nodes) {
        std::snprintf(buf, sizeof buf, "%a", n.threshold);
        out << n.feature << " " << buf << " " << n.left << " " << n.right << " ";
        std::snprintf(buf, sizeof buf, "%a", n.value);
        out << buf << " " << n.samples << "\n";
      }
    }
  }

  static RegressionForest load(std::istream& in) {
    RegressionForest f;
    std::string tag, version;
    in >> tag >> version;
    if (tag != "mortens-forest" || version != "v1") {
      throw DataError("forest file: unrecognized header");
    }
    std::size_t n_features = 0, n_trees = 0;
    int bootstrap = 0;
    in >> tag >> n_features;
    if (tag != "features") throw DataError("forest file: expected 'features'");
    in >> tag >> f.params_.tree_count >> f.params_.max_depth >> f.params_.min_leaf_size >>
        f.params_.features_per_split >> bootstrap >> f.seed_;
    if (tag != "params") throw DataError("forest file: expected 'params'");
    f.params_.bootstrap = bootstrap != 0;
    in >> tag >> n_trees;
    if (tag != "trees") throw DataError("forest file: expected 'trees'");
    f.n_features_ = n_features;
    f.trees_.resize(n_trees);
    for (Tree& tree : f.trees_) {
      std::size_t n_nodes = 0;
      in >> tag >> n_nodes;
      if (tag != "tree") throw DataError("forest file: expected 'tree'");
      tree.nodes.resize(n_nodes);
      for (Node& n : tree.nodes) {
        std::string thr, val;
        in >> n.feature >> thr >> n.left >> n.right >> val >> n.samples;
        n.threshold = std::strtod(thr.c_str(), nullptr);
        n.value = std::strtod(val.c_str(), nullptr);
      }
    }
    if (!in) throw DataError("forest file: truncated");
    return f;
  }

  friend RegressionForest fit_forest(const numeric::Table&, std::span<const double>,
                                     const ForestHyperparams&, std::uint64_t);

 private:
  static double predict_tree(const Tree& tree, std::span<const double> x) {
    int idx = 0;
    while (tree.nodes[static_cast<std::size_t>(idx)].feature >= 0) {
      const Node& n = tree.nodes[static_cast<std::size_t>(idx)];
      idx = (x[static_cast<std::size_t>(n.feature)] <= n.threshold) ? n.left : n.right;
    }
    return tree.nodes[static_cast<std::size_t>(idx)].value;
  }

  std::vector<Tree> trees_;
  std::size_t n_features_ = 0;
  ForestHyperparams params_;
  std::uint64_t seed_ = 0;
};

namespace detail {

struct TreeBuilder {
  const numeric::Table& features;
  std::span<const double> targets;
  const ForestHyperparams& params;
  int mtry;
  rng::Stream stream;
  RegressionForest::Tree tree;

  int grow(std::vector<std::size_t>& rows, int depth) {
    const std::size_t count = rows.size();
    double sum = 0.0;
    for (std::size_t r : rows) sum += targets[r];
    const double node_mean = sum / static_cast<double>(count);

    const int node_index = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    RegressionForest::Node& node = tree.nodes.back();
    node.samples = static_cast<int>(count);
    node.value = node_mean;

    bool pure = true;
    for (std::size_t r : rows) {
      if (targets[r] != targets[rows[0]]) {
        pure = false;
        break;
      }
    }
    if (pure) {
      node.value = targets[rows[0]];
      return node_index;
    }
    if (depth >= params.max_depth ||
        count < 2 * static_cast<std::size_t>(params.min_leaf_size)) {
      return node_index;
    }

    // Sample mtry candidate features without replacement.
    std::vector<int> candidates(features.cols());
    for (std::size_t j = 0; j < candidates.size(); ++j) candidates[j] = static_cast<int>(j);
    for (int k = 0; k < mtry; ++k) {
      const std::size_t j =
          static_cast<std::size_t>(k) +
          static_cast<std::size_t>(stream.next_below(candidates.size() - static_cast<std::size_t>(k)));
      std::swap(candidates[static_cast<std::size_t>(k)], candidates[j]);
    }

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_score = sum * sum / static_cast<double>(count);
    std::vector<std::pair<double, double>> samples(count);
    for (int k = 0; k < mtry; ++k) {
      const int feat = candidates[static_cast<std::size_t>(k)];
      for (std::size_t r = 0; r < count; ++r) {
        samples[r] = {features(rows[r], static_cast<std::size_t>(feat)), targets[rows[r]]};
      }
      std::sort(samples.begin(), samples.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double left_sum = 0.0;
      for (std::size_t r = 0; r + 1 < count; ++r) {
        left_sum += samples[r].second;
        if (samples[r].first == samples[r + 1].first) continue;
        const std::size_t n_left = r + 1;
        const std::size_t n_right = count - n_left;
        if (n_left < static_cast<std::size_t>(params.min_leaf_size) ||
            n_right < static_cast<std::size_t>(params.min_leaf_size)) {
          continue;
        }
        const double right_sum = sum - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(n_left) +
                             right_sum * right_sum / static_cast<double>(n_right);
        if (score > best_score) {
          best_score = score;
          best_feature = feat;
          best_threshold = 0.5 * (samples[r].first + samples[r + 1].first);
        }
      }
    }
    if (best_feature < 0) return node_index;

    std::vector<std::size_t> left_rows, right_rows;
    left_rows.reserve(count);
    right_rows.reserve(count);
    for (std::size_t r : rows) {
      if (features(r, static_cast<std::size_t>(best_feature)) <= best_threshold) {
        left_rows.push_back(r);
      } else {
        right_rows.push_back(r);
      }
    }
    if (left_rows.empty() || right_rows.empty()) return node_index;

    const int left = grow(left_rows, depth + 1);
    const int right = grow(right_rows, depth + 1);
    RegressionForest::Node& parent = tree.nodes[static_cast<std::size_t>(node_index)];
    parent.feature = best_feature;
    parent.threshold = best_threshold;
    parent.left = left;
    parent.right = right;
    return node_index;
  }
};

}  // namespace detail

/// Grows a regression forest. Trees fit in parallel; tree t draws from the
/// stream keyed by (seed, t), so the result is bit-reproducible for any
/// worker count.
inline RegressionForest fit_forest(const numeric::Table& features,
                                   std::span<const double> targets,
                                   const ForestHyperparams& params, std::uint64_t seed) {
  const std::size_t rows = features.rows();
  if (rows < 2) throw std::invalid_argument("fit_forest: need at least 2 rows");
  if (targets.size() != rows) {
    throw std::invalid_argument("fit_forest: feature/target row count mismatch");
  }
  if (features.cols() == 0) throw std::invalid_argument("fit_forest: no features");
  for (double y : targets) {
    if (!std::isfinite(y)) throw std::invalid_argument("fit_forest: non-finite target");
  }
  for (double x : features.data()) {
    if (!std::isfinite(x)) throw std::invalid_argument("fit_forest: non-finite feature");
  }
  if (params.tree_count < 1 || params.max_depth < 0 || params.min_leaf_size < 1) {
    throw std::invalid_argument("fit_forest: bad hyperparameters");
  }

  RegressionForest forest;
  forest.n_features_ = features.cols();
  forest.params_ = params;
  forest.seed_ = seed;
  const int mtry =
      params.features_per_split > 0
          ? std::min<int>(params.features_per_split, static_cast<int>(features.cols()))
          : static_cast<int>((features.cols() + 2) / 3);

  forest.trees_.resize(static_cast<std::size_t>(params.tree_count));
  parallel::for_each_index(forest.trees_.size(), [&](std::size_t t) {
    detail::TreeBuilder builder{features, targets, params, mtry, rng::stream(seed, t), {}};
    std::vector<std::size_t> rows_in(rows);
    if (params.bootstrap) {
      for (std::size_t r = 0; r < rows; ++r) {
        rows_in[r] = static_cast<std::size_t>(builder.stream.next_below(rows));
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) rows_in[r] = r;
    }
    builder.grow(rows_in, 0);
    forest.trees_[t] = std::move(builder.tree);
  });
  return forest;
}

}  // namespace mortens::attribution
