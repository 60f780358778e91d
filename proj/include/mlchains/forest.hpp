#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mlchains/matrix.hpp"
#include "mlchains/parallel.hpp"
#include "mlchains/rng.hpp"

namespace mlchains {

struct ForestConfig {
    int tree_count = 25;
    int max_depth = 15;
    int min_leaf = 1;
    int features_per_split = 0;  // 0 selects ceil(sqrt(d))
    std::uint64_t seed = 0;

    void validate() const {
        if (tree_count < 1) throw std::runtime_error("forest: tree_count must be >= 1");
        if (max_depth < 1) throw std::runtime_error("forest: max_depth must be >= 1");
        if (min_leaf < 1) throw std::runtime_error("forest: min_leaf must be >= 1");
        if (features_per_split < 0) throw std::runtime_error("forest: features_per_split must be >= 0");
    }
};

// Internal nodes split on feature < threshold (left) vs >= (right); leaves
// keep the bootstrap class histogram instead of a majority label.
struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t count0 = 0;
    std::uint32_t count1 = 0;

    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const {
        std::size_t at = 0;
        while (!nodes[at].is_leaf()) {
            const TreeNode& node = nodes[at];
            at = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] < node.threshold
                                              ? node.left
                                              : node.right);
        }
        const TreeNode& leaf = nodes[at];
        return static_cast<double>(leaf.count1) / (static_cast<double>(leaf.count0) + leaf.count1);
    }

    // Longest root-to-leaf path in edges.
    int depth() const {
        int max_depth = 0;
        std::vector<std::pair<std::int32_t, int>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [at, d] = stack.back();
            stack.pop_back();
            const TreeNode& node = nodes[static_cast<std::size_t>(at)];
            if (node.is_leaf()) max_depth = std::max(max_depth, d);
            else {
                stack.emplace_back(node.left, d + 1);
                stack.emplace_back(node.right, d + 1);
            }
        }
        return max_depth;
    }
};

// Out-of-bag probabilities for the training instances. probs[i] is only
// meaningful where covered[i] is true (at least one tree omitted instance i
// from its bootstrap sample).
struct OobEstimates {
    std::vector<double> probs;
    std::vector<bool> covered;
};

namespace detail {

// Grows one depth-limited tree on a bootstrap sample. Split search considers
// a fresh random feature subset per node; thresholds are midpoints between
// consecutive distinct values and ties in Gini gain break toward the lowest
// feature index, then the lowest threshold, so retraining is reproducible.
class TreeBuilder {
public:
    TreeBuilder(const Matrix& features, const std::vector<std::uint8_t>& targets,
                const ForestConfig& config, int features_per_split, Rng& rng)
        : features_(features), targets_(targets), config_(config),
          features_per_split_(features_per_split), rng_(rng) {
        feature_pool_.resize(features_.cols);
        for (std::size_t f = 0; f < features_.cols; ++f) feature_pool_[f] = static_cast<int>(f);
        scratch_.reserve(features_.rows);
    }

    DecisionTree build(std::vector<std::uint32_t> sample) {
        DecisionTree tree;
        samples_ = std::move(sample);
        nodes_ = &tree.nodes;
        grow(0, samples_.size(), 0);
        return tree;
    }

private:
    std::int32_t grow(std::size_t begin, std::size_t end, int depth) {
        const std::size_t size = end - begin;
        std::uint32_t count1 = 0;
        for (std::size_t i = begin; i < end; ++i) count1 += targets_[samples_[i]];
        const std::uint32_t count0 = static_cast<std::uint32_t>(size) - count1;

        const std::int32_t node_index = static_cast<std::int32_t>(nodes_->size());
        nodes_->emplace_back();

        const bool pure = count0 == 0 || count1 == 0;
        const bool splittable = size >= 2 * static_cast<std::size_t>(config_.min_leaf);
        if (depth >= config_.max_depth || pure || !splittable) {
            make_leaf(node_index, count0, count1);
            return node_index;
        }

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_score = -1.0;  // sum of child count1^2/count + count0^2/count; maximizing
                                   // this is equivalent to maximizing Gini gain

        // Partial Fisher-Yates over the persistent pool; the first m entries
        // are the node's candidate features.
        const std::size_t d = features_.cols;
        const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(features_per_split_), d);
        for (std::size_t i = 0; i < m; ++i)
            std::swap(feature_pool_[i], feature_pool_[i + rng_.index(d - i)]);

        for (std::size_t fi = 0; fi < m; ++fi) {
            const int feature = feature_pool_[fi];
            scratch_.clear();
            for (std::size_t i = begin; i < end; ++i) {
                const std::uint32_t idx = samples_[i];
                scratch_.emplace_back(features_.at(idx, static_cast<std::size_t>(feature)), targets_[idx]);
            }
            std::sort(scratch_.begin(), scratch_.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });

            std::uint32_t left1 = 0;
            for (std::size_t i = 1; i < size; ++i) {
                left1 += scratch_[i - 1].second;
                if (scratch_[i].first == scratch_[i - 1].first) continue;
                const std::size_t left_n = i;
                const std::size_t right_n = size - i;
                if (left_n < static_cast<std::size_t>(config_.min_leaf) ||
                    right_n < static_cast<std::size_t>(config_.min_leaf))
                    continue;
                const std::uint32_t right1 = count1 - left1;
                const double score = child_score(left1, left_n) + child_score(right1, right_n);
                double threshold = scratch_[i - 1].first + (scratch_[i].first - scratch_[i - 1].first) / 2.0;
                if (!(threshold > scratch_[i - 1].first)) threshold = scratch_[i].first;
                if (score > best_score ||
                    (score == best_score &&
                     (feature < best_feature || (feature == best_feature && threshold < best_threshold)))) {
                    best_score = score;
                    best_feature = feature;
                    best_threshold = threshold;
                }
            }
        }

        // No split improves on the parent: the node's own score is what a
        // zero-gain split would achieve.
        const double parent_score = child_score(count1, size);
        if (best_feature < 0 || best_score <= parent_score) {
            make_leaf(node_index, count0, count1);
            return node_index;
        }

        const auto mid = std::partition(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                                        samples_.begin() + static_cast<std::ptrdiff_t>(end),
                                        [&](std::uint32_t idx) {
                                            return features_.at(idx, static_cast<std::size_t>(best_feature)) <
                                                   best_threshold;
                                        });
        const std::size_t split = static_cast<std::size_t>(mid - samples_.begin());

        (*nodes_)[static_cast<std::size_t>(node_index)].feature = best_feature;
        (*nodes_)[static_cast<std::size_t>(node_index)].threshold = best_threshold;
        const std::int32_t left = grow(begin, split, depth + 1);
        const std::int32_t right = grow(split, end, depth + 1);
        (*nodes_)[static_cast<std::size_t>(node_index)].left = left;
        (*nodes_)[static_cast<std::size_t>(node_index)].right = right;
        return node_index;
    }

    static double child_score(std::uint32_t ones, std::size_t total) {
        const double n1 = static_cast<double>(ones);
        const double n = static_cast<double>(total);
        const double n0 = n - n1;
        return (n1 * n1 + n0 * n0) / n;
    }

    void make_leaf(std::int32_t index, std::uint32_t count0, std::uint32_t count1) {
        TreeNode& node = (*nodes_)[static_cast<std::size_t>(index)];
        node.feature = -1;
        node.count0 = count0;
        node.count1 = count1;
    }

    const Matrix& features_;
    const std::vector<std::uint8_t>& targets_;
    const ForestConfig& config_;
    int features_per_split_;
    Rng& rng_;
    std::vector<std::uint32_t> samples_;
    std::vector<int> feature_pool_;
    std::vector<std::pair<double, std::uint8_t>> scratch_;
    std::vector<TreeNode>* nodes_ = nullptr;
};

}  // namespace detail

class RandomForest {
public:
    RandomForest() = default;

    // Trees are trained independently from RNG streams derived from
    // (config.seed, tree index), so parallel and serial training produce
    // identical forests.
    static RandomForest train(const Matrix& features, const std::vector<std::uint8_t>& targets,
                              const ForestConfig& config) {
        config.validate();
        const std::size_t n = features.rows;
        if (n < 2) throw std::runtime_error("forest: need at least 2 training instances");
        if (features.cols == 0) throw std::runtime_error("forest: zero feature dimension");
        if (targets.size() != n) throw std::runtime_error("forest: feature/target size mismatch");

        RandomForest forest;
        forest.config_ = config;
        forest.dim_ = static_cast<int>(features.cols);
        forest.trees_.resize(static_cast<std::size_t>(config.tree_count));
        forest.in_bag_.resize(static_cast<std::size_t>(config.tree_count));

        const int per_split = config.features_per_split > 0
                                  ? config.features_per_split
                                  : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(features.cols))));

        parallel_for(static_cast<std::size_t>(config.tree_count), [&](std::size_t t) {
            Rng rng = Rng::stream(config.seed, t);
            std::vector<std::uint32_t> sample(n);
            std::vector<std::uint32_t> bag(n, 0);
            for (std::size_t i = 0; i < n; ++i) {
                const auto idx = static_cast<std::uint32_t>(rng.index(n));
                sample[i] = idx;
                ++bag[idx];
            }
            detail::TreeBuilder builder(features, targets, config, per_split, rng);
            forest.trees_[t] = builder.build(std::move(sample));
            forest.in_bag_[t] = std::move(bag);
        });
        return forest;
    }

    double predict_proba(std::span<const double> x) const {
        check_dim(x);
        double total = 0.0;
        for (const auto& tree : trees_) total += tree.predict(x);
        return total / static_cast<double>(trees_.size());
    }

    double tree_proba(std::size_t t, std::span<const double> x) const {
        check_dim(x);
        return trees_.at(t).predict(x);
    }

    // Mean prediction over the trees whose bootstrap sample excluded each
    // training instance; instances in every bag stay uncovered.
    OobEstimates oob_estimates(const Matrix& features, const std::vector<std::uint8_t>& targets) const {
        if (features.rows != targets.size())
            throw std::runtime_error("forest: feature/target size mismatch");
        if (in_bag_.size() != trees_.size())
            throw std::runtime_error("forest: in-bag records unavailable (model exported without them?)");
        for (const auto& bag : in_bag_)
            if (bag.size() != features.rows)
                throw std::runtime_error("forest: data size does not match in-bag records");

        OobEstimates oob;
        oob.probs.assign(features.rows, 0.0);
        oob.covered.assign(features.rows, false);
        std::vector<std::uint32_t> votes(features.rows, 0);
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            for (std::size_t i = 0; i < features.rows; ++i) {
                if (in_bag_[t][i] != 0) continue;
                oob.probs[i] += trees_[t].predict(features.row(i));
                ++votes[i];
            }
        }
        for (std::size_t i = 0; i < features.rows; ++i) {
            if (votes[i] > 0) {
                oob.probs[i] /= static_cast<double>(votes[i]);
                oob.covered[i] = true;
            }
        }
        return oob;
    }

    const ForestConfig& config() const { return config_; }
    int dim() const { return dim_; }
    std::size_t tree_count() const { return trees_.size(); }
    const std::vector<DecisionTree>& trees() const { return trees_; }
    const std::vector<std::vector<std::uint32_t>>& in_bag() const { return in_bag_; }
    bool has_in_bag() const { return !in_bag_.empty(); }
    void drop_in_bag() { in_bag_.clear(); }

    friend void to_json(nlohmann::json& j, const RandomForest& forest) {
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& tree : forest.trees_) {
            nlohmann::json nodes = nlohmann::json::array();
            for (const auto& node : tree.nodes)
                nodes.push_back({node.feature, node.threshold, node.left, node.right, node.count0,
                                 node.count1});
            trees.push_back(std::move(nodes));
        }
        j = nlohmann::json{{"format", "mlchains.forest"},
                           {"version", 1},
                           {"dim", forest.dim_},
                           {"config",
                            {{"tree_count", forest.config_.tree_count},
                             {"max_depth", forest.config_.max_depth},
                             {"min_leaf", forest.config_.min_leaf},
                             {"features_per_split", forest.config_.features_per_split},
                             {"seed", forest.config_.seed}}},
                           {"trees", std::move(trees)}};
        if (!forest.in_bag_.empty()) j["in_bag"] = forest.in_bag_;
    }

    friend void from_json(const nlohmann::json& j, RandomForest& forest) {
        if (j.at("format") != "mlchains.forest" || j.at("version") != 1)
            throw std::runtime_error("forest: unsupported model format");
        forest.dim_ = j.at("dim").get<int>();
        const auto& cfg = j.at("config");
        forest.config_.tree_count = cfg.at("tree_count").get<int>();
        forest.config_.max_depth = cfg.at("max_depth").get<int>();
        forest.config_.min_leaf = cfg.at("min_leaf").get<int>();
        forest.config_.features_per_split = cfg.at("features_per_split").get<int>();
        forest.config_.seed = cfg.at("seed").get<std::uint64_t>();
        forest.trees_.clear();
        for (const auto& tree_json : j.at("trees")) {
            DecisionTree tree;
            for (const auto& node_json : tree_json) {
                TreeNode node;
                node.feature = node_json.at(0).get<std::int32_t>();
                node.threshold = node_json.at(1).get<double>();
                node.left = node_json.at(2).get<std::int32_t>();
                node.right = node_json.at(3).get<std::int32_t>();
                node.count0 = node_json.at(4).get<std::uint32_t>();
                node.count1 = node_json.at(5).get<std::uint32_t>();
                tree.nodes.push_back(node);
            }
            forest.trees_.push_back(std::move(tree));
        }
        forest.in_bag_.clear();
        if (j.contains("in_bag")) forest.in_bag_ = j.at("in_bag").get<std::vector<std::vector<std::uint32_t>>>();
    }

private:
    void check_dim(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != dim_)
            throw std::runtime_error("forest: input dimension " + std::to_string(x.size()) +
                                     " does not match trained dimension " + std::to_string(dim_));
    }

    ForestConfig config_;
    int dim_ = 0;
    std::vector<DecisionTree> trees_;
    std::vector<std::vector<std::uint32_t>> in_bag_;
};

}  // namespace mlchains
