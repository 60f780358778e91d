#pragma once

#include <cstdint>
#include <fstream>
#include <iostream>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mlchains/dataset.hpp"
#include "mlchains/forest.hpp"
#include "mlchains/matrix.hpp"
#include "mlchains/parallel.hpp"
#include "mlchains/rng.hpp"

namespace mlchains {

// Per-class scores in [0, 1]; index j is the confidence that class j is in
// the label set.
using ScoreVector = std::vector<double>;

// A chain's view of the classes: order.pi[position] is the class trained and
// predicted at that position.
struct ChainOrder {
    std::vector<int> pi;

    void validate(int c) const {
        if (static_cast<int>(pi.size()) != c) throw std::runtime_error("chain order: wrong length");
        std::vector<bool> seen(static_cast<std::size_t>(c), false);
        for (int j : pi) {
            if (j < 0 || j >= c || seen[static_cast<std::size_t>(j)])
                throw std::runtime_error("chain order: not a permutation");
            seen[static_cast<std::size_t>(j)] = true;
        }
    }
};

struct BrModel {
    LabelVocabulary vocabulary;
    int input_dim = 0;
    std::vector<RandomForest> forests;   // one per class
    std::vector<double> thresholds;      // empty until calibrated
};

struct EccChain {
    ChainOrder order;
    std::vector<RandomForest> forests;   // position j consumes input_dim + j features
};

struct EccModel {
    LabelVocabulary vocabulary;
    int input_dim = 0;
    std::vector<EccChain> chains;
    std::vector<double> thresholds;
};

// RNG stream for the forest at (chain, position). Binary relevance trains its
// class-j forest on stream (0, j), which makes BR, a one-chain ECC, and a
// plain forest coincide exactly when c = 1 and seeds are shared.
inline std::uint64_t chain_forest_seed(std::uint64_t seed, int chain, int position) {
    return mix64(mix64(seed, 0x464f5245u + static_cast<std::uint64_t>(chain)),
                 static_cast<std::uint64_t>(position));
}

inline std::uint64_t chain_order_seed(std::uint64_t seed, int chain) {
    return mix64(seed, 0x5045524du + static_cast<std::uint64_t>(chain));
}

namespace detail {

inline Matrix feature_matrix(const MlcDataset& data) {
    Matrix x(static_cast<std::size_t>(data.n()), static_cast<std::size_t>(data.dim()));
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t c = 0; c < x.cols; ++c) x.at(i, c) = data.examples[i].x[c];
    return x;
}

inline std::vector<std::uint8_t> class_targets(const MlcDataset& data, int j) {
    std::vector<std::uint8_t> y(static_cast<std::size_t>(data.n()));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = data.examples[i].y.test(j) ? 1 : 0;
    return y;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// One forest per class, each trained on the plain feature vectors. The
// default tree count (25^2) matches a 25-chain, 25-tree ECC in total votes.
inline BrModel train_br(const MlcDataset& data, ForestConfig forest = {.tree_count = 625},
                        std::uint64_t seed = 0) {
    data.validate();
    if (data.n() < 2) throw std::runtime_error("train_br: need at least 2 examples");
    BrModel model;
    model.vocabulary = data.vocabulary;
    model.input_dim = data.dim();
    const Matrix x = detail::feature_matrix(data);
    const int c = data.vocabulary.size();
    model.forests.resize(static_cast<std::size_t>(c));
    for (int j = 0; j < c; ++j) {
        ForestConfig cfg = forest;
        cfg.seed = chain_forest_seed(seed, 0, j);
        model.forests[static_cast<std::size_t>(j)] = RandomForest::train(x, detail::class_targets(data, j), cfg);
    }
    return model;
}

// L chains, each over a fresh uniform-random class permutation. Position j of
// a chain trains on the input features plus the true bits of the j earlier
// classes in that chain's order, so its forest consumes input_dim + j values.
inline EccModel train_ecc(const MlcDataset& data, int chain_count = 25,
                          ForestConfig forest = {.tree_count = 25}, std::uint64_t seed = 0) {
    data.validate();
    if (data.n() < 2) throw std::runtime_error("train_ecc: need at least 2 examples");
    if (chain_count < 1) throw std::runtime_error("train_ecc: chain_count must be >= 1");

    EccModel model;
    model.vocabulary = data.vocabulary;
    model.input_dim = data.dim();
    model.chains.resize(static_cast<std::size_t>(chain_count));
    const Matrix base = detail::feature_matrix(data);
    const int c = data.vocabulary.size();

    parallel_for(static_cast<std::size_t>(chain_count), [&](std::size_t l) {
        EccChain chain;
        Rng order_rng(chain_order_seed(seed, static_cast<int>(l)));
        chain.order.pi = order_rng.permutation(c);
        chain.forests.reserve(static_cast<std::size_t>(c));

        Matrix augmented = base;
        std::vector<double> column(static_cast<std::size_t>(data.n()));
        for (int j = 0; j < c; ++j) {
            const int cls = chain.order.pi[static_cast<std::size_t>(j)];
            ForestConfig cfg = forest;
            cfg.seed = chain_forest_seed(seed, static_cast<int>(l), j);
            chain.forests.push_back(RandomForest::train(augmented, detail::class_targets(data, cls), cfg));
            if (j + 1 < c) {
                for (std::size_t i = 0; i < column.size(); ++i)
                    column[i] = data.examples[i].y.test(cls) ? 1.0 : 0.0;
                augmented.append_column(column);
            }
        }
        model.chains[l] = std::move(chain);
    });
    return model;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

inline ScoreVector br_scores(const BrModel& model, std::span<const double> x) {
    ScoreVector scores(model.forests.size());
    for (std::size_t j = 0; j < model.forests.size(); ++j) scores[j] = model.forests[j].predict_proba(x);
    return scores;
}

// Each chain walks its positions in order, feeding every produced probability
// back as an extra feature for the next position; class scores are the means
// over chains. Training uses true label bits where prediction uses these
// continuous probabilities, which is the intended train/predict asymmetry.
inline ScoreVector ecc_scores(const EccModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.input_dim)
        throw std::runtime_error("ecc_scores: input dimension mismatch");
    if (model.chains.empty()) throw std::runtime_error("ecc_scores: model has no chains");
    const std::size_t c = model.chains[0].order.pi.size();
    ScoreVector scores(c, 0.0);
    std::vector<double> chained;
    chained.reserve(x.size() + c);
    for (const auto& chain : model.chains) {
        chained.assign(x.begin(), x.end());
        for (std::size_t j = 0; j < c; ++j) {
            const double p = chain.forests[j].predict_proba(chained);
            scores[static_cast<std::size_t>(chain.order.pi[j])] += p;
            if (j + 1 < c) chained.push_back(p);
        }
    }
    for (auto& s : scores) s /= static_cast<double>(model.chains.size());
    return scores;
}

// Thresholded set prediction: bit j is 1 exactly when scores[j] > t_j.
inline LabelSet predict_set(const ScoreVector& scores, const std::vector<double>& thresholds) {
    if (scores.size() != thresholds.size())
        throw std::runtime_error("predict_set: score/threshold length mismatch");
    LabelSet y(static_cast<int>(scores.size()));
    for (std::size_t j = 0; j < scores.size(); ++j)
        y.set(static_cast<int>(j), scores[j] > thresholds[j]);
    return y;
}

// ---------------------------------------------------------------------------
// Out-of-bag threshold calibration
// ---------------------------------------------------------------------------

// Smallest grid value t in {.001, ..., .999} minimizing the 0/1 error of
// I[score > t] against the labels.
inline double best_threshold(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size())
        throw std::runtime_error("best_threshold: score/label length mismatch");
    double best_t = 0.001;
    std::size_t best_errors = scores.size() + 1;
    for (int g = 1; g <= 999; ++g) {
        const double t = static_cast<double>(g) / 1000.0;
        std::size_t errors = 0;
        for (std::size_t i = 0; i < scores.size(); ++i)
            errors += static_cast<std::size_t>((scores[i] > t ? 1 : 0) != labels[i]);
        if (errors < best_errors) {
            best_errors = errors;
            best_t = t;
        }
    }
    return best_t;
}

namespace detail {

inline void warn_uncovered(int uncovered, int total) {
    if (uncovered > 0)
        std::cerr << "mlchains: warning: " << uncovered << "/" << total
                  << " training instances had no out-of-bag trees; "
                     "full-forest predictions substituted\n";
}

}  // namespace detail

// Per-class OOB score matrix (n x c) for a BR model on its own training data.
// Uncovered instances fall back to the full-forest prediction.
inline Matrix br_oob_scores(const BrModel& model, const MlcDataset& train, int* uncovered_out = nullptr) {
    const Matrix x = detail::feature_matrix(train);
    if (static_cast<int>(x.cols) != model.input_dim)
        throw std::runtime_error("calibrate: dataset dimension does not match model");
    const int c = model.vocabulary.size();
    Matrix scores(x.rows, static_cast<std::size_t>(c));
    int uncovered = 0;
    for (int j = 0; j < c; ++j) {
        const auto targets = detail::class_targets(train, j);
        const OobEstimates oob = model.forests[static_cast<std::size_t>(j)].oob_estimates(x, targets);
        for (std::size_t i = 0; i < x.rows; ++i) {
            if (oob.covered[i]) {
                scores.at(i, static_cast<std::size_t>(j)) = oob.probs[i];
            } else {
                scores.at(i, static_cast<std::size_t>(j)) =
                    model.forests[static_cast<std::size_t>(j)].predict_proba(x.row(i));
                ++uncovered;
            }
        }
    }
    if (uncovered_out) *uncovered_out = uncovered;
    else detail::warn_uncovered(uncovered, static_cast<int>(x.rows) * c);
    return scores;
}

// Per-class OOB scores for ECC: each chain's position-j forest is replayed on
// its own training inputs (features plus true earlier bits), then estimates
// are averaged over chains per class.
inline Matrix ecc_oob_scores(const EccModel& model, const MlcDataset& train, int* uncovered_out = nullptr) {
    const Matrix base = detail::feature_matrix(train);
    if (static_cast<int>(base.cols) != model.input_dim)
        throw std::runtime_error("calibrate: dataset dimension does not match model");
    const int c = model.vocabulary.size();
    Matrix sums(base.rows, static_cast<std::size_t>(c));
    int uncovered = 0;

    for (const auto& chain : model.chains) {
        Matrix augmented = base;
        std::vector<double> column(base.rows);
        for (int j = 0; j < c; ++j) {
            const int cls = chain.order.pi[static_cast<std::size_t>(j)];
            const auto targets = detail::class_targets(train, cls);
            const RandomForest& forest = chain.forests[static_cast<std::size_t>(j)];
            const OobEstimates oob = forest.oob_estimates(augmented, targets);
            for (std::size_t i = 0; i < base.rows; ++i) {
                if (oob.covered[i]) {
                    sums.at(i, static_cast<std::size_t>(cls)) += oob.probs[i];
                } else {
                    sums.at(i, static_cast<std::size_t>(cls)) += forest.predict_proba(augmented.row(i));
                    ++uncovered;
                }
            }
            if (j + 1 < c) {
                for (std::size_t i = 0; i < column.size(); ++i)
                    column[i] = train.examples[i].y.test(cls) ? 1.0 : 0.0;
                augmented.append_column(column);
            }
        }
    }
    for (auto& v : sums.values) v /= static_cast<double>(model.chains.size());
    if (uncovered_out) *uncovered_out = uncovered;
    else detail::warn_uncovered(uncovered, static_cast<int>(base.rows) * c * static_cast<int>(model.chains.size()));
    return sums;
}

inline std::vector<double> thresholds_from_oob(const Matrix& oob_scores, const MlcDataset& train) {
    const int c = static_cast<int>(oob_scores.cols);
    std::vector<double> thresholds(static_cast<std::size_t>(c));
    std::vector<double> class_scores(oob_scores.rows);
    for (int j = 0; j < c; ++j) {
        for (std::size_t i = 0; i < oob_scores.rows; ++i)
            class_scores[i] = oob_scores.at(i, static_cast<std::size_t>(j));
        thresholds[static_cast<std::size_t>(j)] = best_threshold(class_scores, detail::class_targets(train, j));
    }
    return thresholds;
}

inline std::vector<double> calibrate_thresholds(const BrModel& model, const MlcDataset& train) {
    return thresholds_from_oob(br_oob_scores(model, train), train);
}

inline std::vector<double> calibrate_thresholds(const EccModel& model, const MlcDataset& train) {
    return thresholds_from_oob(ecc_oob_scores(model, train), train);
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

using AnyModel = std::variant<BrModel, EccModel>;

inline void to_json(nlohmann::json& j, const BrModel& model) {
    j = nlohmann::json{{"format", "mlchains.model"},
                       {"version", 1},
                       {"mode", "br"},
                       {"vocabulary", model.vocabulary.names},
                       {"input_dim", model.input_dim},
                       {"thresholds", model.thresholds},
                       {"forests", model.forests}};
}

inline void from_json(const nlohmann::json& j, BrModel& model) {
    model.vocabulary.names = j.at("vocabulary").get<std::vector<std::string>>();
    model.input_dim = j.at("input_dim").get<int>();
    model.thresholds = j.at("thresholds").get<std::vector<double>>();
    model.forests = j.at("forests").get<std::vector<RandomForest>>();
}

inline void to_json(nlohmann::json& j, const EccModel& model) {
    nlohmann::json chains = nlohmann::json::array();
    for (const auto& chain : model.chains)
        chains.push_back({{"order", chain.order.pi}, {"forests", chain.forests}});
    j = nlohmann::json{{"format", "mlchains.model"},
                       {"version", 1},
                       {"mode", "ecc"},
                       {"vocabulary", model.vocabulary.names},
                       {"input_dim", model.input_dim},
                       {"thresholds", model.thresholds},
                       {"chains", std::move(chains)}};
}

inline void from_json(const nlohmann::json& j, EccModel& model) {
    model.vocabulary.names = j.at("vocabulary").get<std::vector<std::string>>();
    model.input_dim = j.at("input_dim").get<int>();
    model.thresholds = j.at("thresholds").get<std::vector<double>>();
    model.chains.clear();
    for (const auto& chain_json : j.at("chains")) {
        EccChain chain;
        chain.order.pi = chain_json.at("order").get<std::vector<int>>();
        chain.forests = chain_json.at("forests").get<std::vector<RandomForest>>();
        model.chains.push_back(std::move(chain));
    }
}

inline void save_model(const AnyModel& model, const std::string& path, bool include_in_bag = true) {
    nlohmann::json j;
    if (std::holds_alternative<BrModel>(model)) {
        BrModel copy = std::get<BrModel>(model);
        if (!include_in_bag)
            for (auto& forest : copy.forests) forest.drop_in_bag();
        j = copy;
    } else {
        EccModel copy = std::get<EccModel>(model);
        if (!include_in_bag)
            for (auto& chain : copy.chains)
                for (auto& forest : chain.forests) forest.drop_in_bag();
        j = copy;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out << j.dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline AnyModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "mlchains.model" || j.value("version", 0) != 1)
        throw std::runtime_error(path + ": unsupported model format");
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "br") return j.get<BrModel>();
    if (mode == "ecc") return j.get<EccModel>();
    throw std::runtime_error(path + ": unknown model mode '" + mode + "'");
}

inline const LabelVocabulary& model_vocabulary(const AnyModel& model) {
    return std::holds_alternative<BrModel>(model) ? std::get<BrModel>(model).vocabulary
                                                  : std::get<EccModel>(model).vocabulary;
}

inline const std::vector<double>& model_thresholds(const AnyModel& model) {
    return std::holds_alternative<BrModel>(model) ? std::get<BrModel>(model).thresholds
                                                  : std::get<EccModel>(model).thresholds;
}

inline ScoreVector model_scores(const AnyModel& model, std::span<const double> x) {
    return std::holds_alternative<BrModel>(model) ? br_scores(std::get<BrModel>(model), x)
                                                  : ecc_scores(std::get<EccModel>(model), x);
}

}  // namespace mlchains
