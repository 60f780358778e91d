#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include "mlchains/chains.hpp"
#include "mlchains/codebook.hpp"
#include "mlchains/experiment.hpp"
#include "mlchains/synthetic.hpp"
#include "test_util.hpp"

using namespace mlchains;
using test_util::TempDir;

namespace {

MlcDataset random_mlc(Rng& rng, int n, int d, int c, double density = 0.4) {
    MlcDataset data;
    for (int j = 0; j < c; ++j) data.vocabulary.names.push_back("c" + std::to_string(j));
    for (int i = 0; i < n; ++i) {
        MlcExample ex;
        ex.id = "e" + std::to_string(i);
        for (int f = 0; f < d; ++f) ex.x.push_back(rng.normal());
        ex.y = LabelSet(c);
        for (int j = 0; j < c; ++j) ex.y.set(j, rng.bernoulli(density));
        data.examples.push_back(std::move(ex));
    }
    return data;
}

ForestConfig small_forest(int trees) {
    ForestConfig f;
    f.tree_count = trees;
    return f;
}

}  // namespace

TEST_CASE("ecc chain position j consumes d + j features") {
    Rng rng(41);
    const auto data = random_mlc(rng, 25, 6, 4);
    const auto model = train_ecc(data, 3, small_forest(2), 7);
    for (const auto& chain : model.chains) {
        chain.order.validate(4);
        for (std::size_t j = 0; j < chain.forests.size(); ++j)
            REQUIRE(chain.forests[j].dim() == 6 + static_cast<int>(j));
    }
}

TEST_CASE("default tree counts follow the 25/625 convention") {
    Rng rng(42);
    const auto data = random_mlc(rng, 12, 2, 2);
    const auto br = train_br(data);  // defaults: 25^2 trees per class
    REQUIRE(br.forests[0].tree_count() == 625);
    REQUIRE(br.forests[0].config().max_depth == 15);
    const auto ecc = train_ecc(data);  // defaults: 25 chains of 25 trees
    REQUIRE(ecc.chains.size() == 25);
    REQUIRE(ecc.chains[0].forests[0].tree_count() == 25);
    REQUIRE(ecc.chains[0].forests[0].config().max_depth == 15);
}

TEST_CASE("experiment and codebook defaults pin the standard settings") {
    const ExperimentConfig config;
    REQUIRE(config.chain_count == 25);
    REQUIRE(config.ecc_trees == 25);
    REQUIRE(config.br_trees == 625);
    REQUIRE(config.max_depth == 15);
    REQUIRE(config.codebook_k == 50);
    REQUIRE(config.repetitions == 10);
    REQUIRE(config.threshold_mode == "per-class");
    REQUIRE(config.codebook_scope == "per-fold");
    const CodebookConfig cb;
    REQUIRE(cb.k == 50);
    const ForestConfig forest;
    REQUIRE(forest.max_depth == 15);
    REQUIRE(forest.min_leaf == 1);
}

TEST_CASE("br, one-chain ecc, and a plain forest coincide when c = 1") {
    Rng rng(43);
    MlcDataset data = random_mlc(rng, 30, 4, 1, 0.5);
    const std::uint64_t seed = 99;
    const auto br = train_br(data, small_forest(15), seed);
    const auto ecc = train_ecc(data, 1, small_forest(15), seed);

    ForestConfig plain = small_forest(15);
    plain.seed = chain_forest_seed(seed, 0, 0);
    const Matrix x = [&] {
        Matrix m(static_cast<std::size_t>(data.n()), 4);
        for (int i = 0; i < data.n(); ++i)
            for (int f = 0; f < 4; ++f) m.at(i, f) = data.examples[i].x[f];
        return m;
    }();
    std::vector<std::uint8_t> y(static_cast<std::size_t>(data.n()));
    for (int i = 0; i < data.n(); ++i) y[static_cast<std::size_t>(i)] = data.examples[i].y.test(0);
    const auto forest = RandomForest::train(x, y, plain);

    for (int probe = 0; probe < 10; ++probe) {
        const std::vector<double> q = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        const double expected = forest.predict_proba(q);
        REQUIRE(br_scores(br, q)[0] == expected);
        REQUIRE(ecc_scores(ecc, q)[0] == expected);
    }
}

TEST_CASE("ecc training and scoring are deterministic") {
    Rng rng(44);
    const auto data = random_mlc(rng, 20, 3, 3);
    const auto a = train_ecc(data, 4, small_forest(3), 5);
    const auto b = train_ecc(data, 4, small_forest(3), 5);
    REQUIRE(nlohmann::json(a) == nlohmann::json(b));
    const std::vector<double> q = {0.1, -0.2, 0.3};
    REQUIRE(ecc_scores(a, q) == ecc_scores(b, q));
}

TEST_CASE("parallel chain training matches serial execution") {
    Rng rng(52);
    const auto data = random_mlc(rng, 20, 3, 3);
    setenv("MLCHAINS_WORKERS", "1", 1);
    const auto serial = train_ecc(data, 5, small_forest(3), 8);
    setenv("MLCHAINS_WORKERS", "3", 1);
    const auto parallel = train_ecc(data, 5, small_forest(3), 8);
    unsetenv("MLCHAINS_WORKERS");
    REQUIRE(nlohmann::json(serial) == nlohmann::json(parallel));
}

TEST_CASE("ecc scores average per-chain probabilities") {
    Rng rng(45);
    const auto data = random_mlc(rng, 24, 3, 3);
    const auto model = train_ecc(data, 5, small_forest(4), 21);
    const int c = 3;
    for (int probe = 0; probe < 10; ++probe) {
        const std::vector<double> q = {rng.normal(), rng.normal(), rng.normal()};

        // Instrumented replay: walk each chain by hand.
        std::vector<double> expected(c, 0.0);
        for (const auto& chain : model.chains) {
            std::vector<double> augmented(q);
            for (int j = 0; j < c; ++j) {
                const double p = chain.forests[static_cast<std::size_t>(j)].predict_proba(augmented);
                expected[static_cast<std::size_t>(chain.order.pi[static_cast<std::size_t>(j)])] += p;
                if (j + 1 < c) augmented.push_back(p);
            }
        }
        for (auto& v : expected) v /= static_cast<double>(model.chains.size());

        const auto scores = ecc_scores(model, q);
        for (int j = 0; j < c; ++j) {
            REQUIRE(scores[static_cast<std::size_t>(j)] == expected[static_cast<std::size_t>(j)]);
            REQUIRE((scores[static_cast<std::size_t>(j)] >= 0.0 && scores[static_cast<std::size_t>(j)] <= 1.0));
        }
    }
}

TEST_CASE("a class absent from training always scores zero in br") {
    Rng rng(46);
    MlcDataset data = random_mlc(rng, 30, 3, 3);
    for (auto& ex : data.examples) ex.y.set(1, false);
    const auto model = train_br(data, small_forest(10), 3);
    for (int probe = 0; probe < 10; ++probe) {
        const std::vector<double> q = {rng.normal(), rng.normal(), rng.normal()};
        REQUIRE(br_scores(model, q)[1] == 0.0);
    }
}

TEST_CASE("best_threshold follows the grid scan definition") {
    // Zero error is reachable for any t in [0.200, 0.599]; the smallest grid
    // value wins under the strict > prediction rule.
    REQUIRE(best_threshold({0.2, 0.6, 0.9}, {0, 1, 1}) == 0.200);

    // All labels zero: errors vanish once t reaches the largest score.
    REQUIRE(best_threshold({0.3, 0.5}, {0, 0}) == 0.500);

    // All labels one: t = 0.001 already predicts everything positive.
    REQUIRE(best_threshold({0.3, 0.5}, {1, 1}) == 0.001);
}

TEST_CASE("best_threshold matches an exhaustive re-scan on random inputs") {
    Rng rng(47);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 5 + static_cast<int>(rng.below(40));
        std::vector<double> scores;
        std::vector<std::uint8_t> labels;
        for (int i = 0; i < n; ++i) {
            scores.push_back(rng.unit());
            labels.push_back(rng.bernoulli(0.5));
        }
        const double chosen = best_threshold(scores, labels);

        auto errors_at = [&](double t) {
            int e = 0;
            for (int i = 0; i < n; ++i)
                e += (scores[static_cast<std::size_t>(i)] > t ? 1 : 0) != labels[static_cast<std::size_t>(i)];
            return e;
        };
        const int chosen_errors = errors_at(chosen);
        for (int g = 1; g <= 999; ++g) {
            const double t = static_cast<double>(g) / 1000.0;
            REQUIRE(errors_at(t) >= chosen_errors);
            if (t < chosen) REQUIRE(errors_at(t) > chosen_errors);  // smallest-t tie-break
        }
    }
}

TEST_CASE("calibrated thresholds minimize oob zero-one error per class") {
    Rng rng(48);
    const auto data = random_mlc(rng, 40, 4, 3);
    const auto model = train_br(data, small_forest(12), 9);
    int uncovered = 0;
    const Matrix oob = br_oob_scores(model, data, &uncovered);
    const auto thresholds = calibrate_thresholds(model, data);
    for (int j = 0; j < 3; ++j) {
        auto errors_at = [&](double t) {
            int e = 0;
            for (int i = 0; i < data.n(); ++i) {
                const bool pred = oob.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) > t;
                e += pred != data.examples[static_cast<std::size_t>(i)].y.test(j);
            }
            return e;
        };
        const int chosen = errors_at(thresholds[static_cast<std::size_t>(j)]);
        for (int g = 1; g <= 999; ++g)
            REQUIRE(errors_at(static_cast<double>(g) / 1000.0) >= chosen);
    }
}

TEST_CASE("ecc oob scores at c = 1 reduce to the forest oob estimates") {
    Rng rng(49);
    const auto data = random_mlc(rng, 30, 3, 1, 0.5);
    const auto model = train_ecc(data, 1, small_forest(12), 31);
    int uncovered = 0;
    const Matrix oob = ecc_oob_scores(model, data, &uncovered);

    const auto& forest = model.chains[0].forests[0];
    Matrix x(static_cast<std::size_t>(data.n()), 3);
    std::vector<std::uint8_t> y(static_cast<std::size_t>(data.n()));
    for (int i = 0; i < data.n(); ++i) {
        for (int f = 0; f < 3; ++f) x.at(static_cast<std::size_t>(i), static_cast<std::size_t>(f)) =
            data.examples[static_cast<std::size_t>(i)].x[static_cast<std::size_t>(f)];
        y[static_cast<std::size_t>(i)] = data.examples[static_cast<std::size_t>(i)].y.test(0);
    }
    const auto direct = forest.oob_estimates(x, y);
    for (int i = 0; i < data.n(); ++i) {
        const double expected = direct.covered[static_cast<std::size_t>(i)]
                                    ? direct.probs[static_cast<std::size_t>(i)]
                                    : forest.predict_proba(x.row(static_cast<std::size_t>(i)));
        REQUIRE(oob.at(static_cast<std::size_t>(i), 0) == expected);
    }
}

TEST_CASE("predict_set applies strict thresholds") {
    REQUIRE(predict_set({0.9, 0.1}, {0.5, 0.5}) == LabelSet::from_indices(2, {0}));
    REQUIRE(predict_set({0.1, 0.2}, {0.5, 0.5}).count() == 0);
    REQUIRE(predict_set({0.5}, {0.5}).count() == 0);  // equal score is below, per "> t"
    REQUIRE_THROWS(predict_set({0.5, 0.5}, {0.5}));
}

TEST_CASE("model files round trip through json") {
    TempDir dir;
    Rng rng(50);
    const auto data = random_mlc(rng, 20, 3, 2);

    auto ecc = train_ecc(data, 2, small_forest(3), 13);
    ecc.thresholds = calibrate_thresholds(ecc, data);
    const auto path = dir.file("model.json");
    save_model(ecc, path);
    const auto loaded = load_model(path);
    REQUIRE(std::holds_alternative<EccModel>(loaded));
    const auto& restored = std::get<EccModel>(loaded);
    REQUIRE(restored.thresholds == ecc.thresholds);
    REQUIRE(model_vocabulary(loaded).names == data.vocabulary.names);
    const std::vector<double> q = {0.5, -0.5, 1.0};
    REQUIRE(ecc_scores(restored, q) == ecc_scores(ecc, q));

    // in_bag can be stripped on export; scoring still works, calibration not.
    save_model(ecc, path, false);
    const auto stripped = std::get<EccModel>(load_model(path));
    REQUIRE(ecc_scores(stripped, q) == ecc_scores(ecc, q));
    REQUIRE_FALSE(stripped.chains[0].forests[0].has_in_bag());
}

TEST_CASE("scoring rejects dimension mismatches") {
    Rng rng(51);
    const auto data = random_mlc(rng, 15, 3, 2);
    const auto br = train_br(data, small_forest(2), 1);
    const auto ecc = train_ecc(data, 2, small_forest(2), 1);
    const std::vector<double> wrong = {1.0};
    REQUIRE_THROWS(br_scores(br, wrong));
    REQUIRE_THROWS(ecc_scores(ecc, wrong));
}
