#include <catch2/catch_amalgamated.hpp>

#include "mlchains/experiment.hpp"
#include "mlchains/synthetic.hpp"
#include "test_util.hpp"

using namespace mlchains;
using test_util::TempDir;

namespace {

MimlDataset small_miml() {
    SyntheticConfig sc;
    sc.c = 3;
    sc.n = 30;
    sc.k_true = 6;
    sc.mean_labels_per_bag = 1.5;
    sc.label_correlation = 0.5;
    sc.seed = 12;
    return generate_synthetic(sc);
}

ExperimentConfig small_config() {
    ExperimentConfig config;
    config.name = "tiny";
    config.fold_count = 3;
    config.repetitions = 2;
    config.chain_count = 3;
    config.ecc_trees = 4;
    config.br_trees = 12;
    config.max_depth = 6;
    config.codebook_k = 5;
    config.seed = 21;
    return config;
}

}  // namespace

TEST_CASE("the harness produces one cell per classifier, trial, and fold") {
    const auto data = small_miml();
    const auto config = small_config();
    const auto result = run_experiment(config, data);
    REQUIRE(result.cells.size() == 2 * 2 * 3);
    REQUIRE(result.classifiers == std::vector<std::string>{"br", "ecc"});
    REQUIRE(result.codebook_fingerprints.size() == 3);
    for (const auto& cell : result.cells) {
        REQUIRE((cell.trial >= 0 && cell.trial < 2));
        REQUIRE((cell.fold >= 0 && cell.fold < 3));
        REQUIRE(cell.metrics.n > 0);
    }
}

TEST_CASE("aggregates are the means of the stored cells") {
    const auto data = small_miml();
    const auto config = small_config();
    const auto result = run_experiment(config, data);
    for (std::size_t k = 0; k < result.classifiers.size(); ++k) {
        double mean_hamming = 0.0, mean_coverage = 0.0;
        int count = 0;
        for (const auto& cell : result.cells) {
            if (cell.classifier != result.classifiers[k]) continue;
            mean_hamming += cell.metrics.hamming_loss;
            mean_coverage += cell.metrics.coverage;
            ++count;
        }
        REQUIRE(result.aggregates[k].n == count);
        REQUIRE(result.aggregates[k].hamming_loss == Catch::Approx(mean_hamming / count).epsilon(1e-14));
        REQUIRE(result.aggregates[k].coverage == Catch::Approx(mean_coverage / count).epsilon(1e-14));
    }
}

TEST_CASE("a fixed seed reproduces the result exactly") {
    const auto data = small_miml();
    auto config = small_config();
    config.repetitions = 1;
    const auto a = run_experiment(config, data);
    const auto b = run_experiment(config, data);
    REQUIRE(a.cells.size() == b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        REQUIRE(a.cells[i].metrics.hamming_loss == b.cells[i].metrics.hamming_loss);
        REQUIRE(a.cells[i].metrics.rank_loss == b.cells[i].metrics.rank_loss);
        REQUIRE(a.cells[i].metrics.coverage == b.cells[i].metrics.coverage);
    }
}

TEST_CASE("per-fold codebooks are functions of training bags only") {
    const auto data = small_miml();
    const auto config = small_config();
    const auto result = run_experiment(config, data);

    for (int fold = 0; fold < 3; ++fold) {
        MimlDataset train;
        train.vocabulary = data.vocabulary;
        for (std::size_t i = 0; i < data.bags.size(); ++i)
            if (result.folds.assignment[i] != fold) train.bags.push_back(data.bags[i]);

        CodebookConfig cb;
        cb.k = config.codebook_k;
        cb.seed = experiment_codebook_seed(config.seed, fold);
        const auto expected = fit_codebook(train, cb);
        REQUIRE(result.codebook_fingerprints[static_cast<std::size_t>(fold)] == expected.fingerprint);
    }
}

TEST_CASE("a harness cell can be replayed with direct library calls") {
    const auto data = small_miml();
    auto config = small_config();
    config.repetitions = 1;
    config.classifiers = {"ecc"};
    const auto result = run_experiment(config, data);

    const int fold = 0;
    MimlDataset train, test;
    train.vocabulary = test.vocabulary = data.vocabulary;
    for (std::size_t i = 0; i < data.bags.size(); ++i)
        (result.folds.assignment[i] != fold ? train : test).bags.push_back(data.bags[i]);

    CodebookConfig cb;
    cb.k = config.codebook_k;
    cb.seed = experiment_codebook_seed(config.seed, fold);
    const auto codebook = fit_codebook(train, cb);
    const auto train_mlc = reduce_miml(train, codebook);
    const auto test_mlc = reduce_miml(test, codebook);

    ForestConfig forest;
    forest.tree_count = config.ecc_trees;
    forest.max_depth = config.max_depth;
    const auto model = train_ecc(train_mlc, config.chain_count, forest,
                                 experiment_model_seed(config.seed, 0, fold, "ecc"));
    const auto thresholds = calibrate_thresholds(model, train_mlc);

    PredictionBatch batch;
    for (const auto& ex : test_mlc.examples) {
        PredictionItem item;
        item.truth = ex.y;
        item.scores = ecc_scores(model, ex.x);
        item.predicted = predict_set(item.scores, thresholds);
        batch.push_back(std::move(item));
    }
    const auto expected = compute_metrics(batch);

    const auto cell = std::find_if(result.cells.begin(), result.cells.end(), [&](const CellResult& c) {
        return c.classifier == "ecc" && c.trial == 0 && c.fold == fold;
    });
    REQUIRE(cell != result.cells.end());
    REQUIRE(cell->metrics.hamming_loss == expected.hamming_loss);
    REQUIRE(cell->metrics.subset_01_loss == expected.subset_01_loss);
    REQUIRE(cell->metrics.rank_loss == expected.rank_loss);
    REQUIRE(cell->metrics.one_error == expected.one_error);
    REQUIRE(cell->metrics.coverage == expected.coverage);
}

TEST_CASE("output files are written and byte-identical across reruns") {
    TempDir dir;
    const auto data = small_miml();
    auto config = small_config();
    config.repetitions = 1;
    config.output_dir = dir.file("run1");
    auto result = run_experiment(config, data);
    write_experiment_outputs(result, config);

    for (const auto& file : {"cells.csv", "summary.csv", "winloss.csv", "table.txt", "folds.csv"})
        REQUIRE(std::filesystem::exists(config.output_dir + "/" + file));

    auto config2 = config;
    config2.output_dir = dir.file("run2");
    auto result2 = run_experiment(config2, data);
    write_experiment_outputs(result2, config2);

    for (const auto& file : {"cells.csv", "summary.csv", "winloss.csv", "table.txt", "folds.csv"})
        REQUIRE(test_util::read_file(config.output_dir + "/" + std::string(file)) ==
                test_util::read_file(config2.output_dir + "/" + std::string(file)));
}

TEST_CASE("an external fold file overrides random planning") {
    TempDir dir;
    const auto data = small_miml();
    std::vector<std::string> ids;
    for (const auto& bag : data.bags) ids.push_back(bag.id);
    const auto plan = make_folds(ids, 5, 777);
    const auto folds_path = dir.file("folds.csv");
    plan.save(folds_path);

    auto config = small_config();
    config.repetitions = 1;
    config.classifiers = {"br"};
    config.folds_path = folds_path;
    config.fold_count = 5;  // must agree with the file
    const auto result = run_experiment(config, data);
    REQUIRE(result.folds.assignment == plan.assignment);
    REQUIRE(result.cells.size() == 5);

    // A fold file in a different row order realigns to dataset order.
    FoldPlan shuffled = plan;
    std::reverse(shuffled.ids.begin(), shuffled.ids.end());
    std::reverse(shuffled.assignment.begin(), shuffled.assignment.end());
    const auto shuffled_path = dir.file("folds_shuffled.csv");
    shuffled.save(shuffled_path);
    config.folds_path = shuffled_path;
    const auto realigned = run_experiment(config, data);
    REQUIRE(realigned.folds.assignment == plan.assignment);

    // Extra or missing ids are rejected.
    FoldPlan bad = plan;
    bad.ids[0] = "not_a_bag";
    const auto bad_path = dir.file("folds_bad.csv");
    bad.save(bad_path);
    config.folds_path = bad_path;
    REQUIRE_THROWS_WITH(run_experiment(config, data), Catch::Matchers::ContainsSubstring("missing id"));
}

TEST_CASE("mlc input skips the codebook stage") {
    const auto data = small_miml();
    CodebookConfig cb;
    cb.k = 4;
    cb.seed = 9;
    const auto codebook = fit_codebook(data, cb);
    const auto mlc = reduce_miml(data, codebook);

    auto config = small_config();
    config.repetitions = 1;
    config.classifiers = {"br"};
    const auto result = run_experiment(config, mlc);
    REQUIRE(result.cells.size() == 3);
    REQUIRE(result.codebook_fingerprints.empty());
}

TEST_CASE("the file-driven entry point loads data, vocabulary, and folds") {
    TempDir dir;
    const auto data = small_miml();
    CodebookConfig cb;
    cb.k = 4;
    cb.seed = 9;
    const auto mlc = reduce_miml(data, fit_codebook(data, cb));
    save_mlc(mlc, dir.file("data.csv"));
    mlc.vocabulary.save(dir.file("vocab.txt"));
    std::vector<std::string> ids;
    for (const auto& ex : mlc.examples) ids.push_back(ex.id);
    make_folds(ids, 3, 55).save(dir.file("folds.csv"));

    auto config = small_config();
    config.repetitions = 1;
    config.classifiers = {"br"};
    config.mlc_path = dir.file("data.csv");
    config.vocabulary_path = dir.file("vocab.txt");
    config.folds_path = dir.file("folds.csv");
    const auto result = run_experiment(config);
    REQUIRE(result.cells.size() == 3);
    REQUIRE(result.folds.fold_count == 3);

    // Same run through the in-memory overload with the same folds agrees.
    const auto direct = run_experiment(config, mlc);
    REQUIRE(direct.cells[0].metrics.hamming_loss == result.cells[0].metrics.hamming_loss);
}

TEST_CASE("single-threshold mode uses the configured threshold everywhere") {
    const auto data = small_miml();
    auto config = small_config();
    config.repetitions = 1;
    config.threshold_mode = "single";
    config.single_threshold = 0.5;
    const auto result = run_experiment(config, data);
    REQUIRE(result.cells.size() == 2 * 3);
}

TEST_CASE("config validation rejects bad settings") {
    ExperimentConfig config;
    config.repetitions = 0;
    REQUIRE_THROWS(config.validate());
    config.repetitions = 1;
    config.classifiers = {"svm"};
    REQUIRE_THROWS(config.validate());
    config.classifiers = {"br"};
    config.codebook_scope = "nope";
    REQUIRE_THROWS(config.validate());
}

TEST_CASE("global codebook scope fits once on all bags") {
    const auto data = small_miml();
    auto config = small_config();
    config.repetitions = 1;
    config.classifiers = {"br"};
    config.codebook_scope = "global";
    const auto result = run_experiment(config, data);
    REQUIRE(result.codebook_fingerprints.size() == 1);

    CodebookConfig cb;
    cb.k = config.codebook_k;
    cb.seed = experiment_codebook_seed(config.seed, -1);
    const auto expected = fit_codebook(data, cb);
    REQUIRE(result.codebook_fingerprints[0] == expected.fingerprint);
}
