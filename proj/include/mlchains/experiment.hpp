#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlchains/chains.hpp"
#include "mlchains/codebook.hpp"
#include "mlchains/dataset.hpp"
#include "mlchains/metrics.hpp"

namespace mlchains {

// Repeated cross-validation driver. Folds are fixed once (from a fold file or
// the seed); trials re-randomize only the classifier RNG streams. For MIML
// input each fold fits its own codebook on training bags before reduction, so
// test-fold segments never influence the features (the `global` scope fits
// once on all bags to probe that alternative).
struct ExperimentConfig {
    std::string name = "dataset";

    // Either an MLC CSV, or a MIML segment/label CSV pair reduced per fold.
    std::string mlc_path;
    std::string miml_features_path;
    std::string miml_labels_path;
    std::string vocabulary_path;
    std::string folds_path;  // optional externally supplied fold file

    std::vector<std::string> classifiers = {"br", "ecc"};
    int chain_count = 25;   // L
    int ecc_trees = 25;     // T per chain forest
    int br_trees = 625;     // 25^2, matching total votes with ECC
    int max_depth = 15;
    int min_leaf = 1;
    int features_per_split = 0;

    int codebook_k = 50;
    int codebook_max_iterations = 100;
    double codebook_tolerance = 1e-6;
    std::string codebook_scope = "per-fold";  // or "global"

    int fold_count = 10;
    int repetitions = 10;
    std::uint64_t seed = 0;

    std::string threshold_mode = "per-class";  // or "single"
    double single_threshold = 0.5;

    std::string output_dir;  // when set, result CSVs are written here

    void validate() const {
        if (repetitions < 1) throw std::runtime_error("experiment: repetitions must be >= 1");
        if (fold_count < 2) throw std::runtime_error("experiment: fold_count must be >= 2");
        if (classifiers.empty()) throw std::runtime_error("experiment: no classifiers selected");
        for (const auto& c : classifiers)
            if (c != "br" && c != "ecc")
                throw std::runtime_error("experiment: unknown classifier '" + c + "' (use br or ecc)");
        if (codebook_scope != "per-fold" && codebook_scope != "global")
            throw std::runtime_error("experiment: codebook_scope must be per-fold or global");
        if (threshold_mode != "per-class" && threshold_mode != "single")
            throw std::runtime_error("experiment: threshold_mode must be per-class or single");
    }
};

struct CellResult {
    std::string classifier;
    int trial = 0;
    int fold = 0;
    MetricsReport metrics;
};

struct ExperimentResult {
    std::vector<std::string> classifiers;
    std::vector<CellResult> cells;           // ordered by (classifier, trial, fold)
    std::vector<MetricsReport> aggregates;   // parallel to classifiers; means over cells
    WinLossTable winloss;
    FoldPlan folds;
    std::vector<std::uint64_t> codebook_fingerprints;  // per fold, or one entry for global scope
};

// Seed derivations are public so a cell can be replayed with direct library
// calls and compared against the harness bit for bit.
inline std::uint64_t experiment_codebook_seed(std::uint64_t seed, int fold) {
    return mix64(mix64(seed, 0xc0deb00cULL), static_cast<std::uint64_t>(fold + 1));
}

inline std::uint64_t experiment_model_seed(std::uint64_t seed, int trial, int fold,
                                           const std::string& classifier) {
    const std::uint64_t tag = classifier == "br" ? 1 : 2;
    return mix64(mix64(mix64(seed, static_cast<std::uint64_t>(trial)), static_cast<std::uint64_t>(fold)),
                 tag);
}

namespace detail {

inline MlcDataset subset_by_fold(const MlcDataset& data, const FoldPlan& folds, int fold, bool in_fold) {
    MlcDataset out;
    out.vocabulary = data.vocabulary;
    for (std::size_t i = 0; i < data.examples.size(); ++i)
        if ((folds.assignment[i] == fold) == in_fold) out.examples.push_back(data.examples[i]);
    return out;
}

inline MimlDataset subset_by_fold(const MimlDataset& data, const FoldPlan& folds, int fold, bool in_fold) {
    MimlDataset out;
    out.vocabulary = data.vocabulary;
    for (std::size_t i = 0; i < data.bags.size(); ++i)
        if ((folds.assignment[i] == fold) == in_fold) out.bags.push_back(data.bags[i]);
    return out;
}

inline PredictionBatch score_and_predict(const AnyModel& model, const MlcDataset& test,
                                         const std::vector<double>& thresholds) {
    PredictionBatch batch;
    batch.reserve(test.examples.size());
    for (const auto& ex : test.examples) {
        PredictionItem item;
        item.truth = ex.y;
        item.scores = model_scores(model, ex.x);
        item.predicted = predict_set(item.scores, thresholds);
        batch.push_back(std::move(item));
    }
    return batch;
}

// External fold files may list ids in any order; the plan is realigned to
// dataset order and must cover exactly the dataset's ids.
inline FoldPlan plan_folds(const std::vector<std::string>& ids, const ExperimentConfig& config) {
    if (!config.folds_path.empty()) {
        const FoldPlan loaded = FoldPlan::load(config.folds_path);
        if (loaded.ids.size() != ids.size())
            throw std::runtime_error("experiment: fold file covers " + std::to_string(loaded.ids.size()) +
                                     " ids but the dataset has " + std::to_string(ids.size()));
        std::map<std::string, int> fold_of;
        for (std::size_t i = 0; i < loaded.ids.size(); ++i) fold_of[loaded.ids[i]] = loaded.assignment[i];
        FoldPlan plan;
        plan.fold_count = loaded.fold_count;
        plan.ids = ids;
        for (const auto& id : ids) {
            const auto it = fold_of.find(id);
            if (it == fold_of.end())
                throw std::runtime_error("experiment: fold file is missing id '" + id + "'");
            plan.assignment.push_back(it->second);
        }
        plan.validate();
        return plan;
    }
    return make_folds(ids, config.fold_count, config.seed);
}

}  // namespace detail

// Core loop shared by the MIML and MLC entry points. `reduced` yields the
// train/test MLC pair for a fold.
inline ExperimentResult run_experiment_folds(
    const ExperimentConfig& config, const FoldPlan& folds,
    const std::function<std::pair<MlcDataset, MlcDataset>(int fold)>& reduced,
    std::vector<std::uint64_t> codebook_fingerprints = {}) {
    ExperimentResult result;
    result.classifiers = config.classifiers;
    result.folds = folds;
    result.codebook_fingerprints = std::move(codebook_fingerprints);

    for (int fold = 0; fold < folds.fold_count; ++fold) {
        const auto [train, test] = reduced(fold);
        if (train.n() < 2 || test.n() < 1)
            throw std::runtime_error("experiment: fold " + std::to_string(fold) + " is too small");

        for (int trial = 0; trial < config.repetitions; ++trial) {
            for (const auto& classifier : config.classifiers) {
                const std::uint64_t model_seed = experiment_model_seed(config.seed, trial, fold, classifier);
                ForestConfig forest;
                forest.max_depth = config.max_depth;
                forest.min_leaf = config.min_leaf;
                forest.features_per_split = config.features_per_split;

                AnyModel model = [&]() -> AnyModel {
                    if (classifier == "br") {
                        forest.tree_count = config.br_trees;
                        return train_br(train, forest, model_seed);
                    }
                    forest.tree_count = config.ecc_trees;
                    return train_ecc(train, config.chain_count, forest, model_seed);
                }();

                std::vector<double> thresholds;
                if (config.threshold_mode == "single") {
                    thresholds.assign(static_cast<std::size_t>(train.vocabulary.size()),
                                      config.single_threshold);
                } else if (std::holds_alternative<BrModel>(model)) {
                    thresholds = calibrate_thresholds(std::get<BrModel>(model), train);
                } else {
                    thresholds = calibrate_thresholds(std::get<EccModel>(model), train);
                }

                CellResult cell;
                cell.classifier = classifier;
                cell.trial = trial;
                cell.fold = fold;
                cell.metrics = compute_metrics(detail::score_and_predict(model, test, thresholds));
                result.cells.push_back(std::move(cell));
            }
        }
    }

    std::sort(result.cells.begin(), result.cells.end(), [](const CellResult& a, const CellResult& b) {
        if (a.classifier != b.classifier) return a.classifier < b.classifier;
        if (a.trial != b.trial) return a.trial < b.trial;
        return a.fold < b.fold;
    });

    for (const auto& classifier : result.classifiers) {
        MetricsReport mean;
        int count = 0;
        for (const auto& cell : result.cells) {
            if (cell.classifier != classifier) continue;
            mean.hamming_loss += cell.metrics.hamming_loss;
            mean.subset_01_loss += cell.metrics.subset_01_loss;
            mean.rank_loss += cell.metrics.rank_loss;
            mean.one_error += cell.metrics.one_error;
            mean.coverage += cell.metrics.coverage;
            ++count;
        }
        mean.hamming_loss /= count;
        mean.subset_01_loss /= count;
        mean.rank_loss /= count;
        mean.one_error /= count;
        mean.coverage /= count;
        mean.n = count;
        result.aggregates.push_back(mean);
    }

    std::vector<std::vector<MetricsReport>> per_dataset;
    for (const auto& agg : result.aggregates) per_dataset.push_back({agg});
    result.winloss = win_loss(result.classifiers, per_dataset);
    return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config, const MimlDataset& data) {
    config.validate();
    data.validate();
    std::vector<std::string> ids;
    for (const auto& bag : data.bags) ids.push_back(bag.id);
    const FoldPlan folds = detail::plan_folds(ids, config);

    CodebookConfig cb;
    cb.k = config.codebook_k;
    cb.max_iterations = config.codebook_max_iterations;
    cb.tolerance = config.codebook_tolerance;

    std::vector<std::uint64_t> fingerprints;
    if (config.codebook_scope == "global") {
        cb.seed = experiment_codebook_seed(config.seed, -1);
        const Codebook codebook = fit_codebook(data, cb);
        fingerprints.push_back(codebook.fingerprint);
        const MlcDataset reduced_all = reduce_miml(data, codebook);
        return run_experiment_folds(
            config, folds,
            [&](int fold) {
                return std::make_pair(detail::subset_by_fold(reduced_all, folds, fold, false),
                                      detail::subset_by_fold(reduced_all, folds, fold, true));
            },
            std::move(fingerprints));
    }

    // Per-fold scope: fit the codebook on training bags only, then reduce
    // both sides with it.
    std::vector<Codebook> codebooks;
    for (int fold = 0; fold < folds.fold_count; ++fold) {
        CodebookConfig fold_cb = cb;
        fold_cb.seed = experiment_codebook_seed(config.seed, fold);
        codebooks.push_back(fit_codebook(detail::subset_by_fold(data, folds, fold, false), fold_cb));
        fingerprints.push_back(codebooks.back().fingerprint);
    }
    return run_experiment_folds(
        config, folds,
        [&](int fold) {
            const Codebook& codebook = codebooks[static_cast<std::size_t>(fold)];
            return std::make_pair(reduce_miml(detail::subset_by_fold(data, folds, fold, false), codebook),
                                  reduce_miml(detail::subset_by_fold(data, folds, fold, true), codebook));
        },
        std::move(fingerprints));
}

inline ExperimentResult run_experiment(const ExperimentConfig& config, const MlcDataset& data) {
    config.validate();
    data.validate();
    std::vector<std::string> ids;
    for (const auto& ex : data.examples) ids.push_back(ex.id);
    const FoldPlan folds = detail::plan_folds(ids, config);
    return run_experiment_folds(config, folds, [&](int fold) {
        return std::make_pair(detail::subset_by_fold(data, folds, fold, false),
                              detail::subset_by_fold(data, folds, fold, true));
    });
}

// Loads the input named by the config and runs. MLC input skips the codebook
// stage; MIML input runs the full reduction pipeline.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    if (config.vocabulary_path.empty()) throw std::runtime_error("experiment: vocabulary_path is required");
    const LabelVocabulary vocab = LabelVocabulary::load(config.vocabulary_path);
    if (!config.mlc_path.empty()) return run_experiment(config, load_mlc(config.mlc_path, vocab));
    if (config.miml_features_path.empty() || config.miml_labels_path.empty())
        throw std::runtime_error("experiment: need mlc_path or a miml_features_path/miml_labels_path pair");
    return run_experiment(config, load_miml(config.miml_features_path, config.miml_labels_path, vocab));
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

inline std::string format_result_table(const std::string& dataset, const ExperimentResult& result) {
    std::ostringstream out;
    out << std::left << std::setw(16) << "Dataset" << std::setw(12) << "Classifier";
    for (const auto& m : measure_names()) out << std::setw(16) << m;
    out << '\n';
    for (std::size_t k = 0; k < result.classifiers.size(); ++k) {
        out << std::left << std::setw(16) << dataset << std::setw(12) << result.classifiers[k];
        for (const auto& m : measure_names()) {
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(4) << measure_value(result.aggregates[k], m);
            out << std::setw(16) << cell.str();
        }
        out << '\n';
    }
    for (std::size_t a = 0; a < result.classifiers.size(); ++a)
        for (std::size_t b = 0; b < result.classifiers.size(); ++b) {
            if (a == b) continue;
            const auto& cell = result.winloss.versus(result.classifiers[a], result.classifiers[b]);
            out << result.classifiers[a] << " vs " << result.classifiers[b] << ": " << cell.wins << "-"
                << cell.losses << " (" << cell.ties << " ties)\n";
        }
    return out.str();
}

inline void write_experiment_outputs(const ExperimentResult& result, const ExperimentConfig& config) {
    if (config.output_dir.empty()) return;
    std::filesystem::create_directories(config.output_dir);
    const auto path = [&](const std::string& file) { return config.output_dir + "/" + file; };

    CsvWriter cells(path("cells.csv"));
    cells.raw_line("dataset,classifier,trial,fold,measure,value");
    for (const auto& cell : result.cells)
        for (const auto& m : measure_names())
            cells.raw_line(config.name + "," + cell.classifier + "," + std::to_string(cell.trial) + "," +
                           std::to_string(cell.fold) + "," + m + "," +
                           format_double(measure_value(cell.metrics, m)));
    cells.close();

    CsvWriter summary(path("summary.csv"));
    summary.raw_line("dataset,classifier,hamming_loss,subset_01_loss,rank_loss,one_error,coverage,cells");
    for (std::size_t k = 0; k < result.classifiers.size(); ++k) {
        const auto& agg = result.aggregates[k];
        summary.raw_line(config.name + "," + result.classifiers[k] + "," + format_double(agg.hamming_loss) +
                         "," + format_double(agg.subset_01_loss) + "," + format_double(agg.rank_loss) + "," +
                         format_double(agg.one_error) + "," + format_double(agg.coverage) + "," +
                         std::to_string(agg.n));
    }
    summary.close();

    CsvWriter winloss(path("winloss.csv"));
    winloss.raw_line("classifier_a,classifier_b,wins,losses,ties");
    for (std::size_t a = 0; a < result.classifiers.size(); ++a)
        for (std::size_t b = 0; b < result.classifiers.size(); ++b) {
            if (a == b) continue;
            const auto& cell = result.winloss.versus(result.classifiers[a], result.classifiers[b]);
            winloss.raw_line(result.classifiers[a] + "," + result.classifiers[b] + "," +
                             std::to_string(cell.wins) + "," + std::to_string(cell.losses) + "," +
                             std::to_string(cell.ties));
        }
    winloss.close();

    std::ofstream table(path("table.txt"), std::ios::binary);
    table << format_result_table(config.name, result);

    result.folds.save(path("folds.csv"));
}

}  // namespace mlchains
