// Command-line driver for the mlchains toolkit. Subcommands cover the whole
// pipeline: audio -> segments -> codebook -> histogram features -> BR/ECC
// training with OOB-calibrated thresholds -> prediction and evaluation, plus
// the repeated cross-validation experiment harness and a synthetic generator.
//
// Every subcommand accepts --config <file> (TOML key = value, keys matching
// the long option names) with command-line flags taking precedence.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlchains/mlchains.hpp"

namespace fs = std::filesystem;
using namespace mlchains;

namespace {

std::string config_placeholder;

void enable_config(CLI::App* cmd) {
    // The file itself is merged before parsing (see expand_config_args); this
    // option only documents the flag and keeps --help accurate.
    cmd->add_option("--config", config_placeholder, "Read options from a TOML config file (flags override)");
}

// ---------------------------------------------------------------------------
// Flat TOML config handling. A config file holds `key = value` lines whose
// keys match the subcommand's long option names; values may be strings,
// numbers, booleans, or arrays of those. Command-line flags override file
// values, which is implemented by skipping any key the user already passed.
// ---------------------------------------------------------------------------

std::string strip_toml_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        else if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    return s.substr(begin, s.find_last_not_of(" \t") - begin + 1);
}

std::string parse_toml_scalar(const std::string& raw, const std::string& context) {
    if (raw.empty()) throw std::runtime_error(context + ": empty value");
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"')
            throw std::runtime_error(context + ": unterminated string");
        return raw.substr(1, raw.size() - 2);
    }
    return raw;  // number or boolean, passed through verbatim
}

std::vector<std::pair<std::string, std::vector<std::string>>> read_flat_toml(const std::string& path) {
    const auto lines = read_lines(path);
    std::vector<std::pair<std::string, std::vector<std::string>>> entries;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string context = path + " line " + std::to_string(i + 1);
        const std::string line = trim(strip_toml_comment(lines[i]));
        if (line.empty()) continue;
        if (line.front() == '[')
            throw std::runtime_error(context + ": sections are not supported; use flat key = value lines");
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error(context + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string raw = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error(context + ": empty key");
        std::vector<std::string> values;
        if (!raw.empty() && raw.front() == '[') {
            if (raw.back() != ']') throw std::runtime_error(context + ": unterminated array");
            for (const auto& part : split(raw.substr(1, raw.size() - 2), ',')) {
                const auto item = trim(part);
                if (!item.empty()) values.push_back(parse_toml_scalar(item, context));
            }
        } else {
            values.push_back(parse_toml_scalar(raw, context));
        }
        entries.emplace_back(key, std::move(values));
    }
    return entries;
}

// Rewrites argv: removes --config <file> (or --config=<file>), then injects
// the file's entries as --key=value tokens right after the subcommand names,
// so explicit flags (parsed later) take precedence over file values.
std::vector<std::string> expand_config_args(const std::vector<std::string>& args) {
    std::string config_path;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw std::runtime_error("--config requires a file argument");
            config_path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (config_path.empty()) return rest;

    std::size_t insert_at = 0;
    while (insert_at < rest.size() && rest[insert_at].rfind("-", 0) != 0) ++insert_at;

    std::vector<std::string> expanded(rest.begin(), rest.begin() + insert_at);
    for (const auto& [key, values] : read_flat_toml(config_path)) {
        const std::string flag = "--" + key;
        const bool overridden = std::any_of(rest.begin() + insert_at, rest.end(), [&](const std::string& a) {
            return a == flag || a.rfind(flag + "=", 0) == 0;
        });
        if (overridden) continue;
        for (const auto& value : values) expanded.push_back(flag + "=" + value);
    }
    expanded.insert(expanded.end(), rest.begin() + insert_at, rest.end());
    return expanded;
}

std::vector<std::string> wav_inputs(const std::string& path) {
    std::vector<std::string> files;
    if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.is_regular_file() && entry.path().extension() == ".wav")
                files.push_back(entry.path().string());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }
    if (files.empty()) throw std::runtime_error("no .wav files found under " + path);
    return files;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    SyntheticConfig config;
    std::string out_prefix;
};

void add_synth(CLI::App& app, SynthArgs& args) {
    auto* cmd = app.add_subcommand("synth", "Generate a synthetic correlated-label MIML dataset");
    enable_config(cmd);
    cmd->add_option("--c", args.config.c, "Number of classes")->capture_default_str();
    cmd->add_option("--k-true", args.config.k_true, "Latent segment clusters")->capture_default_str();
    cmd->add_option("--n", args.config.n, "Number of bags")->capture_default_str();
    cmd->add_option("--mean-labels", args.config.mean_labels_per_bag, "Mean labels per bag")
        ->capture_default_str();
    cmd->add_option("--correlation", args.config.label_correlation, "Pairwise label correlation in [0,1]")
        ->capture_default_str();
    cmd->add_option("--noise", args.config.noise_rate, "Fraction of segments drawn uniformly")
        ->capture_default_str();
    cmd->add_option("--segment-dim", args.config.segment_dim, "Segment feature dimension")
        ->capture_default_str();
    cmd->add_option("--mean-segments", args.config.mean_segments_per_label, "Mean segments per present label")
        ->capture_default_str();
    cmd->add_option("--seed", args.config.seed, "RNG seed")->capture_default_str();
    cmd->add_option("--out-prefix", args.out_prefix, "Output prefix for _segments.csv/_labels.csv/_vocab.txt")
        ->required();
    cmd->callback([&args] {
        const auto data = generate_synthetic(args.config);
        save_miml(data, args.out_prefix + "_segments.csv", args.out_prefix + "_labels.csv");
        data.vocabulary.save(args.out_prefix + "_vocab.txt");
        std::size_t segments = 0;
        for (const auto& bag : data.bags) segments += bag.instances.size();
        std::cout << "wrote " << data.n() << " bags (" << segments << " segments, " << data.vocabulary.size()
                  << " classes) to " << args.out_prefix << "_*.csv\n";
    });
}

// ---------------------------------------------------------------------------
// folds
// ---------------------------------------------------------------------------

struct FoldsArgs {
    std::string data;
    std::string out;
    int fold_count = 10;
    std::uint64_t seed = 0;
};

void add_folds(CLI::App& app, FoldsArgs& args) {
    auto* cmd = app.add_subcommand("folds", "Plan cross-validation folds for a dataset");
    enable_config(cmd);
    cmd->add_option("--data", args.data, "MLC CSV or MIML label CSV; ids come from the first column")
        ->required();
    cmd->add_option("--fold-count", args.fold_count, "Number of folds")->capture_default_str();
    cmd->add_option("--seed", args.seed, "RNG seed")->capture_default_str();
    cmd->add_option("--out", args.out, "Output fold file (id,fold)")->required();
    cmd->callback([&args] {
        const auto lines = read_lines(args.data);
        if (lines.size() < 2) throw std::runtime_error(args.data + ": no data rows");
        std::vector<std::string> ids;
        std::set<std::string> seen;
        for (std::size_t row = 1; row < lines.size(); ++row) {
            if (lines[row].empty() && row + 1 == lines.size()) break;
            const auto id = split(lines[row], ',')[0];
            if (seen.insert(id).second) ids.push_back(id);
        }
        const auto plan = make_folds(ids, args.fold_count, args.seed);
        plan.save(args.out);
        std::cout << "wrote " << args.fold_count << "-fold plan for " << ids.size() << " ids to " << args.out
                  << "\n";
    });
}

// ---------------------------------------------------------------------------
// segment-train / segment
// ---------------------------------------------------------------------------

struct SegmentTrainArgs {
    std::string wav_dir;
    std::string mask_dir;
    std::string out;
    SegmenterConfig config;
    int window = 512;
    int hop = 256;
};

void add_segment_train(CLI::App& app, SegmentTrainArgs& args) {
    auto* cmd = app.add_subcommand(
        "segment-train", "Train the pixel-window segmentation forest from annotated spectrogram masks");
    enable_config(cmd);
    cmd->add_option("--wav-dir", args.wav_dir, "Directory of annotated .wav recordings")->required();
    cmd->add_option("--mask-dir", args.mask_dir, "Directory of <stem>.csv masks (frames x bins, 0/1)")
        ->required();
    cmd->add_option("--out", args.out, "Output segmenter model (JSON)")->required();
    cmd->add_option("--trees", args.config.tree_count, "Trees in the pixel forest")->capture_default_str();
    cmd->add_option("--max-depth", args.config.max_depth, "Maximum tree depth")->capture_default_str();
    cmd->add_option("--sample-fraction", args.config.sample_fraction, "Fraction of pixels used for training")
        ->capture_default_str();
    cmd->add_option("--window", args.window, "STFT window size")->capture_default_str();
    cmd->add_option("--hop", args.hop, "STFT hop size")->capture_default_str();
    cmd->add_option("--seed", args.config.seed, "RNG seed")->capture_default_str();
    cmd->callback([&args] {
        std::vector<std::pair<Spectrogram, Matrix>> annotated;
        for (const auto& wav_path : wav_inputs(args.wav_dir)) {
            const auto mask_path = (fs::path(args.mask_dir) / (stem_of(wav_path) + ".csv")).string();
            if (!fs::exists(mask_path)) continue;
            const auto wav = load_wav(wav_path);
            auto spec = compute_spectrogram(wav.samples, wav.sample_rate, args.window, args.hop);
            annotated.emplace_back(std::move(spec), load_mask_csv(mask_path));
        }
        if (annotated.empty())
            throw std::runtime_error("no wav files in " + args.wav_dir + " have masks in " + args.mask_dir);
        auto model = train_segmenter(annotated, args.config);
        model.stft_window = args.window;
        model.stft_hop = args.hop;
        save_segmenter(model, args.out);
        std::cout << "trained segmenter on " << annotated.size() << " annotated recordings -> " << args.out
                  << "\n";
    });
}

struct SegmentArgs {
    std::string wav;
    std::string model;
    std::string out;
    std::string json_dir;
    double threshold = 0.5;
    std::size_t min_pixels = 20;
};

void add_segment(CLI::App& app, SegmentArgs& args) {
    auto* cmd = app.add_subcommand("segment", "Segment recordings into a MIML segment CSV");
    enable_config(cmd);
    cmd->add_option("--wav", args.wav, "A .wav file or a directory of them")->required();
    cmd->add_option("--model", args.model, "Trained segmenter model (JSON)")->required();
    cmd->add_option("--out", args.out, "Output MIML segment CSV")->required();
    cmd->add_option("--json-dir", args.json_dir, "Optional directory for per-recording segment JSON");
    cmd->add_option("--threshold", args.threshold, "Probability threshold")->capture_default_str();
    cmd->add_option("--min-pixels", args.min_pixels, "Minimum component size")->capture_default_str();
    cmd->callback([&args] {
        const auto model = load_segmenter(args.model);
        if (!args.json_dir.empty()) fs::create_directories(args.json_dir);

        CsvWriter out(args.out);
        std::string header = "bag_id";
        for (int c = 0; c < kSegmentDescriptorDim; ++c) header += ",f" + std::to_string(c + 1);
        out.raw_line(header);

        std::size_t total = 0;
        for (const auto& wav_path : wav_inputs(args.wav)) {
            const auto wav = load_wav(wav_path);
            const auto spec =
                compute_spectrogram(wav.samples, wav.sample_rate, model.stft_window, model.stft_hop);
            const auto segments = segment(spec, model, args.threshold, args.min_pixels);
            const auto bag_id = stem_of(wav_path);
            for (const auto& seg : segments) {
                std::string line = bag_id;
                for (double v : describe_segment(spec, seg)) line += "," + format_double(v);
                out.raw_line(line);
            }
            if (!args.json_dir.empty()) {
                std::ofstream json_out((fs::path(args.json_dir) / (bag_id + ".json")).string(),
                                       std::ios::binary);
                json_out << segments_to_json(segments, spec).dump(2) << '\n';
            }
            total += segments.size();
            std::cout << bag_id << ": " << segments.size() << " segments\n";
        }
        out.close();
        std::cout << "wrote " << total << " segments to " << args.out << "\n";
    });
}

// ---------------------------------------------------------------------------
// codebook fit / featurize
// ---------------------------------------------------------------------------

struct CodebookFitArgs {
    std::string segments;
    std::string out;
    CodebookConfig config;
};

void add_codebook(CLI::App& app, CodebookFitArgs& args) {
    auto* parent = app.add_subcommand("codebook", "Codebook operations");
    parent->require_subcommand(1);
    auto* cmd = parent->add_subcommand("fit", "Cluster segment features into a k-means++ codebook");
    enable_config(cmd);
    cmd->add_option("--segments", args.segments, "MIML segment CSV")->required();
    cmd->add_option("--out", args.out, "Output codebook (JSON)")->required();
    cmd->add_option("--k", args.config.k, "Number of clusters")->capture_default_str();
    cmd->add_option("--max-iterations", args.config.max_iterations, "Lloyd iteration cap")
        ->capture_default_str();
    cmd->add_option("--tolerance", args.config.tolerance, "Center-movement convergence tolerance")
        ->capture_default_str();
    cmd->add_flag("--standardize", args.config.standardize, "Standardize features before clustering");
    cmd->add_option("--seed", args.config.seed, "RNG seed")->capture_default_str();
    cmd->callback([&args] {
        std::vector<std::vector<double>> pool;
        for (auto& [bag_id, values] : load_segment_rows(args.segments)) pool.push_back(std::move(values));
        const auto codebook = fit_codebook(pool, args.config);
        save_codebook(codebook, args.out);
        std::cout << "fit k=" << codebook.k() << " codebook on " << pool.size() << " segments (inertia "
                  << format_double(codebook.inertia) << ") -> " << args.out << "\n";
    });
}

struct FeaturizeArgs {
    std::string segments;
    std::string labels;
    std::string vocab;
    std::string codebook;
    std::string out;
};

void add_featurize(CLI::App& app, FeaturizeArgs& args) {
    auto* cmd = app.add_subcommand("featurize", "Reduce a MIML dataset to histogram-of-segments MLC CSV");
    enable_config(cmd);
    cmd->add_option("--segments", args.segments, "MIML segment CSV")->required();
    cmd->add_option("--labels", args.labels, "MIML label CSV")->required();
    cmd->add_option("--vocab", args.vocab, "Vocabulary file")->required();
    cmd->add_option("--codebook", args.codebook, "Codebook JSON")->required();
    cmd->add_option("--out", args.out, "Output MLC CSV")->required();
    cmd->callback([&args] {
        const auto vocab = LabelVocabulary::load(args.vocab);
        const auto data = load_miml(args.segments, args.labels, vocab);
        const auto codebook = load_codebook(args.codebook);
        const auto mlc = reduce_miml(data, codebook);
        save_mlc(mlc, args.out);
        std::cout << "wrote " << mlc.n() << " examples of dimension " << mlc.dim() << " to " << args.out
                  << "\n";
    });
}

// ---------------------------------------------------------------------------
// train / calibrate / predict / evaluate
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string vocab;
    std::string out;
    std::string classifier = "ecc";
    int chains = 25;
    int trees = 0;  // 0 = 25 for ecc, 625 for br
    int max_depth = 15;
    int min_leaf = 1;
    int features_per_split = 0;
    std::uint64_t seed = 0;
    bool no_in_bag = false;
};

void add_train(CLI::App& app, TrainArgs& args) {
    auto* cmd = app.add_subcommand("train", "Train a BR or ECC model on an MLC CSV");
    enable_config(cmd);
    cmd->add_option("--data", args.data, "Training MLC CSV")->required();
    cmd->add_option("--vocab", args.vocab, "Vocabulary file")->required();
    cmd->add_option("--model-out", args.out, "Output model (JSON)")->required();
    cmd->add_option("--classifier", args.classifier, "br or ecc")
        ->check(CLI::IsMember({"br", "ecc"}))
        ->capture_default_str();
    cmd->add_option("--chains", args.chains, "Number of chains (ecc)")->capture_default_str();
    cmd->add_option("--trees", args.trees, "Trees per forest (0 = 25 for ecc, 625 for br)")
        ->capture_default_str();
    cmd->add_option("--max-depth", args.max_depth, "Maximum tree depth")->capture_default_str();
    cmd->add_option("--min-leaf", args.min_leaf, "Minimum leaf size")->capture_default_str();
    cmd->add_option("--features-per-split", args.features_per_split,
                    "Features considered per split (0 = ceil(sqrt(d)))")
        ->capture_default_str();
    cmd->add_option("--seed", args.seed, "RNG seed")->capture_default_str();
    cmd->add_flag("--no-in-bag", args.no_in_bag,
                  "Strip bootstrap records from the model (disables later calibration)");
    cmd->callback([&args] {
        const auto vocab = LabelVocabulary::load(args.vocab);
        const auto data = load_mlc(args.data, vocab);
        ForestConfig forest;
        forest.max_depth = args.max_depth;
        forest.min_leaf = args.min_leaf;
        forest.features_per_split = args.features_per_split;
        AnyModel model = [&]() -> AnyModel {
            if (args.classifier == "br") {
                forest.tree_count = args.trees > 0 ? args.trees : 625;
                return train_br(data, forest, args.seed);
            }
            forest.tree_count = args.trees > 0 ? args.trees : 25;
            return train_ecc(data, args.chains, forest, args.seed);
        }();
        save_model(model, args.out, !args.no_in_bag);
        std::cout << "trained " << args.classifier << " on " << data.n() << " examples (d=" << data.dim()
                  << ", c=" << vocab.size() << ") -> " << args.out << "\n";
    });
}

struct CalibrateArgs {
    std::string model;
    std::string data;
    std::string vocab;
    std::string out;
    std::string mode = "per-class";
    double threshold = 0.5;
};

void add_calibrate(CLI::App& app, CalibrateArgs& args) {
    auto* cmd = app.add_subcommand("calibrate",
                                   "Calibrate per-class thresholds from out-of-bag estimates");
    enable_config(cmd);
    cmd->add_option("--model", args.model, "Model JSON (trained on --data)")->required();
    cmd->add_option("--data", args.data, "The model's training MLC CSV")->required();
    cmd->add_option("--vocab", args.vocab, "Vocabulary file")->required();
    cmd->add_option("--out", args.out, "Output model (default: overwrite --model)");
    cmd->add_option("--mode", args.mode, "per-class or single")
        ->check(CLI::IsMember({"per-class", "single"}))
        ->capture_default_str();
    cmd->add_option("--threshold", args.threshold, "Shared threshold for --mode single")
        ->capture_default_str();
    cmd->callback([&args] {
        const auto vocab = LabelVocabulary::load(args.vocab);
        const auto data = load_mlc(args.data, vocab);
        auto model = load_model(args.model);
        if (model_vocabulary(model).names != vocab.names)
            throw std::runtime_error("calibrate: model vocabulary does not match " + args.vocab);
        std::vector<double> thresholds;
        if (args.mode == "single") {
            thresholds.assign(static_cast<std::size_t>(vocab.size()), args.threshold);
        } else if (std::holds_alternative<BrModel>(model)) {
            thresholds = calibrate_thresholds(std::get<BrModel>(model), data);
        } else {
            thresholds = calibrate_thresholds(std::get<EccModel>(model), data);
        }
        if (std::holds_alternative<BrModel>(model)) std::get<BrModel>(model).thresholds = thresholds;
        else std::get<EccModel>(model).thresholds = thresholds;
        const auto out = args.out.empty() ? args.model : args.out;
        save_model(model, out);
        std::cout << "thresholds:";
        for (double t : thresholds) std::cout << ' ' << format_double(t);
        std::cout << "\nwrote " << out << "\n";
    });
}

struct PredictArgs {
    std::string model;
    std::string data;
    std::string vocab;
    std::string out;
    double fallback_threshold = 0.5;
};

void add_predict(CLI::App& app, PredictArgs& args) {
    auto* cmd = app.add_subcommand("predict", "Score a dataset and predict label sets");
    enable_config(cmd);
    cmd->add_option("--model", args.model, "Model JSON")->required();
    cmd->add_option("--data", args.data, "Input MLC CSV (labels may be empty)")->required();
    cmd->add_option("--vocab", args.vocab, "Optional vocabulary file; must match the model's");
    cmd->add_option("--out", args.out, "Output predictions CSV (id, per-class scores, predicted labels)")
        ->required();
    cmd->add_option("--threshold", args.fallback_threshold,
                    "Threshold used when the model is uncalibrated")
        ->capture_default_str();
    cmd->callback([&args] {
        const auto model = load_model(args.model);
        const auto& vocab = model_vocabulary(model);
        if (!args.vocab.empty()) {
            const auto supplied = LabelVocabulary::load(args.vocab);
            if (supplied.names != vocab.names) {
                std::string detail = "size " + std::to_string(supplied.size()) + " vs " +
                                     std::to_string(vocab.size());
                for (std::size_t j = 0; j < std::min(supplied.names.size(), vocab.names.size()); ++j)
                    if (supplied.names[j] != vocab.names[j]) {
                        detail = "class " + std::to_string(j + 1) + " is '" + supplied.names[j] +
                                 "' but the model was trained with '" + vocab.names[j] + "'";
                        break;
                    }
                throw std::runtime_error("predict: vocabulary mismatch: " + detail);
            }
        }
        const auto data = load_mlc(args.data, vocab);
        std::vector<double> thresholds = model_thresholds(model);
        if (thresholds.empty()) {
            std::cerr << "mlchains: model has no calibrated thresholds; using "
                      << format_double(args.fallback_threshold) << " for every class\n";
            thresholds.assign(static_cast<std::size_t>(vocab.size()), args.fallback_threshold);
        }

        CsvWriter out(args.out);
        std::string header = "id";
        for (int c = 0; c < vocab.size(); ++c) header += ",f" + std::to_string(c + 1);
        header += ",labels";
        out.raw_line(header);
        for (const auto& ex : data.examples) {
            const auto scores = model_scores(model, ex.x);
            const auto predicted = predict_set(scores, thresholds);
            std::string line = ex.id;
            for (double s : scores) line += "," + format_double(s);
            line += "," + label_set_to_field(predicted, vocab);
            out.raw_line(line);
        }
        out.close();
        std::cout << "wrote predictions for " << data.n() << " examples to " << args.out << "\n";
    });
}

struct EvaluateArgs {
    std::string pred;
    std::string truth;
    std::string vocab;
    std::string out;
};

void add_evaluate(CLI::App& app, EvaluateArgs& args) {
    auto* cmd = app.add_subcommand("evaluate", "Compute the five multi-label measures for predictions");
    enable_config(cmd);
    cmd->add_option("--pred", args.pred, "Predictions CSV from `predict`")->required();
    cmd->add_option("--truth", args.truth, "Ground-truth MLC CSV")->required();
    cmd->add_option("--vocab", args.vocab, "Vocabulary file")->required();
    cmd->add_option("--out", args.out, "Optional CSV to append measure rows to");
    cmd->callback([&args] {
        const auto vocab = LabelVocabulary::load(args.vocab);
        const auto pred = load_mlc(args.pred, vocab);
        const auto truth = load_mlc(args.truth, vocab);
        if (pred.dim() != vocab.size())
            throw std::runtime_error("evaluate: prediction file must have one score column per class");

        PredictionBatch batch;
        for (const auto& p : pred.examples) {
            const auto match = std::find_if(truth.examples.begin(), truth.examples.end(),
                                            [&](const MlcExample& t) { return t.id == p.id; });
            if (match == truth.examples.end())
                throw std::runtime_error("evaluate: id '" + p.id + "' not present in " + args.truth);
            PredictionItem item;
            item.truth = match->y;
            item.scores = p.x;
            item.predicted = p.y;
            batch.push_back(std::move(item));
        }
        const auto report = compute_metrics(batch);
        for (const auto& m : measure_names())
            std::cout << m << " = " << format_double(measure_value(report, m)) << "\n";
        if (!args.out.empty()) {
            const bool fresh = !fs::exists(args.out);
            std::ofstream out(args.out, std::ios::binary | std::ios::app);
            if (fresh) out << "pred,truth,measure,value\n";
            for (const auto& m : measure_names())
                out << args.pred << ',' << args.truth << ',' << m << ','
                    << format_double(measure_value(report, m)) << '\n';
        }
    });
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

void add_experiment(CLI::App& app, ExperimentConfig& config) {
    auto* cmd = app.add_subcommand("experiment",
                                   "Repeated cross-validation comparing classifiers on one dataset");
    enable_config(cmd);
    cmd->add_option("--name", config.name, "Dataset name used in reports")->capture_default_str();
    cmd->add_option("--mlc", config.mlc_path, "MLC CSV input (skips the codebook stage)");
    cmd->add_option("--miml-features", config.miml_features_path, "MIML segment CSV input");
    cmd->add_option("--miml-labels", config.miml_labels_path, "MIML label CSV input");
    cmd->add_option("--vocab", config.vocabulary_path, "Vocabulary file")->required();
    cmd->add_option("--folds", config.folds_path, "Optional external fold file");
    cmd->add_option("--classifiers", config.classifiers, "Classifiers to run (br, ecc)")
        ->capture_default_str();
    cmd->add_option("--chains", config.chain_count, "ECC chain count L")->capture_default_str();
    cmd->add_option("--ecc-trees", config.ecc_trees, "Trees per ECC forest")->capture_default_str();
    cmd->add_option("--br-trees", config.br_trees, "Trees per BR forest")->capture_default_str();
    cmd->add_option("--max-depth", config.max_depth, "Maximum tree depth")->capture_default_str();
    cmd->add_option("--min-leaf", config.min_leaf, "Minimum leaf size")->capture_default_str();
    cmd->add_option("--features-per-split", config.features_per_split,
                    "Features per split (0 = ceil(sqrt(d)))")
        ->capture_default_str();
    cmd->add_option("--codebook-k", config.codebook_k, "Codebook size")->capture_default_str();
    cmd->add_option("--codebook-iterations", config.codebook_max_iterations, "Lloyd iteration cap")
        ->capture_default_str();
    cmd->add_option("--codebook-tolerance", config.codebook_tolerance, "Lloyd convergence tolerance")
        ->capture_default_str();
    cmd->add_option("--codebook-scope", config.codebook_scope, "per-fold or global")
        ->check(CLI::IsMember({"per-fold", "global"}))
        ->capture_default_str();
    cmd->add_option("--fold-count", config.fold_count, "Number of folds")->capture_default_str();
    cmd->add_option("--repetitions", config.repetitions, "Trials per fold")->capture_default_str();
    cmd->add_option("--seed", config.seed, "RNG seed")->capture_default_str();
    cmd->add_option("--threshold-mode", config.threshold_mode, "per-class or single")
        ->check(CLI::IsMember({"per-class", "single"}))
        ->capture_default_str();
    cmd->add_option("--single-threshold", config.single_threshold, "Threshold for --threshold-mode single")
        ->capture_default_str();
    cmd->add_option("--out-dir", config.output_dir, "Directory for result CSVs");
    cmd->callback([&config] {
        const auto result = run_experiment(config);
        std::cout << format_result_table(config.name, result);
        if (!config.output_dir.empty()) {
            write_experiment_outputs(result, config);
            std::cout << "results written to " << config.output_dir << "\n";
        }
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mlchains: multi-label classifier chains for bioacoustic recordings"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    FoldsArgs folds_args;
    SegmentTrainArgs segment_train_args;
    SegmentArgs segment_args;
    CodebookFitArgs codebook_args;
    FeaturizeArgs featurize_args;
    TrainArgs train_args;
    CalibrateArgs calibrate_args;
    PredictArgs predict_args;
    EvaluateArgs evaluate_args;
    ExperimentConfig experiment_config;

    add_synth(app, synth_args);
    add_folds(app, folds_args);
    add_segment_train(app, segment_train_args);
    add_segment(app, segment_args);
    add_codebook(app, codebook_args);
    add_featurize(app, featurize_args);
    add_train(app, train_args);
    add_calibrate(app, calibrate_args);
    add_predict(app, predict_args);
    add_evaluate(app, evaluate_args);
    add_experiment(app, experiment_config);

    try {
        std::vector<std::string> args = expand_config_args(std::vector<std::string>(argv + 1, argv + argc));
        std::reverse(args.begin(), args.end());  // CLI::App::parse consumes from the back
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "mlchains: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
