#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mlchains/csv.hpp"
#include "mlchains/forest.hpp"
#include "mlchains/matrix.hpp"
#include "mlchains/parallel.hpp"
#include "mlchains/rng.hpp"
#include "mlchains/spectrogram.hpp"

namespace mlchains {

// Supervised time-frequency segmentation: a pixel-window forest produces a
// probability map over the spectrogram, the thresholded mask is split into
// 4-connected components, and each surviving component is summarized by a
// fixed 12-value descriptor.

constexpr int kPixelWindow = 17;
constexpr int kPixelFeatureDim = kPixelWindow * kPixelWindow + 2;  // 291

// Window intensities in scan order, the bin coordinate of the center, and the
// window mean. Pixels outside the spectrogram contribute zeros.
inline void pixel_features(const Spectrogram& spec, int frame, int bin, std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(kPixelFeatureDim), 0.0);
    const int half = kPixelWindow / 2;
    double sum = 0.0;
    std::size_t at = 0;
    for (int dt = -half; dt <= half; ++dt) {
        const int t = frame + dt;
        for (int db = -half; db <= half; ++db, ++at) {
            const int b = bin + db;
            if (t < 0 || b < 0 || t >= static_cast<int>(spec.frames()) || b >= static_cast<int>(spec.bins()))
                continue;
            const double v = spec.magnitudes.at(static_cast<std::size_t>(t), static_cast<std::size_t>(b));
            out[at] = v;
            sum += v;
        }
    }
    out[static_cast<std::size_t>(kPixelWindow * kPixelWindow)] = static_cast<double>(bin);
    out[static_cast<std::size_t>(kPixelWindow * kPixelWindow) + 1] =
        sum / static_cast<double>(kPixelWindow * kPixelWindow);
}

struct SegmenterModel {
    RandomForest forest;
    int stft_window = 512;
    int stft_hop = 256;
};

struct SegmenterConfig {
    int tree_count = 100;
    int max_depth = 10;
    double sample_fraction = 1.0;  // fraction of annotated pixels used for training
    std::uint64_t seed = 0;
};

// In-segment masks aligned to a spectrogram: values are exactly 0 or 1.
inline void validate_mask(const Matrix& mask, const Spectrogram& spec) {
    if (mask.rows != spec.frames() || mask.cols != spec.bins())
        throw std::runtime_error("segmentation: mask shape does not match spectrogram");
    for (double v : mask.values)
        if (v != 0.0 && v != 1.0) throw std::runtime_error("segmentation: mask values must be 0 or 1");
}

inline SegmenterModel train_segmenter(const std::vector<std::pair<Spectrogram, Matrix>>& annotated,
                                      const SegmenterConfig& config = {}) {
    if (annotated.empty()) throw std::runtime_error("segmentation: no annotated spectrograms");
    if (config.sample_fraction <= 0.0 || config.sample_fraction > 1.0)
        throw std::runtime_error("segmentation: sample_fraction must be in (0, 1]");

    std::size_t total_pixels = 0;
    for (const auto& [spec, mask] : annotated) {
        validate_mask(mask, spec);
        total_pixels += spec.frames() * spec.bins();
    }

    Rng rng = Rng::stream(config.seed, 0x5e67u);
    std::vector<double> feature_rows;
    std::vector<std::uint8_t> labels;
    std::vector<double> scratch;
    feature_rows.reserve(static_cast<std::size_t>(static_cast<double>(total_pixels) * config.sample_fraction) *
                         kPixelFeatureDim);
    for (const auto& [spec, mask] : annotated) {
        for (int t = 0; t < static_cast<int>(spec.frames()); ++t) {
            for (int b = 0; b < static_cast<int>(spec.bins()); ++b) {
                if (config.sample_fraction < 1.0 && !rng.bernoulli(config.sample_fraction)) continue;
                pixel_features(spec, t, b, scratch);
                feature_rows.insert(feature_rows.end(), scratch.begin(), scratch.end());
                labels.push_back(mask.at(static_cast<std::size_t>(t), static_cast<std::size_t>(b)) != 0.0);
            }
        }
    }
    if (labels.size() < 2) throw std::runtime_error("segmentation: not enough annotated pixels");

    Matrix features(labels.size(), static_cast<std::size_t>(kPixelFeatureDim));
    features.values = std::move(feature_rows);

    ForestConfig forest_config;
    forest_config.tree_count = config.tree_count;
    forest_config.max_depth = config.max_depth;
    forest_config.seed = mix64(config.seed, 0x70697866u);

    SegmenterModel model;
    model.forest = RandomForest::train(features, labels, forest_config);
    return model;
}

// Per-pixel in-segment probability; rows are classified in parallel.
inline Matrix probability_map(const Spectrogram& spec, const SegmenterModel& model) {
    Matrix probs(spec.frames(), spec.bins());
    parallel_for(spec.frames(), [&](std::size_t t) {
        std::vector<double> features;
        for (std::size_t b = 0; b < spec.bins(); ++b) {
            pixel_features(spec, static_cast<int>(t), static_cast<int>(b), features);
            probs.at(t, b) = model.forest.predict_proba(features);
        }
    });
    return probs;
}

inline Matrix threshold_mask(const Matrix& probabilities, double threshold) {
    Matrix mask(probabilities.rows, probabilities.cols);
    for (std::size_t i = 0; i < probabilities.values.size(); ++i)
        mask.values[i] = probabilities.values[i] > threshold ? 1.0 : 0.0;
    return mask;
}

// A 4-connected component of mask pixels, with its time/frequency bounding box.
struct Segment {
    std::vector<std::pair<int, int>> pixels;  // (frame, bin) in scan order
    int t_min = 0, t_max = 0, b_min = 0, b_max = 0;

    int width() const { return t_max - t_min + 1; }
    int height() const { return b_max - b_min + 1; }
    std::size_t area() const { return pixels.size(); }
};

inline std::vector<Segment> extract_segments(const Matrix& mask, std::size_t min_pixels = 20) {
    std::vector<std::uint8_t> visited(mask.values.size(), 0);
    std::vector<Segment> segments;
    const int frames = static_cast<int>(mask.rows);
    const int bins = static_cast<int>(mask.cols);

    for (int t0 = 0; t0 < frames; ++t0) {
        for (int b0 = 0; b0 < bins; ++b0) {
            const std::size_t start = static_cast<std::size_t>(t0) * mask.cols + static_cast<std::size_t>(b0);
            if (visited[start] || mask.values[start] == 0.0) continue;

            Segment seg;
            seg.t_min = seg.t_max = t0;
            seg.b_min = seg.b_max = b0;
            std::deque<std::pair<int, int>> frontier{{t0, b0}};
            visited[start] = 1;
            while (!frontier.empty()) {
                const auto [t, b] = frontier.front();
                frontier.pop_front();
                seg.pixels.emplace_back(t, b);
                seg.t_min = std::min(seg.t_min, t);
                seg.t_max = std::max(seg.t_max, t);
                seg.b_min = std::min(seg.b_min, b);
                seg.b_max = std::max(seg.b_max, b);
                const int neighbors[4][2] = {{t - 1, b}, {t + 1, b}, {t, b - 1}, {t, b + 1}};
                for (const auto& nb : neighbors) {
                    if (nb[0] < 0 || nb[1] < 0 || nb[0] >= frames || nb[1] >= bins) continue;
                    const std::size_t at = static_cast<std::size_t>(nb[0]) * mask.cols +
                                           static_cast<std::size_t>(nb[1]);
                    if (visited[at] || mask.values[at] == 0.0) continue;
                    visited[at] = 1;
                    frontier.emplace_back(nb[0], nb[1]);
                }
            }
            std::sort(seg.pixels.begin(), seg.pixels.end());
            if (seg.area() >= min_pixels) segments.push_back(std::move(seg));
        }
    }
    return segments;
}

inline std::vector<Segment> segment(const Spectrogram& spec, const SegmenterModel& model,
                                    double prob_threshold = 0.5, std::size_t min_pixels = 20) {
    return extract_segments(threshold_mask(probability_map(spec, model), prob_threshold), min_pixels);
}

constexpr int kSegmentDescriptorDim = 12;

// Descriptor layout: duration_s, bandwidth_hz, min_freq_hz, max_freq_hz,
// pixel area, mask density in the bounding box, total intensity, mean
// intensity, time centroid, frequency centroid (both intensity-weighted and
// normalized to the bounding box), intensity standard deviation, and the
// entropy of the within-box frequency profile. This is a documented substitute
// descriptor set, not a reimplementation of any previously published one.
inline std::vector<double> describe_segment(const Spectrogram& spec, const Segment& seg) {
    if (seg.pixels.empty()) throw std::runtime_error("segmentation: empty segment");

    const double bin_hz = spec.bin_hz();
    const double frame_sec = spec.frame_seconds();
    const double area = static_cast<double>(seg.area());

    double energy = 0.0, sum_sq = 0.0, t_weighted = 0.0, b_weighted = 0.0;
    std::vector<double> freq_profile(static_cast<std::size_t>(seg.height()), 0.0);
    for (const auto& [t, b] : seg.pixels) {
        const double v = spec.magnitudes.at(static_cast<std::size_t>(t), static_cast<std::size_t>(b));
        energy += v;
        sum_sq += v * v;
        t_weighted += v * (static_cast<double>(t - seg.t_min) + 0.5);
        b_weighted += v * (static_cast<double>(b - seg.b_min) + 0.5);
        freq_profile[static_cast<std::size_t>(b - seg.b_min)] += v;
    }

    const double mean = energy / area;
    const double variance = std::max(0.0, sum_sq / area - mean * mean);
    double t_centroid = 0.5, b_centroid = 0.5, entropy = 0.0;
    if (energy > 0.0) {
        t_centroid = t_weighted / energy / static_cast<double>(seg.width());
        b_centroid = b_weighted / energy / static_cast<double>(seg.height());
        for (double p : freq_profile) {
            if (p <= 0.0) continue;
            const double frac = p / energy;
            entropy -= frac * std::log(frac);
        }
    }

    return {static_cast<double>(seg.width()) * frame_sec,
            static_cast<double>(seg.height()) * bin_hz,
            static_cast<double>(seg.b_min) * bin_hz,
            static_cast<double>(seg.b_max + 1) * bin_hz,
            area,
            area / (static_cast<double>(seg.width()) * static_cast<double>(seg.height())),
            energy,
            mean,
            t_centroid,
            b_centroid,
            std::sqrt(variance),
            entropy};
}

// ---------------------------------------------------------------------------
// Mask CSV and model/segment files
// ---------------------------------------------------------------------------

// Mask CSV: one row per frame, comma-separated 0/1 per bin.
inline void save_mask_csv(const Matrix& mask, const std::string& path) {
    CsvWriter out(path);
    for (std::size_t t = 0; t < mask.rows; ++t) {
        std::string line;
        for (std::size_t b = 0; b < mask.cols; ++b) {
            if (b) line += ',';
            line += mask.at(t, b) != 0.0 ? '1' : '0';
        }
        out.raw_line(line);
    }
    out.close();
}

inline Matrix load_mask_csv(const std::string& path) {
    const auto lines = read_lines(path);
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < lines.size(); ++r) {
        if (lines[r].empty() && r + 1 == lines.size()) break;
        const std::string context = path + " row " + std::to_string(r + 1);
        std::vector<double> row;
        for (const auto& field : split(lines[r], ',')) {
            const double v = parse_double(field, context);
            if (v != 0.0 && v != 1.0) throw std::runtime_error(context + ": mask values must be 0 or 1");
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows[0].size())
            throw std::runtime_error(context + ": ragged mask rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(path + ": empty mask");
    Matrix mask(rows.size(), rows[0].size());
    for (std::size_t t = 0; t < mask.rows; ++t)
        for (std::size_t b = 0; b < mask.cols; ++b) mask.at(t, b) = rows[t][b];
    return mask;
}

inline void to_json(nlohmann::json& j, const SegmenterModel& model) {
    j = nlohmann::json{{"format", "mlchains.segmenter"},
                       {"version", 1},
                       {"stft_window", model.stft_window},
                       {"stft_hop", model.stft_hop},
                       {"forest", model.forest}};
}

inline void from_json(const nlohmann::json& j, SegmenterModel& model) {
    if (j.value("format", "") != "mlchains.segmenter" || j.value("version", 0) != 1)
        throw std::runtime_error("segmenter: unsupported file format");
    model.stft_window = j.at("stft_window").get<int>();
    model.stft_hop = j.at("stft_hop").get<int>();
    model.forest = j.at("forest").get<RandomForest>();
}

inline void save_segmenter(const SegmenterModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out << nlohmann::json(model).dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline SegmenterModel load_segmenter(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open segmenter file: " + path);
    nlohmann::json j;
    in >> j;
    return j.get<SegmenterModel>();
}

inline nlohmann::json segments_to_json(const std::vector<Segment>& segments, const Spectrogram& spec) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& seg : segments)
        out.push_back({{"t_min", seg.t_min},
                       {"t_max", seg.t_max},
                       {"b_min", seg.b_min},
                       {"b_max", seg.b_max},
                       {"area", seg.area()},
                       {"descriptor", describe_segment(spec, seg)}});
    return out;
}

}  // namespace mlchains
