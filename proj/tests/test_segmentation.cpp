#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "mlchains/segmentation.hpp"
#include "mlchains/wav.hpp"
#include "test_util.hpp"

using namespace mlchains;
using test_util::TempDir;

namespace {

Spectrogram flat_spectrogram(std::size_t frames, std::size_t bins, double value = 0.0) {
    Spectrogram spec;
    spec.sample_rate = 16000;
    spec.window = 512;
    spec.hop = 256;
    spec.magnitudes = Matrix(frames, bins, value);
    return spec;
}

void paint(Spectrogram& spec, int t0, int t1, int b0, int b1, double value) {
    for (int t = t0; t <= t1; ++t)
        for (int b = b0; b <= b1; ++b)
            spec.magnitudes.at(static_cast<std::size_t>(t), static_cast<std::size_t>(b)) = value;
}

}  // namespace

TEST_CASE("pixel features have dimension 291 with zero padding at edges") {
    auto spec = flat_spectrogram(1, 1, 0.8);
    std::vector<double> features;
    pixel_features(spec, 0, 0, features);
    REQUIRE(features.size() == 291);
    REQUIRE(kPixelFeatureDim == 291);

    // Only the center of the 17x17 window is inside a 1x1 spectrogram.
    double sum = 0.0;
    for (int i = 0; i < 289; ++i) sum += features[static_cast<std::size_t>(i)];
    REQUIRE(sum == 0.8);
    REQUIRE(features[static_cast<std::size_t>(8 * 17 + 8)] == 0.8);
    REQUIRE(features[289] == 0.0);                       // bin coordinate
    REQUIRE(features[290] == Catch::Approx(0.8 / 289));  // window mean
}

TEST_CASE("pixel features record the bin coordinate") {
    auto spec = flat_spectrogram(40, 40, 0.0);
    std::vector<double> features;
    pixel_features(spec, 10, 23, features);
    REQUIRE(features[289] == 23.0);
}

TEST_CASE("silence produces an all-zero spectrogram with the expected frame count") {
    const std::vector<double> silence(512 + 256 * 3, 0.0);
    const auto spec = compute_spectrogram(silence, 16000);
    REQUIRE(spec.frames() == 4);
    REQUIRE(spec.bins() == 257);
    for (double v : spec.magnitudes.values) REQUIRE(v == 0.0);
}

TEST_CASE("a waveform exactly one window long yields a single frame") {
    const std::vector<double> wave(512, 0.25);
    const auto spec = compute_spectrogram(wave, 16000);
    REQUIRE(spec.frames() == 1);
}

TEST_CASE("too-short waveforms are rejected") {
    const std::vector<double> wave(100, 0.0);
    REQUIRE_THROWS(compute_spectrogram(wave, 16000));
}

TEST_CASE("a bin-centered sine concentrates energy around its bin") {
    // Bin 32 of a 512-sample window at 16 kHz sits at 1000 Hz. The Hann
    // window spreads a bin-centered tone over the two adjacent bins with
    // amplitude ratio 2:1, so the peak bin holds 2/3 of the frame energy and
    // the three-bin neighborhood nearly all of it.
    const int sr = 16000;
    const int target_bin = 32;
    const double freq = static_cast<double>(target_bin) * sr / 512.0;
    std::vector<double> wave(512 * 8);
    for (std::size_t i = 0; i < wave.size(); ++i)
        wave[i] = std::sin(2.0 * 3.14159265358979323846 * freq * static_cast<double>(i) / sr);
    const auto spec = compute_spectrogram(wave, sr);

    for (std::size_t f = 0; f < spec.frames(); ++f) {
        double total = 0.0, peak = 0.0, neighborhood = 0.0;
        std::size_t argmax = 0;
        for (std::size_t b = 0; b < spec.bins(); ++b) {
            const double e = spec.magnitudes.at(f, b) * spec.magnitudes.at(f, b);
            total += e;
            if (e > peak) {
                peak = e;
                argmax = b;
            }
            if (b + 1 >= static_cast<std::size_t>(target_bin) && b <= static_cast<std::size_t>(target_bin) + 1)
                neighborhood += e;
        }
        REQUIRE(argmax == static_cast<std::size_t>(target_bin));
        REQUIRE(peak / total == Catch::Approx(2.0 / 3.0).margin(0.02));
        REQUIRE(neighborhood / total > 0.99);
    }
}

TEST_CASE("an oracle probability map with two rectangles yields two exact segments") {
    auto spec = flat_spectrogram(60, 40, 0.0);
    paint(spec, 5, 34, 10, 19, 1.0);   // 30x10 rectangle
    paint(spec, 40, 55, 25, 32, 1.0);  // disjoint 16x8 rectangle

    // The spectrogram itself acts as the oracle probability map.
    const auto segments = extract_segments(threshold_mask(spec.magnitudes, 0.5), 20);
    REQUIRE(segments.size() == 2);
    REQUIRE(segments[0].t_min == 5);
    REQUIRE(segments[0].t_max == 34);
    REQUIRE(segments[0].b_min == 10);
    REQUIRE(segments[0].b_max == 19);
    REQUIRE(segments[0].area() == 300);
    REQUIRE(segments[1].t_min == 40);
    REQUIRE(segments[1].t_max == 55);
    REQUIRE(segments[1].b_min == 25);
    REQUIRE(segments[1].b_max == 32);
}

TEST_CASE("segments below min_pixels are dropped and empty maps yield nothing") {
    auto spec = flat_spectrogram(30, 30, 0.0);
    paint(spec, 2, 4, 2, 4, 1.0);  // 9 pixels
    REQUIRE(extract_segments(threshold_mask(spec.magnitudes, 0.5), 20).empty());
    REQUIRE(extract_segments(threshold_mask(spec.magnitudes, 0.5), 9).size() == 1);

    const auto none = flat_spectrogram(20, 20, 0.3);
    REQUIRE(extract_segments(threshold_mask(none.magnitudes, 0.5), 1).empty());
}

TEST_CASE("diagonally touching blocks stay separate under 4-connectivity") {
    auto spec = flat_spectrogram(20, 20, 0.0);
    paint(spec, 0, 4, 0, 4, 1.0);
    paint(spec, 5, 9, 5, 9, 1.0);
    const auto segments = extract_segments(threshold_mask(spec.magnitudes, 0.5), 1);
    REQUIRE(segments.size() == 2);
}

TEST_CASE("segment pixels do not overlap and all sit above threshold") {
    auto spec = flat_spectrogram(30, 30, 0.0);
    paint(spec, 1, 8, 1, 8, 0.9);
    paint(spec, 15, 25, 10, 20, 0.7);
    const Matrix probs = spec.magnitudes;
    const auto segments = extract_segments(threshold_mask(probs, 0.5), 1);
    std::set<std::pair<int, int>> seen;
    for (const auto& seg : segments)
        for (const auto& px : seg.pixels) {
            REQUIRE(probs.at(static_cast<std::size_t>(px.first), static_cast<std::size_t>(px.second)) > 0.5);
            REQUIRE(seen.insert(px).second);
        }
}

TEST_CASE("all-zero annotations train a segmenter that predicts zero everywhere") {
    auto spec = flat_spectrogram(24, 24, 0.0);
    paint(spec, 3, 18, 3, 18, 0.5);
    Matrix mask(24, 24, 0.0);
    SegmenterConfig config;
    config.tree_count = 5;
    config.max_depth = 4;
    const auto model = train_segmenter({{spec, mask}}, config);
    const auto probs = probability_map(spec, model);
    for (double v : probs.values) REQUIRE(v == 0.0);
}

TEST_CASE("segmenter config defaults match the pixel forest convention") {
    SegmenterConfig config;
    REQUIRE(config.tree_count == 100);
    REQUIRE(config.max_depth == 10);
}

TEST_CASE("a trained segmenter recovers a bright rectangle") {
    auto spec = flat_spectrogram(40, 30, 0.0);
    paint(spec, 8, 27, 5, 14, 1.0);
    Matrix mask(40, 30, 0.0);
    for (int t = 8; t <= 27; ++t)
        for (int b = 5; b <= 14; ++b) mask.at(static_cast<std::size_t>(t), static_cast<std::size_t>(b)) = 1.0;

    SegmenterConfig config;
    config.tree_count = 20;
    config.max_depth = 8;
    config.seed = 3;
    const auto model = train_segmenter({{spec, mask}}, config);
    REQUIRE(model.forest.config().max_depth == 8);
    REQUIRE(model.forest.dim() == kPixelFeatureDim);

    const auto segments = segment(spec, model, 0.5, 20);
    REQUIRE(segments.size() == 1);
    // The window features blur edges slightly; the box must cover the core.
    REQUIRE(segments[0].t_min <= 10);
    REQUIRE(segments[0].t_max >= 25);
    REQUIRE(segments[0].b_min <= 7);
    REQUIRE(segments[0].b_max >= 12);
}

TEST_CASE("descriptors capture geometry and scale linearly in intensity") {
    auto spec = flat_spectrogram(50, 40, 0.0);
    paint(spec, 10, 19, 8, 15, 0.6);  // uniform 10x8 box
    auto segments = extract_segments(threshold_mask(spec.magnitudes, 0.5), 1);
    REQUIRE(segments.size() == 1);
    const auto d = describe_segment(spec, segments[0]);
    REQUIRE(d.size() == kSegmentDescriptorDim);

    const double bin_hz = spec.bin_hz();
    REQUIRE(d[0] == Catch::Approx(10.0 * 256.0 / 16000.0));  // duration
    REQUIRE(d[1] == Catch::Approx(8.0 * bin_hz));            // bandwidth
    REQUIRE(d[2] == Catch::Approx(8.0 * bin_hz));            // min freq
    REQUIRE(d[3] == Catch::Approx(16.0 * bin_hz));           // max freq
    REQUIRE(d[4] == 80.0);                                   // area
    REQUIRE(d[5] == 1.0);                                    // density
    REQUIRE(d[6] == Catch::Approx(80.0 * 0.6));              // energy
    REQUIRE(d[7] == Catch::Approx(0.6));                     // mean intensity
    REQUIRE(d[8] == Catch::Approx(0.5));                     // time centroid
    REQUIRE(d[9] == Catch::Approx(0.5));                     // frequency centroid
    REQUIRE(d[10] == Catch::Approx(0.0).margin(1e-12));      // intensity std

    // Doubling intensities doubles energy but leaves shape features alone.
    for (auto& v : spec.magnitudes.values) v *= 2.0;
    const auto d2 = describe_segment(spec, segments[0]);
    REQUIRE(d2[6] == Catch::Approx(2.0 * d[6]));
    REQUIRE(d2[5] == d[5]);
    REQUIRE(d2[8] == Catch::Approx(d[8]));
    REQUIRE(d2[9] == Catch::Approx(d[9]));
    REQUIRE(d2[11] == Catch::Approx(d[11]));
}

TEST_CASE("single-pixel segments have unit area and one bin of bandwidth") {
    auto spec = flat_spectrogram(25, 25, 0.0);
    spec.magnitudes.at(12, 7) = 1.0;
    const auto segments = extract_segments(threshold_mask(spec.magnitudes, 0.5), 1);
    REQUIRE(segments.size() == 1);
    const auto d = describe_segment(spec, segments[0]);
    REQUIRE(d[4] == 1.0);
    REQUIRE(d[1] == Catch::Approx(spec.bin_hz()));
    REQUIRE(d[11] == 0.0);  // single-bin profile has zero entropy
}

TEST_CASE("mask csv round trip") {
    TempDir dir;
    Matrix mask(5, 4, 0.0);
    mask.at(1, 2) = 1.0;
    mask.at(4, 0) = 1.0;
    const auto path = dir.file("mask.csv");
    save_mask_csv(mask, path);
    const auto loaded = load_mask_csv(path);
    REQUIRE(loaded.rows == 5);
    REQUIRE(loaded.cols == 4);
    REQUIRE(loaded.values == mask.values);

    test_util::write_file(dir.file("bad.csv"), "0,1\n2,0\n");
    REQUIRE_THROWS(load_mask_csv(dir.file("bad.csv")));
}

TEST_CASE("segmenter model file round trip") {
    TempDir dir;
    auto spec = flat_spectrogram(20, 20, 0.0);
    paint(spec, 5, 14, 5, 14, 1.0);
    Matrix mask = threshold_mask(spec.magnitudes, 0.5);
    SegmenterConfig config;
    config.tree_count = 4;
    config.max_depth = 4;
    const auto model = train_segmenter({{spec, mask}}, config);
    const auto path = dir.file("segmenter.json");
    save_segmenter(model, path);
    const auto loaded = load_segmenter(path);
    REQUIRE(loaded.stft_window == model.stft_window);
    const auto a = probability_map(spec, model);
    const auto b = probability_map(spec, loaded);
    REQUIRE(a.values == b.values);
}

TEST_CASE("wav files round trip within 16-bit quantization") {
    TempDir dir;
    Waveform wav;
    wav.sample_rate = 8000;
    Rng rng(71);
    for (int i = 0; i < 2000; ++i) wav.samples.push_back(0.9 * std::sin(i * 0.01) + 0.05 * rng.normal());
    for (auto& s : wav.samples) s = std::clamp(s, -1.0, 1.0);
    const auto path = dir.file("tone.wav");
    save_wav(wav, path);
    const auto loaded = load_wav(path);
    REQUIRE(loaded.sample_rate == 8000);
    REQUIRE(loaded.samples.size() == wav.samples.size());
    for (std::size_t i = 0; i < wav.samples.size(); ++i)
        REQUIRE(loaded.samples[i] == Catch::Approx(wav.samples[i]).margin(1.0 / 32768.0 + 1e-9));
}

TEST_CASE("mask shape validation") {
    auto spec = flat_spectrogram(10, 10, 0.0);
    Matrix wrong(5, 5, 0.0);
    REQUIRE_THROWS(train_segmenter({{spec, wrong}}, SegmenterConfig{}));
    Matrix bad(10, 10, 0.0);
    bad.at(0, 0) = 0.5;
    REQUIRE_THROWS(train_segmenter({{spec, bad}}, SegmenterConfig{}));
}
