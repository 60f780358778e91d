#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "mlchains/matrix.hpp"

namespace mlchains {

// Magnitude short-time Fourier transform. Rows are frames, columns are
// frequency bins 0..window/2.
struct Spectrogram {
    Matrix magnitudes;
    int sample_rate = 0;
    int hop = 0;
    int window = 0;

    std::size_t frames() const { return magnitudes.rows; }
    std::size_t bins() const { return magnitudes.cols; }
    double bin_hz() const { return static_cast<double>(sample_rate) / window; }
    double frame_seconds() const { return static_cast<double>(hop) / sample_rate; }
};

namespace detail {

// In-place iterative radix-2 FFT; length must be a power of two. A hand-rolled
// transform keeps the library header-only with no link-time dependencies, and
// the fixed power-of-two analysis windows used here never need a general plan.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
        const std::complex<double> step(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= step;
            }
        }
    }
}

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace detail

inline Spectrogram compute_spectrogram(const std::vector<double>& waveform, int sample_rate,
                                       int window = 512, int hop = 256) {
    if (!detail::is_power_of_two(window) || window < 2)
        throw std::runtime_error("spectrogram: window must be a power of two >= 2");
    if (hop < 1) throw std::runtime_error("spectrogram: hop must be >= 1");
    if (sample_rate < 1) throw std::runtime_error("spectrogram: sample_rate must be >= 1");
    if (waveform.size() < static_cast<std::size_t>(window))
        throw std::runtime_error("spectrogram: waveform shorter than one window (" +
                                 std::to_string(waveform.size()) + " < " + std::to_string(window) + ")");

    const std::size_t frames = (waveform.size() - static_cast<std::size_t>(window)) /
                                   static_cast<std::size_t>(hop) + 1;
    const std::size_t bins = static_cast<std::size_t>(window) / 2 + 1;

    // Periodic Hann window.
    std::vector<double> hann(static_cast<std::size_t>(window));
    for (int t = 0; t < window; ++t)
        hann[static_cast<std::size_t>(t)] =
            0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * t / window);

    Spectrogram spec;
    spec.sample_rate = sample_rate;
    spec.hop = hop;
    spec.window = window;
    spec.magnitudes = Matrix(frames, bins);

    std::vector<std::complex<double>> buffer(static_cast<std::size_t>(window));
    for (std::size_t f = 0; f < frames; ++f) {
        const std::size_t start = f * static_cast<std::size_t>(hop);
        for (int t = 0; t < window; ++t)
            buffer[static_cast<std::size_t>(t)] = waveform[start + static_cast<std::size_t>(t)] *
                                                  hann[static_cast<std::size_t>(t)];
        detail::fft_radix2(buffer);
        for (std::size_t b = 0; b < bins; ++b) spec.magnitudes.at(f, b) = std::abs(buffer[b]);
    }
    return spec;
}

}  // namespace mlchains
