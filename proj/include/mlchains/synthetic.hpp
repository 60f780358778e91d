#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlchains/dataset.hpp"
#include "mlchains/rng.hpp"

namespace mlchains {

// Correlated-label MIML generator. Each class owns a subset of latent segment
// clusters; a bag's label set is drawn with a chain of conditional flips so
// adjacent classes co-occur with the requested correlation, and each present
// label emits segments near its clusters' centers.
struct SyntheticConfig {
    int c = 6;                          // number of classes
    int k_true = 12;                    // latent segment clusters
    int n = 300;                        // bags
    double mean_labels_per_bag = 2.0;
    double label_correlation = 0.0;     // in [0, 1]
    double noise_rate = 0.0;            // fraction of segments drawn uniformly
    std::uint64_t seed = 0;
    int segment_dim = 4;
    double mean_segments_per_label = 4.0;
    double cluster_std = 0.25;

    void validate() const {
        if (c < 2) throw std::runtime_error("synthetic: c must be >= 2");
        if (n < 10) throw std::runtime_error("synthetic: n must be >= 10");
        if (k_true < 1) throw std::runtime_error("synthetic: k_true must be >= 1");
        if (mean_labels_per_bag < 1.0 || mean_labels_per_bag > static_cast<double>(c))
            throw std::runtime_error("synthetic: mean_labels_per_bag must be in [1, c]");
        if (label_correlation < 0.0 || label_correlation > 1.0)
            throw std::runtime_error("synthetic: label_correlation must be in [0, 1]");
        if (noise_rate < 0.0 || noise_rate > 1.0)
            throw std::runtime_error("synthetic: noise_rate must be in [0, 1]");
        if (segment_dim < 1) throw std::runtime_error("synthetic: segment_dim must be >= 1");
        if (mean_segments_per_label < 1.0)
            throw std::runtime_error("synthetic: mean_segments_per_label must be >= 1");
    }
};

namespace detail {

inline std::string padded_bag_id(int index, int n) {
    int width = 1;
    for (int v = n; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(index);
    return "bag_" + std::string(static_cast<std::size_t>(width) - digits.size(), '0') + digits;
}

// Clusters are dealt to classes round-robin; a class with no cluster of its
// own (k_true < c) shares one.
inline std::vector<int> clusters_of_class(int j, int c, int k_true) {
    std::vector<int> out;
    for (int m = j % c; m < k_true; m += c) out.push_back(m);
    if (out.empty()) out.push_back(j % k_true);
    return out;
}

}  // namespace detail

inline MimlDataset generate_synthetic(const SyntheticConfig& config) {
    config.validate();
    Rng rng = Rng::stream(config.seed, 0x5e9d);

    MimlDataset data;
    for (int j = 0; j < config.c; ++j)
        data.vocabulary.names.push_back("class_" + std::to_string(j + 1));

    // Latent cluster centers, spread over [0, 10)^dim; cluster_std keeps them
    // well separated at the default scale.
    std::vector<std::vector<double>> centers(static_cast<std::size_t>(config.k_true));
    for (auto& center : centers) {
        center.resize(static_cast<std::size_t>(config.segment_dim));
        for (auto& coord : center) coord = rng.range(0.0, 10.0);
    }

    const double p = config.mean_labels_per_bag / static_cast<double>(config.c);
    for (int i = 0; i < config.n; ++i) {
        MimlBag bag;
        bag.id = detail::padded_bag_id(i, config.n);
        bag.y = LabelSet(config.c);

        // Chain of conditional flips: bit j copies bit j-1 with probability
        // label_correlation and is a fresh Bernoulli(p) draw otherwise, so the
        // marginal prevalence stays p for every class.
        bool prev = rng.bernoulli(p);
        bag.y.set(0, prev);
        for (int j = 1; j < config.c; ++j) {
            const bool tied = rng.bernoulli(config.label_correlation);
            const bool bit = tied ? prev : rng.bernoulli(p);
            bag.y.set(j, bit);
            prev = bit;
        }

        for (int j = 0; j < config.c; ++j) {
            if (!bag.y.test(j)) continue;
            const auto clusters = detail::clusters_of_class(j, config.c, config.k_true);
            const int count = 1 + rng.poisson(config.mean_segments_per_label - 1.0);
            for (int s = 0; s < count; ++s) {
                std::vector<double> inst(static_cast<std::size_t>(config.segment_dim));
                if (rng.bernoulli(config.noise_rate)) {
                    for (auto& v : inst) v = rng.range(-1.0, 11.0);
                } else {
                    const auto& center = centers[static_cast<std::size_t>(clusters[rng.index(clusters.size())])];
                    for (std::size_t dd = 0; dd < inst.size(); ++dd)
                        inst[dd] = center[dd] + rng.normal(0.0, config.cluster_std);
                }
                bag.instances.push_back(std::move(inst));
            }
        }
        data.bags.push_back(std::move(bag));
    }
    data.validate();
    return data;
}

}  // namespace mlchains
