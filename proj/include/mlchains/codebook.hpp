#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlchains/dataset.hpp"
#include "mlchains/rng.hpp"

namespace mlchains {

struct CodebookConfig {
    int k = 50;
    int max_iterations = 100;
    double tolerance = 1e-6;
    std::uint64_t seed = 0;
    bool standardize = false;

    void validate() const {
        if (k < 1) throw std::runtime_error("codebook: k must be >= 1");
        if (max_iterations < 1) throw std::runtime_error("codebook: max_iterations must be >= 1");
        if (tolerance < 0.0) throw std::runtime_error("codebook: tolerance must be >= 0");
    }
};

// k cluster centers over segment features. When standardize is set, the
// per-dimension shift/scale learned from the training pool is stored and
// applied to every query, so centers live in the standardized space.
struct Codebook {
    CodebookConfig config;
    int dim = 0;
    std::vector<std::vector<double>> centers;
    double inertia = 0.0;
    std::vector<double> shift;            // empty unless standardized
    std::vector<double> scale;
    std::vector<double> inertia_trace;    // inertia after each assignment step
    std::uint64_t fingerprint = 0;        // FNV-1a over the training pool

    int k() const { return static_cast<int>(centers.size()); }
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        total += diff * diff;
    }
    return total;
}

inline std::uint64_t fnv1a_pool(const std::vector<std::vector<double>>& points) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&hash](const void* data, std::size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            hash ^= bytes[i];
            hash *= 0x100000001b3ULL;
        }
    };
    const std::uint64_t n = points.size();
    mix_bytes(&n, sizeof n);
    for (const auto& p : points) mix_bytes(p.data(), p.size() * sizeof(double));
    return hash;
}

inline std::size_t count_distinct(std::vector<std::vector<double>> points) {
    std::sort(points.begin(), points.end());
    return static_cast<std::size_t>(std::unique(points.begin(), points.end()) - points.begin());
}

}  // namespace detail

// Index of the nearest center by Euclidean distance; ties break toward the
// lowest index.
inline int assign(const Codebook& codebook, std::span<const double> segment) {
    if (static_cast<int>(segment.size()) != codebook.dim)
        throw std::runtime_error("codebook: segment dimension mismatch");
    std::vector<double> transformed;
    std::span<const double> query = segment;
    if (!codebook.shift.empty()) {
        transformed.resize(segment.size());
        for (std::size_t i = 0; i < segment.size(); ++i)
            transformed[i] = (segment[i] - codebook.shift[i]) / codebook.scale[i];
        query = transformed;
    }
    int best = 0;
    double best_d2 = detail::squared_distance(query, codebook.centers[0]);
    for (int m = 1; m < codebook.k(); ++m) {
        const double d2 = detail::squared_distance(query, codebook.centers[static_cast<std::size_t>(m)]);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = m;
        }
    }
    return best;
}

// k-means++ seeding: the first center is uniform over the pool, each later
// center is sampled with probability proportional to its squared distance
// from the nearest chosen center. Returns the chosen point indices.
inline std::vector<std::size_t> kmeanspp_seed_indices(const std::vector<std::vector<double>>& points,
                                                      std::size_t k, Rng& rng) {
    const std::size_t n = points.size();
    std::vector<std::size_t> chosen;
    chosen.reserve(k);
    chosen.push_back(rng.index(n));
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = detail::squared_distance(points[i], points[chosen[0]]);
    while (chosen.size() < k) {
        double total = 0.0;
        for (double v : d2) total += v;
        const double pick = rng.unit() * total;
        double cum = 0.0;
        std::size_t next = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            cum += d2[i];
            if (pick < cum) {
                next = i;
                break;
            }
        }
        chosen.push_back(next);
        for (std::size_t i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], detail::squared_distance(points[i], points[next]));
    }
    return chosen;
}

// k-means++ seeding followed by Lloyd iterations. Lloyd stops when the
// largest center movement drops below tolerance. Empty clusters are repaired
// by re-seeding them at the point currently farthest from its assigned
// center, so exactly k centers survive.
inline Codebook fit_codebook(const std::vector<std::vector<double>>& segments, const CodebookConfig& config) {
    config.validate();
    if (segments.empty()) throw std::runtime_error("codebook: empty segment pool");
    const std::size_t n = segments.size();
    const std::size_t dim = segments[0].size();
    for (const auto& s : segments)
        if (s.size() != dim) throw std::runtime_error("codebook: inconsistent segment dimension");
    const std::size_t k = static_cast<std::size_t>(config.k);

    Codebook codebook;
    codebook.config = config;
    codebook.dim = static_cast<int>(dim);
    codebook.fingerprint = detail::fnv1a_pool(segments);

    std::vector<std::vector<double>> points = segments;
    if (config.standardize) {
        codebook.shift.assign(dim, 0.0);
        codebook.scale.assign(dim, 1.0);
        for (const auto& p : points)
            for (std::size_t c = 0; c < dim; ++c) codebook.shift[c] += p[c];
        for (auto& v : codebook.shift) v /= static_cast<double>(n);
        std::vector<double> variance(dim, 0.0);
        for (const auto& p : points)
            for (std::size_t c = 0; c < dim; ++c) {
                const double diff = p[c] - codebook.shift[c];
                variance[c] += diff * diff;
            }
        for (std::size_t c = 0; c < dim; ++c) {
            const double var = variance[c] / static_cast<double>(n);
            codebook.scale[c] = var > 0.0 ? std::sqrt(var) : 1.0;  // constant dims pass through
        }
        for (auto& p : points)
            for (std::size_t c = 0; c < dim; ++c) p[c] = (p[c] - codebook.shift[c]) / codebook.scale[c];
    }

    if (detail::count_distinct(points) < k)
        throw std::runtime_error("codebook: k = " + std::to_string(k) +
                                 " exceeds the number of distinct segments; choose a smaller k");

    Rng rng = Rng::stream(config.seed, 0x6b6d7070ULL);
    const auto seed_indices = kmeanspp_seed_indices(points, k, rng);
    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    for (std::size_t idx : seed_indices) centers.push_back(points[idx]);

    // Lloyd iterations.
    std::vector<int> assignment(n, 0);
    std::vector<double> nearest_d2(n, 0.0);
    for (int iteration = 0; iteration < config.max_iterations; ++iteration) {
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d2 = detail::squared_distance(points[i], centers[0]);
            for (std::size_t m = 1; m < k; ++m) {
                const double dist = detail::squared_distance(points[i], centers[m]);
                if (dist < best_d2) {
                    best_d2 = dist;
                    best = static_cast<int>(m);
                }
            }
            assignment[i] = best;
            nearest_d2[i] = best_d2;
            inertia += best_d2;
        }

        // Re-seed empty clusters before recomputing means.
        std::vector<std::size_t> cluster_sizes(k, 0);
        for (int a : assignment) ++cluster_sizes[static_cast<std::size_t>(a)];
        for (std::size_t m = 0; m < k; ++m) {
            if (cluster_sizes[m] != 0) continue;
            std::size_t farthest = 0;
            for (std::size_t i = 1; i < n; ++i)
                if (nearest_d2[i] > nearest_d2[farthest]) farthest = i;
            cluster_sizes[static_cast<std::size_t>(assignment[farthest])]--;
            assignment[farthest] = static_cast<int>(m);
            cluster_sizes[m] = 1;
            centers[m] = points[farthest];
            nearest_d2[farthest] = 0.0;
        }

        codebook.inertia_trace.push_back(inertia);

        std::vector<std::vector<double>> means(k, std::vector<double>(dim, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            auto& mean = means[static_cast<std::size_t>(assignment[i])];
            for (std::size_t c = 0; c < dim; ++c) mean[c] += points[i][c];
        }
        double movement = 0.0;
        for (std::size_t m = 0; m < k; ++m) {
            for (std::size_t c = 0; c < dim; ++c) means[m][c] /= static_cast<double>(cluster_sizes[m]);
            movement = std::max(movement, std::sqrt(detail::squared_distance(means[m], centers[m])));
            centers[m] = std::move(means[m]);
        }
        if (movement < config.tolerance) break;
    }

    codebook.centers = std::move(centers);
    codebook.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < k; ++m)
            best_d2 = std::min(best_d2, detail::squared_distance(points[i], codebook.centers[m]));
        codebook.inertia += best_d2;
    }
    return codebook;
}

inline std::vector<std::vector<double>> pool_segments(const MimlDataset& data) {
    std::vector<std::vector<double>> pool;
    for (const auto& bag : data.bags)
        for (const auto& inst : bag.instances) pool.push_back(inst);
    return pool;
}

inline Codebook fit_codebook(const MimlDataset& data, const CodebookConfig& config) {
    return fit_codebook(pool_segments(data), config);
}

// Normalized count of the bag's segments per cluster (L1); an empty bag maps
// to the all-zero vector.
inline std::vector<double> histogram_features(const Codebook& codebook, const MimlBag& bag) {
    std::vector<double> histogram(static_cast<std::size_t>(codebook.k()), 0.0);
    if (bag.instances.empty()) return histogram;
    for (const auto& inst : bag.instances)
        histogram[static_cast<std::size_t>(assign(codebook, inst))] += 1.0;
    for (auto& v : histogram) v /= static_cast<double>(bag.instances.size());
    return histogram;
}

// MIML -> MLC reduction: one example per bag whose feature vector is the
// histogram of its segments over the codebook (dimension k).
inline MlcDataset reduce_miml(const MimlDataset& miml, const Codebook& codebook) {
    MlcDataset out;
    out.vocabulary = miml.vocabulary;
    out.examples.reserve(miml.bags.size());
    for (const auto& bag : miml.bags) {
        MlcExample ex;
        ex.id = bag.id;
        ex.x = histogram_features(codebook, bag);
        ex.y = bag.y;
        out.examples.push_back(std::move(ex));
    }
    out.validate();
    return out;
}

inline void to_json(nlohmann::json& j, const Codebook& codebook) {
    j = nlohmann::json{{"format", "mlchains.codebook"},
                       {"version", 1},
                       {"k", codebook.k()},
                       {"dim", codebook.dim},
                       {"centers", codebook.centers},
                       {"inertia", codebook.inertia},
                       {"shift", codebook.shift},
                       {"scale", codebook.scale},
                       {"fingerprint", codebook.fingerprint},
                       {"config",
                        {{"k", codebook.config.k},
                         {"max_iterations", codebook.config.max_iterations},
                         {"tolerance", codebook.config.tolerance},
                         {"seed", codebook.config.seed},
                         {"standardize", codebook.config.standardize}}}};
}

inline void from_json(const nlohmann::json& j, Codebook& codebook) {
    if (j.value("format", "") != "mlchains.codebook" || j.value("version", 0) != 1)
        throw std::runtime_error("codebook: unsupported file format");
    codebook.dim = j.at("dim").get<int>();
    codebook.centers = j.at("centers").get<std::vector<std::vector<double>>>();
    codebook.inertia = j.at("inertia").get<double>();
    codebook.shift = j.at("shift").get<std::vector<double>>();
    codebook.scale = j.at("scale").get<std::vector<double>>();
    codebook.fingerprint = j.at("fingerprint").get<std::uint64_t>();
    const auto& cfg = j.at("config");
    codebook.config.k = cfg.at("k").get<int>();
    codebook.config.max_iterations = cfg.at("max_iterations").get<int>();
    codebook.config.tolerance = cfg.at("tolerance").get<double>();
    codebook.config.seed = cfg.at("seed").get<std::uint64_t>();
    codebook.config.standardize = cfg.at("standardize").get<bool>();
}

inline void save_codebook(const Codebook& codebook, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out << nlohmann::json(codebook).dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline Codebook load_codebook(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open codebook file: " + path);
    nlohmann::json j;
    in >> j;
    return j.get<Codebook>();
}

}  // namespace mlchains
