#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlchains/csv.hpp"
#include "mlchains/rng.hpp"

namespace mlchains {

// ---------------------------------------------------------------------------
// Label vocabulary and label sets
// ---------------------------------------------------------------------------

// Ordered list of class names. File order is the canonical class order and
// every label set in a dataset is indexed against it.
struct LabelVocabulary {
    std::vector<std::string> names;

    int size() const { return static_cast<int>(names.size()); }

    int index_of(const std::string& name) const {
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == name) return static_cast<int>(j);
        return -1;
    }

    void validate() const {
        std::set<std::string> seen;
        for (const auto& name : names) {
            if (name.empty()) throw std::runtime_error("vocabulary: empty label name");
            if (!seen.insert(name).second)
                throw std::runtime_error("vocabulary: duplicate label name '" + name + "'");
        }
    }

    static LabelVocabulary load(const std::string& path) {
        LabelVocabulary vocab;
        for (auto& line : read_lines(path))
            if (!line.empty()) vocab.names.push_back(line);
        if (vocab.names.empty()) throw std::runtime_error("vocabulary file is empty: " + path);
        vocab.validate();
        return vocab;
    }

    void save(const std::string& path) const {
        CsvWriter out(path);
        for (const auto& name : names) out.raw_line(name);
        out.close();
    }

    bool operator==(const LabelVocabulary& other) const { return names == other.names; }
};

// Fixed-length bit view of a label set; bit j is the indicator for class j.
class LabelSet {
public:
    LabelSet() = default;
    explicit LabelSet(int c) : bits_(static_cast<std::size_t>(c), 0) {}

    static LabelSet from_indices(int c, const std::vector<int>& indices) {
        LabelSet y(c);
        for (int j : indices) y.set(j, true);
        return y;
    }

    int size() const { return static_cast<int>(bits_.size()); }
    bool test(int j) const { return bits_.at(static_cast<std::size_t>(j)) != 0; }
    void set(int j, bool value) { bits_.at(static_cast<std::size_t>(j)) = value ? 1 : 0; }

    int count() const {
        int total = 0;
        for (auto b : bits_) total += b;
        return total;
    }

    std::vector<int> indices() const {
        std::vector<int> out;
        for (int j = 0; j < size(); ++j)
            if (bits_[static_cast<std::size_t>(j)]) out.push_back(j);
        return out;
    }

    bool operator==(const LabelSet& other) const { return bits_ == other.bits_; }
    bool operator!=(const LabelSet& other) const { return !(*this == other); }

private:
    std::vector<std::uint8_t> bits_;
};

inline std::string label_set_to_field(const LabelSet& y, const LabelVocabulary& vocab) {
    std::string field;
    for (int j : y.indices()) {
        if (!field.empty()) field += ';';
        field += vocab.names[static_cast<std::size_t>(j)];
    }
    return field;
}

inline LabelSet label_set_from_field(const std::string& field, const LabelVocabulary& vocab,
                                     const std::string& context) {
    LabelSet y(vocab.size());
    if (field.empty()) return y;
    for (const auto& name : split(field, ';')) {
        const int j = vocab.index_of(name);
        if (j < 0) throw std::runtime_error(context + ": unknown label name '" + name + "'");
        y.set(j, true);
    }
    return y;
}

// ---------------------------------------------------------------------------
// MLC and MIML datasets
// ---------------------------------------------------------------------------

struct MlcExample {
    std::string id;
    std::vector<double> x;
    LabelSet y;
};

struct MlcDataset {
    LabelVocabulary vocabulary;
    std::vector<MlcExample> examples;

    int n() const { return static_cast<int>(examples.size()); }
    int dim() const { return examples.empty() ? 0 : static_cast<int>(examples[0].x.size()); }

    void validate() const {
        vocabulary.validate();
        std::set<std::string> ids;
        for (const auto& ex : examples) {
            if (!ids.insert(ex.id).second)
                throw std::runtime_error("dataset: duplicate id '" + ex.id + "'");
            if (static_cast<int>(ex.x.size()) != dim())
                throw std::runtime_error("dataset: inconsistent feature dimension at id '" + ex.id + "'");
            if (ex.y.size() != vocabulary.size())
                throw std::runtime_error("dataset: label set size mismatch at id '" + ex.id + "'");
            for (double v : ex.x)
                if (!std::isfinite(v))
                    throw std::runtime_error("dataset: non-finite feature at id '" + ex.id + "'");
        }
    }
};

struct MimlBag {
    std::string id;
    std::vector<std::vector<double>> instances;
    LabelSet y;
};

struct MimlDataset {
    LabelVocabulary vocabulary;
    std::vector<MimlBag> bags;

    int n() const { return static_cast<int>(bags.size()); }

    // Dimension of segment features; 0 when every bag is empty.
    int instance_dim() const {
        for (const auto& bag : bags)
            if (!bag.instances.empty()) return static_cast<int>(bag.instances[0].size());
        return 0;
    }

    void validate() const {
        vocabulary.validate();
        std::set<std::string> ids;
        const int d = instance_dim();
        for (const auto& bag : bags) {
            if (!ids.insert(bag.id).second)
                throw std::runtime_error("dataset: duplicate bag id '" + bag.id + "'");
            if (bag.y.size() != vocabulary.size())
                throw std::runtime_error("dataset: label set size mismatch at bag '" + bag.id + "'");
            for (const auto& inst : bag.instances) {
                if (static_cast<int>(inst.size()) != d)
                    throw std::runtime_error("dataset: inconsistent segment dimension in bag '" + bag.id + "'");
                for (double v : inst)
                    if (!std::isfinite(v))
                        throw std::runtime_error("dataset: non-finite segment feature in bag '" + bag.id + "'");
            }
        }
    }
};

// ---------------------------------------------------------------------------
// MLC CSV: header `id,f1,...,fd,labels`; labels is a ;-separated list of
// vocabulary names, possibly empty.
// ---------------------------------------------------------------------------

inline MlcDataset load_mlc(const std::string& path, const LabelVocabulary& vocab) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw std::runtime_error(path + ": empty file");

    const auto header = split(lines[0], ',');
    if (header.size() < 2 || header.front() != "id" || header.back() != "labels")
        throw std::runtime_error(path + ": expected header id,f1,...,fd,labels");
    const std::size_t d = header.size() - 2;

    MlcDataset data;
    data.vocabulary = vocab;
    for (std::size_t row = 1; row < lines.size(); ++row) {
        if (lines[row].empty() && row + 1 == lines.size()) break;
        const std::string context = path + " row " + std::to_string(row + 1);
        const auto fields = split(lines[row], ',');
        if (fields.size() != d + 2)
            throw std::runtime_error(context + ": expected " + std::to_string(d + 2) + " fields, got " +
                                     std::to_string(fields.size()));
        MlcExample ex;
        ex.id = fields[0];
        if (ex.id.empty()) throw std::runtime_error(context + ": empty id");
        ex.x.reserve(d);
        for (std::size_t c = 0; c < d; ++c) {
            const double v = parse_double(fields[1 + c], context);
            if (!std::isfinite(v)) throw std::runtime_error(context + ": non-finite feature value");
            ex.x.push_back(v);
        }
        ex.y = label_set_from_field(fields.back(), vocab, context);
        data.examples.push_back(std::move(ex));
    }
    data.validate();
    return data;
}

inline void save_mlc(const MlcDataset& data, const std::string& path) {
    CsvWriter out(path);
    std::string header = "id";
    for (int c = 0; c < data.dim(); ++c) header += ",f" + std::to_string(c + 1);
    header += ",labels";
    out.raw_line(header);
    for (const auto& ex : data.examples) {
        std::string line = ex.id;
        for (double v : ex.x) line += "," + format_double(v);
        line += "," + label_set_to_field(ex.y, data.vocabulary);
        out.raw_line(line);
    }
    out.close();
}

// ---------------------------------------------------------------------------
// MIML CSV pair: segment file `bag_id,f1,...,fd` with one row per segment,
// label file `bag_id,labels`. Bags listed in the label file but absent from
// the segment file become empty bags.
// ---------------------------------------------------------------------------

inline MimlDataset load_miml(const std::string& features_path, const std::string& labels_path,
                             const LabelVocabulary& vocab) {
    const auto label_lines = read_lines(labels_path);
    if (label_lines.empty()) throw std::runtime_error(labels_path + ": empty file");
    if (split(label_lines[0], ',') != std::vector<std::string>{"bag_id", "labels"})
        throw std::runtime_error(labels_path + ": expected header bag_id,labels");

    MimlDataset data;
    data.vocabulary = vocab;
    std::map<std::string, std::size_t> bag_index;
    for (std::size_t row = 1; row < label_lines.size(); ++row) {
        if (label_lines[row].empty() && row + 1 == label_lines.size()) break;
        const std::string context = labels_path + " row " + std::to_string(row + 1);
        const auto fields = split(label_lines[row], ',');
        if (fields.size() != 2) throw std::runtime_error(context + ": expected 2 fields");
        MimlBag bag;
        bag.id = fields[0];
        if (bag.id.empty()) throw std::runtime_error(context + ": empty bag id");
        if (bag_index.count(bag.id)) throw std::runtime_error(context + ": duplicate bag id '" + bag.id + "'");
        bag.y = label_set_from_field(fields[1], vocab, context);
        bag_index[bag.id] = data.bags.size();
        data.bags.push_back(std::move(bag));
    }

    const auto seg_lines = read_lines(features_path);
    if (seg_lines.empty()) throw std::runtime_error(features_path + ": empty file");
    const auto header = split(seg_lines[0], ',');
    if (header.size() < 2 || header.front() != "bag_id")
        throw std::runtime_error(features_path + ": expected header bag_id,f1,...,fd");
    const std::size_t d = header.size() - 1;

    for (std::size_t row = 1; row < seg_lines.size(); ++row) {
        if (seg_lines[row].empty() && row + 1 == seg_lines.size()) break;
        const std::string context = features_path + " row " + std::to_string(row + 1);
        const auto fields = split(seg_lines[row], ',');
        if (fields.size() != d + 1)
            throw std::runtime_error(context + ": expected " + std::to_string(d + 1) + " fields, got " +
                                     std::to_string(fields.size()));
        const auto it = bag_index.find(fields[0]);
        if (it == bag_index.end())
            throw std::runtime_error(context + ": bag id '" + fields[0] + "' has no label row");
        std::vector<double> inst;
        inst.reserve(d);
        for (std::size_t c = 0; c < d; ++c) {
            const double v = parse_double(fields[1 + c], context);
            if (!std::isfinite(v)) throw std::runtime_error(context + ": non-finite segment feature");
            inst.push_back(v);
        }
        data.bags[it->second].instances.push_back(std::move(inst));
    }
    data.validate();
    return data;
}

// Reads a MIML segment CSV without requiring a label file; returns
// (bag id, segment vector) rows in file order. Used when only the pooled
// segments matter, e.g. to fit a codebook.
inline std::vector<std::pair<std::string, std::vector<double>>> load_segment_rows(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw std::runtime_error(path + ": empty file");
    const auto header = split(lines[0], ',');
    if (header.size() < 2 || header.front() != "bag_id")
        throw std::runtime_error(path + ": expected header bag_id,f1,...,fd");
    const std::size_t d = header.size() - 1;

    std::vector<std::pair<std::string, std::vector<double>>> rows;
    for (std::size_t row = 1; row < lines.size(); ++row) {
        if (lines[row].empty() && row + 1 == lines.size()) break;
        const std::string context = path + " row " + std::to_string(row + 1);
        const auto fields = split(lines[row], ',');
        if (fields.size() != d + 1)
            throw std::runtime_error(context + ": expected " + std::to_string(d + 1) + " fields");
        std::vector<double> values;
        values.reserve(d);
        for (std::size_t c = 0; c < d; ++c) {
            const double v = parse_double(fields[1 + c], context);
            if (!std::isfinite(v)) throw std::runtime_error(context + ": non-finite segment feature");
            values.push_back(v);
        }
        rows.emplace_back(fields[0], std::move(values));
    }
    return rows;
}

inline void save_miml(const MimlDataset& data, const std::string& features_path,
                      const std::string& labels_path) {
    const int d = data.instance_dim();
    CsvWriter seg(features_path);
    std::string header = "bag_id";
    for (int c = 0; c < d; ++c) header += ",f" + std::to_string(c + 1);
    seg.raw_line(header);
    for (const auto& bag : data.bags)
        for (const auto& inst : bag.instances) {
            std::string line = bag.id;
            for (double v : inst) line += "," + format_double(v);
            seg.raw_line(line);
        }
    seg.close();

    CsvWriter lab(labels_path);
    lab.raw_line("bag_id,labels");
    for (const auto& bag : data.bags)
        lab.raw_line(bag.id + "," + label_set_to_field(bag.y, data.vocabulary));
    lab.close();
}

// ---------------------------------------------------------------------------
// Fold plans
// ---------------------------------------------------------------------------

// Partition of example ids into near-equal folds. Assignment is plain uniform
// shuffling; externally produced fold files can be loaded instead.
struct FoldPlan {
    int fold_count = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> ids;   // in original dataset order
    std::vector<int> assignment;    // fold index per id

    int fold_for(const std::string& id) const {
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (ids[i] == id) return assignment[i];
        throw std::runtime_error("fold plan: unknown id '" + id + "'");
    }

    std::vector<int> fold_sizes() const {
        std::vector<int> sizes(static_cast<std::size_t>(fold_count), 0);
        for (int f : assignment) ++sizes[static_cast<std::size_t>(f)];
        return sizes;
    }

    void validate() const {
        if (fold_count < 1) throw std::runtime_error("fold plan: fold_count must be >= 1");
        if (ids.size() != assignment.size()) throw std::runtime_error("fold plan: id/assignment size mismatch");
        std::set<std::string> seen;
        for (const auto& id : ids)
            if (!seen.insert(id).second) throw std::runtime_error("fold plan: duplicate id '" + id + "'");
        for (int f : assignment)
            if (f < 0 || f >= fold_count) throw std::runtime_error("fold plan: fold index out of range");
    }

    void save(const std::string& path) const {
        CsvWriter out(path);
        out.raw_line("id,fold");
        for (std::size_t i = 0; i < ids.size(); ++i)
            out.raw_line(ids[i] + "," + std::to_string(assignment[i]));
        out.close();
    }

    static FoldPlan load(const std::string& path) {
        const auto lines = read_lines(path);
        if (lines.empty() || split(lines[0], ',') != std::vector<std::string>{"id", "fold"})
            throw std::runtime_error(path + ": expected header id,fold");
        FoldPlan plan;
        for (std::size_t row = 1; row < lines.size(); ++row) {
            if (lines[row].empty() && row + 1 == lines.size()) break;
            const std::string context = path + " row " + std::to_string(row + 1);
            const auto fields = split(lines[row], ',');
            if (fields.size() != 2) throw std::runtime_error(context + ": expected 2 fields");
            plan.ids.push_back(fields[0]);
            plan.assignment.push_back(static_cast<int>(parse_long(fields[1], context)));
        }
        for (int f : plan.assignment) plan.fold_count = std::max(plan.fold_count, f + 1);
        plan.validate();
        return plan;
    }
};

inline FoldPlan make_folds(const std::vector<std::string>& ids, int fold_count, std::uint64_t seed) {
    const int n = static_cast<int>(ids.size());
    if (fold_count < 2) throw std::runtime_error("make_folds: fold_count must be >= 2");
    if (fold_count > n)
        throw std::runtime_error("make_folds: fold_count " + std::to_string(fold_count) +
                                 " exceeds dataset size " + std::to_string(n));
    FoldPlan plan;
    plan.fold_count = fold_count;
    plan.seed = seed;
    plan.ids = ids;
    plan.assignment.assign(ids.size(), 0);

    std::vector<int> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng = Rng::stream(seed, 0xf01d5);
    rng.shuffle(order);
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        plan.assignment[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos % fold_count);
    plan.validate();
    return plan;
}

}  // namespace mlchains
