#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "episodic_maml/errors.hpp"

namespace episodic_maml {

// One labeled feature vector. class_id indexes into a ClassRegistry.
struct Instance {
    std::vector<double> features;
    int class_id = 0;
    std::string source;  // optional origin tag
};

// Ordered class table; a class id is its position in registration order.
class ClassRegistry {
public:
    int add_instance(const std::string& name) {
        const int id = ensure(name);
        entries_[id].second += 1;
        return id;
    }

    // registers a class with an explicit count (e.g. when building a registry
    // from published totals rather than rows)
    int add_class(const std::string& name, std::size_t count) {
        const int id = ensure(name);
        entries_[id].second += count;
        return id;
    }

    int id_of(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? -1 : it->second;
    }

    const std::string& name_of(int id) const { return entries_.at(id).first; }
    std::size_t count_of(int id) const { return entries_.at(id).second; }
    int size() const { return static_cast<int>(entries_.size()); }
    bool empty() const { return entries_.empty(); }

private:
    int ensure(const std::string& name) {
        auto it = index_.find(name);
        if (it != index_.end()) return it->second;
        const int id = static_cast<int>(entries_.size());
        entries_.emplace_back(name, 0);
        index_.emplace(name, id);
        return id;
    }

    std::vector<std::pair<std::string, std::size_t>> entries_;
    std::unordered_map<std::string, int> index_;
};

struct IngestResult {
    std::vector<Instance> instances;
    ClassRegistry registry;
};

namespace detail {

// Splits one CSV line on commas, honoring double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    if (end != begin + s.size()) return false;
    return std::isfinite(out);
}

}  // namespace detail

/// Reads a comma-delimited UTF-8 file with a header row. Every row becomes an
/// Instance whose features follow feature_columns order; the label column
/// supplies the class name.
inline IngestResult ingest_csv(const std::string& path, const std::string& label_column,
                               const std::vector<std::string>& feature_columns) {
    if (feature_columns.empty())
        throw ArgumentError("ingest_csv: feature_columns must not be empty");

    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("'" + path + "': missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = detail::split_csv_line(line);
    std::unordered_map<std::string, int> column_index;
    for (std::size_t i = 0; i < header.size(); ++i)
        column_index.emplace(header[i], static_cast<int>(i));

    auto find_column = [&](const std::string& name) {
        auto it = column_index.find(name);
        if (it == column_index.end())
            throw SchemaError("'" + path + "': header has no column '" + name + "'");
        return it->second;
    };

    const int label_idx = find_column(label_column);
    std::vector<int> feature_idx;
    feature_idx.reserve(feature_columns.size());
    for (const auto& name : feature_columns) feature_idx.push_back(find_column(name));

    IngestResult result;
    std::size_t row = 1;  // header is row 1
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw DataError("'" + path + "' row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        Instance inst;
        inst.features.reserve(feature_idx.size());
        for (std::size_t f = 0; f < feature_idx.size(); ++f) {
            double v = 0.0;
            if (!detail::parse_double(fields[feature_idx[f]], v))
                throw DataError("'" + path + "' row " + std::to_string(row) + ", column '" +
                                feature_columns[f] + "': non-numeric value '" +
                                fields[feature_idx[f]] + "'");
            inst.features.push_back(v);
        }
        inst.class_id = result.registry.add_instance(fields[label_idx]);
        result.instances.push_back(std::move(inst));
    }
    return result;
}

// Partition of *classes* into the data-rich side used for meta-training and
// the data-scarce side held out for meta-testing.
struct MetaSplit {
    std::vector<int> meta_train_classes;  // ascending class ids
    std::vector<int> meta_test_classes;   // ascending class ids

    bool is_test_class(int id) const {
        return std::binary_search(meta_test_classes.begin(), meta_test_classes.end(), id);
    }
};

/// Assigns the n_test_classes classes with the smallest instance counts to the
/// meta-test side; ties break by lexicographic class name.
inline MetaSplit split_by_scarcity(const ClassRegistry& registry, int n_test_classes) {
    if (n_test_classes < 0) throw ArgumentError("split_by_scarcity: n_test_classes must be >= 0");
    if (n_test_classes >= registry.size())
        throw ArgumentError("split_by_scarcity: n_test_classes (" +
                            std::to_string(n_test_classes) +
                            ") must be smaller than the class count (" +
                            std::to_string(registry.size()) + ")");
    std::vector<int> order(registry.size());
    for (int i = 0; i < registry.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (registry.count_of(a) != registry.count_of(b))
            return registry.count_of(a) < registry.count_of(b);
        return registry.name_of(a) < registry.name_of(b);
    });
    MetaSplit split;
    split.meta_test_classes.assign(order.begin(), order.begin() + n_test_classes);
    split.meta_train_classes.assign(order.begin() + n_test_classes, order.end());
    std::sort(split.meta_test_classes.begin(), split.meta_test_classes.end());
    std::sort(split.meta_train_classes.begin(), split.meta_train_classes.end());
    return split;
}

// Per-feature standardization statistics. std entries are clamped below at
// kStdFloor so constant columns map to zero instead of dividing by zero.
struct NormStats {
    static constexpr double kStdFloor = 1e-8;

    std::vector<double> mean;
    std::vector<double> std_dev;

    int dim() const { return static_cast<int>(mean.size()); }
    bool empty() const { return mean.empty(); }

    bool operator==(const NormStats&) const = default;
};

/// Mean and (population) standard deviation per feature over the given
/// instances. Call on meta-train data only, so the held-out side never leaks
/// into the statistics.
inline NormStats compute_norm_stats(const std::vector<Instance>& instances) {
    if (instances.empty()) throw ArgumentError("compute_norm_stats: no instances");
    const std::size_t d = instances.front().features.size();
    for (const auto& inst : instances)
        if (inst.features.size() != d)
            throw ShapeError("compute_norm_stats: inconsistent feature widths");

    NormStats stats;
    stats.mean.assign(d, 0.0);
    stats.std_dev.assign(d, 0.0);
    const double n = static_cast<double>(instances.size());
    for (const auto& inst : instances)
        for (std::size_t j = 0; j < d; ++j) stats.mean[j] += inst.features[j];
    for (std::size_t j = 0; j < d; ++j) stats.mean[j] /= n;
    for (const auto& inst : instances)
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = inst.features[j] - stats.mean[j];
            stats.std_dev[j] += dv * dv;
        }
    for (std::size_t j = 0; j < d; ++j)
        stats.std_dev[j] = std::max(std::sqrt(stats.std_dev[j] / n), NormStats::kStdFloor);
    return stats;
}

/// x <- (x - mean) / std, elementwise, returning transformed copies.
inline std::vector<Instance> apply_standardization(const std::vector<Instance>& instances,
                                                   const NormStats& stats) {
    std::vector<Instance> out;
    out.reserve(instances.size());
    for (const auto& inst : instances) {
        if (static_cast<int>(inst.features.size()) != stats.dim())
            throw ShapeError("apply_standardization: instance width " +
                             std::to_string(inst.features.size()) +
                             " does not match stats width " + std::to_string(stats.dim()));
        Instance copy = inst;
        for (int j = 0; j < stats.dim(); ++j)
            copy.features[j] = (copy.features[j] - stats.mean[j]) / stats.std_dev[j];
        out.push_back(std::move(copy));
    }
    return out;
}

}  // namespace episodic_maml
