#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "episodic_maml/dataset.hpp"
#include "episodic_maml/errors.hpp"
#include "episodic_maml/json_util.hpp"
#include "episodic_maml/maml.hpp"
#include "episodic_maml/mlp.hpp"

namespace episodic_maml {

inline constexpr int kCheckpointFormatVersion = 1;

// Immutable training snapshot: the network, the standardization applied to its
// inputs, and enough of the run configuration to resume or evaluate it.
struct Checkpoint {
    int format_version = kCheckpointFormatVersion;
    MlpParameters parameters;
    NormStats norm_stats;          // empty when inputs were not standardized
    nlohmann::ordered_json config;  // echo of the run configuration
    int iterations_completed = 0;
    std::uint64_t seed = 0;

    bool operator==(const Checkpoint& other) const {
        return format_version == other.format_version && parameters == other.parameters &&
               norm_stats == other.norm_stats && config == other.config &&
               iterations_completed == other.iterations_completed && seed == other.seed;
    }
};

inline std::string checkpoint_to_json(const Checkpoint& c) {
    const auto& arch = c.parameters.arch;
    std::string out = "{\n";
    out += "  \"format_version\": " + std::to_string(c.format_version) + ",\n";
    out += "  \"arch\": {\"input_dim\": " + std::to_string(arch.input_dim) + ", \"hidden\": [";
    for (std::size_t i = 0; i < arch.hidden_widths.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(arch.hidden_widths[i]);
    }
    out += "], \"n_way\": " + std::to_string(arch.output_dim) + ", \"activation\": \"";
    out += to_string(arch.activation);
    out += "\"},\n";

    out += "  \"weights\": [";
    for (int l = 0; l < arch.layer_count(); ++l) {
        if (l) out += ", ";
        const auto w = c.parameters.weight(l);
        append_json_array(out, w);
    }
    out += "],\n  \"biases\": [";
    for (int l = 0; l < arch.layer_count(); ++l) {
        if (l) out += ", ";
        append_json_array(out, c.parameters.bias(l));
    }
    out += "],\n  \"norm_stats\": {\"mean\": ";
    append_json_array(out, c.norm_stats.mean);
    out += ", \"std\": ";
    append_json_array(out, c.norm_stats.std_dev);
    out += "},\n  \"config\": " + c.config.dump() + ",\n";
    out += "  \"iterations_completed\": " + std::to_string(c.iterations_completed) + ",\n";
    out += "  \"seed\": " + std::to_string(c.seed) + "\n";
    out += "}\n";
    return out;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << checkpoint_to_json(c);
    if (!out) throw IoError("failed writing checkpoint to '" + path + "'");
}

inline Checkpoint checkpoint_from_json(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: invalid JSON: ") + e.what());
    }

    Checkpoint c;
    try {
        c.format_version = j.at("format_version").get<int>();
        if (c.format_version != kCheckpointFormatVersion)
            throw VersionError("checkpoint: unsupported format_version " +
                               std::to_string(c.format_version));
        const auto& ja = j.at("arch");
        MlpArchitecture arch;
        arch.input_dim = ja.at("input_dim").get<int>();
        arch.hidden_widths = ja.at("hidden").get<std::vector<int>>();
        arch.output_dim = ja.at("n_way").get<int>();
        arch.activation = activation_from_string(ja.at("activation").get<std::string>());
        arch.validate();

        const auto weights = j.at("weights").get<std::vector<std::vector<double>>>();
        const auto biases = j.at("biases").get<std::vector<std::vector<double>>>();
        if (static_cast<int>(weights.size()) != arch.layer_count() ||
            static_cast<int>(biases.size()) != arch.layer_count())
            throw ValidationError("checkpoint: layer count does not match architecture");

        c.parameters.arch = arch;
        c.parameters.values.reserve(arch.parameter_count());
        const auto widths = arch.layer_widths();
        for (int l = 0; l < arch.layer_count(); ++l) {
            const std::size_t expect_w =
                static_cast<std::size_t>(widths[l + 1]) * widths[l];
            if (weights[l].size() != expect_w || biases[l].size() != static_cast<std::size_t>(widths[l + 1]))
                throw ValidationError("checkpoint: layer " + std::to_string(l) +
                                      " weight/bias shapes do not match architecture");
            c.parameters.values.insert(c.parameters.values.end(), weights[l].begin(),
                                       weights[l].end());
            c.parameters.values.insert(c.parameters.values.end(), biases[l].begin(),
                                       biases[l].end());
        }
        if (!c.parameters.all_finite())
            throw ValidationError("checkpoint: non-finite parameter values");

        const auto& js = j.at("norm_stats");
        c.norm_stats.mean = js.at("mean").get<std::vector<double>>();
        c.norm_stats.std_dev = js.at("std").get<std::vector<double>>();
        if (c.norm_stats.mean.size() != c.norm_stats.std_dev.size())
            throw ValidationError("checkpoint: norm_stats mean/std lengths differ");

        c.config = j.at("config");
        c.iterations_completed = j.at("iterations_completed").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: missing or mistyped field: ") + e.what());
    }
    return c;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_json(buf.str());
}

// {"meta_train": [...], "meta_test": [...], "tie_rule": "lex"} with class
// names listed lexicographically within each side
inline std::string meta_split_to_json(const MetaSplit& split, const ClassRegistry& registry) {
    auto names_of = [&](const std::vector<int>& ids) {
        std::vector<std::string> names;
        names.reserve(ids.size());
        for (int id : ids) names.push_back(registry.name_of(id));
        std::sort(names.begin(), names.end());
        return names;
    };
    std::string out = "{\n  \"meta_train\": [";
    bool first = true;
    for (const auto& n : names_of(split.meta_train_classes)) {
        if (!first) out += ", ";
        append_json_string(out, n);
        first = false;
    }
    out += "],\n  \"meta_test\": [";
    first = true;
    for (const auto& n : names_of(split.meta_test_classes)) {
        if (!first) out += ", ";
        append_json_string(out, n);
        first = false;
    }
    out += "],\n  \"tie_rule\": \"lex\"\n}\n";
    return out;
}

inline void save_meta_split(const std::string& path, const MetaSplit& split,
                            const ClassRegistry& registry) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << meta_split_to_json(split, registry);
    if (!out) throw IoError("failed writing meta split to '" + path + "'");
}

}  // namespace episodic_maml
