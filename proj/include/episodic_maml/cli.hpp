#pragma once

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "episodic_maml/checkpoint.hpp"
#include "episodic_maml/dataset.hpp"
#include "episodic_maml/episodes.hpp"
#include "episodic_maml/errors.hpp"
#include "episodic_maml/gradcheck.hpp"
#include "episodic_maml/json_util.hpp"
#include "episodic_maml/maml.hpp"
#include "episodic_maml/metrics.hpp"
#include "episodic_maml/mlp.hpp"
#include "episodic_maml/parallel.hpp"

namespace episodic_maml {

using json = nlohmann::ordered_json;

// exit codes shared by every command
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitNumericCheckFailure = 3;

// Everything a run needs, grouped the way the JSON config file is.
struct RunConfig {
    EpisodeConfig episode;
    MamlConfig maml;

    std::vector<int> hidden_widths{80, 80, 80};
    Activation activation = Activation::relu;

    std::string csv_path;
    std::string label_column;
    std::vector<std::string> feature_columns;
    int n_test_classes = 5;

    int synthetic_dim = 20;
    double synthetic_cluster_std = 0.5;

    std::string checkpoint_path = "checkpoint.json";
    std::string report_path = "metrics.jsonl";
    std::string train_log_path = "train_log.jsonl";
    std::string baseline_report_path = "baseline_metrics.jsonl";
    std::string split_path = "meta_split.json";

    json echo;  // the merged config document, echoed into checkpoints

    MlpArchitecture architecture(int input_dim) const {
        return {input_dim, hidden_widths, episode.n_way, activation};
    }

    SyntheticTaskConfig synthetic_config() const {
        return {episode.n_way, episode.k_shot, episode.q_query, synthetic_dim,
                synthetic_cluster_std};
    }

    void validate() const {
        episode.validate();
        maml.validate();
        if (hidden_widths.empty()) throw ArgumentError("model: hidden must not be empty");
        for (int h : hidden_widths)
            if (h < 1) throw ArgumentError("model: hidden widths must be >= 1");
        if (n_test_classes < 0) throw ArgumentError("data: n_test_classes must be >= 0");
        synthetic_config().validate();
        if (!episode.query_exceeds_shot())
            std::cerr << "warning: q_query (" << episode.q_query << ") <= k_shot ("
                      << episode.k_shot << "); the convention is Q > K\n";
    }
};

inline json default_run_config_json() {
    json j;
    j["episode"] = {{"n_way", 2}, {"k_shot", 5}, {"q_query", 15}};
    j["maml"] = {{"alpha", 0.001},
                 {"beta", 0.001},
                 {"meta_iterations", 5000},
                 {"meta_batch_size", 25},
                 {"adaptation_steps", 1},
                 {"grad_mode", "first_order"},
                 {"seed", 1},
                 {"test_batches", 30},
                 {"test_batch_size", 25}};
    j["model"] = {{"hidden", {80, 80, 80}}, {"activation", "relu"}};
    j["data"] = {{"csv", ""},
                 {"label_column", ""},
                 {"feature_columns", json::array()},
                 {"n_test_classes", 5}};
    j["synthetic"] = {{"dim", 20}, {"cluster_std", 0.5}};
    j["io"] = {{"checkpoint", "checkpoint.json"},
               {"report", "metrics.jsonl"},
               {"train_log", "train_log.jsonl"},
               {"baseline_report", "baseline_metrics.jsonl"},
               {"split", "meta_split.json"}};
    return j;
}

namespace detail {

// deep-merges src over dst; every key in src must already exist in dst, so
// typos in config files fail loudly instead of silently using a default
inline void merge_config(json& dst, const json& src, const std::string& prefix) {
    if (!src.is_object())
        throw ArgumentError("config: expected an object at '" +
                            (prefix.empty() ? std::string("<root>") : prefix) + "'");
    for (const auto& [key, value] : src.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!dst.contains(key)) throw ArgumentError("config: unknown field '" + path + "'");
        if (dst[key].is_object() && !value.is_object())
            throw ArgumentError("config: '" + path + "' must be an object");
        if (dst[key].is_object())
            merge_config(dst[key], value, path);
        else
            dst[key] = value;
    }
}

template <typename T>
T get_field(const json& j, const std::string& group, const std::string& key) {
    try {
        return j.at(group).at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError("config: bad value for '" + group + "." + key + "': " + e.what());
    }
}

}  // namespace detail

/// key=value override with a dotted path, e.g. "maml.alpha=0.01" or
/// "model.hidden=[40,40]". The value is parsed as JSON when possible and
/// treated as a string otherwise.
inline void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ArgumentError("--set expects key=value, got '" + assignment + "'");
    const std::string key_path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    json* node = &config;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key_path.find('.', start);
        const std::string key = key_path.substr(start, dot - start);
        if (!node->is_object() || !node->contains(key))
            throw ArgumentError("--set: unknown config field '" + key_path + "'");
        if (dot == std::string::npos) {
            if ((*node)[key].is_object())
                throw ArgumentError("--set: '" + key_path + "' is a group, not a field");
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

inline RunConfig parse_run_config(const json& merged) {
    RunConfig cfg;
    cfg.episode.n_way = detail::get_field<int>(merged, "episode", "n_way");
    cfg.episode.k_shot = detail::get_field<int>(merged, "episode", "k_shot");
    cfg.episode.q_query = detail::get_field<int>(merged, "episode", "q_query");

    cfg.maml.alpha = detail::get_field<double>(merged, "maml", "alpha");
    cfg.maml.beta = detail::get_field<double>(merged, "maml", "beta");
    cfg.maml.meta_iterations = detail::get_field<int>(merged, "maml", "meta_iterations");
    cfg.maml.meta_batch_size = detail::get_field<int>(merged, "maml", "meta_batch_size");
    cfg.maml.adaptation_steps = detail::get_field<int>(merged, "maml", "adaptation_steps");
    cfg.maml.grad_mode =
        grad_mode_from_string(detail::get_field<std::string>(merged, "maml", "grad_mode"));
    cfg.maml.seed = detail::get_field<std::uint64_t>(merged, "maml", "seed");
    cfg.maml.test_batches = detail::get_field<int>(merged, "maml", "test_batches");
    cfg.maml.test_batch_size = detail::get_field<int>(merged, "maml", "test_batch_size");

    cfg.hidden_widths = detail::get_field<std::vector<int>>(merged, "model", "hidden");
    cfg.activation =
        activation_from_string(detail::get_field<std::string>(merged, "model", "activation"));

    cfg.csv_path = detail::get_field<std::string>(merged, "data", "csv");
    cfg.label_column = detail::get_field<std::string>(merged, "data", "label_column");
    cfg.feature_columns =
        detail::get_field<std::vector<std::string>>(merged, "data", "feature_columns");
    cfg.n_test_classes = detail::get_field<int>(merged, "data", "n_test_classes");

    cfg.synthetic_dim = detail::get_field<int>(merged, "synthetic", "dim");
    cfg.synthetic_cluster_std = detail::get_field<double>(merged, "synthetic", "cluster_std");

    cfg.checkpoint_path = detail::get_field<std::string>(merged, "io", "checkpoint");
    cfg.report_path = detail::get_field<std::string>(merged, "io", "report");
    cfg.train_log_path = detail::get_field<std::string>(merged, "io", "train_log");
    cfg.baseline_report_path =
        detail::get_field<std::string>(merged, "io", "baseline_report");
    cfg.split_path = detail::get_field<std::string>(merged, "io", "split");

    cfg.echo = merged;
    return cfg;
}

/// Loads defaults, merges an optional config file, applies --set overrides,
/// and validates the result.
inline RunConfig load_run_config(const std::string& config_path,
                                 const std::vector<std::string>& overrides) {
    json merged = default_run_config_json();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ArgumentError("cannot open config file '" + config_path + "'");
        json from_file;
        try {
            in >> from_file;
        } catch (const nlohmann::json::exception& e) {
            throw ArgumentError("config file '" + config_path + "': " + e.what());
        }
        detail::merge_config(merged, from_file, "");
    }
    for (const auto& assignment : overrides) apply_override(merged, assignment);
    RunConfig cfg = parse_run_config(merged);
    cfg.validate();
    return cfg;
}

namespace detail {

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& line : lines) out << line << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline void write_metrics_report(const std::string& path,
                                 const std::vector<MetricsRecord>& records) {
    std::vector<std::string> lines;
    lines.reserve(records.size());
    for (const auto& r : records) lines.push_back(metrics_record_json(r));
    write_lines(path, lines);
}

inline void write_train_log(const std::string& path, const std::vector<TrainLogRecord>& log) {
    std::vector<std::string> lines;
    lines.reserve(log.size());
    for (const auto& r : log) {
        std::string line = "{\"iteration\": " + std::to_string(r.iteration);
        line += ", \"pre_adapt_query_loss\": ";
        append_json_number(line, r.pre_adapt_query_loss);
        line += ", \"post_adapt_query_loss\": ";
        append_json_number(line, r.post_adapt_query_loss);
        line += "}";
        lines.push_back(std::move(line));
    }
    write_lines(path, lines);
}

struct DatasetPools {
    IngestResult data;
    MetaSplit split;
};

inline DatasetPools load_dataset(const RunConfig& cfg) {
    if (cfg.csv_path.empty()) throw ArgumentError("data.csv is required for this command");
    if (cfg.label_column.empty())
        throw ArgumentError("data.label_column is required for this command");
    if (cfg.feature_columns.empty())
        throw ArgumentError("data.feature_columns is required for this command");
    DatasetPools pools;
    pools.data = ingest_csv(cfg.csv_path, cfg.label_column, cfg.feature_columns);
    if (pools.data.registry.empty()) throw DataError("'" + cfg.csv_path + "': no data rows");
    pools.split = split_by_scarcity(pools.data.registry, cfg.n_test_classes);
    return pools;
}

inline MetricsRecord overall(const std::vector<MetricsRecord>& records) {
    return aggregate_metrics(records, 0);
}

}  // namespace detail

inline int cmd_split(const RunConfig& cfg) {
    const auto pools = detail::load_dataset(cfg);
    save_meta_split(cfg.split_path, pools.split, pools.data.registry);
    std::cout << "classes: " << pools.data.registry.size() << ", instances: "
              << pools.data.instances.size() << "\n";
    std::cout << "meta-test classes (" << pools.split.meta_test_classes.size() << "):";
    for (int id : pools.split.meta_test_classes)
        std::cout << " '" << pools.data.registry.name_of(id) << "'";
    std::cout << "\nwrote " << cfg.split_path << "\n";
    return kExitOk;
}

inline int cmd_meta_train(const RunConfig& cfg) {
    const auto pools = detail::load_dataset(cfg);
    const int threads = resolve_threads();

    auto train_pool =
        build_meta_train_pool(pools.data.instances, pools.split, &pools.data.registry);
    const auto stats = compute_norm_stats(train_pool);
    train_pool = train_pool.standardized(stats);

    const auto arch = cfg.architecture(static_cast<int>(cfg.feature_columns.size()));
    const auto result = meta_train(train_pool, cfg.episode, arch, cfg.maml, threads);

    Checkpoint ckpt;
    ckpt.parameters = result.parameters;
    ckpt.norm_stats = stats;
    ckpt.config = cfg.echo;
    ckpt.iterations_completed = cfg.maml.meta_iterations;
    ckpt.seed = cfg.maml.seed;
    save_checkpoint(cfg.checkpoint_path, ckpt);
    detail::write_train_log(cfg.train_log_path, result.log);

    std::cout << "meta-trained " << cfg.maml.meta_iterations << " iterations ("
              << to_string(cfg.maml.grad_mode) << ", threads=" << threads << ")\n";
    if (!result.log.empty())
        std::cout << "final post-adaptation query loss: "
                  << result.log.back().post_adapt_query_loss << "\n";
    std::cout << "wrote " << cfg.checkpoint_path << " and " << cfg.train_log_path << "\n";
    return kExitOk;
}

inline int cmd_meta_test(const RunConfig& cfg) {
    const auto ckpt = load_checkpoint(cfg.checkpoint_path);
    const auto pools = detail::load_dataset(cfg);
    const int threads = resolve_threads();

    auto test_pool =
        build_meta_test_pool(pools.data.instances, pools.split, &pools.data.registry);
    if (!ckpt.norm_stats.empty()) test_pool = test_pool.standardized(ckpt.norm_stats);
    if (test_pool.feature_dim() != ckpt.parameters.arch.input_dim)
        throw ValidationError("checkpoint expects input_dim " +
                              std::to_string(ckpt.parameters.arch.input_dim) +
                              " but the dataset provides " +
                              std::to_string(test_pool.feature_dim()) + " features");
    if (ckpt.parameters.arch.output_dim != cfg.episode.n_way)
        throw ArgumentError("checkpoint was trained for n_way=" +
                            std::to_string(ckpt.parameters.arch.output_dim) +
                            " but episode.n_way is " + std::to_string(cfg.episode.n_way));

    const auto records = meta_test(ckpt.parameters, test_pool, cfg.episode, cfg.maml, threads);
    detail::write_metrics_report(cfg.report_path, records);

    if (!records.empty()) {
        const auto mean = detail::overall(records);
        std::cout << "meta-test over " << records.size() << " batches x "
                  << cfg.maml.test_batch_size << " tasks: accuracy " << mean.accuracy
                  << ", precision " << mean.precision << ", recall " << mean.recall
                  << ", loss " << mean.loss << "\n";
    }
    std::cout << "wrote " << cfg.report_path << "\n";
    return kExitOk;
}

inline int cmd_baseline(const RunConfig& cfg) {
    const auto ckpt = load_checkpoint(cfg.checkpoint_path);
    const auto pools = detail::load_dataset(cfg);
    const int threads = resolve_threads();

    auto test_pool =
        build_meta_test_pool(pools.data.instances, pools.split, &pools.data.registry);
    if (!ckpt.norm_stats.empty()) test_pool = test_pool.standardized(ckpt.norm_stats);
    if (test_pool.feature_dim() != ckpt.parameters.arch.input_dim)
        throw ValidationError("checkpoint expects input_dim " +
                              std::to_string(ckpt.parameters.arch.input_dim) +
                              " but the dataset provides " +
                              std::to_string(test_pool.feature_dim()) + " features");
    if (ckpt.parameters.arch.output_dim != cfg.episode.n_way)
        throw ArgumentError("checkpoint was trained for n_way=" +
                            std::to_string(ckpt.parameters.arch.output_dim) +
                            " but episode.n_way is " + std::to_string(cfg.episode.n_way));

    PoolEpisodeSource source(test_pool, cfg.episode);
    const auto records =
        scratch_baseline_run(ckpt.parameters.arch, source, cfg.maml, threads);
    detail::write_metrics_report(cfg.baseline_report_path, records);

    if (!records.empty()) {
        const auto mean = detail::overall(records);
        std::cout << "scratch baseline over " << records.size() << " batches: accuracy "
                  << mean.accuracy << ", loss " << mean.loss << "\n";
    }
    std::cout << "wrote " << cfg.baseline_report_path << "\n";
    return kExitOk;
}

inline int cmd_synth_bench(const RunConfig& cfg) {
    const int threads = resolve_threads();
    const SyntheticEpisodeSource source(cfg.synthetic_config());
    const auto arch = cfg.architecture(cfg.synthetic_dim);

    const auto result = meta_train(source, arch, cfg.maml, threads);

    Checkpoint ckpt;
    ckpt.parameters = result.parameters;
    ckpt.config = cfg.echo;
    ckpt.iterations_completed = cfg.maml.meta_iterations;
    ckpt.seed = cfg.maml.seed;
    save_checkpoint(cfg.checkpoint_path, ckpt);
    detail::write_train_log(cfg.train_log_path, result.log);

    const auto meta_records = meta_test(result.parameters, source, cfg.maml, threads);
    detail::write_metrics_report(cfg.report_path, meta_records);

    const auto base_records = scratch_baseline_run(arch, source, cfg.maml, threads);
    detail::write_metrics_report(cfg.baseline_report_path, base_records);

    std::cout << "synthetic benchmark: " << cfg.episode.n_way << "-way " << cfg.episode.k_shot
              << "-shot, dim " << cfg.synthetic_dim << ", cluster_std "
              << cfg.synthetic_cluster_std << "\n";
    if (!meta_records.empty() && !base_records.empty()) {
        const auto meta = detail::overall(meta_records);
        const auto base = detail::overall(base_records);
        std::cout << "meta-learned accuracy: " << meta.accuracy
                  << "  scratch accuracy: " << base.accuracy << "\n";
    }
    std::cout << "wrote " << cfg.checkpoint_path << ", " << cfg.train_log_path << ", "
              << cfg.report_path << ", " << cfg.baseline_report_path << "\n";
    return kExitOk;
}

inline int cmd_gradcheck(const RunConfig& cfg) {
    const auto report = run_gradcheck(cfg.maml.seed);
    std::cout << "max gradient rel error:      " << report.max_gradient_rel_error
              << "  (tolerance " << GradCheckReport::kGradientTolerance << ")\n";
    std::cout << "max HVP rel error:           " << report.max_hvp_rel_error
              << "  (tolerance " << GradCheckReport::kHvpTolerance << ")\n";
    std::cout << "max HVP symmetry rel error:  " << report.max_hvp_symmetry_error
              << "  (tolerance " << GradCheckReport::kSymmetryTolerance << ")\n";
    if (!report.passed()) {
        std::cout << "gradcheck FAILED\n";
        return kExitNumericCheckFailure;
    }
    std::cout << "gradcheck passed\n";
    return kExitOk;
}

/// Dispatches one command. Throws typed errors; run_cli maps them to exit codes.
inline int execute(const std::string& command, const RunConfig& cfg) {
    if (command == "split") return cmd_split(cfg);
    if (command == "meta-train") return cmd_meta_train(cfg);
    if (command == "meta-test") return cmd_meta_test(cfg);
    if (command == "baseline") return cmd_baseline(cfg);
    if (command == "synth-bench") return cmd_synth_bench(cfg);
    if (command == "gradcheck") return cmd_gradcheck(cfg);
    throw ArgumentError("unknown command '" + command + "'");
}

inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Few-shot meta-learning (MAML) for classifying refactoring opportunities "
                 "from tabular code metrics"};
    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "JSON run configuration file");
    app.add_option("--set", overrides,
                   "override one config field, e.g. --set maml.alpha=0.01 (repeatable)");

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"split", "ingest the CSV and write the scarcity-based class split"},
        {"meta-train", "meta-train on the data-rich classes and write a checkpoint"},
        {"meta-test", "adapt a checkpoint to the data-scarce classes and report metrics"},
        {"baseline", "train from scratch on the same test episodes and report metrics"},
        {"synth-bench", "meta-train + meta-test + baseline on synthetic tasks (no dataset)"},
        {"gradcheck", "run the numeric self-checks and print max relative errors"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();
    app.require_subcommand(0, 1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kExitConfigError;
    }

    const auto chosen = app.get_subcommands();
    if (chosen.empty()) {
        std::cerr << "error: a command is required\n\n" << app.help();
        return kExitConfigError;
    }

    try {
        const RunConfig cfg = load_run_config(config_path, overrides);
        return execute(chosen.front()->get_name(), cfg);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDataError;
    }
}

}  // namespace episodic_maml
