#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "episodic_maml/episodes.hpp"
#include "episodic_maml/errors.hpp"
#include "episodic_maml/metrics.hpp"
#include "episodic_maml/mlp.hpp"
#include "episodic_maml/parallel.hpp"
#include "episodic_maml/rng.hpp"

namespace episodic_maml {

// first_order drops the Hessian term of the outer gradient (FOMAML); exact
// applies the full (I - alpha H) correction through Hessian-vector products.
enum class GradMode { first_order, exact };

inline const char* to_string(GradMode m) {
    return m == GradMode::first_order ? "first_order" : "exact";
}

inline GradMode grad_mode_from_string(const std::string& s) {
    if (s == "first_order") return GradMode::first_order;
    if (s == "exact") return GradMode::exact;
    throw ArgumentError("unknown grad_mode '" + s + "' (expected first_order or exact)");
}

struct MamlConfig {
    double alpha = 0.001;          // inner (task adaptation) step size
    double beta = 0.001;           // outer (meta update) step size
    int meta_iterations = 5000;
    int meta_batch_size = 25;      // m, tasks per outer iteration
    int adaptation_steps = 1;      // L, inner gradient steps
    GradMode grad_mode = GradMode::first_order;
    std::uint64_t seed = 1;
    int test_batches = 30;         // batches evaluated during meta-test
    int test_batch_size = 25;      // p, tasks per meta-test batch

    void validate() const {
        if (!(alpha > 0.0)) throw ArgumentError("maml: alpha must be > 0");
        if (!(beta > 0.0)) throw ArgumentError("maml: beta must be > 0");
        if (meta_iterations < 0) throw ArgumentError("maml: meta_iterations must be >= 0");
        if (meta_batch_size < 1) throw ArgumentError("maml: meta_batch_size must be >= 1");
        if (adaptation_steps < 1) throw ArgumentError("maml: adaptation_steps must be >= 1");
        if (test_batches < 0) throw ArgumentError("maml: test_batches must be >= 0");
        if (test_batch_size < 1) throw ArgumentError("maml: test_batch_size must be >= 1");
    }
};

// rng stream tags hung off the master seed
inline constexpr std::uint64_t kTrainSamplingStream = 1;
inline constexpr std::uint64_t kTestSamplingStream = 2;
inline constexpr std::uint64_t kBaselineInitStream = 0x42000000;  // + episode ordinal

/// Full-batch gradient descent on the support loss: theta after `steps` steps
/// of size alpha. The input is never modified.
inline MlpParameters inner_adapt(const MlpParameters& theta, const LabeledBatch& support,
                                 int steps, double alpha) {
    if (support.size() < 1) throw ArgumentError("inner_adapt: support set is empty");
    if (steps < 0) throw ArgumentError("inner_adapt: steps must be >= 0");
    MlpParameters adapted = theta;
    for (int s = 0; s < steps; ++s) {
        const auto g = loss_gradient(adapted, support);
        for (std::size_t j = 0; j < adapted.values.size(); ++j)
            adapted.values[j] -= alpha * g.grad[j];
    }
    return adapted;
}

namespace detail {

struct EpisodeContribution {
    std::vector<double> grad;  // d/dtheta of this episode's post-adaptation query loss
    double pre_loss = 0.0;     // query loss at theta, before adaptation
    double post_loss = 0.0;    // query loss at the adapted parameters
};

inline EpisodeContribution episode_meta_gradient(const MlpParameters& theta,
                                                 const Episode& episode, double alpha,
                                                 int steps, GradMode mode,
                                                 bool want_pre_loss) {
    EpisodeContribution out;
    if (want_pre_loss) out.pre_loss = loss(theta, episode.query);

    // inner trajectory; iterates are kept only when the exact mode needs to
    // backpropagate through them
    std::vector<MlpParameters> iterates;
    MlpParameters adapted = theta;
    for (int s = 0; s < steps; ++s) {
        if (mode == GradMode::exact) iterates.push_back(adapted);
        const auto g = loss_gradient(adapted, episode.support);
        for (std::size_t j = 0; j < adapted.values.size(); ++j)
            adapted.values[j] -= alpha * g.grad[j];
    }

    auto query = loss_gradient(adapted, episode.query);
    out.post_loss = query.loss;
    out.grad = std::move(query.grad);

    if (mode == GradMode::exact) {
        // d theta_i / d theta = prod_k (I - alpha H_support(theta_k)); apply
        // the transposed chain to the query gradient, newest iterate first
        for (int s = steps - 1; s >= 0; --s) {
            const auto hv = hessian_vector_product(iterates[s], episode.support, out.grad);
            for (std::size_t j = 0; j < out.grad.size(); ++j)
                out.grad[j] -= alpha * hv[j];
        }
    }
    return out;
}

}  // namespace detail

/// Outer-loop gradient of the mean post-adaptation query loss over a task
/// batch. Episodes may be evaluated concurrently; the reduction always runs in
/// ascending episode order, so results do not depend on the thread count.
inline std::vector<double> meta_gradient(const MlpParameters& theta,
                                         const std::vector<Episode>& episodes, double alpha,
                                         int steps, GradMode mode, int threads = 1) {
    if (episodes.empty()) throw ArgumentError("meta_gradient: episode list is empty");
    std::vector<detail::EpisodeContribution> contributions(episodes.size());
    parallel_for(episodes.size(), threads, [&](std::size_t i) {
        contributions[i] =
            detail::episode_meta_gradient(theta, episodes[i], alpha, steps, mode, false);
    });
    std::vector<double> grad(theta.size(), 0.0);
    for (const auto& c : contributions)
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += c.grad[j];
    const double inv_m = 1.0 / static_cast<double>(episodes.size());
    for (double& g : grad) g *= inv_m;
    return grad;
}

struct TrainLogRecord {
    int iteration = 0;
    double pre_adapt_query_loss = 0.0;
    double post_adapt_query_loss = 0.0;
};

struct TrainResult {
    MlpParameters parameters;
    std::vector<TrainLogRecord> log;
};

/// Meta-training: initialize theta from the seed, then for each meta-iteration
/// sample a task batch, adapt per task on its support set, and descend theta
/// along the mean outer gradient of the post-adaptation query losses.
inline TrainResult meta_train(const EpisodeSource& source, const MlpArchitecture& arch,
                              const MamlConfig& cfg, int threads = 1) {
    arch.validate();
    cfg.validate();
    if (arch.output_dim != source.n_way())
        throw ArgumentError("meta_train: architecture output_dim " +
                            std::to_string(arch.output_dim) + " != episode n_way " +
                            std::to_string(source.n_way()));

    TrainResult result;
    result.parameters = init_parameters(arch, cfg.seed);
    result.log.reserve(cfg.meta_iterations);
    Rng rng(derive_seed(cfg.seed, kTrainSamplingStream));

    std::vector<detail::EpisodeContribution> contributions(cfg.meta_batch_size);
    for (int it = 0; it < cfg.meta_iterations; ++it) {
        const auto episodes = sample_episode_batch(source, cfg.meta_batch_size, rng);
        parallel_for(episodes.size(), threads, [&](std::size_t i) {
            contributions[i] = detail::episode_meta_gradient(
                result.parameters, episodes[i], cfg.alpha, cfg.adaptation_steps,
                cfg.grad_mode, true);
        });

        TrainLogRecord rec;
        rec.iteration = it;
        std::vector<double> grad(result.parameters.size(), 0.0);
        for (const auto& c : contributions) {
            for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += c.grad[j];
            rec.pre_adapt_query_loss += c.pre_loss;
            rec.post_adapt_query_loss += c.post_loss;
        }
        const double inv_m = 1.0 / static_cast<double>(cfg.meta_batch_size);
        rec.pre_adapt_query_loss *= inv_m;
        rec.post_adapt_query_loss *= inv_m;
        for (std::size_t j = 0; j < grad.size(); ++j) {
            grad[j] *= inv_m;
            result.parameters.values[j] -= cfg.beta * grad[j];
        }
        result.log.push_back(rec);
    }
    return result;
}

inline TrainResult meta_train(const EpisodePool& pool, const EpisodeConfig& episode_cfg,
                              const MlpArchitecture& arch, const MamlConfig& cfg,
                              int threads = 1) {
    PoolEpisodeSource source(pool, episode_cfg);
    if (arch.input_dim != pool.feature_dim())
        throw ArgumentError("meta_train: architecture input_dim " +
                            std::to_string(arch.input_dim) + " != pool feature width " +
                            std::to_string(pool.feature_dim()));
    return meta_train(source, arch, cfg, threads);
}

/// Meta-test: per batch of p tasks, adapt a copy of theta on each task's
/// support set, score the query set, and record the batch mean. theta itself
/// is never mutated. Records are ordered by batch index.
inline std::vector<MetricsRecord> meta_test(const MlpParameters& theta,
                                            const EpisodeSource& source,
                                            const MamlConfig& cfg, int threads = 1) {
    cfg.validate();
    if (theta.arch.output_dim != source.n_way())
        throw ArgumentError("meta_test: network output_dim " +
                            std::to_string(theta.arch.output_dim) + " != episode n_way " +
                            std::to_string(source.n_way()));

    Rng rng(derive_seed(cfg.seed, kTestSamplingStream));
    std::vector<MetricsRecord> records;
    records.reserve(cfg.test_batches);
    for (int b = 0; b < cfg.test_batches; ++b) {
        const auto episodes = sample_episode_batch(source, cfg.test_batch_size, rng);
        std::vector<MetricsRecord> batch(episodes.size());
        parallel_for(episodes.size(), threads, [&](std::size_t i) {
            const auto adapted =
                inner_adapt(theta, episodes[i].support, cfg.adaptation_steps, cfg.alpha);
            const auto logits = forward(adapted, episodes[i].query);
            batch[i] = episode_metrics(logits, episodes[i].query.labels,
                                       theta.arch.output_dim);
        });
        records.push_back(aggregate_metrics(batch, b));
    }
    return records;
}

inline std::vector<MetricsRecord> meta_test(const MlpParameters& theta, const EpisodePool& pool,
                                            const EpisodeConfig& episode_cfg,
                                            const MamlConfig& cfg, int threads = 1) {
    PoolEpisodeSource source(pool, episode_cfg);
    return meta_test(theta, source, cfg, threads);
}

/// Comparison harness: train a freshly initialized network on the episode's
/// support set alone, then score its query set.
inline MetricsRecord scratch_baseline(const MlpArchitecture& arch, const Episode& episode,
                                      int steps, double alpha, std::uint64_t seed) {
    const auto fresh = init_parameters(arch, seed);
    const auto adapted = inner_adapt(fresh, episode.support, steps, alpha);
    const auto logits = forward(adapted, episode.query);
    return episode_metrics(logits, episode.query.labels, arch.output_dim);
}

/// Scratch baseline over the exact episode stream meta_test(theta, source,
/// cfg) would evaluate: same seed-derived sampling, one fresh net per episode.
inline std::vector<MetricsRecord> scratch_baseline_run(const MlpArchitecture& arch,
                                                       const EpisodeSource& source,
                                                       const MamlConfig& cfg,
                                                       int threads = 1) {
    cfg.validate();
    arch.validate();
    Rng rng(derive_seed(cfg.seed, kTestSamplingStream));
    std::vector<MetricsRecord> records;
    records.reserve(cfg.test_batches);
    std::uint64_t ordinal = 0;
    for (int b = 0; b < cfg.test_batches; ++b) {
        const auto episodes = sample_episode_batch(source, cfg.test_batch_size, rng);
        std::vector<MetricsRecord> batch(episodes.size());
        parallel_for(episodes.size(), threads, [&](std::size_t i) {
            batch[i] = scratch_baseline(arch, episodes[i], cfg.adaptation_steps, cfg.alpha,
                                        derive_seed(cfg.seed, kBaselineInitStream + ordinal + i));
        });
        ordinal += episodes.size();
        records.push_back(aggregate_metrics(batch, b));
    }
    return records;
}

}  // namespace episodic_maml
