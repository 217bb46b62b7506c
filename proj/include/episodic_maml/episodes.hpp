#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "episodic_maml/dataset.hpp"
#include "episodic_maml/errors.hpp"
#include "episodic_maml/mlp.hpp"
#include "episodic_maml/rng.hpp"

namespace episodic_maml {

// Shape of one few-shot task: N classes, K support and Q query rows per class.
struct EpisodeConfig {
    int n_way = 2;
    int k_shot = 5;
    int q_query = 15;

    void validate() const {
        if (n_way < 2) throw ArgumentError("episode: n_way must be >= 2");
        if (k_shot < 1) throw ArgumentError("episode: k_shot must be >= 1");
        if (q_query < 1) throw ArgumentError("episode: q_query must be >= 1");
    }

    // conventionally Q > K; callers may warn when this does not hold
    bool query_exceeds_shot() const { return q_query > k_shot; }
};

// One few-shot task. Labels in both batches are local indices 0..N-1;
// class_map translates a local label back to its global class id.
struct Episode {
    LabeledBatch support;  // N x K rows
    LabeledBatch query;    // N x Q rows
    std::vector<int> class_map;

    int n_way() const { return static_cast<int>(class_map.size()); }
};

// Instances grouped by class, restricted to one side of a MetaSplit. Immutable
// once built; sampling validates the configured episode shape against it.
class EpisodePool {
public:
    static EpisodePool build(const std::vector<Instance>& instances,
                             const std::vector<int>& class_ids,
                             const ClassRegistry* registry = nullptr) {
        EpisodePool pool;
        pool.class_ids_ = class_ids;
        std::sort(pool.class_ids_.begin(), pool.class_ids_.end());
        pool.class_ids_.erase(std::unique(pool.class_ids_.begin(), pool.class_ids_.end()),
                              pool.class_ids_.end());
        pool.groups_.resize(pool.class_ids_.size());
        pool.names_.resize(pool.class_ids_.size());
        if (registry)
            for (std::size_t g = 0; g < pool.class_ids_.size(); ++g)
                pool.names_[g] = registry->name_of(pool.class_ids_[g]);
        for (const auto& inst : instances) {
            const auto it = std::lower_bound(pool.class_ids_.begin(), pool.class_ids_.end(),
                                             inst.class_id);
            if (it == pool.class_ids_.end() || *it != inst.class_id) continue;
            auto& group = pool.groups_[it - pool.class_ids_.begin()];
            if (!group.empty() && inst.features.size() != group.front().features.size())
                throw ShapeError("pool: inconsistent feature widths within a class");
            group.push_back(inst);
        }
        if (!instances.empty() && pool.feature_dim_checked() < 0)
            throw ShapeError("pool: inconsistent feature widths across classes");
        return pool;
    }

    int class_count() const { return static_cast<int>(class_ids_.size()); }
    const std::vector<int>& class_ids() const { return class_ids_; }
    std::size_t instances_of(int group) const { return groups_[group].size(); }
    const Instance& instance(int group, std::size_t i) const { return groups_[group][i]; }

    int feature_dim() const {
        for (const auto& g : groups_)
            if (!g.empty()) return static_cast<int>(g.front().features.size());
        return 0;
    }

    std::string class_label(int group) const {
        if (!names_[group].empty()) return "'" + names_[group] + "'";
        return "class " + std::to_string(class_ids_[group]);
    }

    const std::optional<NormStats>& applied_stats() const { return applied_stats_; }

    // returns a copy of this pool with standardized features
    EpisodePool standardized(const NormStats& stats) const {
        EpisodePool pool = *this;
        for (auto& group : pool.groups_) group = apply_standardization(group, stats);
        pool.applied_stats_ = stats;
        return pool;
    }

    std::vector<Instance> all_instances() const {
        std::vector<Instance> out;
        for (const auto& g : groups_) out.insert(out.end(), g.begin(), g.end());
        return out;
    }

private:
    int feature_dim_checked() const {
        int d = -1;
        for (const auto& g : groups_) {
            if (g.empty()) continue;
            const int gd = static_cast<int>(g.front().features.size());
            if (d == -1) d = gd;
            if (gd != d) return -1;
        }
        return d;
    }

    std::vector<int> class_ids_;                  // ascending
    std::vector<std::vector<Instance>> groups_;   // parallel to class_ids_
    std::vector<std::string> names_;              // parallel, may be empty
    std::optional<NormStats> applied_stats_;
};

inline EpisodePool build_meta_train_pool(const std::vector<Instance>& instances,
                                         const MetaSplit& split,
                                         const ClassRegistry* registry = nullptr) {
    return EpisodePool::build(instances, split.meta_train_classes, registry);
}

inline EpisodePool build_meta_test_pool(const std::vector<Instance>& instances,
                                        const MetaSplit& split,
                                        const ClassRegistry* registry = nullptr) {
    return EpisodePool::build(instances, split.meta_test_classes, registry);
}

inline NormStats compute_norm_stats(const EpisodePool& pool) {
    return compute_norm_stats(pool.all_instances());
}

namespace detail {

// k distinct indices from [0, n), draw order preserved (sequential sampling
// without replacement via rejection)
inline std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> picked;
    picked.reserve(k);
    std::unordered_set<std::size_t> seen;
    while (picked.size() < k) {
        const std::size_t i = rng.index(n);
        if (seen.insert(i).second) picked.push_back(i);
    }
    return picked;
}

}  // namespace detail

/// Draws one N-way K-shot episode: N classes uniformly without replacement,
/// then K+Q distinct instances per class (first K support, next Q query).
/// Global labels are remapped to 0..N-1 in sampled-class order.
inline Episode sample_episode(const EpisodePool& pool, const EpisodeConfig& cfg, Rng& rng) {
    cfg.validate();
    if (pool.class_count() < cfg.n_way)
        throw SamplingError("pool holds " + std::to_string(pool.class_count()) +
                            " classes; episode needs " + std::to_string(cfg.n_way));
    const std::size_t need = static_cast<std::size_t>(cfg.k_shot) + cfg.q_query;
    for (int g = 0; g < pool.class_count(); ++g)
        if (pool.instances_of(g) < need)
            throw SamplingError("pool " + pool.class_label(g) + " holds " +
                                std::to_string(pool.instances_of(g)) + " instances; episode needs " +
                                std::to_string(need) + " (K+Q)");

    // N classes by partial Fisher-Yates over the pool's class list
    std::vector<int> groups(pool.class_count());
    for (int g = 0; g < pool.class_count(); ++g) groups[g] = g;
    for (int c = 0; c < cfg.n_way; ++c) {
        const std::size_t j = c + rng.index(groups.size() - c);
        std::swap(groups[c], groups[j]);
    }
    groups.resize(cfg.n_way);

    const int d = pool.feature_dim();
    Episode ep;
    ep.support.feature_dim = d;
    ep.query.feature_dim = d;
    ep.support.features.reserve(static_cast<std::size_t>(cfg.n_way) * cfg.k_shot * d);
    ep.query.features.reserve(static_cast<std::size_t>(cfg.n_way) * cfg.q_query * d);

    for (int local = 0; local < cfg.n_way; ++local) {
        const int g = groups[local];
        ep.class_map.push_back(pool.class_ids()[g]);
        const auto picks = detail::sample_distinct(pool.instances_of(g), need, rng);
        for (std::size_t p = 0; p < need; ++p) {
            const auto& inst = pool.instance(g, picks[p]);
            LabeledBatch& dst = p < static_cast<std::size_t>(cfg.k_shot) ? ep.support : ep.query;
            dst.features.insert(dst.features.end(), inst.features.begin(), inst.features.end());
            dst.labels.push_back(local);
        }
    }
    return ep;
}

/// m independent episodes from one shared rng stream.
inline std::vector<Episode> sample_episode_batch(const EpisodePool& pool,
                                                 const EpisodeConfig& cfg, int m, Rng& rng) {
    if (m < 0) throw ArgumentError("sample_episode_batch: m must be >= 0");
    std::vector<Episode> episodes;
    episodes.reserve(m);
    for (int i = 0; i < m; ++i) episodes.push_back(sample_episode(pool, cfg, rng));
    return episodes;
}

// Generator settings for dataset-free tasks: per episode, each class gets a
// fresh mean drawn from a standard normal in R^dim and instances scatter
// around it with the given spread.
struct SyntheticTaskConfig {
    int n_way = 2;
    int k_shot = 5;
    int q_query = 15;
    int dim = 20;
    double cluster_std = 0.5;

    EpisodeConfig episode_config() const { return {n_way, k_shot, q_query}; }

    void validate() const {
        episode_config().validate();
        if (dim < 1) throw ArgumentError("synthetic: dim must be >= 1");
        if (cluster_std < 0.0) throw ArgumentError("synthetic: cluster_std must be >= 0");
    }
};

/// One episode of Gaussian-cluster tasks; structure invariants identical to
/// sample_episode. Local label c maps to synthetic class id c.
inline Episode synthetic_episode(const SyntheticTaskConfig& cfg, Rng& rng) {
    cfg.validate();
    Episode ep;
    ep.support.feature_dim = cfg.dim;
    ep.query.feature_dim = cfg.dim;
    std::vector<double> mean(cfg.dim);
    for (int local = 0; local < cfg.n_way; ++local) {
        ep.class_map.push_back(local);
        for (double& m : mean) m = rng.normal();
        const int total = cfg.k_shot + cfg.q_query;
        for (int p = 0; p < total; ++p) {
            LabeledBatch& dst = p < cfg.k_shot ? ep.support : ep.query;
            for (int j = 0; j < cfg.dim; ++j)
                dst.features.push_back(mean[j] + cfg.cluster_std * rng.normal());
            dst.labels.push_back(local);
        }
    }
    return ep;
}

// Uniform episode supplier for the learning loops: either pool-backed or
// synthetic. sample() is const and reentrant; the rng is the caller's.
class EpisodeSource {
public:
    virtual ~EpisodeSource() = default;
    virtual Episode sample(Rng& rng) const = 0;
    virtual int feature_dim() const = 0;
    virtual int n_way() const = 0;
};

class PoolEpisodeSource final : public EpisodeSource {
public:
    PoolEpisodeSource(const EpisodePool& pool, EpisodeConfig cfg) : pool_(&pool), cfg_(cfg) {
        cfg_.validate();
    }
    Episode sample(Rng& rng) const override { return sample_episode(*pool_, cfg_, rng); }
    int feature_dim() const override { return pool_->feature_dim(); }
    int n_way() const override { return cfg_.n_way; }

private:
    const EpisodePool* pool_;
    EpisodeConfig cfg_;
};

class SyntheticEpisodeSource final : public EpisodeSource {
public:
    explicit SyntheticEpisodeSource(SyntheticTaskConfig cfg) : cfg_(cfg) { cfg_.validate(); }
    Episode sample(Rng& rng) const override { return synthetic_episode(cfg_, rng); }
    int feature_dim() const override { return cfg_.dim; }
    int n_way() const override { return cfg_.n_way; }

private:
    SyntheticTaskConfig cfg_;
};

inline std::vector<Episode> sample_episode_batch(const EpisodeSource& source, int m, Rng& rng) {
    if (m < 0) throw ArgumentError("sample_episode_batch: m must be >= 0");
    std::vector<Episode> episodes;
    episodes.reserve(m);
    for (int i = 0; i < m; ++i) episodes.push_back(source.sample(rng));
    return episodes;
}

}  // namespace episodic_maml
