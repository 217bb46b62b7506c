#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "episodic_maml/dataset.hpp"
#include "episodic_maml/episodes.hpp"

using namespace episodic_maml;

namespace {

// instance totals per refactoring type in the reference dataset
const std::vector<std::pair<std::string, int>> kReferenceCounts = {
    {"extract interface", 10495},      {"extract super-class", 26814},
    {"extract class", 41191},          {"move class", 49815},
    {"extract method", 327493},        {"move method", 163078},
    {"inline method", 53827},          {"push down method", 62630},
    {"pull up method", 155076},        {"rename method", 427935},
    {"inline variable", 30894},        {"rename variable", 324955},
    {"rename parameter", 336751},      {"parameterize variable", 22537},
    {"replace variable", 25894},       {"extract subclass", 6436},
    {"move and rename class", 654},    {"rename class", 3991},
    {"extract and move method", 9723}, {"extract variable", 6709},
};

const std::set<std::string> kScarceFive = {
    "move and rename class", "rename class", "extract subclass",
    "extract variable", "extract and move method"};

std::string temp_path(const std::string& name) {
    return std::string(::testing::TempDir()) + name;
}

// small pool with distinct feature values so instances are identifiable
EpisodePool make_pool(int n_classes, int per_class, int dim = 2) {
    std::vector<Instance> instances;
    for (int c = 0; c < n_classes; ++c)
        for (int i = 0; i < per_class; ++i) {
            Instance inst;
            inst.class_id = c;
            for (int j = 0; j < dim; ++j)
                inst.features.push_back(c * 1000.0 + i + 0.01 * j);
            instances.push_back(inst);
        }
    std::vector<int> ids(n_classes);
    for (int c = 0; c < n_classes; ++c) ids[c] = c;
    return EpisodePool::build(instances, ids);
}

void check_episode_structure(const Episode& ep, const EpisodeConfig& cfg) {
    ASSERT_EQ(ep.support.size(), cfg.n_way * cfg.k_shot);
    ASSERT_EQ(ep.query.size(), cfg.n_way * cfg.q_query);
    ASSERT_EQ(static_cast<int>(ep.class_map.size()), cfg.n_way);

    std::map<int, int> support_counts, query_counts;
    for (int y : ep.support.labels) support_counts[y]++;
    for (int y : ep.query.labels) query_counts[y]++;
    for (int c = 0; c < cfg.n_way; ++c) {
        EXPECT_EQ(support_counts[c], cfg.k_shot);
        EXPECT_EQ(query_counts[c], cfg.q_query);
    }

    // no shared source instance between support and query
    std::set<std::vector<double>> support_rows;
    for (int i = 0; i < ep.support.size(); ++i) {
        const auto row = ep.support.row(i);
        support_rows.insert(std::vector<double>(row.begin(), row.end()));
    }
    for (int i = 0; i < ep.query.size(); ++i) {
        const auto row = ep.query.row(i);
        EXPECT_FALSE(support_rows.count(std::vector<double>(row.begin(), row.end())))
            << "query row also appears in the support set";
    }
}

std::vector<int> nearest_centroid_predictions(const Episode& ep) {
    const int n = ep.n_way();
    const int d = ep.support.feature_dim;
    std::vector<std::vector<double>> centroids(n, std::vector<double>(d, 0.0));
    std::vector<int> counts(n, 0);
    for (int i = 0; i < ep.support.size(); ++i) {
        const int y = ep.support.labels[i];
        const auto row = ep.support.row(i);
        for (int j = 0; j < d; ++j) centroids[y][j] += row[j];
        counts[y]++;
    }
    for (int c = 0; c < n; ++c)
        for (int j = 0; j < d; ++j) centroids[c][j] /= counts[c];

    std::vector<int> preds;
    for (int i = 0; i < ep.query.size(); ++i) {
        const auto row = ep.query.row(i);
        int best = 0;
        double best_dist = 0.0;
        for (int c = 0; c < n; ++c) {
            double dist = 0.0;
            for (int j = 0; j < d; ++j) {
                const double diff = row[j] - centroids[c][j];
                dist += diff * diff;
            }
            if (c == 0 || dist < best_dist) {
                best = c;
                best_dist = dist;
            }
        }
        preds.push_back(best);
    }
    return preds;
}

}  // namespace

TEST(IngestCsv, ReferenceScarceClassCounts) {
    const std::string path = temp_path("scarce_five.csv");
    {
        std::ofstream out(path);
        out << "label,m1,m2\n";
        for (const auto& [name, count] : kReferenceCounts) {
            if (!kScarceFive.count(name)) continue;
            for (int i = 0; i < count; ++i)
                out << name << "," << i << "," << (i % 13) * 0.5 << "\n";
        }
    }
    const auto result = ingest_csv(path, "label", {"m1", "m2"});
    EXPECT_EQ(result.registry.size(), 5);
    EXPECT_EQ(result.instances.size(), 27513u);
    EXPECT_EQ(result.registry.count_of(result.registry.id_of("extract subclass")), 6436u);
    EXPECT_EQ(result.registry.count_of(result.registry.id_of("move and rename class")), 654u);
    EXPECT_EQ(result.registry.count_of(result.registry.id_of("rename class")), 3991u);
    EXPECT_EQ(result.registry.count_of(result.registry.id_of("extract and move method")), 9723u);
    EXPECT_EQ(result.registry.count_of(result.registry.id_of("extract variable")), 6709u);
    std::remove(path.c_str());
}

TEST(IngestCsv, HeaderOnlyFileYieldsNothing) {
    const std::string path = temp_path("header_only.csv");
    std::ofstream(path) << "label,a,b\n";
    const auto result = ingest_csv(path, "label", {"a", "b"});
    EXPECT_TRUE(result.instances.empty());
    EXPECT_TRUE(result.registry.empty());
}

TEST(IngestCsv, NonNumericCellNamesRowAndColumn) {
    const std::string path = temp_path("bad_cell.csv");
    std::ofstream(path) << "label,a,b\nx,1.0,2.0\ny,abc,3.0\n";
    try {
        ingest_csv(path, "label", {"a", "b"});
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("'a'"), std::string::npos) << msg;
        EXPECT_NE(msg.find("abc"), std::string::npos) << msg;
    }
}

TEST(IngestCsv, MissingColumnIsSchemaError) {
    const std::string path = temp_path("missing_col.csv");
    std::ofstream(path) << "label,a\nx,1.0\n";
    EXPECT_THROW(ingest_csv(path, "label", {"a", "b"}), SchemaError);
    EXPECT_THROW(ingest_csv(path, "kind", {"a"}), SchemaError);
}

TEST(IngestCsv, MissingFileIsIoError) {
    EXPECT_THROW(ingest_csv(temp_path("does_not_exist.csv"), "label", {"a"}), IoError);
}

TEST(IngestCsv, QuotedFieldsAndNonFiniteRejected) {
    const std::string path = temp_path("quoted.csv");
    std::ofstream(path) << "label,a\n\"move, then rename\",4.5\n";
    const auto result = ingest_csv(path, "label", {"a"});
    ASSERT_EQ(result.registry.size(), 1);
    EXPECT_EQ(result.registry.name_of(0), "move, then rename");

    const std::string bad = temp_path("nonfinite.csv");
    std::ofstream(bad) << "label,a\nx,inf\n";
    EXPECT_THROW(ingest_csv(bad, "label", {"a"}), DataError);
}

TEST(SplitByScarcity, ReferenceRegistryGivesTheFiveScarceClasses) {
    ClassRegistry registry;
    for (const auto& [name, count] : kReferenceCounts) registry.add_class(name, count);
    const auto split = split_by_scarcity(registry, 5);
    std::set<std::string> test_names;
    for (int id : split.meta_test_classes) test_names.insert(registry.name_of(id));
    EXPECT_EQ(test_names, kScarceFive);
    EXPECT_EQ(split.meta_train_classes.size(), 15u);
}

TEST(SplitByScarcity, LexicographicTieBreak) {
    ClassRegistry registry;
    registry.add_class("delta", 10);
    registry.add_class("alpha", 10);
    registry.add_class("charlie", 10);
    registry.add_class("bravo", 10);
    const auto split = split_by_scarcity(registry, 2);
    std::set<std::string> test_names;
    for (int id : split.meta_test_classes) test_names.insert(registry.name_of(id));
    EXPECT_EQ(test_names, (std::set<std::string>{"alpha", "bravo"}));
}

TEST(SplitByScarcity, PartitionProperty) {
    ClassRegistry registry;
    for (const auto& [name, count] : kReferenceCounts) registry.add_class(name, count);
    for (int n = 0; n < registry.size(); ++n) {
        const auto split = split_by_scarcity(registry, n);
        std::set<int> all(split.meta_train_classes.begin(), split.meta_train_classes.end());
        for (int id : split.meta_test_classes) {
            EXPECT_FALSE(all.count(id)) << "class in both sides";
            all.insert(id);
        }
        EXPECT_EQ(static_cast<int>(all.size()), registry.size());
    }
}

TEST(SplitByScarcity, RejectsTooManyTestClasses) {
    ClassRegistry registry;
    registry.add_class("a", 1);
    registry.add_class("b", 2);
    EXPECT_THROW(split_by_scarcity(registry, 2), ArgumentError);
    EXPECT_THROW(split_by_scarcity(registry, 3), ArgumentError);
}

TEST(NormStats, ConstantColumnClampsToFloor) {
    std::vector<Instance> instances;
    for (int i = 0; i < 10; ++i)
        instances.push_back({{7.0, static_cast<double>(i)}, 0, ""});
    const auto stats = compute_norm_stats(instances);
    EXPECT_EQ(stats.std_dev[0], NormStats::kStdFloor);
    const auto standardized = apply_standardization(instances, stats);
    for (const auto& inst : standardized) EXPECT_EQ(inst.features[0], 0.0);
}

TEST(NormStats, StandardizedTrainDataIsCentered) {
    Rng rng(12);
    std::vector<Instance> instances;
    for (int i = 0; i < 500; ++i) {
        Instance inst;
        inst.class_id = 0;
        for (int j = 0; j < 3; ++j) inst.features.push_back(3.0 + 2.5 * rng.normal() + j);
        instances.push_back(inst);
    }
    const auto stats = compute_norm_stats(instances);
    const auto standardized = apply_standardization(instances, stats);
    const auto after = compute_norm_stats(standardized);
    for (int j = 0; j < 3; ++j) {
        EXPECT_NEAR(after.mean[j], 0.0, 1e-9);
        EXPECT_NEAR(after.std_dev[j], 1.0, 1e-6);
    }
}

TEST(NormStats, TrainStatsDifferFromTestStats) {
    Rng rng(13);
    std::vector<Instance> train, test;
    for (int i = 0; i < 100; ++i) train.push_back({{rng.normal()}, 0, ""});
    for (int i = 0; i < 100; ++i) test.push_back({{5.0 + rng.normal()}, 1, ""});
    const auto train_stats = compute_norm_stats(train);
    const auto test_stats = compute_norm_stats(test);
    EXPECT_NE(train_stats.mean[0], test_stats.mean[0]);
}

TEST(NormStats, EmptyPoolRejected) {
    EXPECT_THROW(compute_norm_stats(std::vector<Instance>{}), ArgumentError);
}

TEST(ApplyStandardization, MeanMapsToZeroAndIdentityIsNoop) {
    NormStats stats;
    stats.mean = {2.0, -1.0};
    stats.std_dev = {4.0, 0.5};
    const std::vector<Instance> at_mean = {{{2.0, -1.0}, 0, ""}};
    const auto zeroed = apply_standardization(at_mean, stats);
    EXPECT_EQ(zeroed[0].features, (std::vector<double>{0.0, 0.0}));

    NormStats identity;
    identity.mean = {0.0, 0.0};
    identity.std_dev = {1.0, 1.0};
    const std::vector<Instance> any = {{{3.25, -7.5}, 0, ""}};
    EXPECT_EQ(apply_standardization(any, identity)[0].features, any[0].features);

    // applying twice differs from once when the stats are not the identity
    const std::vector<Instance> sample = {{{10.0, 3.0}, 0, ""}};
    const auto once = apply_standardization(sample, stats);
    const auto twice = apply_standardization(once, stats);
    EXPECT_NE(once[0].features, twice[0].features);
}

TEST(ApplyStandardization, WidthMismatchRejected) {
    NormStats stats;
    stats.mean = {0.0};
    stats.std_dev = {1.0};
    const std::vector<Instance> wide = {{{1.0, 2.0}, 0, ""}};
    EXPECT_THROW(apply_standardization(wide, stats), ShapeError);
}

TEST(SampleEpisode, TwoWayFiveShotShape) {
    const auto pool = make_pool(4, 30);
    Rng rng(1);
    const EpisodeConfig cfg{2, 5, 15};
    const auto ep = sample_episode(pool, cfg, rng);
    EXPECT_EQ(ep.support.size(), 10);
    EXPECT_EQ(ep.query.size(), 30);
    check_episode_structure(ep, cfg);
}

TEST(SampleEpisode, FiveWayOneShotShape) {
    const auto pool = make_pool(6, 10);
    Rng rng(2);
    const EpisodeConfig cfg{5, 1, 3};
    const auto ep = sample_episode(pool, cfg, rng);
    EXPECT_EQ(ep.support.size(), 5);
    EXPECT_EQ(ep.query.size(), 15);
    check_episode_structure(ep, cfg);
}

TEST(SampleEpisode, DeficientClassIsNamed) {
    // one class holds K+Q-1 instances
    std::vector<Instance> instances;
    for (int i = 0; i < 20; ++i) instances.push_back({{1.0 * i}, 0, ""});
    for (int i = 0; i < 7; ++i) instances.push_back({{100.0 + i}, 1, ""});
    ClassRegistry registry;
    registry.add_class("plenty", 20);
    registry.add_class("scarce", 7);
    const auto pool = EpisodePool::build(instances, {0, 1}, &registry);
    Rng rng(3);
    try {
        sample_episode(pool, {2, 3, 5}, rng);
        FAIL() << "expected SamplingError";
    } catch (const SamplingError& e) {
        EXPECT_NE(std::string(e.what()).find("scarce"), std::string::npos) << e.what();
    }
}

TEST(SampleEpisode, TooFewClassesRejected) {
    const auto pool = make_pool(2, 30);
    Rng rng(4);
    EXPECT_THROW(sample_episode(pool, {3, 2, 2}, rng), SamplingError);
}

TEST(SampleEpisodeBatch, SizeAndDeterminism) {
    const auto pool = make_pool(5, 40);
    const EpisodeConfig cfg{2, 5, 15};
    Rng rng_a(77);
    const auto batch_a = sample_episode_batch(pool, cfg, 25, rng_a);
    EXPECT_EQ(batch_a.size(), 25u);

    Rng rng_b(77);
    const auto batch_b = sample_episode_batch(pool, cfg, 25, rng_b);
    for (std::size_t i = 0; i < batch_a.size(); ++i) {
        EXPECT_EQ(batch_a[i].support.features, batch_b[i].support.features);
        EXPECT_EQ(batch_a[i].query.features, batch_b[i].query.features);
        EXPECT_EQ(batch_a[i].class_map, batch_b[i].class_map);
    }

    Rng rng_c(78);
    EXPECT_TRUE(sample_episode_batch(pool, cfg, 0, rng_c).empty());
}

TEST(SampleEpisode, RandomConfigStructureProperty) {
    Rng seed_rng(2025);
    for (int trial = 0; trial < 60; ++trial) {
        const int n_way = 2 + static_cast<int>(seed_rng.index(4));
        const EpisodeConfig cfg{n_way, 1 + static_cast<int>(seed_rng.index(10)),
                                1 + static_cast<int>(seed_rng.index(15))};
        const int classes = n_way + static_cast<int>(seed_rng.index(4));
        const auto pool = make_pool(classes, cfg.k_shot + cfg.q_query + 5);
        Rng rng(seed_rng.next_u64());
        for (int e = 0; e < 5; ++e)
            check_episode_structure(sample_episode(pool, cfg, rng), cfg);
    }
}

TEST(SampleEpisode, PoolsRespectMetaSplitSides) {
    ClassRegistry registry;
    registry.add_class("a", 30);
    registry.add_class("b", 30);
    registry.add_class("c", 30);
    registry.add_class("d", 30);
    std::vector<Instance> instances;
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 30; ++i) instances.push_back({{c + 0.001 * i}, c, ""});
    MetaSplit split;
    split.meta_train_classes = {0, 2};
    split.meta_test_classes = {1, 3};

    const auto train_pool = build_meta_train_pool(instances, split, &registry);
    const auto test_pool = build_meta_test_pool(instances, split, &registry);
    Rng rng(9);
    for (int e = 0; e < 50; ++e) {
        for (int id : sample_episode(train_pool, {2, 3, 5}, rng).class_map)
            EXPECT_FALSE(split.is_test_class(id));
        for (int id : sample_episode(test_pool, {2, 3, 5}, rng).class_map)
            EXPECT_TRUE(split.is_test_class(id));
    }
}

TEST(SampleEpisode, ClassSelectionIsUniform) {
    const int n_classes = 8;
    const int n_way = 2;
    const int episodes = 8000;
    const auto pool = make_pool(n_classes, 12);
    Rng rng(31337);
    std::vector<int> hits(n_classes, 0);
    for (int e = 0; e < episodes; ++e)
        for (int id : sample_episode(pool, {n_way, 2, 4}, rng).class_map) hits[id]++;

    const double picks = static_cast<double>(episodes) * n_way;
    const double p = 1.0 / n_classes;
    const double sigma = std::sqrt(picks * p * (1.0 - p));
    for (int c = 0; c < n_classes; ++c)
        EXPECT_NEAR(hits[c], picks * p, 3.0 * sigma) << "class " << c;
}

TEST(SyntheticEpisode, ZeroSpreadCollapsesClasses) {
    const SyntheticTaskConfig cfg{3, 2, 4, 5, 0.0};
    Rng rng(55);
    const auto ep = synthetic_episode(cfg, rng);
    EXPECT_EQ(ep.support.size(), 6);
    EXPECT_EQ(ep.query.size(), 12);
    for (int i = 0; i < ep.support.size(); ++i) {
        const int y = ep.support.labels[i];
        // every row of a class equals that class's first support row
        int first = 0;
        while (ep.support.labels[first] != y) ++first;
        const auto row = ep.support.row(i);
        const auto ref = ep.support.row(first);
        for (int j = 0; j < cfg.dim; ++j) EXPECT_EQ(row[j], ref[j]);
    }
}

TEST(SyntheticEpisode, SeededDeterminism) {
    const SyntheticTaskConfig cfg{2, 5, 15, 20, 0.5};
    Rng a(123), b(123);
    const auto ep_a = synthetic_episode(cfg, a);
    const auto ep_b = synthetic_episode(cfg, b);
    EXPECT_EQ(ep_a.support.features, ep_b.support.features);
    EXPECT_EQ(ep_a.query.features, ep_b.query.features);
}

TEST(SyntheticEpisode, ZeroSpreadIsNearestCentroidPerfect) {
    Rng rng(321);
    for (int trial = 0; trial < 20; ++trial) {
        const SyntheticTaskConfig cfg{2 + static_cast<int>(rng.index(3)), 3, 6, 8, 0.0};
        const auto ep = synthetic_episode(cfg, rng);
        const auto preds = nearest_centroid_predictions(ep);
        for (int i = 0; i < ep.query.size(); ++i)
            EXPECT_EQ(preds[i], ep.query.labels[i]);
    }
}

TEST(SyntheticEpisode, RejectsBadConfig) {
    Rng rng(1);
    EXPECT_THROW(synthetic_episode({2, 1, 1, 0, 0.5}, rng), ArgumentError);
    EXPECT_THROW(synthetic_episode({2, 1, 1, 4, -0.1}, rng), ArgumentError);
    EXPECT_THROW(synthetic_episode({1, 1, 1, 4, 0.5}, rng), ArgumentError);
}

TEST(EpisodeConfig, ValidationAndConvention) {
    EXPECT_THROW((EpisodeConfig{1, 5, 15}).validate(), ArgumentError);
    EXPECT_THROW((EpisodeConfig{2, 0, 15}).validate(), ArgumentError);
    EXPECT_THROW((EpisodeConfig{2, 5, 0}).validate(), ArgumentError);
    EXPECT_TRUE((EpisodeConfig{2, 5, 15}).query_exceeds_shot());
    EXPECT_FALSE((EpisodeConfig{2, 10, 10}).query_exceeds_shot());
}
