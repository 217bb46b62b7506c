#include <gtest/gtest.h>

#include <fstream>
#include <string>

#include "episodic_maml/checkpoint.hpp"
#include "episodic_maml/gradcheck.hpp"

using namespace episodic_maml;

namespace {

std::string temp_path(const std::string& name) {
    return std::string(::testing::TempDir()) + name;
}

Checkpoint sample_checkpoint() {
    Checkpoint c;
    c.parameters = random_parameters({3, {4, 5}, 2, Activation::tanh}, 77);
    c.norm_stats.mean = {0.5, -1.25, 3.75e-7};
    c.norm_stats.std_dev = {1.0, 0.333333333333333315, 42.0};
    c.config = {{"maml", {{"alpha", 0.001}, {"seed", 9}}}};
    c.iterations_completed = 123;
    c.seed = 9;
    return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsLossless) {
    const auto original = sample_checkpoint();
    const std::string path = temp_path("roundtrip.json");
    save_checkpoint(path, original);
    const auto loaded = load_checkpoint(path);
    EXPECT_TRUE(loaded == original);
    // every weight bit
    ASSERT_EQ(loaded.parameters.values.size(), original.parameters.values.size());
    for (std::size_t j = 0; j < loaded.parameters.values.size(); ++j)
        EXPECT_EQ(loaded.parameters.values[j], original.parameters.values[j]);
}

TEST(Checkpoint, RepeatedSaveIsByteIdentical) {
    const auto c = sample_checkpoint();
    EXPECT_EQ(checkpoint_to_json(c), checkpoint_to_json(c));
}

TEST(Checkpoint, UnknownVersionRejected) {
    auto c = sample_checkpoint();
    c.format_version = 2;
    const std::string path = temp_path("badversion.json");
    save_checkpoint(path, c);
    EXPECT_THROW(load_checkpoint(path), VersionError);
}

TEST(Checkpoint, TruncatedFileIsParseError) {
    const auto c = sample_checkpoint();
    const std::string text = checkpoint_to_json(c);
    const std::string path = temp_path("truncated.json");
    std::ofstream(path) << text.substr(0, text.size() / 2);
    EXPECT_THROW(load_checkpoint(path), ParseError);
}

TEST(Checkpoint, InconsistentShapesRejected) {
    const auto c = sample_checkpoint();
    auto j = nlohmann::ordered_json::parse(checkpoint_to_json(c));
    j["weights"][0].push_back(0.125);  // one extra weight in layer 0
    const std::string path = temp_path("badshape.json");
    std::ofstream(path) << j.dump();
    EXPECT_THROW(load_checkpoint(path), ValidationError);

    j = nlohmann::ordered_json::parse(checkpoint_to_json(c));
    j["arch"]["hidden"] = {4};  // drops a layer the weight arrays still carry
    std::ofstream(path) << j.dump();
    EXPECT_THROW(load_checkpoint(path), ValidationError);
}

TEST(Checkpoint, MissingFileIsIoError) {
    EXPECT_THROW(load_checkpoint(temp_path("no_such_checkpoint.json")), IoError);
}

TEST(Checkpoint, MissingFieldIsParseError) {
    const auto c = sample_checkpoint();
    auto j = nlohmann::ordered_json::parse(checkpoint_to_json(c));
    j.erase("biases");
    const std::string path = temp_path("missingfield.json");
    std::ofstream(path) << j.dump();
    EXPECT_THROW(load_checkpoint(path), ParseError);
}

TEST(MetaSplitJson, NamesAreLexicographic) {
    ClassRegistry registry;
    registry.add_class("rename class", 3991);
    registry.add_class("extract variable", 6709);
    registry.add_class("extract method", 327493);
    registry.add_class("move method", 163078);
    registry.add_class("move and rename class", 654);
    const auto split = split_by_scarcity(registry, 3);
    const std::string json = meta_split_to_json(split, registry);
    EXPECT_EQ(json,
              "{\n  \"meta_train\": [\"extract method\", \"move method\"],\n"
              "  \"meta_test\": [\"extract variable\", \"move and rename class\", "
              "\"rename class\"],\n"
              "  \"tie_rule\": \"lex\"\n}\n");
}

TEST(MetricsJson, LineShapeAndKeys) {
    MetricsRecord rec{0.9125, 0.875, 0.75, 0.3333333333333333, 4};
    const std::string line = metrics_record_json(rec);
    EXPECT_EQ(line,
              "{\"batch_index\": 4, \"accuracy\": 0.91249999999999998, "
              "\"precision\": 0.875, \"recall\": 0.75, "
              "\"loss\": 0.33333333333333331}");
    // parses back to the same values
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["batch_index"], 4);
    EXPECT_EQ(j["accuracy"].get<double>(), 0.9125);
    EXPECT_EQ(j["loss"].get<double>(), 1.0 / 3.0);
}
