#include <gtest/gtest.h>

#include "mangapipe/dataset_io.hpp"
#include "mangapipe/error.hpp"
#include "mangapipe/transcript.hpp"
#include "test_util.hpp"

using namespace mangapipe;

namespace {

// One panel; texts t0..t2 spoken by characters in clusters 0, 0, 1.
PageGraph three_text_graph() {
    PageGraph g;
    g.nodes = {
        {0, NodeKind::Panel, {0, 0, 100, 100}, 0},     {1, NodeKind::Character, {10, 10, 30, 60}, 1},
        {2, NodeKind::Character, {60, 10, 90, 60}, 2}, {3, NodeKind::Text, {10, 70, 30, 80}, 3},
        {4, NodeKind::Text, {40, 70, 60, 80}, 4},      {5, NodeKind::Text, {70, 70, 90, 80}, 5},
    };
    g.panels = {0};
    g.characters = {1, 2};
    g.texts = {3, 4, 5};
    g.cluster_of = {0, 1};
    g.cluster_count = 2;
    g.speaker_of = {0, 0, 1};
    g.tail_of = {std::nullopt, std::nullopt, std::nullopt};
    g.panel_of = {std::nullopt, 0, 0, 0, 0, 0};
    return g;
}

}  // namespace

TEST(Transcript, NoTexts) {
    PageGraph g;
    EXPECT_TRUE(generate_transcript(g, {}).empty());
}

TEST(Transcript, ClusterLabels) {
    const std::vector<std::string> texts = {"a", "b", "c"};
    const auto lines = generate_transcript(three_text_graph(), texts);
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0].speaker_label, "C0");
    EXPECT_EQ(lines[1].speaker_label, "C0");
    EXPECT_EQ(lines[2].speaker_label, "C1");
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(lines[i].line_order, i);
        EXPECT_EQ(lines[i].panel_order, 1);
    }
}

TEST(Transcript, NameMapPartial) {
    const std::vector<std::string> texts = {"a", "b", "c"};
    const NameMap names = {{0, "Goku"}};
    const auto lines = generate_transcript(three_text_graph(), texts, &names);
    EXPECT_EQ(lines[0].speaker_label, "Goku");
    EXPECT_EQ(lines[1].speaker_label, "Goku");
    EXPECT_EQ(lines[2].speaker_label, "C1");
}

TEST(Transcript, TotalNameMapLeavesNoClusterLabels) {
    const std::vector<std::string> texts = {"a", "b", "c"};
    const NameMap names = {{0, "Goku"}, {1, "Vegeta"}};
    for (const auto& l : generate_transcript(three_text_graph(), texts, &names)) {
        EXPECT_TRUE(l.speaker_label == "Goku" || l.speaker_label == "Vegeta");
    }
}

TEST(Transcript, EmptyTextsDroppedUnknownKept) {
    auto g = three_text_graph();
    g.speaker_of[2] = std::nullopt;
    g.panel_of[5] = std::nullopt;
    const std::vector<std::string> texts = {"a", "", "c"};
    const auto lines = generate_transcript(g, texts);
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[1].speaker_label, "UNKNOWN");
    EXPECT_EQ(lines[1].panel_order, -1);
    EXPECT_EQ(lines[1].text, "c");
}

TEST(Transcript, MisalignedTextsRejected) {
    const std::vector<std::string> texts = {"a"};
    EXPECT_THROW(generate_transcript(three_text_graph(), texts), InputError);
}

TEST(Render, Empty) { EXPECT_EQ(render_transcript({}), ""); }

TEST(Render, SingleLine) {
    const std::vector<TranscriptLine> lines = {{"C0", "Hi", 1, 0}};
    EXPECT_EQ(render_transcript(lines), "C0: Hi");
}

TEST(Render, GroupedByPanelUnassignedLast) {
    const std::vector<TranscriptLine> lines = {
        {"A", "one", 2, 0}, {"B", "two", -1, 1}, {"C", "three", 1, 2}, {"D", "four", 2, 3}};
    EXPECT_EQ(render_transcript(lines), "C: three\nA: one\nD: four\nB: two");
}

TEST(Render, GoldenTranscript) {
    const auto lines = transcript_from_json(read_json_file(testutil::golden_dir() / "transcript.json"));
    ASSERT_EQ(lines.size(), 6u);
    EXPECT_EQ(render_transcript(lines),
              "Aki: Where did everyone go?\n"
              "Bo: They left at dawn.\n"
              "Aki: I have to find them.\n"
              "C2: Wait for us!\n"
              "Bo: We are coming too.\n"
              "UNKNOWN: Meanwhile, the town was silent.");
    EXPECT_EQ(canonical_dump(transcript_to_json(lines)), read_file(testutil::golden_dir() / "transcript.json"));
}

TEST(TranscriptJson, SchemaErrors) {
    EXPECT_THROW(transcript_from_json(nlohmann::json::object()), SchemaError);
    EXPECT_THROW(transcript_from_json(nlohmann::json::parse(R"([{"speaker":"A","text":"","panel":1,"order":0}])")),
                 SchemaError);
    EXPECT_THROW(transcript_from_json(nlohmann::json::parse(R"([{"speaker":"A","text":"x","panel":"1","order":0}])")),
                 SchemaError);
}
