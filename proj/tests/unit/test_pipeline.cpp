#include <atomic>
#include <map>
#include <mutex>

#include <gtest/gtest.h>

#include "mangapipe/dataset_io.hpp"
#include "mangapipe/error.hpp"
#include "mangapipe/hashing.hpp"
#include "mangapipe/mock_server.hpp"
#include "mangapipe/pipeline.hpp"
#include "mangapipe/token_codec.hpp"
#include "test_util.hpp"

using namespace mangapipe;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kArtifacts[] = {"detection.json", "ocr.json",    "transcript.json", "captions.json",
                            "grounded.json",  "prose_prompt.txt", "prose.txt"};

// Counts calls per task and forwards to an inner service. A task listed in
// `fail` throws instead.
class Counting final : public InferenceService, public ChatService {
public:
    Counting(InferenceService& inner, ChatService& chat) : inner_(inner), chat_(chat) {}

    InferenceResponse infer(const InferenceRequest& req) override {
        bump(std::string(to_string(req.task)));
        if (fail.count(req.task)) throw TransportError("injected failure");
        return inner_.infer(req);
    }
    Capabilities health() override { return inner_.health(); }
    ChatResponse chat(const ChatRequest& req) override {
        bump("chat");
        return chat_.chat(req);
    }

    std::size_t calls(const std::string& task) {
        std::lock_guard lock(mu_);
        return counts_[task];
    }
    std::size_t total() {
        std::lock_guard lock(mu_);
        std::size_t n = 0;
        for (const auto& [_, v] : counts_) n += v;
        return n;
    }

    std::set<InferenceTask> fail;

private:
    void bump(const std::string& k) {
        std::lock_guard lock(mu_);
        ++counts_[k];
    }
    InferenceService& inner_;
    ChatService& chat_;
    std::mutex mu_;
    std::map<std::string, std::size_t> counts_;
};

// One character and one speech bubble, no panels unless asked.
class Scripted final : public InferenceService, public ChatService {
public:
    bool heads = true;
    bool with_panel = false;

    InferenceResponse infer(const InferenceRequest& req) override {
        InferenceResponse r;
        r.capabilities.association_heads = heads;
        switch (req.task) {
            case InferenceTask::Detect: {
                std::vector<DetectionRecord> recs;
                if (with_panel) recs.push_back({{10, 10, 990, 990}, NodeKind::Panel, 0});
                recs.push_back({{100, 100, 300, 500}, NodeKind::Character, recs.size()});
                recs.push_back({{400, 100, 600, 200}, NodeKind::Text, recs.size()});
                r.tokens = serialize_detection(recs);
                r.scores = ScoreTable{Matrix(1, 1, 0.9), Matrix(1, 1, 1.0), Matrix(1, 0)};
                break;
            }
            case InferenceTask::Ocr: {
                const std::vector<OcrRecord> recs = {{"Hello.", {400, 100, 600, 200}, 0}};
                r.tokens = serialize_ocr(recs);
                break;
            }
            case InferenceTask::Ground:
                r.tokens = {*req.caption, "</s>"};
                break;
        }
        return r;
    }
    Capabilities health() override { return {heads}; }
    ChatResponse chat(const ChatRequest& req) override {
        return {req.image ? "A person talks." : "Story."};
    }
};

PipelineConfig e2e_config() {
    PipelineConfig c;
    c.name_map = testutil::e2e_dir() / "names.json";
    return c;
}

std::map<std::string, std::string> artifact_bytes(const fs::path& out) {
    std::map<std::string, std::string> m;
    for (const auto& e : fs::recursive_directory_iterator(out)) {
        if (e.is_regular_file()) m[fs::relative(e.path(), out).string()] = read_file(e.path());
    }
    return m;
}

void expect_goldens(const fs::path& page_dir) {
    for (const char* name : {"transcript.json", "captions.json", "grounded.json", "prose_prompt.txt", "prose.txt"}) {
        EXPECT_EQ(read_file(page_dir / name), read_file(testutil::golden_dir() / name)) << name;
    }
}

fs::path single_page(const testutil::TempDir& tmp) {
    const fs::path pages = tmp.path() / "pages";
    fs::create_directories(pages);
    fs::copy_file(testutil::e2e_dir() / "pages/page01.png", pages / "page01.png");
    return pages;
}

}  // namespace

class PipelineE2e : public ::testing::TestWithParam<int> {};

TEST_P(PipelineE2e, MatchesGoldens) {
    testutil::TempDir tmp;
    auto store = FixtureStore::load(testutil::e2e_dir() / "server");
    auto config = e2e_config();
    config.parallelism = GetParam();
    const auto summary = run_pipeline(testutil::e2e_dir() / "pages", tmp.path(), config, store, store);
    ASSERT_EQ(summary.pages.size(), 1u);
    EXPECT_EQ(summary.exit_code(), 0) << summary.pages[0].error.value_or("");
    EXPECT_EQ(summary.pages[0].reached, Stage::Prose);
    EXPECT_FALSE(summary.pages[0].resumed);
    for (const char* name : kArtifacts) EXPECT_TRUE(fs::exists(tmp.path() / "pages/page01" / name)) << name;
    expect_goldens(tmp.path() / "pages/page01");

    const auto manifest = RunWriter(tmp.path()).load_manifest();
    ASSERT_TRUE(manifest);
    ASSERT_EQ(manifest->pages.size(), 1u);
    EXPECT_EQ(manifest->pages[0].stage, Stage::Prose);
    EXPECT_EQ(manifest->pages[0].image_sha256, sha256_hex(read_file(testutil::e2e_dir() / "pages/page01.png")));
    EXPECT_EQ(manifest->pages[0].artifacts.size(), 7u);
}

INSTANTIATE_TEST_SUITE_P(Parallelism, PipelineE2e, ::testing::Values(1, 4));

TEST(Pipeline, RerunIsResumedAndIdentical) {
    testutil::TempDir tmp;
    auto store = FixtureStore::load(testutil::e2e_dir() / "server");
    Counting first(store, store);
    run_pipeline(testutil::e2e_dir() / "pages", tmp.path(), e2e_config(), first, first);
    EXPECT_EQ(first.calls("detect"), 1u);
    EXPECT_EQ(first.calls("ocr"), 1u);
    EXPECT_EQ(first.calls("ground"), 4u);
    EXPECT_EQ(first.calls("chat"), 5u);
    const auto before = artifact_bytes(tmp.path());

    Counting second(store, store);
    const auto summary = run_pipeline(testutil::e2e_dir() / "pages", tmp.path(), e2e_config(), second, second);
    EXPECT_EQ(second.total(), 0u);
    EXPECT_TRUE(summary.pages[0].resumed);
    EXPECT_EQ(summary.pages[0].reached, Stage::Prose);
    EXPECT_EQ(artifact_bytes(tmp.path()), before);
}

TEST(Pipeline, ResumesAfterMidRunFailure) {
    testutil::TempDir tmp;
    auto store = FixtureStore::load(testutil::e2e_dir() / "server");
    Counting failing(store, store);
    failing.fail.insert(InferenceTask::Ground);
    const auto first = run_pipeline(testutil::e2e_dir() / "pages", tmp.path(), e2e_config(), failing, failing);
    EXPECT_EQ(first.exit_code(), 1);
    EXPECT_EQ(first.pages[0].reached, Stage::Captioned);
    ASSERT_TRUE(first.pages[0].error);
    EXPECT_NE(first.pages[0].error->find("injected"), std::string::npos);
    const auto m = RunWriter(tmp.path()).load_manifest();
    ASSERT_TRUE(m);
    EXPECT_EQ(m->pages[0].stage, Stage::Captioned);
    EXPECT_TRUE(m->pages[0].error);

    Counting healthy(store, store);
    const auto second = run_pipeline(testutil::e2e_dir() / "pages", tmp.path(), e2e_config(), healthy, healthy);
    EXPECT_EQ(second.exit_code(), 0);
    EXPECT_TRUE(second.pages[0].resumed);
    EXPECT_EQ(healthy.calls("detect"), 0u);
    EXPECT_EQ(healthy.calls("ocr"), 0u);
    EXPECT_EQ(healthy.calls("ground"), 4u);
    EXPECT_EQ(healthy.calls("chat"), 1u);  // prose only; captions restored
    expect_goldens(tmp.path() / "pages/page01");
}

TEST(Pipeline, TamperedArtifactIsRecomputedWithLaterStages) {
    testutil::TempDir tmp;
    auto store = FixtureStore::load(testutil::e2e_dir() / "server");
    run_pipeline(testutil::e2e_dir() / "pages", tmp.path(), e2e_config(), store, store);
    write_file_atomic(tmp.path() / "pages/page01/captions.json", "{}\n");

    Counting c(store, store);
    const auto summary = run_pipeline(testutil::e2e_dir() / "pages", tmp.path(), e2e_config(), c, c);
    EXPECT_EQ(summary.exit_code(), 0);
    EXPECT_EQ(c.calls("detect"), 0u);
    EXPECT_EQ(c.calls("ocr"), 0u);
    EXPECT_EQ(c.calls("chat"), 5u);
    EXPECT_EQ(c.calls("ground"), 4u);
    expect_goldens(tmp.path() / "pages/page01");
}

TEST(Pipeline, ConfigChangeInvalidatesCache) {
    testutil::TempDir tmp;
    auto store = FixtureStore::load(testutil::e2e_dir() / "server");
    run_pipeline(testutil::e2e_dir() / "pages", tmp.path(), e2e_config(), store, store);

    auto changed = e2e_config();
    changed.eval_iou = 0.7;  // touches no artifact, but is part of the snapshot
    Counting c(store, store);
    const auto summary = run_pipeline(testutil::e2e_dir() / "pages", tmp.path(), changed, c, c);
    EXPECT_FALSE(summary.pages[0].resumed);
    EXPECT_EQ(c.calls("detect"), 1u);
    EXPECT_EQ(c.calls("chat"), 5u);
    const auto m = RunWriter(tmp.path()).load_manifest();
    ASSERT_TRUE(m);
    EXPECT_EQ(m->config, changed.snapshot());
    expect_goldens(tmp.path() / "pages/page01");
}

TEST(Pipeline, ChangedImageIsRecomputed) {
    testutil::TempDir tmp;
    const fs::path pages = single_page(tmp);
    Scripted s;
    s.with_panel = true;
    run_pipeline(pages, tmp.path() / "out", {}, s, s);

    // same name, different bytes: append a byte after IEND, still a valid PNG
    std::string bytes = read_file(pages / "page01.png");
    bytes.push_back('\0');
    write_file_atomic(pages / "page01.png", bytes);
    Counting c(s, s);
    const auto summary = run_pipeline(pages, tmp.path() / "out", {}, c, c);
    EXPECT_FALSE(summary.pages[0].resumed);
    EXPECT_EQ(c.calls("detect"), 1u);
}

TEST(Pipeline, SnapshotExcludesParallelism) {
    PipelineConfig a, b;
    b.parallelism = 9;
    EXPECT_EQ(a.snapshot(), b.snapshot());
    b.thresholds.text_char = 0.4;
    EXPECT_NE(a.snapshot(), b.snapshot());
    b = a;
    b.style = NarrativeStyle::Screenplay;
    EXPECT_NE(a.snapshot(), b.snapshot());
}

TEST(Pipeline, ConfigValidation) {
    PipelineConfig c;
    c.parallelism = 0;
    EXPECT_THROW(c.validate(), InputError);
    c = {};
    c.grounding_link_iou = 1.5;
    EXPECT_THROW(c.validate(), InputError);
    c = {};
    c.thresholds.char_char = -0.1;
    EXPECT_THROW(c.validate(), InputError);
}

TEST(Pipeline, EmptyAndMissingDirectories) {
    testutil::TempDir tmp;
    fs::create_directories(tmp.path() / "empty");
    Scripted s;
    const auto summary = run_pipeline(tmp.path() / "empty", tmp.path() / "out", {}, s, s);
    EXPECT_TRUE(summary.pages.empty());
    EXPECT_EQ(summary.exit_code(), 0);
    EXPECT_THROW(run_pipeline(tmp.path() / "nope", tmp.path() / "out2", {}, s, s), IoError);
}

TEST(Pipeline, DuplicateStemsRejected) {
    testutil::TempDir tmp;
    const fs::path pages = single_page(tmp);
    fs::copy_file(pages / "page01.png", pages / "page01.jpg");
    Scripted s;
    EXPECT_THROW(run_pipeline(pages, tmp.path() / "out", {}, s, s), InputError);
}

TEST(Pipeline, BadPageFailsAloneAndOthersContinue) {
    testutil::TempDir tmp;
    const fs::path pages = single_page(tmp);
    write_file_atomic(pages / "page00.png", "not an image");
    Scripted s;
    s.with_panel = true;
    const auto summary = run_pipeline(pages, tmp.path() / "out", {}, s, s);
    ASSERT_EQ(summary.pages.size(), 2u);
    EXPECT_EQ(summary.pages[0].image, "page00.png");
    EXPECT_TRUE(summary.pages[0].error);
    EXPECT_EQ(summary.pages[0].reached, Stage::Pending);
    EXPECT_FALSE(summary.pages[1].error);
    EXPECT_EQ(summary.pages[1].reached, Stage::Prose);
    EXPECT_EQ(summary.failed(), 1u);
    EXPECT_EQ(summary.exit_code(), 1);
}

TEST(Pipeline, UnreachableServiceFailsPages) {
    testutil::TempDir tmp;
    const fs::path pages = single_page(tmp);
    ClientOptions o;
    o.base_url = "http://127.0.0.1:1";
    o.max_attempts = 1;
    o.timeout = std::chrono::milliseconds(500);
    HttpInferenceClient infer(o);
    HttpChatClient chat(o);
    const auto summary = run_pipeline(pages, tmp.path() / "out", {}, infer, chat);
    ASSERT_EQ(summary.pages.size(), 1u);
    EXPECT_EQ(summary.exit_code(), 1);
    EXPECT_EQ(summary.pages[0].reached, Stage::Pending);
}

TEST(Pipeline, PageWithoutPanelsUsesWholePage) {
    testutil::TempDir tmp;
    const fs::path pages = single_page(tmp);
    Scripted s;
    const auto summary = run_pipeline(pages, tmp.path() / "out", {}, s, s);
    EXPECT_EQ(summary.exit_code(), 0) << summary.pages[0].error.value_or("");
    const json captions = read_json_file(tmp.path() / "out/pages/page01/captions.json");
    ASSERT_EQ(captions["panels"].size(), 1u);
    EXPECT_EQ(captions["panels"][0]["crop"], json::array({0, 0, 800, 1200}));
    EXPECT_EQ(captions["panels"][0]["caption"], "A person talks.");
    const std::string prompt = read_file(tmp.path() / "out/pages/page01/prose_prompt.txt");
    EXPECT_NE(prompt.find("C0: Hello."), std::string::npos);
}

TEST(Pipeline, NoAssociationHeadsLeavesSpeakersUnknown) {
    testutil::TempDir tmp;
    const fs::path pages = single_page(tmp);
    Scripted s;
    s.with_panel = true;
    s.heads = false;
    const auto summary = run_pipeline(pages, tmp.path() / "out", {}, s, s);
    EXPECT_EQ(summary.exit_code(), 0) << summary.pages[0].error.value_or("");
    const std::string transcript = read_file(tmp.path() / "out/pages/page01/transcript.json");
    EXPECT_NE(transcript.find("UNKNOWN"), std::string::npos);
    EXPECT_EQ(transcript.find("C0"), std::string::npos);

    // with heads the same scores attribute the line
    Scripted h;
    h.with_panel = true;
    run_pipeline(pages, tmp.path() / "out2", {}, h, h);
    EXPECT_NE(read_file(tmp.path() / "out2/pages/page01/transcript.json").find("C0"), std::string::npos);
}
