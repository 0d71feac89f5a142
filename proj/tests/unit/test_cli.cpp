#include <sstream>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "mangapipe/dataset_io.hpp"
#include "mangapipe/mock_server.hpp"
#include "test_util.hpp"

using namespace mangapipe;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json page_doc(bool with_scores) {
    json doc = json::parse(R"({
  "version": 1,
  "pages": [
    {"image": "p1.png", "width": 800, "height": 1200,
     "nodes": [
       {"kind": "panel", "box": [0, 0, 400, 600]},
       {"kind": "char", "box": [10, 10, 100, 200]},
       {"kind": "char", "box": [150, 10, 250, 200]},
       {"kind": "text", "box": [20, 300, 80, 340]},
       {"kind": "tail", "box": [40, 340, 50, 360]}],
     "edges": {"text_char": [[0, 1]], "char_char": [], "text_tail": [[0, 0]]},
     "cluster_labels": [3, 4],
     "texts": ["Hey"]}]
})");
    if (with_scores) {
        doc["pages"][0]["scores"] = json::parse(R"({
            "text_char": {"shape": [1, 2], "data": [0.2, 0.9]},
            "char_char": {"shape": [2, 2], "data": [1, 0.1, 0.1, 1]},
            "text_tail": {"shape": [1, 1], "data": [0.7]}})");
    }
    return doc;
}

struct Files {
    testutil::TempDir tmp;
    fs::path write(const std::string& name, const json& j) {
        write_file_atomic(tmp.path() / name, j.dump());
        return tmp.path() / name;
    }
    fs::path write(const std::string& name, const std::string& s) {
        write_file_atomic(tmp.path() / name, s);
        return tmp.path() / name;
    }
};

}  // namespace

TEST(CliRun, AgainstMockServerMatchesGoldens) {
    testutil::TempDir tmp;
    MockServer server(FixtureStore::load(testutil::e2e_dir() / "server"));
    server.start();
    cli::RunOptions opts;
    opts.pages_dir = testutil::e2e_dir() / "pages";
    opts.out_dir = tmp.path();
    opts.config.infer_url = server.url();
    opts.config.chat_url = server.url();
    opts.config.name_map = testutil::e2e_dir() / "names.json";
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_run(opts, out, err), cli::kExitOk) << err.str() << out.str();
    EXPECT_NE(out.str().find("page01.png  prose"), std::string::npos) << out.str();
    for (const char* name : {"transcript.json", "captions.json", "grounded.json", "prose_prompt.txt", "prose.txt"}) {
        EXPECT_EQ(read_file(tmp.path() / "pages/page01" / name), read_file(testutil::golden_dir() / name)) << name;
    }
    const std::size_t first = server.request_count();
    EXPECT_EQ(first, 11u);

    std::ostringstream out2, err2;
    opts.json = true;
    ASSERT_EQ(cli::cmd_run(opts, out2, err2), cli::kExitOk);
    EXPECT_EQ(server.request_count(), first);
    const json summary = json::parse(out2.str());
    EXPECT_EQ(summary["failed"], 0);
    EXPECT_EQ(summary["pages"][0]["resumed"], true);
}

TEST(CliRun, MissingEndpointsAreUsageErrors) {
    cli::RunOptions opts;
    opts.pages_dir = testutil::e2e_dir() / "pages";
    opts.out_dir = "unused";
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_run(opts, out, err), cli::kExitUsage);
    EXPECT_NE(err.str().find("MANGAPIPE_INFER_URL"), std::string::npos);
    opts.config.infer_url = "http://127.0.0.1:1";
    std::ostringstream err2;
    EXPECT_EQ(cli::cmd_run(opts, out, err2), cli::kExitUsage);
    EXPECT_NE(err2.str().find("MANGAPIPE_CHAT_URL"), std::string::npos);
}

TEST(CliRun, BadConfigAndMissingPagesAreUsageErrors) {
    testutil::TempDir tmp;
    cli::RunOptions opts;
    opts.pages_dir = tmp.path() / "missing";
    opts.out_dir = tmp.path() / "out";
    opts.config.infer_url = opts.config.chat_url = "http://127.0.0.1:1";
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_run(opts, out, err), cli::kExitUsage);
    opts.pages_dir = testutil::e2e_dir() / "pages";
    opts.config.thresholds.text_char = 2.0;
    EXPECT_EQ(cli::cmd_run(opts, out, err), cli::kExitUsage);
}

TEST(CliRun, EnvironmentFillsOnlyEmptyFields) {
    setenv("MANGAPIPE_INFER_URL", "http://infer", 1);
    setenv("MANGAPIPE_CHAT_URL", "http://chat", 1);
    setenv("MANGAPIPE_CHAT_KEY", "k", 1);
    cli::RunOptions opts;
    opts.config.chat_url = "http://explicit";
    cli::apply_environment(opts);
    EXPECT_EQ(opts.config.infer_url, "http://infer");
    EXPECT_EQ(opts.config.chat_url, "http://explicit");
    EXPECT_EQ(opts.chat_key, "k");
    unsetenv("MANGAPIPE_INFER_URL");
    unsetenv("MANGAPIPE_CHAT_URL");
    unsetenv("MANGAPIPE_CHAT_KEY");
}

TEST(CliDecode, JsonArrayAndNotation) {
    cli::DecodeOptions opts;
    opts.input = "-";
    opts.dims = ImageDims{1000, 500};
    std::istringstream in(R"(["<loc_100>","<loc_200>","<loc_300>","<loc_400>","<char>","</s>"])");
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_decode(opts, in, out, err), cli::kExitOk) << err.str();
    const json r = json::parse(out.str());
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0]["kind"], "char");
    EXPECT_EQ(r[0]["bins"], json::array({100, 200, 300, 400}));
    ASSERT_TRUE(r[0]["pixels"].is_array());
    EXPECT_NEAR(r[0]["pixels"][0].get<double>(), 100.5, 0.51);

    opts.task = InferenceTask::Ocr;
    opts.dims.reset();
    std::istringstream in2("Hi there<loc_1><loc_2><loc_3><loc_4></s>\n");
    std::ostringstream out2;
    ASSERT_EQ(cli::cmd_decode(opts, in2, out2, err), cli::kExitOk) << err.str();
    const json r2 = json::parse(out2.str());
    EXPECT_EQ(r2[0]["text"], "Hi there");
    EXPECT_TRUE(r2[0]["pixels"].is_null());

    opts.task = InferenceTask::Ground;
    std::istringstream in3("A <grnd>cat</grnd><loc_1><loc_2><loc_3><loc_4> naps.</s>");
    std::ostringstream out3;
    ASSERT_EQ(cli::cmd_decode(opts, in3, out3, err), cli::kExitOk) << err.str();
    const json r3 = json::parse(out3.str());
    ASSERT_EQ(r3.size(), 3u);
    EXPECT_EQ(r3[1]["phrase"], "cat");
}

TEST(CliDecode, ErrorsReportTokenIndex) {
    cli::DecodeOptions opts;
    opts.input = "-";
    std::istringstream in(R"(["<loc_1>","<loc_2>","<loc_3>","<char>","</s>"])");
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_decode(opts, in, out, err), cli::kExitFailures);
    EXPECT_NE(err.str().find("decode failed at token 3"), std::string::npos) << err.str();

    std::istringstream bad("[1, 2]");
    std::ostringstream err2;
    EXPECT_EQ(cli::cmd_decode(opts, bad, out, err2), cli::kExitUsage);

    opts.input = "/definitely/not/here";
    std::istringstream none;
    EXPECT_EQ(cli::cmd_decode(opts, none, out, err2), cli::kExitUsage);
}

TEST(CliEval, DetectionAndClustering) {
    Files f;
    const auto gt = f.write("gt.json", page_doc(false));
    const auto pred = f.write("pred.json", page_doc(true));
    const json det = cli::eval_detection(pred, gt, 0.5);
    EXPECT_EQ(det["task"], "detection");
    EXPECT_DOUBLE_EQ(det["metrics"]["char"]["f1"].get<double>(), 1.0);
    EXPECT_EQ(det["metrics"]["text"]["tp"], 1);

    const json cl = cli::eval_clustering(pred, gt);
    EXPECT_DOUBLE_EQ(cl["metrics"]["ami"].get<double>(), 1.0);
    EXPECT_EQ(cl["metrics"]["pages"], 1);
}

TEST(CliEval, Association) {
    Files f;
    const auto gt = f.write("gt.json", page_doc(false));
    const auto pred = f.write("pred.json", page_doc(true));
    const json r = cli::eval_association(pred, gt);
    EXPECT_DOUBLE_EQ(r["metrics"]["text_char"]["ap"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(r["metrics"]["text_tail"]["ap"].get<double>(), 1.0);
    EXPECT_TRUE(r["metrics"]["char_char"]["ap"].is_null());  // no GT edges on any page
    EXPECT_THROW(cli::eval_association(gt, gt), SchemaError);
}

TEST(CliEval, Grounding) {
    Files f;
    const json caps = json::parse(R"({"version":1,"captions":[
        {"panel_image":"a","caption":"the boy runs","grounded_spans":[{"start":0,"end":7,"boxes":[[1,2,300,400]]}]},
        {"panel_image":"b","caption":"rain"}]})");
    const auto gt = f.write("gt.json", caps);
    const json self = cli::eval_grounding(gt, gt, 0.5);
    EXPECT_DOUBLE_EQ(self["metrics"]["f1"].get<double>(), 1.0);
    EXPECT_FALSE(self.contains("warnings"));

    json partial = caps;
    partial["captions"].erase(0);
    const auto pred = f.write("pred.json", partial);
    const json r = cli::eval_grounding(pred, gt, 0.5);
    EXPECT_EQ(r["metrics"]["fn"], 1);
    ASSERT_TRUE(r.contains("warnings"));
}

TEST(CliEval, JudgeAndCsv) {
    Files f;
    const auto v = f.write("v.json", json::parse(R"({"version":1,"judges":[
        {"name":"a","scores":[4,5]},
        {"name":"b","responses":["{\"score\": 3, \"judgement\": \"ok\"}"]}]})"));
    const json r = cli::eval_judge(v);
    EXPECT_DOUBLE_EQ(r["metrics"]["avg"].get<double>(), 3.75);
    EXPECT_DOUBLE_EQ(r["metrics"]["per_judge"]["a"]["mean"].get<double>(), 4.5);
    const std::string csv = cli::report_to_csv(r);
    EXPECT_EQ(csv.rfind("metric,value\n", 0), 0u);
    EXPECT_NE(csv.find("avg,3.750000\n"), std::string::npos) << csv;
    EXPECT_NE(csv.find("per_judge.a.n,2\n"), std::string::npos) << csv;

    const auto dup = f.write("dup.json", json::parse(R"({"version":1,"judges":[{"name":"a","scores":[4]},{"name":"a","scores":[4]}]})"));
    EXPECT_THROW(cli::eval_judge(dup), SchemaError);
    const auto out_of_range = f.write("oor.json", json::parse(R"({"version":1,"judges":[{"name":"a","scores":[6]}]})"));
    EXPECT_ANY_THROW(cli::eval_judge(out_of_range));
}

TEST(CliEval, CommandWritesReportAndCsv) {
    Files f;
    const auto v = f.write("v.json", json::parse(R"({"version":1,"judges":[{"name":"a","scores":[3.63]}]})"));
    cli::EvalOptions opts;
    opts.kind = cli::EvalKind::Judge;
    opts.pred = v;
    opts.report = f.tmp.path() / "report.json";
    opts.csv = f.tmp.path() / "report.csv";
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_eval(opts, out, err), cli::kExitOk) << err.str();
    EXPECT_EQ(read_json_file(*opts.report)["task"], "judge");
    EXPECT_NE(read_file(*opts.csv).find("avg,3.630000"), std::string::npos);
    EXPECT_NE(out.str().find("judge"), std::string::npos);

    opts.pred = f.tmp.path() / "missing.json";
    std::ostringstream err2;
    EXPECT_EQ(cli::cmd_eval(opts, out, err2), cli::kExitUsage);
    opts.pred = v;
    opts.iou = 1.5;
    EXPECT_EQ(cli::cmd_eval(opts, out, err2), cli::kExitUsage);
}

TEST(CliEval, KindNames) {
    EXPECT_EQ(cli::eval_kind_from_string("grounding"), cli::EvalKind::Grounding);
    EXPECT_FALSE(cli::eval_kind_from_string("speed"));
}

TEST(FixturesGen, CommittedFixturesHaveNotDrifted) {
    testutil::TempDir tmp;
    cli::FixturesGenOptions opts{tmp.path()};
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_fixtures_gen(opts, out, err), cli::kExitOk) << err.str();
    std::size_t compared = 0;
    for (const auto& sub : {fs::path("tests/fixtures/e2e"), fs::path("tests/golden")}) {
        for (const auto& e : fs::recursive_directory_iterator(tmp.path() / sub)) {
            if (!e.is_regular_file()) continue;
            const fs::path rel = fs::relative(e.path(), tmp.path());
            EXPECT_EQ(read_file(e.path()), read_file(testutil::source_dir() / rel)) << rel;
            ++compared;
        }
    }
    EXPECT_EQ(compared, 14u + 5u);
}
