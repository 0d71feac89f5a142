#pragma once

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mangapipe/pipeline.hpp"

namespace mangapipe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailures = 1;
inline constexpr int kExitUsage = 2;

struct RunOptions {
    std::filesystem::path pages_dir;
    std::filesystem::path out_dir;
    PipelineConfig config;
    std::optional<std::string> chat_key;
    std::chrono::milliseconds timeout{30000};
    int attempts = 3;
    bool json = false;
};

/// Fills endpoint URLs and the chat key from MANGAPIPE_* variables where the
/// options leave them empty.
void apply_environment(RunOptions& opts);

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err);

enum class EvalKind { Detection, Clustering, Association, Grounding, Judge };
std::optional<EvalKind> eval_kind_from_string(std::string_view name);

struct EvalOptions {
    EvalKind kind = EvalKind::Detection;
    std::filesystem::path pred;  // verdicts file for judge
    std::filesystem::path gt;    // unused for judge
    double iou = 0.5;
    bool json = false;
    std::optional<std::filesystem::path> report;
    std::optional<std::filesystem::path> csv;
};

/// Report objects, {"version":1,"task":...,"metrics":{...}}.
nlohmann::json eval_detection(const std::filesystem::path& pred, const std::filesystem::path& gt, double iou);
nlohmann::json eval_clustering(const std::filesystem::path& pred, const std::filesystem::path& gt);
nlohmann::json eval_association(const std::filesystem::path& pred, const std::filesystem::path& gt);
nlohmann::json eval_grounding(const std::filesystem::path& pred, const std::filesystem::path& gt, double iou);
nlohmann::json eval_judge(const std::filesystem::path& verdicts);

/// "metric,value" rows, metric names joined with '.'.
std::string report_to_csv(const nlohmann::json& report);
std::string report_to_table(const nlohmann::json& report);

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);

struct DecodeOptions {
    InferenceTask task = InferenceTask::Detect;
    std::filesystem::path input;  // "-" for stdin
    std::optional<ImageDims> dims;
};

/// Input is either a JSON array of tokens or whitespace-free notation
/// (`<loc_1><loc_2>...`). Prints the decoded records as JSON.
int cmd_decode(const DecodeOptions& opts, std::istream& in, std::ostream& out, std::ostream& err);

struct MockServeOptions {
    std::filesystem::path fixtures;
    std::string host = "127.0.0.1";
    int port = 8765;
    int delay_ms = 0;
    int fail_first = 0;
};

int cmd_mock_serve(const MockServeOptions& opts, std::ostream& out, std::ostream& err);

struct FixturesGenOptions {
    std::filesystem::path root;  // repository root; writes tests/fixtures/e2e and tests/golden
};

int cmd_fixtures_gen(const FixturesGenOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace mangapipe::cli
