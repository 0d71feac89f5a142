#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mangapipe/dataset_io.hpp"
#include "mangapipe/model_client.hpp"
#include "mangapipe/page_graph.hpp"
#include "mangapipe/prompts.hpp"

namespace mangapipe {

inline constexpr const char* kToolVersion = "0.1.0";

struct PipelineConfig {
    Thresholds thresholds;
    double ocr_reconcile_iou = 0.1;
    double grounding_link_iou = 0.5;
    double eval_iou = 0.5;
    std::string infer_url;  // recorded in the snapshot; empty for in-process services
    std::string chat_url;
    NarrativeStyle style = NarrativeStyle::Prose;
    std::optional<std::filesystem::path> name_map;
    int parallelism = 4;

    /// Throws InputError unless every floor and threshold is in [0, 1] and
    /// parallelism >= 1.
    void validate() const;
    /// Everything that can change an artifact. Parallelism and credentials
    /// are left out.
    nlohmann::json snapshot() const;
};

struct PageOutcome {
    std::string image;
    Stage reached = Stage::Pending;
    bool resumed = false;  // at least one stage restored from disk
    std::optional<std::string> error;
};

struct RunSummary {
    std::vector<PageOutcome> pages;

    std::size_t failed() const;
    int exit_code() const { return failed() == 0 ? 0 : 1; }
};

/// Image files directly inside `dir`, sorted by filename.
std::vector<std::filesystem::path> list_page_images(const std::filesystem::path& dir);

/// Runs every page through detect, OCR, caption, ground and prose. Per-page
/// failures are recorded and the run continues. Completed stages from an
/// earlier run with the same config snapshot and image hash are reused.
/// Throws InputError / IoError for configuration problems.
RunSummary run_pipeline(const std::filesystem::path& pages_dir, const std::filesystem::path& out_dir,
                        const PipelineConfig& config, InferenceService& inference, ChatService& chat);

}  // namespace mangapipe
