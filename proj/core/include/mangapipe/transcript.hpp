#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mangapipe/page_graph.hpp"

namespace mangapipe {

struct TranscriptLine {
    std::string speaker_label;
    std::string text;
    int panel_order = -1;  // 1-based panel position, -1 when outside every panel
    int line_order = 0;

    friend bool operator==(const TranscriptLine&, const TranscriptLine&) = default;
};

/// Display names keyed by per-page cluster label.
using NameMap = std::map<int, std::string>;

inline constexpr const char* kUnknownSpeaker = "UNKNOWN";

/// `names[label]` when present, otherwise "C<label>".
std::string character_label(int cluster, const NameMap* names);

/// One line per text node with a nonempty reconciled string, in emission
/// order. `texts` is aligned with `graph.texts`.
std::vector<TranscriptLine> generate_transcript(const PageGraph& graph, std::span<const std::string> texts,
                                                const NameMap* names = nullptr);

/// `SPEAKER: text` lines, grouped by panel order (unassigned lines last).
std::string render_transcript(std::span<const TranscriptLine> lines);

/// Wire form: array of {speaker, text, panel, order}.
nlohmann::json transcript_to_json(std::span<const TranscriptLine> lines);
std::vector<TranscriptLine> transcript_from_json(const nlohmann::json& j);

}  // namespace mangapipe
