#include "mangapipe/transcript.hpp"

#include <algorithm>
#include <cstdint>

#include "mangapipe/error.hpp"

namespace mangapipe {

std::string character_label(int cluster, const NameMap* names) {
    if (names) {
        if (auto it = names->find(cluster); it != names->end()) return it->second;
    }
    return "C" + std::to_string(cluster);
}

std::vector<TranscriptLine> generate_transcript(const PageGraph& graph, std::span<const std::string> texts,
                                                const NameMap* names) {
    if (texts.size() != graph.texts.size()) {
        throw InputError("transcript: " + std::to_string(texts.size()) + " texts for " +
                         std::to_string(graph.texts.size()) + " text nodes");
    }
    std::vector<TranscriptLine> lines;
    for (std::size_t t = 0; t < graph.texts.size(); ++t) {
        if (texts[t].empty()) continue;
        TranscriptLine line;
        line.text = texts[t];
        if (const auto& speaker = graph.speaker_of[t]) {
            line.speaker_label = character_label(graph.cluster_of[*speaker], names);
        } else {
            line.speaker_label = kUnknownSpeaker;
        }
        if (const auto& panel = graph.panel_of[graph.texts[t]]) line.panel_order = static_cast<int>(*panel) + 1;
        line.line_order = static_cast<int>(lines.size());
        lines.push_back(std::move(line));
    }
    return lines;
}

std::string render_transcript(std::span<const TranscriptLine> lines) {
    std::vector<const TranscriptLine*> ordered;
    ordered.reserve(lines.size());
    for (const auto& l : lines) ordered.push_back(&l);
    auto group = [](const TranscriptLine* l) { return l->panel_order < 0 ? INT32_MAX : l->panel_order; };
    std::stable_sort(ordered.begin(), ordered.end(), [&](const TranscriptLine* a, const TranscriptLine* b) {
        if (group(a) != group(b)) return group(a) < group(b);
        return a->line_order < b->line_order;
    });

    std::string out;
    for (const auto* l : ordered) {
        if (!out.empty()) out += '\n';
        out += l->speaker_label;
        out += ": ";
        out += l->text;
    }
    return out;
}

nlohmann::json transcript_to_json(std::span<const TranscriptLine> lines) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& l : lines) {
        arr.push_back({{"speaker", l.speaker_label}, {"text", l.text}, {"panel", l.panel_order}, {"order", l.line_order}});
    }
    return arr;
}

std::vector<TranscriptLine> transcript_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw SchemaError("", "transcript must be an array");
    std::vector<TranscriptLine> lines;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& e = j[i];
        const std::string at = "/" + std::to_string(i);
        if (!e.is_object()) throw SchemaError(at, "expected object");
        if (!e.contains("speaker") || !e["speaker"].is_string()) throw SchemaError(at + "/speaker", "expected string");
        if (!e.contains("text") || !e["text"].is_string()) throw SchemaError(at + "/text", "expected string");
        if (!e.contains("panel") || !e["panel"].is_number_integer()) throw SchemaError(at + "/panel", "expected integer");
        if (!e.contains("order") || !e["order"].is_number_integer()) throw SchemaError(at + "/order", "expected integer");
        lines.push_back({e["speaker"].get<std::string>(), e["text"].get<std::string>(), e["panel"].get<int>(),
                         e["order"].get<int>()});
        if (lines.back().text.empty()) throw SchemaError(at + "/text", "empty text");
    }
    return lines;
}

}  // namespace mangapipe
