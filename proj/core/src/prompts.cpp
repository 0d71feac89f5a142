#include "mangapipe/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include <nlohmann/json.hpp>

#include "prompt_templates.hpp"

namespace mangapipe {

std::string_view to_string(NarrativeStyle style) noexcept {
    switch (style) {
        case NarrativeStyle::Prose: return "prose";
        case NarrativeStyle::Screenplay: return "screenplay";
        case NarrativeStyle::Storybook: return "storybook";
        case NarrativeStyle::Poem: return "poem";
    }
    return "prose";
}

std::optional<NarrativeStyle> narrative_style_from_string(std::string_view name) noexcept {
    for (auto s : {NarrativeStyle::Prose, NarrativeStyle::Screenplay, NarrativeStyle::Storybook, NarrativeStyle::Poem}) {
        if (to_string(s) == name) return s;
    }
    return std::nullopt;
}

namespace {

std::string_view format_noun(NarrativeStyle style) noexcept {
    switch (style) {
        case NarrativeStyle::Prose: return "prose";
        case NarrativeStyle::Screenplay: return "screenplay";
        case NarrativeStyle::Storybook: return "children's storybook";
        case NarrativeStyle::Poem: return "poem";
    }
    return "prose";
}

}  // namespace

std::string caption_prompt() { return templates::kCaption; }

std::string prose_prompt(std::span<const PanelRecord> panels, NarrativeStyle style) {
    if (panels.empty()) throw InputError("prose prompt needs at least one panel");
    std::string out = templates::kProseHeader;
    out += "\n\n";
    for (std::size_t i = 0; i < panels.size(); ++i) {
        const auto& p = panels[i];
        if (p.panel_order != static_cast<int>(i) + 1) {
            throw InputError("panel " + std::to_string(i) + " has panel_order " + std::to_string(p.panel_order) +
                             ", expected " + std::to_string(i + 1));
        }
        out += "Panel " + std::to_string(p.panel_order) + "\n\n";
        out += "Description: " + p.caption + "\n";
        out += "Dialogues: " + (p.dialogues.empty() ? std::string("(none)") : p.dialogues) + "\n\n";
    }
    out += templates::kProseClosing;
    out += templates::kProseFormatClause;
    out += format_noun(style);
    out += '.';
    return out;
}

std::string judge_prompt(std::string_view predicted, std::string_view reference) {
    if (predicted.empty() || reference.empty()) throw InputError("judge prompt needs nonempty predicted and reference");
    const std::string_view tmpl = templates::kJudge;
    const std::size_t first = tmpl.find("{}");
    const std::size_t second = tmpl.find("{}", first + 2);
    std::string out;
    out.reserve(tmpl.size() + predicted.size() + reference.size());
    out += tmpl.substr(0, first);
    out += predicted;
    out += tmpl.substr(first + 2, second - first - 2);
    out += reference;
    out += tmpl.substr(second + 2);
    return out;
}

namespace {

// Returns the end (one past '}') of the balanced object starting at `open`,
// or npos. Braces inside JSON strings are skipped.
std::size_t balanced_object_end(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return i + 1;
    }
    return std::string_view::npos;
}

std::optional<nlohmann::json> first_json_object(std::string_view raw) {
    for (std::size_t pos = raw.find('{'); pos != std::string_view::npos; pos = raw.find('{', pos + 1)) {
        const std::size_t end = balanced_object_end(raw, pos);
        if (end == std::string_view::npos) continue;
        auto parsed = nlohmann::json::parse(raw.substr(pos, end - pos), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) return parsed;
    }
    return std::nullopt;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace

JudgeVerdict parse_judge_response(std::string_view raw, JudgeParseMode mode) {
    using Reason = JudgeParseError::Reason;
    std::optional<nlohmann::json> obj;
    if (mode == JudgeParseMode::Strict) {
        auto parsed = nlohmann::json::parse(trim(raw), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) obj = std::move(parsed);
    } else {
        obj = first_json_object(raw);
    }
    if (!obj) throw JudgeParseError(Reason::NoJsonObject, "judge response contains no JSON object");

    if (!obj->contains("judgement") || !(*obj)["judgement"].is_string()) {
        throw JudgeParseError(Reason::MissingKey, "judge response lacks a string \"judgement\"");
    }
    if (!obj->contains("score")) throw JudgeParseError(Reason::MissingKey, "judge response lacks \"score\"");

    const auto& s = (*obj)["score"];
    double score = 0.0;
    if (s.is_number()) {
        score = s.get<double>();
    } else if (s.is_string()) {
        const std::string text(trim(s.get<std::string>()));
        char* end = nullptr;
        score = std::strtod(text.c_str(), &end);
        if (text.empty() || end != text.c_str() + text.size()) {
            throw JudgeParseError(Reason::NotNumeric, "score \"" + text + "\" is not numeric");
        }
    } else {
        throw JudgeParseError(Reason::NotNumeric, "score is not numeric");
    }
    if (!std::isfinite(score)) throw JudgeParseError(Reason::NotNumeric, "score is not finite");
    if (score < 1.0 || score > 5.0) {
        throw JudgeParseError(Reason::OutOfRange, "score " + std::to_string(score) + " outside [1, 5]");
    }
    return {(*obj)["judgement"].get<std::string>(), score};
}

std::string render_character_aware_caption(const GroundedCaption& caption, const PhraseLinks& links,
                                           const NameMap* names) {
    std::string out;
    std::size_t phrase_index = 0;
    for (const auto& seg : caption.segments) {
        if (const auto* plain = std::get_if<PlainSegment>(&seg)) {
            out += plain->text;
            continue;
        }
        out += std::get<PhraseSegment>(seg).phrase;
        std::vector<int> labels;
        if (phrase_index < links.size()) {
            for (const auto& l : links[phrase_index]) {
                if (l && std::find(labels.begin(), labels.end(), *l) == labels.end()) labels.push_back(*l);
            }
        }
        ++phrase_index;
        if (labels.empty()) continue;
        out += " (";
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (i) out += ", ";
            out += character_label(labels[i], names);
        }
        out += ')';
    }
    return out;
}

}  // namespace mangapipe
