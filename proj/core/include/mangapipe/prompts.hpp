#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "mangapipe/error.hpp"
#include "mangapipe/reconcile.hpp"
#include "mangapipe/token_codec.hpp"
#include "mangapipe/transcript.hpp"

namespace mangapipe {

enum class NarrativeStyle { Prose, Screenplay, Storybook, Poem };

std::string_view to_string(NarrativeStyle style) noexcept;
std::optional<NarrativeStyle> narrative_style_from_string(std::string_view name) noexcept;

/// Per-panel input to the prose prompt. Dialogues are newline-joined
/// `SPEAKER: text` lines and may be empty.
struct PanelRecord {
    int panel_order = 1;
    std::string caption;
    std::string dialogues;
};

/// Fixed captioning instruction, including the directive to ignore text.
std::string caption_prompt();

/// Throws InputError on an empty panel list or non-contiguous panel_order.
std::string prose_prompt(std::span<const PanelRecord> panels, NarrativeStyle style = NarrativeStyle::Prose);

/// Rubric prompt for a 1-5 judge. Throws InputError on empty inputs.
std::string judge_prompt(std::string_view predicted, std::string_view reference);

struct JudgeVerdict {
    std::string judgement;
    double score = 0.0;

    friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

class JudgeParseError : public Error {
public:
    enum class Reason { NoJsonObject, MissingKey, NotNumeric, OutOfRange };

    JudgeParseError(Reason reason, const std::string& message) : Error(message), reason_(reason) {}
    Reason reason() const noexcept { return reason_; }

private:
    Reason reason_;
};

enum class JudgeParseMode {
    Lenient,  // first balanced JSON object anywhere in the reply
    Strict,   // the whole reply must be one JSON object
};

JudgeVerdict parse_judge_response(std::string_view raw, JudgeParseMode mode = JudgeParseMode::Lenient);

/// Caption text with each linked phrase followed by its character labels,
/// e.g. "the boy (C0) waves at them (C1, C2)".
std::string render_character_aware_caption(const GroundedCaption& caption, const PhraseLinks& links,
                                           const NameMap* names = nullptr);

}  // namespace mangapipe
