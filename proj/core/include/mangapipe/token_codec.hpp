#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mangapipe/geometry.hpp"

namespace mangapipe {

enum class NodeKind { Panel, Character, Text, Tail };

inline constexpr std::array<NodeKind, 4> kAllNodeKinds = {NodeKind::Panel, NodeKind::Character, NodeKind::Text,
                                                          NodeKind::Tail};

/// Short wire name: "panel", "char", "text", "tail".
std::string_view to_string(NodeKind kind) noexcept;
std::optional<NodeKind> node_kind_from_string(std::string_view name) noexcept;

/// Model output as a flat list of symbolic tokens in canonical notation:
/// `<loc_k>` (k in [0, 999]), `<panel>`, `<char>`, `<text>`, `<tail>`,
/// `<grnd>` / `</grnd>` around a grounded phrase, `</s>` as end of sequence.
/// Anything else is a literal text token.
using TokenStream = std::vector<std::string>;

namespace tok {
inline constexpr std::string_view kEos = "</s>";
inline constexpr std::string_view kSpanOpen = "<grnd>";
inline constexpr std::string_view kSpanClose = "</grnd>";
std::string loc(int bin);
std::string kind(NodeKind kind);
}  // namespace tok

enum class TokenClass { Text, Location, Class, SpanOpen, SpanClose, Eos, UnknownSpecial, BadLocation };

struct ClassifiedToken {
    TokenClass cls = TokenClass::Text;
    int bin = -1;                      // Location only
    NodeKind kind = NodeKind::Panel;  // Class only
};

ClassifiedToken classify_token(std::string_view token) noexcept;

struct DetectionRecord {
    QuantizedBox box;
    NodeKind kind = NodeKind::Panel;
    std::size_t order_index = 0;

    friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct OcrRecord {
    std::string text;
    QuantizedBox box;
    std::size_t order_index = 0;

    friend bool operator==(const OcrRecord&, const OcrRecord&) = default;
};

struct PlainSegment {
    std::string text;
    friend bool operator==(const PlainSegment&, const PlainSegment&) = default;
};

/// A character-referring phrase and the boxes (one per referenced instance)
/// it is grounded to.
struct PhraseSegment {
    std::string phrase;
    std::vector<QuantizedBox> boxes;
    friend bool operator==(const PhraseSegment&, const PhraseSegment&) = default;
};

using CaptionSegment = std::variant<PlainSegment, PhraseSegment>;

struct GroundedCaption {
    std::vector<CaptionSegment> segments;

    /// Caption text with grounding markers removed.
    std::string flatten() const;
    std::vector<PhraseSegment> phrases() const;

    friend bool operator==(const GroundedCaption&, const GroundedCaption&) = default;
};

std::vector<DetectionRecord> parse_detection(const TokenStream& tokens);
TokenStream serialize_detection(std::span<const DetectionRecord> records);

std::vector<OcrRecord> parse_ocr(const TokenStream& tokens);
TokenStream serialize_ocr(std::span<const OcrRecord> records);

GroundedCaption parse_grounded_caption(const TokenStream& tokens);
TokenStream serialize_grounded_caption(const GroundedCaption& caption);

/// Phrase tagged as `( phrase ) [ ID ]` or `( phrase ) [ ID, ID ]`.
struct IdPhraseSegment {
    std::string phrase;
    std::vector<int> ids;
    friend bool operator==(const IdPhraseSegment&, const IdPhraseSegment&) = default;
};

struct PregroundedCaption {
    std::vector<std::variant<PlainSegment, IdPhraseSegment>> segments;
    std::vector<std::string> warnings;

    std::string flatten() const;
};

/// Lenient: malformed markers stay in the plain text and add a warning.
PregroundedCaption parse_pregrounded(std::string_view text);

/// Concatenated notation, e.g. `Hello there<loc_1><loc_2><loc_3><loc_4></s>`.
std::string to_notation(const TokenStream& tokens);
TokenStream from_notation(std::string_view notation);

}  // namespace mangapipe
