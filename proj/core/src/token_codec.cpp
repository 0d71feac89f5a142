#include "mangapipe/token_codec.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <regex>
#include <sstream>

#include "mangapipe/error.hpp"

namespace mangapipe {

std::string_view to_string(NodeKind kind) noexcept {
    switch (kind) {
        case NodeKind::Panel: return "panel";
        case NodeKind::Character: return "char";
        case NodeKind::Text: return "text";
        case NodeKind::Tail: return "tail";
    }
    return "panel";
}

std::optional<NodeKind> node_kind_from_string(std::string_view name) noexcept {
    for (NodeKind k : kAllNodeKinds) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

namespace tok {

std::string loc(int bin) { return "<loc_" + std::to_string(bin) + ">"; }

std::string kind(NodeKind k) { return "<" + std::string(to_string(k)) + ">"; }

}  // namespace tok

namespace {

bool is_special_shape(std::string_view t) noexcept {
    if (t.size() < 3 || t.front() != '<' || t.back() != '>') return false;
    std::string_view inner = t.substr(1, t.size() - 2);
    if (inner.front() == '/') inner.remove_prefix(1);
    if (inner.empty()) return false;
    return std::all_of(inner.begin(), inner.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
}

}  // namespace

ClassifiedToken classify_token(std::string_view t) noexcept {
    ClassifiedToken out;
    if (!is_special_shape(t)) return out;
    if (t == tok::kEos) {
        out.cls = TokenClass::Eos;
        return out;
    }
    if (t == tok::kSpanOpen) {
        out.cls = TokenClass::SpanOpen;
        return out;
    }
    if (t == tok::kSpanClose) {
        out.cls = TokenClass::SpanClose;
        return out;
    }
    constexpr std::string_view loc_prefix = "<loc_";
    if (t.starts_with(loc_prefix)) {
        std::string_view digits = t.substr(loc_prefix.size(), t.size() - loc_prefix.size() - 1);
        int bin = -1;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), bin);
        const bool canonical = !digits.empty() && (digits.size() == 1 || digits.front() != '0');
        if (ec != std::errc{} || ptr != digits.data() + digits.size() || !canonical || bin < 0 ||
            bin >= kLocationBins) {
            out.cls = TokenClass::BadLocation;
            return out;
        }
        out.cls = TokenClass::Location;
        out.bin = bin;
        return out;
    }
    if (auto kind = node_kind_from_string(t.substr(1, t.size() - 2))) {
        out.cls = TokenClass::Class;
        out.kind = *kind;
        return out;
    }
    out.cls = TokenClass::UnknownSpecial;
    return out;
}

namespace {

// Scans to the single trailing EOS and returns its index. Every parser
// rejects tokens after EOS and a missing EOS the same way.
std::size_t find_eos(const TokenStream& tokens) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (classify_token(tokens[i]).cls == TokenClass::Eos) {
            if (i + 1 != tokens.size()) throw ParseError(i + 1, "token after end of sequence");
            return i;
        }
    }
    throw ParseError(tokens.size(), "missing end-of-sequence token");
}

QuantizedBox box_from_quad(const std::array<int, 4>& q, std::size_t index) {
    QuantizedBox box{q[0], q[1], q[2], q[3]};
    if (!box.valid()) throw ParseError(index, "inverted box");
    return box;
}

void check_token_usable(const ClassifiedToken& c, std::size_t index) {
    if (c.cls == TokenClass::BadLocation) throw ParseError(index, "location token out of range");
    if (c.cls == TokenClass::UnknownSpecial) throw ParseError(index, "unknown special token");
}

void append_box(TokenStream& out, const QuantizedBox& b) {
    for (int v : b.as_array()) out.push_back(tok::loc(v));
}

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> words;
    std::istringstream in{std::string(s)};
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

void require_text_token(const std::string& t) {
    if (classify_token(t).cls != TokenClass::Text) {
        throw InputError("text '" + t + "' collides with a special token");
    }
}

}  // namespace

std::vector<DetectionRecord> parse_detection(const TokenStream& tokens) {
    const std::size_t eos = find_eos(tokens);
    std::vector<DetectionRecord> records;
    std::array<int, 4> quad{};
    std::size_t pending = 0;
    for (std::size_t i = 0; i < eos; ++i) {
        const ClassifiedToken c = classify_token(tokens[i]);
        check_token_usable(c, i);
        switch (c.cls) {
            case TokenClass::Location:
                if (pending == 4) throw ParseError(i, "more than 4 location tokens before a class token");
                quad[pending++] = c.bin;
                break;
            case TokenClass::Class:
                if (pending != 4) {
                    throw ParseError(i, "class token preceded by " + std::to_string(pending) +
                                            " location tokens, expected 4");
                }
                records.push_back({box_from_quad(quad, i), c.kind, records.size()});
                pending = 0;
                break;
            default:
                throw ParseError(i, "unexpected token in detection output");
        }
    }
    if (pending != 0) throw ParseError(eos, "dangling location tokens before end of sequence");
    return records;
}

TokenStream serialize_detection(std::span<const DetectionRecord> records) {
    TokenStream out;
    out.reserve(records.size() * 5 + 1);
    for (const auto& r : records) {
        append_box(out, r.box);
        out.push_back(tok::kind(r.kind));
    }
    out.emplace_back(tok::kEos);
    return out;
}

std::vector<OcrRecord> parse_ocr(const TokenStream& tokens) {
    const std::size_t eos = find_eos(tokens);
    std::vector<OcrRecord> records;
    std::vector<std::string> words;
    std::array<int, 4> quad{};
    std::size_t pending = 0;
    for (std::size_t i = 0; i < eos; ++i) {
        const ClassifiedToken c = classify_token(tokens[i]);
        check_token_usable(c, i);
        if (c.cls == TokenClass::Text) {
            if (pending != 0) throw ParseError(i, "text inside a location quad");
            for (auto& w : split_words(tokens[i])) words.push_back(std::move(w));
            continue;
        }
        if (c.cls != TokenClass::Location) throw ParseError(i, "unexpected token in OCR output");
        if (pending == 0 && words.empty()) throw ParseError(i, "location tokens with no preceding text");
        quad[pending++] = c.bin;
        if (pending == 4) {
            std::string text;
            for (const auto& w : words) {
                if (!text.empty()) text += ' ';
                text += w;
            }
            records.push_back({std::move(text), box_from_quad(quad, i), records.size()});
            words.clear();
            pending = 0;
        }
    }
    if (pending != 0) throw ParseError(eos, "OCR record has fewer than 4 location tokens");
    if (!words.empty()) throw ParseError(eos, "OCR text without location tokens");
    return records;
}

TokenStream serialize_ocr(std::span<const OcrRecord> records) {
    TokenStream out;
    for (const auto& r : records) {
        auto words = split_words(r.text);
        if (words.empty()) throw InputError("OCR record " + std::to_string(r.order_index) + " has empty text");
        for (auto& w : words) {
            require_text_token(w);
            out.push_back(std::move(w));
        }
        append_box(out, r.box);
    }
    out.emplace_back(tok::kEos);
    return out;
}

std::string GroundedCaption::flatten() const {
    std::string out;
    for (const auto& seg : segments) {
        std::visit(
            [&](const auto& s) {
                if constexpr (std::is_same_v<std::decay_t<decltype(s)>, PlainSegment>) {
                    out += s.text;
                } else {
                    out += s.phrase;
                }
            },
            seg);
    }
    return out;
}

std::vector<PhraseSegment> GroundedCaption::phrases() const {
    std::vector<PhraseSegment> out;
    for (const auto& seg : segments) {
        if (const auto* p = std::get_if<PhraseSegment>(&seg)) out.push_back(*p);
    }
    return out;
}

GroundedCaption parse_grounded_caption(const TokenStream& tokens) {
    const std::size_t eos = find_eos(tokens);
    enum class State { Outside, InSpan, AfterSpan } state = State::Outside;

    GroundedCaption caption;
    std::string plain;
    PhraseSegment phrase;
    std::array<int, 4> quad{};
    std::size_t pending = 0;

    auto flush_plain = [&] {
        if (!plain.empty()) caption.segments.emplace_back(PlainSegment{std::move(plain)});
        plain.clear();
    };
    auto close_phrase = [&](std::size_t i) {
        if (pending != 0) throw ParseError(i, "location quad of wrong arity after grounded span");
        if (phrase.boxes.empty()) throw ParseError(i, "grounded span without location quads");
        caption.segments.emplace_back(std::move(phrase));
        phrase = {};
        state = State::Outside;
    };

    for (std::size_t i = 0; i <= eos; ++i) {
        const ClassifiedToken c = classify_token(tokens[i]);
        check_token_usable(c, i);
        if (c.cls == TokenClass::Class) throw ParseError(i, "class token in grounding output");

        if (state == State::AfterSpan) {
            if (c.cls == TokenClass::Location) {
                quad[pending++] = c.bin;
                if (pending == 4) {
                    phrase.boxes.push_back(box_from_quad(quad, i));
                    pending = 0;
                }
                continue;
            }
            close_phrase(i);
        }

        if (state == State::InSpan) {
            switch (c.cls) {
                case TokenClass::Text: phrase.phrase += tokens[i]; break;
                case TokenClass::SpanClose:
                    if (phrase.phrase.empty()) throw ParseError(i, "empty grounded phrase");
                    state = State::AfterSpan;
                    break;
                case TokenClass::SpanOpen: throw ParseError(i, "nested grounded span");
                case TokenClass::Eos: throw ParseError(i, "unterminated grounded span");
                default: throw ParseError(i, "location token inside grounded phrase");
            }
            continue;
        }

        switch (c.cls) {
            case TokenClass::Text: plain += tokens[i]; break;
            case TokenClass::SpanOpen:
                flush_plain();
                state = State::InSpan;
                break;
            case TokenClass::SpanClose: throw ParseError(i, "span close without open");
            case TokenClass::Location: throw ParseError(i, "location token outside a grounded span");
            case TokenClass::Eos: flush_plain(); break;
            default: throw ParseError(i, "unexpected token in grounding output");
        }
    }
    return caption;
}

TokenStream serialize_grounded_caption(const GroundedCaption& caption) {
    TokenStream out;
    for (const auto& seg : caption.segments) {
        if (const auto* p = std::get_if<PlainSegment>(&seg)) {
            if (p->text.empty()) continue;
            require_text_token(p->text);
            out.push_back(p->text);
            continue;
        }
        const auto& ph = std::get<PhraseSegment>(seg);
        if (ph.phrase.empty()) throw InputError("grounded phrase must be nonempty");
        if (ph.boxes.empty()) throw InputError("grounded phrase '" + ph.phrase + "' has no boxes");
        require_text_token(ph.phrase);
        out.emplace_back(tok::kSpanOpen);
        out.push_back(ph.phrase);
        out.emplace_back(tok::kSpanClose);
        for (const auto& b : ph.boxes) append_box(out, b);
    }
    out.emplace_back(tok::kEos);
    return out;
}

std::string PregroundedCaption::flatten() const {
    std::string out;
    for (const auto& seg : segments) {
        if (const auto* p = std::get_if<PlainSegment>(&seg)) {
            out += p->text;
        } else {
            out += std::get<IdPhraseSegment>(seg).phrase;
        }
    }
    return out;
}

PregroundedCaption parse_pregrounded(std::string_view text) {
    static const std::regex marker(R"(\(\s*([^()\[\]]*?)\s*\)\s*\[\s*(\d+(?:\s*,\s*\d+)*)\s*\])");

    PregroundedCaption out;
    auto add_plain = [&](std::string_view s, std::size_t base) {
        if (s.empty()) return;
        for (std::size_t k = 0; k < s.size(); ++k) {
            if (s[k] == '(') out.warnings.push_back("unmatched '(' at offset " + std::to_string(base + k));
        }
        if (!out.segments.empty()) {
            if (auto* prev = std::get_if<PlainSegment>(&out.segments.back())) {
                prev->text += s;
                return;
            }
        }
        out.segments.emplace_back(PlainSegment{std::string(s)});
    };

    const std::string owned(text);
    std::size_t cursor = 0;
    for (auto it = std::sregex_iterator(owned.begin(), owned.end(), marker); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        const auto start = static_cast<std::size_t>(m.position(0));
        const auto length = static_cast<std::size_t>(m.length(0));
        IdPhraseSegment seg{m[1].str(), {}};
        bool ids_ok = !seg.phrase.empty();
        const std::string ids = m[2].str();
        for (std::size_t p = 0; p < ids.size() && ids_ok;) {
            while (p < ids.size() && !std::isdigit(static_cast<unsigned char>(ids[p]))) ++p;
            std::size_t q = p;
            while (q < ids.size() && std::isdigit(static_cast<unsigned char>(ids[q]))) ++q;
            if (q == p) break;
            int id = 0;
            auto [ptr, ec] = std::from_chars(ids.data() + p, ids.data() + q, id);
            if (ec != std::errc{}) ids_ok = false;
            else seg.ids.push_back(id);
            p = q;
        }
        add_plain(std::string_view(owned).substr(cursor, start - cursor), cursor);
        if (!ids_ok) {
            out.warnings.push_back("unusable marker at offset " + std::to_string(start));
            // keep the raw marker text but do not double-count its '('
            std::string raw = m.str(0);
            if (!out.segments.empty() && std::holds_alternative<PlainSegment>(out.segments.back())) {
                std::get<PlainSegment>(out.segments.back()).text += raw;
            } else {
                out.segments.emplace_back(PlainSegment{std::move(raw)});
            }
        } else {
            out.segments.emplace_back(std::move(seg));
        }
        cursor = start + length;
    }
    add_plain(std::string_view(owned).substr(cursor), cursor);
    return out;
}

std::string to_notation(const TokenStream& tokens) {
    std::string out;
    for (const auto& t : tokens) out += t;
    return out;
}

TokenStream from_notation(std::string_view notation) {
    TokenStream out;
    std::string text;
    std::size_t i = 0;
    while (i < notation.size()) {
        if (notation[i] == '<') {
            const std::size_t close = notation.find('>', i);
            if (close != std::string_view::npos) {
                std::string_view candidate = notation.substr(i, close - i + 1);
                if (is_special_shape(candidate)) {
                    if (!text.empty()) out.push_back(std::move(text));
                    text.clear();
                    out.emplace_back(candidate);
                    i = close + 1;
                    continue;
                }
            }
        }
        text += notation[i++];
    }
    if (!text.empty()) out.push_back(std::move(text));
    return out;
}

}  // namespace mangapipe
