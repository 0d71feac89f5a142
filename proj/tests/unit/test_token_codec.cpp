#include <random>

#include <gtest/gtest.h>

#include "mangapipe/error.hpp"
#include "mangapipe/token_codec.hpp"

using namespace mangapipe;

namespace {

TokenStream stream(std::initializer_list<std::string> t) { return TokenStream(t); }
std::string L(int b) { return tok::loc(b); }
const std::string EOS(tok::kEos);

std::size_t error_index(const std::function<void()>& f) {
    try {
        f();
    } catch (const ParseError& e) {
        return e.token_index();
    }
    ADD_FAILURE() << "no ParseError";
    return static_cast<std::size_t>(-1);
}

QuantizedBox random_qbox(std::mt19937& rng) {
    std::uniform_int_distribution<int> bin(0, kLocationBins - 1);
    int a = bin(rng), b = bin(rng), c = bin(rng), d = bin(rng);
    return {std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
}

std::string random_word(std::mt19937& rng) {
    static const std::string alphabet = "abcdefghijklmnopqrstuvwxyzABC!?.,'0123456789";
    std::uniform_int_distribution<std::size_t> len(1, 8), ch(0, alphabet.size() - 1);
    std::string w(len(rng), ' ');
    for (auto& c : w) c = alphabet[ch(rng)];
    return w;
}

}  // namespace

TEST(ClassifyToken, Shapes) {
    EXPECT_EQ(classify_token("<loc_0>").cls, TokenClass::Location);
    EXPECT_EQ(classify_token("<loc_999>").bin, 999);
    EXPECT_EQ(classify_token("<loc_1000>").cls, TokenClass::BadLocation);
    EXPECT_EQ(classify_token("<loc_012>").cls, TokenClass::BadLocation);
    EXPECT_EQ(classify_token("<loc_x>").cls, TokenClass::BadLocation);
    EXPECT_EQ(classify_token("<char>").kind, NodeKind::Character);
    EXPECT_EQ(classify_token("</s>").cls, TokenClass::Eos);
    EXPECT_EQ(classify_token("<grnd>").cls, TokenClass::SpanOpen);
    EXPECT_EQ(classify_token("</grnd>").cls, TokenClass::SpanClose);
    EXPECT_EQ(classify_token("<bogus>").cls, TokenClass::UnknownSpecial);
    EXPECT_EQ(classify_token("hello").cls, TokenClass::Text);
    EXPECT_EQ(classify_token("<3").cls, TokenClass::Text);
    EXPECT_EQ(classify_token("< >").cls, TokenClass::Text);
}

TEST(ParseDetection, EmptyPage) { EXPECT_TRUE(parse_detection(stream({EOS})).empty()); }

TEST(ParseDetection, OnePanel) {
    const auto recs = parse_detection(stream({L(10), L(20), L(500), L(700), "<panel>", EOS}));
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].kind, NodeKind::Panel);
    EXPECT_EQ(recs[0].box, (QuantizedBox{10, 20, 500, 700}));
    EXPECT_EQ(recs[0].order_index, 0u);
    EXPECT_EQ(serialize_detection(recs), stream({L(10), L(20), L(500), L(700), "<panel>", EOS}));
}

TEST(ParseDetection, ThreeLocationsThenClass) {
    EXPECT_EQ(error_index([] { parse_detection(stream({L(1), L(2), L(3), "<char>", EOS})); }), 3u);
}

TEST(ParseDetection, MissingEos) {
    EXPECT_EQ(error_index([] { parse_detection(stream({L(1), L(2), L(3), L(4), "<char>"})); }), 5u);
}

TEST(ParseDetection, TokenAfterEos) {
    EXPECT_EQ(error_index([] { parse_detection(stream({EOS, L(1)})); }), 1u);
}

TEST(ParseDetection, UnknownClassToken) {
    EXPECT_EQ(error_index([] { parse_detection(stream({L(1), L(2), L(3), L(4), "<face>", EOS})); }), 4u);
}

TEST(ParseDetection, DanglingLocationsBeforeEos) {
    EXPECT_EQ(error_index([] { parse_detection(stream({L(1), L(2), EOS})); }), 2u);
}

TEST(ParseDetection, InvertedBoxRejected) {
    EXPECT_EQ(error_index([] { parse_detection(stream({L(9), L(2), L(3), L(4), "<text>", EOS})); }), 4u);
}

TEST(ParseDetection, TwelveRecordFixtureRoundTrip) {
    std::vector<DetectionRecord> recs;
    const NodeKind kinds[] = {NodeKind::Panel, NodeKind::Panel, NodeKind::Character, NodeKind::Text,
                              NodeKind::Tail,  NodeKind::Character, NodeKind::Text, NodeKind::Text,
                              NodeKind::Panel, NodeKind::Tail, NodeKind::Character, NodeKind::Text};
    for (std::size_t i = 0; i < 12; ++i) {
        const int b = static_cast<int>(i) * 50;
        recs.push_back({{b, b + 1, b + 40, b + 45}, kinds[i], i});
    }
    EXPECT_EQ(parse_detection(serialize_detection(recs)), recs);
}

TEST(ParseDetection, FuzzRoundTrip) {
    std::mt19937 rng(21);
    std::uniform_int_distribution<int> count(0, 20), kind(0, 3);
    for (int round = 0; round < 1000; ++round) {
        std::vector<DetectionRecord> recs(static_cast<std::size_t>(count(rng)));
        for (std::size_t i = 0; i < recs.size(); ++i) recs[i] = {random_qbox(rng), kAllNodeKinds[kind(rng)], i};
        const auto back = parse_detection(serialize_detection(recs));
        ASSERT_EQ(back, recs);
        for (std::size_t i = 0; i < back.size(); ++i) ASSERT_EQ(back[i].order_index, i);
    }
}

TEST(ParseOcr, EmptyPage) { EXPECT_TRUE(parse_ocr(stream({EOS})).empty()); }

TEST(ParseOcr, WordsJoined) {
    const auto recs = parse_ocr(stream({"Hello", "there", L(1), L(2), L(3), L(4), EOS}));
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].text, "Hello there");
    EXPECT_EQ(recs[0].box, (QuantizedBox{1, 2, 3, 4}));
    EXPECT_EQ(parse_ocr(serialize_ocr(recs)), recs);
}

TEST(ParseOcr, WhitespaceNormalised) {
    const auto recs = parse_ocr(stream({"  Hello  big ", "world ", L(1), L(2), L(3), L(4), EOS}));
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].text, "Hello big world");
}

TEST(ParseOcr, LocationsWithoutText) {
    EXPECT_EQ(error_index([] { parse_ocr(stream({L(1), L(2), L(3), L(4), EOS})); }), 0u);
}

TEST(ParseOcr, ShortQuad) {
    EXPECT_EQ(error_index([] { parse_ocr(stream({"hi", L(1), L(2), L(3), EOS})); }), 4u);
}

TEST(ParseOcr, TextWithoutLocations) {
    EXPECT_EQ(error_index([] { parse_ocr(stream({"hi", L(1), L(2), L(3), L(4), "dangling", EOS})); }), 6u);
}

TEST(ParseOcr, FuzzRoundTrip) {
    std::mt19937 rng(22);
    std::uniform_int_distribution<int> count(0, 10), words(1, 5);
    for (int round = 0; round < 1000; ++round) {
        std::vector<OcrRecord> recs(static_cast<std::size_t>(count(rng)));
        for (std::size_t i = 0; i < recs.size(); ++i) {
            std::string text;
            for (int w = words(rng); w > 0; --w) text += (text.empty() ? "" : " ") + random_word(rng);
            recs[i] = {text, random_qbox(rng), i};
        }
        ASSERT_EQ(parse_ocr(serialize_ocr(recs)), recs);
    }
}

TEST(SerializeOcr, EmptyTextRejected) {
    const std::vector<OcrRecord> recs = {{"  ", {1, 2, 3, 4}, 0}};
    EXPECT_THROW(serialize_ocr(recs), InputError);
}

TEST(ParseGrounded, NoSpans) {
    const auto c = parse_grounded_caption(stream({"A quiet street.", EOS}));
    ASSERT_EQ(c.segments.size(), 1u);
    EXPECT_EQ(std::get<PlainSegment>(c.segments[0]).text, "A quiet street.");
}

TEST(ParseGrounded, SpanThenPlain) {
    const auto c = parse_grounded_caption(stream({"<grnd>", "the boy", "</grnd>", L(1), L(2), L(3), L(4), " runs", EOS}));
    ASSERT_EQ(c.segments.size(), 2u);
    EXPECT_EQ(std::get<PhraseSegment>(c.segments[0]), (PhraseSegment{"the boy", {{1, 2, 3, 4}}}));
    EXPECT_EQ(std::get<PlainSegment>(c.segments[1]).text, " runs");
    EXPECT_EQ(c.flatten(), "the boy runs");
}

TEST(ParseGrounded, TwoQuadsOnePhrase) {
    const auto c = parse_grounded_caption(
        stream({"<grnd>", "they", "</grnd>", L(1), L(2), L(3), L(4), L(5), L(6), L(7), L(8), EOS}));
    ASSERT_EQ(c.segments.size(), 1u);
    EXPECT_EQ(std::get<PhraseSegment>(c.segments[0]).boxes.size(), 2u);
}

TEST(ParseGrounded, Errors) {
    // span without quads
    EXPECT_EQ(error_index([] { parse_grounded_caption(stream({"<grnd>", "x", "</grnd>", " y", EOS})); }), 3u);
    // wrong arity
    EXPECT_EQ(error_index([] { parse_grounded_caption(stream({"<grnd>", "x", "</grnd>", L(1), L(2), " y", EOS})); }), 5u);
    // unbalanced
    EXPECT_EQ(error_index([] { parse_grounded_caption(stream({"<grnd>", "x", EOS})); }), 2u);
    EXPECT_EQ(error_index([] { parse_grounded_caption(stream({"x", "</grnd>", EOS})); }), 1u);
    EXPECT_EQ(error_index([] { parse_grounded_caption(stream({"<grnd>", "<grnd>", EOS})); }), 1u);
    // stray location
    EXPECT_EQ(error_index([] { parse_grounded_caption(stream({"x", L(1), EOS})); }), 1u);
    // empty phrase
    EXPECT_EQ(error_index([] { parse_grounded_caption(stream({"<grnd>", "</grnd>", EOS})); }), 1u);
}

TEST(ParseGrounded, FuzzRoundTripAndFlatten) {
    std::mt19937 rng(23);
    std::uniform_int_distribution<int> count(0, 6), nboxes(1, 3), coin(0, 1);
    for (int round = 0; round < 1000; ++round) {
        GroundedCaption c;
        std::string flat;
        bool last_plain = false;
        for (int s = count(rng); s > 0; --s) {
            if (coin(rng) && !last_plain) {
                std::string t = " " + random_word(rng) + " ";
                flat += t;
                c.segments.push_back(PlainSegment{t});
                last_plain = true;
            } else {
                PhraseSegment p{random_word(rng), {}};
                for (int b = nboxes(rng); b > 0; --b) p.boxes.push_back(random_qbox(rng));
                flat += p.phrase;
                c.segments.push_back(p);
                last_plain = false;
            }
        }
        const auto back = parse_grounded_caption(serialize_grounded_caption(c));
        ASSERT_EQ(back, c);
        ASSERT_EQ(back.flatten(), flat);
    }
}

TEST(Pregrounded, SinglePhrase) {
    const auto p = parse_pregrounded("A ( tall man ) [ 3 ] waves.");
    ASSERT_EQ(p.segments.size(), 3u);
    EXPECT_EQ(std::get<PlainSegment>(p.segments[0]).text, "A ");
    EXPECT_EQ(std::get<IdPhraseSegment>(p.segments[1]), (IdPhraseSegment{"tall man", {3}}));
    EXPECT_EQ(std::get<PlainSegment>(p.segments[2]).text, " waves.");
    EXPECT_TRUE(p.warnings.empty());
    EXPECT_EQ(p.flatten(), "A tall man waves.");
}

TEST(Pregrounded, NoMarkers) {
    const auto p = parse_pregrounded("Nothing to see.");
    ASSERT_EQ(p.segments.size(), 1u);
    EXPECT_TRUE(p.warnings.empty());
}

TEST(Pregrounded, RepeatedPhraseInOrder) {
    const auto p = parse_pregrounded("( a ) [ 1 ] and ( a ) [ 2 ]");
    std::vector<IdPhraseSegment> ids;
    for (const auto& s : p.segments)
        if (auto* q = std::get_if<IdPhraseSegment>(&s)) ids.push_back(*q);
    ASSERT_EQ(ids.size(), 2u);
    EXPECT_EQ(ids[0], (IdPhraseSegment{"a", {1}}));
    EXPECT_EQ(ids[1], (IdPhraseSegment{"a", {2}}));
}

TEST(Pregrounded, MultipleIds) {
    const auto p = parse_pregrounded("( the twins ) [ 1, 4 ] laugh");
    EXPECT_EQ(std::get<IdPhraseSegment>(p.segments[0]), (IdPhraseSegment{"the twins", {1, 4}}));
}

TEST(Pregrounded, UnmatchedParenIsPlainWithWarning) {
    const auto p = parse_pregrounded("He said (quietly that it was fine.");
    ASSERT_EQ(p.segments.size(), 1u);
    EXPECT_EQ(p.flatten(), "He said (quietly that it was fine.");
    EXPECT_EQ(p.warnings.size(), 1u);
}

TEST(Notation, RoundTrip) {
    const TokenStream t = stream({"Hello there", L(1), L(2), L(3), L(4), EOS});
    EXPECT_EQ(to_notation(t), "Hello there<loc_1><loc_2><loc_3><loc_4></s>");
    EXPECT_EQ(from_notation(to_notation(t)), t);
    EXPECT_EQ(from_notation("a <3 b<panel>"), stream({"a <3 b", "<panel>"}));
}

TEST(Fuzz, ArbitraryStreamsNeverCrash) {
    std::mt19937 rng(24);
    const std::vector<std::string> pool = {"<loc_0>", "<loc_999>", "<loc_1000>", "<loc_07>", "<panel>", "<char>",
                                           "<text>",  "<tail>",    "<grnd>",     "</grnd>",  "</s>",    "<what>",
                                           "word",    " ",         "",           "<",        "<loc_5>", "x y"};
    std::uniform_int_distribution<std::size_t> len(0, 30), pick(0, pool.size() - 1);
    for (int round = 0; round < 10000; ++round) {
        TokenStream s(len(rng));
        for (auto& t : s) t = pool[pick(rng)];
        for (int parser = 0; parser < 3; ++parser) {
            try {
                if (parser == 0) parse_detection(s);
                if (parser == 1) parse_ocr(s);
                if (parser == 2) parse_grounded_caption(s);
            } catch (const ParseError& e) {
                ASSERT_LE(e.token_index(), s.size());
                ASSERT_FALSE(e.reason().empty());
            }
        }
    }
}
