#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mangapipe/matrix.hpp"
#include "mangapipe/page_graph.hpp"
#include "mangapipe/token_codec.hpp"

namespace mangapipe {

struct PrfCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    // An empty side with nothing to find counts as perfect; otherwise
    // an undefined ratio is reported as 0.
    double precision() const noexcept;
    double recall() const noexcept;
    double f1() const noexcept;

    PrfCounts& operator+=(const PrfCounts& o) noexcept {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const PrfCounts&, const PrfCounts&) = default;
};

inline constexpr double kEvalIou = 0.5;

struct DetectionEvalResult {
    std::map<NodeKind, PrfCounts> per_kind;  // always holds all four kinds
};

/// Per kind: Hungarian matching on IoU, pairs at or above `iou_thresh`
/// count as true positives.
DetectionEvalResult detection_eval(std::span<const Node> pred, std::span<const Node> gt, double iou_thresh = kEvalIou);

/// Adjusted mutual information with arithmetic-mean normalisation and the
/// exact expected MI under the permutation model. Identical partitions
/// score exactly 1.0; a zero denominator otherwise yields 0.0.
double ami(std::span<const int> labels_a, std::span<const int> labels_b);

struct ScoredPair {
    std::size_t a = 0;
    std::size_t b = 0;
    double score = 0.0;
};

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

/// Candidates ranked by descending score (ties by (a, b)); mean precision at
/// the rank of each ground-truth edge, unproposed edges contributing 0.
/// Returns 1.0 when there are no ground-truth edges.
double association_ap(std::span<const ScoredPair> candidates, const EdgeList& gt_edges);

/// Every cell of a score matrix as a candidate; with `upper_triangle` only
/// pairs a < b are emitted (for symmetric char-char scores).
std::vector<ScoredPair> candidates_from_scores(const Matrix& scores, bool upper_triangle);

struct PhraseAlignment {
    std::optional<std::size_t> pred;  // index into pred phrases
    std::optional<std::size_t> gt;    // index into gt phrases
    PrfCounts counts;
};

struct GroundingEvalResult {
    PrfCounts counts;
    std::vector<PhraseAlignment> alignment;
};

/// Lowercase, ASCII punctuation removed, whitespace collapsed and trimmed.
std::string normalize_phrase(std::string_view phrase);

/// Phrases aligned by order-preserving LCS on normalised text (earliest
/// match wins), boxes of aligned phrases matched by Hungarian IoU.
GroundingEvalResult grounding_eval(const GroundedCaption& pred, const GroundedCaption& gt,
                                   double iou_thresh = kEvalIou);

struct JudgeScores {
    std::string judge;
    std::vector<double> scores;
};

struct JudgeMean {
    std::string judge;
    double mean = 0.0;
    std::size_t n = 0;
};

struct JudgeSummary {
    std::vector<JudgeMean> per_judge;
    double overall = 0.0;  // mean of the per-judge means
    std::size_t n = 0;
};

JudgeSummary judge_summarize(std::span<const JudgeScores> verdicts);

}  // namespace mangapipe
