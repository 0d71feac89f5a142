#include "mangapipe/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "mangapipe/error.hpp"
#include "mangapipe/reconcile.hpp"

namespace mangapipe {

double PrfCounts::precision() const noexcept {
    if (tp + fp == 0) return fn == 0 ? 1.0 : 0.0;
    return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double PrfCounts::recall() const noexcept {
    if (tp + fn == 0) return fp == 0 ? 1.0 : 0.0;
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double PrfCounts::f1() const noexcept {
    const double p = precision();
    const double r = recall();
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

namespace {

PrfCounts match_counts(std::span<const BBox> pred, std::span<const BBox> gt, double iou_thresh) {
    const Matching m = match_by_iou(pred, gt, iou_thresh);
    return {m.pairs.size(), m.unmatched_left.size(), m.unmatched_right.size()};
}

}  // namespace

DetectionEvalResult detection_eval(std::span<const Node> pred, std::span<const Node> gt, double iou_thresh) {
    DetectionEvalResult out;
    for (NodeKind kind : kAllNodeKinds) {
        std::vector<BBox> p, g;
        for (const auto& n : pred)
            if (n.kind == kind) p.push_back(n.box);
        for (const auto& n : gt)
            if (n.kind == kind) g.push_back(n.box);
        out.per_kind[kind] = match_counts(p, g, iou_thresh);
    }
    return out;
}

namespace {

std::vector<int> canonical_labels(std::span<const int> labels) {
    std::unordered_map<int, int> remap;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) {
        auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()));
        out.push_back(it->second);
    }
    return out;
}

double entropy(const std::vector<std::size_t>& sizes, double n) {
    double h = 0.0;
    for (std::size_t s : sizes) {
        if (s == 0) continue;
        const double p = static_cast<double>(s) / n;
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace

double ami(std::span<const int> labels_a, std::span<const int> labels_b) {
    if (labels_a.size() != labels_b.size()) {
        throw InputError("ami: partitions have " + std::to_string(labels_a.size()) + " and " +
                         std::to_string(labels_b.size()) + " elements");
    }
    if (labels_a.empty()) throw InputError("ami: partitions are empty");

    const auto a = canonical_labels(labels_a);
    const auto b = canonical_labels(labels_b);
    if (a == b) return 1.0;

    const std::size_t n = a.size();
    const std::size_t ka = static_cast<std::size_t>(*std::max_element(a.begin(), a.end())) + 1;
    const std::size_t kb = static_cast<std::size_t>(*std::max_element(b.begin(), b.end())) + 1;
    std::vector<std::size_t> row(ka, 0), col(kb, 0), table(ka * kb, 0);
    for (std::size_t i = 0; i < n; ++i) {
        ++row[a[i]];
        ++col[b[i]];
        ++table[a[i] * kb + b[i]];
    }

    const double N = static_cast<double>(n);
    double mi = 0.0;
    for (std::size_t i = 0; i < ka; ++i) {
        for (std::size_t j = 0; j < kb; ++j) {
            const double nij = static_cast<double>(table[i * kb + j]);
            if (nij == 0.0) continue;
            mi += nij / N * std::log(N * nij / (static_cast<double>(row[i]) * static_cast<double>(col[j])));
        }
    }

    // Expected MI: hypergeometric distribution of each cell count.
    double emi = 0.0;
    const double lg_n = std::lgamma(N + 1.0);
    for (std::size_t i = 0; i < ka; ++i) {
        const double ai = static_cast<double>(row[i]);
        for (std::size_t j = 0; j < kb; ++j) {
            const double bj = static_cast<double>(col[j]);
            const double lg_const =
                std::lgamma(ai + 1.0) + std::lgamma(bj + 1.0) + std::lgamma(N - ai + 1.0) + std::lgamma(N - bj + 1.0) - lg_n;
            const auto lo = static_cast<long long>(std::max(1.0, ai + bj - N));
            const auto hi = static_cast<long long>(std::min(ai, bj));
            for (long long k = lo; k <= hi; ++k) {
                const double nij = static_cast<double>(k);
                const double log_p = lg_const - std::lgamma(nij + 1.0) - std::lgamma(ai - nij + 1.0) -
                                     std::lgamma(bj - nij + 1.0) - std::lgamma(N - ai - bj + nij + 1.0);
                emi += nij / N * std::log(N * nij / (ai * bj)) * std::exp(log_p);
            }
        }
    }

    const double denom = 0.5 * (entropy(row, N) + entropy(col, N)) - emi;
    if (std::abs(denom) < 1e-15) return 0.0;
    return (mi - emi) / denom;
}

double association_ap(std::span<const ScoredPair> candidates, const EdgeList& gt_edges) {
    const std::set<std::pair<std::size_t, std::size_t>> gt(gt_edges.begin(), gt_edges.end());
    if (gt.empty()) return 1.0;

    std::vector<ScoredPair> ranked(candidates.begin(), candidates.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const ScoredPair& x, const ScoredPair& y) {
        if (x.score != y.score) return x.score > y.score;
        return std::pair(x.a, x.b) < std::pair(y.a, y.b);
    });

    std::set<std::pair<std::size_t, std::size_t>> found;
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
        const std::pair key(ranked[rank].a, ranked[rank].b);
        if (!gt.contains(key) || !found.insert(key).second) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
    return sum / static_cast<double>(gt.size());
}

std::vector<ScoredPair> candidates_from_scores(const Matrix& scores, bool upper_triangle) {
    std::vector<ScoredPair> out;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        for (std::size_t j = upper_triangle ? i + 1 : 0; j < scores.cols(); ++j) {
            out.push_back({i, j, scores(i, j)});
        }
    }
    return out;
}

std::string normalize_phrase(std::string_view phrase) {
    std::string out;
    bool pending_space = false;
    for (char ch : phrase) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::ispunct(c)) continue;
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

namespace {

// Bin indices describe cells, so bin k spans [k, k + 1).
BBox cell_box(const QuantizedBox& q) {
    return {static_cast<double>(q.bx_min), static_cast<double>(q.by_min), static_cast<double>(q.bx_max) + 1.0,
            static_cast<double>(q.by_max) + 1.0};
}

std::vector<BBox> cell_boxes(const PhraseSegment& p) {
    std::vector<BBox> out;
    for (const auto& q : p.boxes) out.push_back(cell_box(q));
    return out;
}

}  // namespace

GroundingEvalResult grounding_eval(const GroundedCaption& pred, const GroundedCaption& gt, double iou_thresh) {
    const auto pp = pred.phrases();
    const auto gp = gt.phrases();
    std::vector<std::string> pn, gn;
    for (const auto& p : pp) pn.push_back(normalize_phrase(p.phrase));
    for (const auto& g : gp) gn.push_back(normalize_phrase(g.phrase));

    // suffix LCS table, traced forward so duplicates align to the earliest match
    const std::size_t P = pn.size(), G = gn.size();
    std::vector<std::vector<std::size_t>> lcs(P + 1, std::vector<std::size_t>(G + 1, 0));
    for (std::size_t i = P; i-- > 0;)
        for (std::size_t j = G; j-- > 0;)
            lcs[i][j] = pn[i] == gn[j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);

    GroundingEvalResult out;
    std::size_t i = 0, j = 0;
    auto unaligned_pred = [&](std::size_t k) {
        PhraseAlignment a{k, std::nullopt, {0, pp[k].boxes.size(), 0}};
        out.counts += a.counts;
        out.alignment.push_back(a);
    };
    auto unaligned_gt = [&](std::size_t k) {
        PhraseAlignment a{std::nullopt, k, {0, 0, gp[k].boxes.size()}};
        out.counts += a.counts;
        out.alignment.push_back(a);
    };
    while (i < P && j < G) {
        if (pn[i] == gn[j] && lcs[i][j] == lcs[i + 1][j + 1] + 1) {
            PhraseAlignment a{i, j, match_counts(cell_boxes(pp[i]), cell_boxes(gp[j]), iou_thresh)};
            out.counts += a.counts;
            out.alignment.push_back(a);
            ++i;
            ++j;
        } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
            unaligned_pred(i++);
        } else {
            unaligned_gt(j++);
        }
    }
    while (i < P) unaligned_pred(i++);
    while (j < G) unaligned_gt(j++);
    return out;
}

JudgeSummary judge_summarize(std::span<const JudgeScores> verdicts) {
    if (verdicts.empty()) throw InputError("judge summary needs at least one judge");
    JudgeSummary out;
    double sum_of_means = 0.0;
    for (const auto& j : verdicts) {
        if (j.scores.empty()) throw InputError("judge '" + j.judge + "' has no verdicts");
        for (double s : j.scores) {
            if (!(s >= 1.0 && s <= 5.0)) throw InputError("judge '" + j.judge + "' score outside [1, 5]");
        }
        const double mean = std::accumulate(j.scores.begin(), j.scores.end(), 0.0) / static_cast<double>(j.scores.size());
        out.per_judge.push_back({j.judge, mean, j.scores.size()});
        out.n += j.scores.size();
        sum_of_means += mean;
    }
    out.overall = sum_of_means / static_cast<double>(verdicts.size());
    return out;
}

}  // namespace mangapipe
