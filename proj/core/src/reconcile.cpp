#include "mangapipe/reconcile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mangapipe/error.hpp"

namespace mangapipe {

namespace {

// Rows must not outnumber columns. Returns the column chosen for each row.
std::vector<std::size_t> solve_wide(const Matrix& cost) {
    const std::size_t n = cost.rows();
    const std::size_t m = cost.cols();
    constexpr double inf = std::numeric_limits<double>::infinity();

    // 1-based potentials; column 0 is the virtual source.
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
    std::vector<double> min_slack(m + 1);
    std::vector<char> used(m + 1);

    for (std::size_t i = 1; i <= n; ++i) {
        owner[0] = i;
        std::size_t col = 0;
        std::fill(min_slack.begin(), min_slack.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[col] = 1;
            const std::size_t row = owner[col];
            double delta = inf;
            std::size_t next = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double slack = cost(row - 1, j - 1) - u[row] - v[j];
                if (slack < min_slack[j]) {
                    min_slack[j] = slack;
                    way[j] = col;
                }
                if (min_slack[j] < delta) {
                    delta = min_slack[j];
                    next = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            col = next;
        } while (owner[col] != 0);
        do {
            const std::size_t prev = way[col];
            owner[col] = owner[prev];
            col = prev;
        } while (col != 0);
    }

    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= m; ++j) {
        if (owner[j] != 0) row_to_col[owner[j] - 1] = j - 1;
    }
    return row_to_col;
}

}  // namespace

Assignment hungarian(const Matrix& cost) {
    for (double c : cost.data()) {
        if (!std::isfinite(c)) throw InputError("hungarian: cost matrix contains a non-finite entry");
    }
    Assignment out;
    if (cost.empty()) return out;

    if (cost.rows() <= cost.cols()) {
        const auto cols = solve_wide(cost);
        for (std::size_t r = 0; r < cols.size(); ++r) out.pairs.emplace_back(r, cols[r]);
    } else {
        const auto rows = solve_wide(cost.transposed());
        for (std::size_t c = 0; c < rows.size(); ++c) out.pairs.emplace_back(rows[c], c);
        std::sort(out.pairs.begin(), out.pairs.end());
    }
    for (const auto& [r, c] : out.pairs) out.total_cost += cost(r, c);
    return out;
}

Matching match_by_iou(std::span<const BBox> left, std::span<const BBox> right, double min_iou) {
    if (!(min_iou >= 0.0 && min_iou <= 1.0)) throw InputError("min_iou must lie in [0, 1]");

    Matrix overlap(left.size(), right.size());
    Matrix cost(left.size(), right.size());
    for (std::size_t i = 0; i < left.size(); ++i) {
        for (std::size_t j = 0; j < right.size(); ++j) {
            overlap(i, j) = iou(left[i], right[j]);
            cost(i, j) = 1.0 - overlap(i, j);
        }
    }

    Matching out;
    std::vector<char> left_used(left.size(), 0), right_used(right.size(), 0);
    for (const auto& [i, j] : hungarian(cost).pairs) {
        const double v = overlap(i, j);
        if (v <= 0.0 || v < min_iou) continue;
        out.pairs.push_back({i, j, v});
        left_used[i] = 1;
        right_used[j] = 1;
    }
    for (std::size_t i = 0; i < left.size(); ++i)
        if (!left_used[i]) out.unmatched_left.push_back(i);
    for (std::size_t j = 0; j < right.size(); ++j)
        if (!right_used[j]) out.unmatched_right.push_back(j);
    return out;
}

OcrReconciliation reconcile_ocr(std::span<const BBox> detected_texts, std::span<const OcrRecord> ocr, ImageDims dims,
                                double min_iou) {
    std::vector<BBox> ocr_boxes;
    ocr_boxes.reserve(ocr.size());
    for (const auto& r : ocr) ocr_boxes.push_back(dequantize(r.box, dims));

    const Matching m = match_by_iou(detected_texts, ocr_boxes, min_iou);
    OcrReconciliation out;
    out.texts.assign(detected_texts.size(), std::string{});
    for (const auto& p : m.pairs) out.texts[p.left] = ocr[p.right].text;
    out.unmatched_detections = m.unmatched_left;
    out.unmatched_ocr = m.unmatched_right;
    return out;
}

PhraseLinks link_grounded(const GroundedCaption& caption, std::span<const CharacterRef> characters,
                          const PanelFrame& panel, double min_iou) {
    std::vector<BBox> char_boxes;
    char_boxes.reserve(characters.size());
    for (const auto& c : characters) char_boxes.push_back(c.box);

    PhraseLinks links;
    for (const auto& phrase : caption.phrases()) {
        std::vector<BBox> grounded;
        grounded.reserve(phrase.boxes.size());
        for (const auto& q : phrase.boxes) {
            grounded.push_back(dequantize(q, panel.dims).translated(panel.origin_x, panel.origin_y));
        }
        std::vector<std::optional<int>> labels(grounded.size());
        for (const auto& p : match_by_iou(grounded, char_boxes, min_iou).pairs) {
            labels[p.left] = characters[p.right].cluster_label;
        }
        links.push_back(std::move(labels));
    }
    return links;
}

}  // namespace mangapipe
