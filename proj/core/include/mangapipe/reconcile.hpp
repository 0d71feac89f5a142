#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mangapipe/geometry.hpp"
#include "mangapipe/matrix.hpp"
#include "mangapipe/token_codec.hpp"

namespace mangapipe {

struct Assignment {
    /// (row, col) pairs sorted by row.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    double total_cost = 0.0;
};

/// Minimum-cost one-to-one assignment of min(rows, cols) pairs on a
/// rectangular matrix (Kuhn-Munkres with potentials, O(n^2 m)).
/// Throws InputError on non-finite costs.
Assignment hungarian(const Matrix& cost);

struct MatchedPair {
    std::size_t left = 0;
    std::size_t right = 0;
    double iou = 0.0;

    friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

struct Matching {
    std::vector<MatchedPair> pairs;  // sorted by left index
    std::vector<std::size_t> unmatched_left;
    std::vector<std::size_t> unmatched_right;
};

/// Hungarian on 1 - IoU, then pairs with IoU below `min_iou` (or no overlap
/// at all) are released to the unmatched lists.
Matching match_by_iou(std::span<const BBox> left, std::span<const BBox> right, double min_iou);

inline constexpr double kOcrReconcileMinIou = 0.1;
inline constexpr double kGroundingLinkMinIou = 0.5;

struct OcrReconciliation {
    /// Text per detected text node, aligned with the input; empty if unmatched.
    std::vector<std::string> texts;
    std::vector<std::size_t> unmatched_detections;
    std::vector<std::size_t> unmatched_ocr;
};

OcrReconciliation reconcile_ocr(std::span<const BBox> detected_texts, std::span<const OcrRecord> ocr, ImageDims dims,
                                double min_iou = kOcrReconcileMinIou);

/// A detected character available for grounding links, in page coordinates.
struct CharacterRef {
    BBox box;
    int cluster_label = 0;
};

/// Where a panel crop sits inside the page.
struct PanelFrame {
    double origin_x = 0.0;
    double origin_y = 0.0;
    ImageDims dims;
};

/// Cluster labels per grounded box, one inner vector per phrase in caption
/// order; std::nullopt marks a box that matched no character.
using PhraseLinks = std::vector<std::vector<std::optional<int>>>;

/// Grounded boxes are quantized over the panel crop; they are dequantized,
/// moved into page coordinates and matched per phrase against `characters`.
PhraseLinks link_grounded(const GroundedCaption& caption, std::span<const CharacterRef> characters,
                          const PanelFrame& panel, double min_iou = kGroundingLinkMinIou);

}  // namespace mangapipe
