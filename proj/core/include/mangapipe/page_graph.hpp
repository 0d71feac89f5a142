#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mangapipe/geometry.hpp"
#include "mangapipe/matrix.hpp"
#include "mangapipe/token_codec.hpp"

namespace mangapipe {

struct Node {
    std::size_t id = 0;  // equals the detection emission position
    NodeKind kind = NodeKind::Panel;
    BBox box;
    std::size_t order_index = 0;

    friend bool operator==(const Node&, const Node&) = default;
};

/// Pairwise association scores in [0, 1]. Rows and columns follow the
/// per-kind emission order (i-th text, j-th character, ...).
struct ScoreTable {
    Matrix text_char;  // n_text x n_char
    Matrix char_char;  // n_char x n_char, symmetric, diagonal ignored
    Matrix text_tail;  // n_text x n_tail

    friend bool operator==(const ScoreTable&, const ScoreTable&) = default;
};

struct Thresholds {
    double char_char = 0.5;
    double text_char = 0.5;
    double text_tail = 0.5;

    friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

struct PageGraph {
    std::vector<Node> nodes;  // emission order
    std::vector<std::size_t> panels, characters, texts, tails;  // node ids per kind

    std::vector<int> cluster_of;                       // per character
    std::vector<std::optional<std::size_t>> speaker_of;  // per text -> character index
    std::vector<std::optional<std::size_t>> tail_of;     // per text -> tail index
    std::vector<std::optional<std::size_t>> panel_of;    // per node -> panel index; never set for panels
    int cluster_count = 0;

    const Node& character(std::size_t i) const { return nodes[characters[i]]; }
    const Node& text(std::size_t i) const { return nodes[texts[i]]; }
    const Node& panel(std::size_t i) const { return nodes[panels[i]]; }

    friend bool operator==(const PageGraph&, const PageGraph&) = default;
};

/// Connected components over edges with score >= threshold. Labels follow
/// the position of each component's earliest member, starting at 0.
std::vector<int> cluster_characters(const Matrix& char_char, double threshold);

/// Per text, the best-scoring character if its score reaches the threshold;
/// ties go to the earlier character.
std::vector<std::optional<std::size_t>> assign_speakers(const Matrix& text_char, double threshold);

/// One-to-one text/tail linking: maximum-score assignment over the full
/// matrix, keeping only pairs at or above the threshold.
std::vector<std::optional<std::size_t>> link_tails(const Matrix& text_tail, double threshold);

/// For each node, the panel (index into the panel subsequence) with the
/// largest intersection area; ties go to the earlier panel.
std::vector<std::optional<std::size_t>> assign_panels(std::span<const Node> nodes);

/// Dequantizes the records and composes the four steps above. Throws
/// InputError naming the matrix when a score table has the wrong shape.
PageGraph build_page_graph(std::span<const DetectionRecord> records, const ScoreTable& scores,
                           const Thresholds& thresholds, ImageDims dims);

void validate_thresholds(const Thresholds& t);

}  // namespace mangapipe
