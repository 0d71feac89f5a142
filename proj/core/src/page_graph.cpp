#include "mangapipe/page_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mangapipe/error.hpp"
#include "mangapipe/reconcile.hpp"

namespace mangapipe {

namespace {

void require_unit_interval(const Matrix& m, const char* name) {
    for (double v : m.data()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw InputError(std::string(name) + ": score " + std::to_string(v) + " outside [0, 1]");
        }
    }
}

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw InputError(std::string(name) + ": expected shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    // The smaller index always becomes the root.
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent_[b] = a;
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

void validate_thresholds(const Thresholds& t) {
    // Values just above 1 are allowed so callers can switch an edge type off.
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v) || v < 0.0) throw InputError(std::string("threshold ") + name + " must be >= 0");
    };
    check(t.char_char, "char_char");
    check(t.text_char, "text_char");
    check(t.text_tail, "text_tail");
}

std::vector<int> cluster_characters(const Matrix& scores, double threshold) {
    if (scores.rows() != scores.cols()) throw InputError("char_char: matrix is not square");
    require_unit_interval(scores, "char_char");
    const std::size_t n = scores.rows();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(scores(i, j) - scores(j, i)) > 1e-6) {
                throw InputError("char_char: matrix is not symmetric at (" + std::to_string(i) + ", " +
                                 std::to_string(j) + ")");
            }
        }
    }

    DisjointSets sets(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (scores(i, j) >= threshold) sets.unite(i, j);

    std::vector<int> label_of_root(n, -1);
    std::vector<int> labels(n);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t root = sets.find(i);
        if (label_of_root[root] < 0) label_of_root[root] = next++;
        labels[i] = label_of_root[root];
    }
    return labels;
}

std::vector<std::optional<std::size_t>> assign_speakers(const Matrix& text_char, double threshold) {
    require_unit_interval(text_char, "text_char");
    std::vector<std::optional<std::size_t>> out(text_char.rows());
    for (std::size_t t = 0; t < text_char.rows(); ++t) {
        std::optional<std::size_t> best;
        for (std::size_t c = 0; c < text_char.cols(); ++c) {
            if (!best || text_char(t, c) > text_char(t, *best)) best = c;
        }
        if (best && text_char(t, *best) >= threshold) out[t] = best;
    }
    return out;
}

std::vector<std::optional<std::size_t>> link_tails(const Matrix& text_tail, double threshold) {
    require_unit_interval(text_tail, "text_tail");
    Matrix cost(text_tail.rows(), text_tail.cols());
    for (std::size_t i = 0; i < cost.rows(); ++i)
        for (std::size_t j = 0; j < cost.cols(); ++j) cost(i, j) = -text_tail(i, j);

    std::vector<std::optional<std::size_t>> out(text_tail.rows());
    for (const auto& [t, tail] : hungarian(cost).pairs) {
        if (text_tail(t, tail) >= threshold) out[t] = tail;
    }
    return out;
}

std::vector<std::optional<std::size_t>> assign_panels(std::span<const Node> nodes) {
    std::vector<std::size_t> panel_nodes;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].kind == NodeKind::Panel) panel_nodes.push_back(i);

    std::vector<std::optional<std::size_t>> out(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].kind == NodeKind::Panel) continue;
        double best_area = 0.0;
        for (std::size_t p = 0; p < panel_nodes.size(); ++p) {
            const double area = intersection_area(nodes[i].box, nodes[panel_nodes[p]].box);
            // Panels are scanned in emission order, so strict > keeps the earlier one on ties.
            if (area > best_area) {
                best_area = area;
                out[i] = p;
            }
        }
    }
    return out;
}

PageGraph build_page_graph(std::span<const DetectionRecord> records, const ScoreTable& scores,
                           const Thresholds& thresholds, ImageDims dims) {
    validate_thresholds(thresholds);
    PageGraph g;
    g.nodes.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        g.nodes.push_back({i, r.kind, dequantize(r.box, dims), r.order_index});
        switch (r.kind) {
            case NodeKind::Panel: g.panels.push_back(i); break;
            case NodeKind::Character: g.characters.push_back(i); break;
            case NodeKind::Text: g.texts.push_back(i); break;
            case NodeKind::Tail: g.tails.push_back(i); break;
        }
    }

    require_shape(scores.text_char, g.texts.size(), g.characters.size(), "text_char");
    require_shape(scores.char_char, g.characters.size(), g.characters.size(), "char_char");
    require_shape(scores.text_tail, g.texts.size(), g.tails.size(), "text_tail");

    g.cluster_of = cluster_characters(scores.char_char, thresholds.char_char);
    g.cluster_count = g.cluster_of.empty() ? 0 : *std::max_element(g.cluster_of.begin(), g.cluster_of.end()) + 1;
    g.speaker_of = assign_speakers(scores.text_char, thresholds.text_char);
    g.tail_of = link_tails(scores.text_tail, thresholds.text_tail);
    g.panel_of = assign_panels(g.nodes);
    return g;
}

}  // namespace mangapipe
