#pragma once
// Brute-force reference implementations. Deliberately naive; they share no
// code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

using Grid = std::vector<std::vector<double>>;

/// Minimum total cost over all injective maps from the smaller side into the
/// larger one. Costs are summed in row order.
inline double assignment_optimum(const Grid& cost) {
    const std::size_t rows = cost.size();
    const std::size_t cols = rows ? cost[0].size() : 0;
    if (rows == 0 || cols == 0) return 0.0;
    const bool wide = rows <= cols;
    const std::size_t small = wide ? rows : cols, large = wide ? cols : rows;

    std::vector<std::size_t> perm(large);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    // Every injection appears as a prefix of some permutation; duplicates
    // are harmless.
    do {
        double total = 0.0;
        if (wide) {
            for (std::size_t r = 0; r < small; ++r) total += cost[r][perm[r]];
        } else {
            // row order: iterate rows, include those chosen by some column
            std::vector<std::ptrdiff_t> col_of_row(rows, -1);
            for (std::size_t c = 0; c < small; ++c) col_of_row[perm[c]] = static_cast<std::ptrdiff_t>(c);
            for (std::size_t r = 0; r < rows; ++r)
                if (col_of_row[r] >= 0) total += cost[r][static_cast<std::size_t>(col_of_row[r])];
        }
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

/// Box area overlap by rasterising both boxes on a grid of `step` cells.
struct Rect {
    double x0, y0, x1, y1;
};
inline double raster_iou(const Rect& a, const Rect& b, double step) {
    const double lo_x = std::min(a.x0, b.x0), hi_x = std::max(a.x1, b.x1);
    const double lo_y = std::min(a.y0, b.y0), hi_y = std::max(a.y1, b.y1);
    long long inter = 0, uni = 0;
    for (double y = lo_y + step / 2; y < hi_y; y += step) {
        for (double x = lo_x + step / 2; x < hi_x; x += step) {
            const bool in_a = x >= a.x0 && x < a.x1 && y >= a.y0 && y < a.y1;
            const bool in_b = x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
            inter += in_a && in_b;
            uni += in_a || in_b;
        }
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
    const double n = static_cast<double>(a.size());
    std::map<int, double> ca, cb;
    std::map<std::pair<int, int>, double> joint;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ca[a[i]] += 1;
        cb[b[i]] += 1;
        joint[{a[i], b[i]}] += 1;
    }
    double mi = 0.0;
    for (const auto& [k, nij] : joint) mi += nij / n * std::log(n * nij / (ca[k.first] * cb[k.second]));
    return mi;
}

inline double entropy(const std::vector<int>& a) {
    const double n = static_cast<double>(a.size());
    std::map<int, double> c;
    for (int x : a) c[x] += 1;
    double h = 0.0;
    for (const auto& [_, v] : c) h -= v / n * std::log(v / n);
    return h;
}

inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<int, int> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto [it1, new1] = ab.emplace(a[i], b[i]);
        auto [it2, new2] = ba.emplace(b[i], a[i]);
        if (it1->second != b[i] || it2->second != a[i]) return false;
    }
    return true;
}

/// AMI with the expected MI taken literally: the mean MI over every
/// rearrangement of the second labelling. Each distinct arrangement occurs
/// equally often among the n! permutations, so walking the distinct ones
/// gives the same mean.
inline double ami_exhaustive(const std::vector<int>& a, const std::vector<int>& b) {
    if (same_partition(a, b)) return 1.0;
    // compact labels so the inner loop can count with flat arrays
    auto compact = [](const std::vector<int>& v) {
        std::map<int, int> ids;
        std::vector<int> out;
        for (int x : v) out.push_back(ids.emplace(x, static_cast<int>(ids.size())).first->second);
        return std::make_pair(out, static_cast<int>(ids.size()));
    };
    const auto [ca, ka] = compact(a);
    auto [arrangement, kb] = compact(b);
    const double n = static_cast<double>(a.size());
    std::vector<double> row(ka, 0.0), col(kb, 0.0);
    for (int x : ca) row[x] += 1;
    for (int x : arrangement) col[x] += 1;
    std::vector<double> joint(static_cast<std::size_t>(ka * kb));
    auto mi_of = [&](const std::vector<int>& bb) {
        std::fill(joint.begin(), joint.end(), 0.0);
        for (std::size_t i = 0; i < ca.size(); ++i) joint[ca[i] * kb + bb[i]] += 1;
        double mi = 0.0;
        for (int i = 0; i < ka; ++i)
            for (int j = 0; j < kb; ++j) {
                const double nij = joint[i * kb + j];
                if (nij > 0) mi += nij / n * std::log(n * nij / (row[i] * col[j]));
            }
        return mi;
    };

    std::sort(arrangement.begin(), arrangement.end());
    double sum = 0.0;
    long long count = 0;
    do {
        sum += mi_of(arrangement);
        ++count;
    } while (std::next_permutation(arrangement.begin(), arrangement.end()));
    const double emi = sum / static_cast<double>(count);
    const double denom = 0.5 * (entropy(a) + entropy(b)) - emi;
    if (denom == 0.0) return 0.0;
    return (mutual_information(a, b) - emi) / denom;
}

/// Mean precision at each ground-truth hit over a ranked list.
inline double average_precision(const std::vector<std::pair<std::size_t, std::size_t>>& ranked,
                                const std::set<std::pair<std::size_t, std::size_t>>& gt) {
    if (gt.empty()) return 1.0;
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        if (gt.count(ranked[r])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
    }
    return sum / static_cast<double>(gt.size());
}

inline std::vector<int> random_partition(std::mt19937& rng, std::size_t n) {
    std::uniform_int_distribution<int> k_dist(1, static_cast<int>(n));
    const int k = k_dist(rng);
    std::uniform_int_distribution<int> label(0, k - 1);
    std::vector<int> out(n);
    for (auto& x : out) x = label(rng);
    return out;
}

}  // namespace oracle
