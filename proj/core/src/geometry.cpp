#include "mangapipe/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "mangapipe/error.hpp"

namespace mangapipe {

bool BBox::valid() const noexcept {
    const bool finite = std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) && std::isfinite(y_max);
    return finite && x_min >= 0.0 && y_min >= 0.0 && x_min <= x_max && y_min <= y_max;
}

bool QuantizedBox::valid() const noexcept {
    auto in_range = [](int v) { return v >= 0 && v < kLocationBins; };
    return in_range(bx_min) && in_range(by_min) && in_range(bx_max) && in_range(by_max) && bx_min <= bx_max &&
           by_min <= by_max;
}

std::ostream& operator<<(std::ostream& os, const BBox& b) {
    return os << '[' << b.x_min << ", " << b.y_min << ", " << b.x_max << ", " << b.y_max << ']';
}

std::ostream& operator<<(std::ostream& os, const QuantizedBox& q) {
    return os << '<' << q.bx_min << ", " << q.by_min << ", " << q.bx_max << ", " << q.by_max << '>';
}

double intersection_area(const BBox& a, const BBox& b) noexcept {
    const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

double iou(const BBox& a, const BBox& b) noexcept {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

int quantize_coordinate(double c, int extent) {
    const int bin = static_cast<int>(std::floor(c / static_cast<double>(extent) * kLocationBins));
    return std::clamp(bin, 0, kLocationBins - 1);
}

double dequantize_coordinate(int bin, int extent) {
    return (static_cast<double>(bin) + 0.5) / kLocationBins * static_cast<double>(extent);
}

QuantizedBox quantize(const BBox& b, ImageDims dims) {
    if (dims.width < 1 || dims.height < 1) {
        throw InputError("image dims must be positive, got " + std::to_string(dims.width) + "x" +
                         std::to_string(dims.height));
    }
    auto check = [](const char* name, double v, int extent) {
        if (!std::isfinite(v) || v < 0.0 || v > static_cast<double>(extent)) {
            throw OutOfBoundsError(std::string(name) + "=" + std::to_string(v) + " outside [0, " +
                                   std::to_string(extent) + "]");
        }
    };
    check("x_min", b.x_min, dims.width);
    check("y_min", b.y_min, dims.height);
    check("x_max", b.x_max, dims.width);
    check("y_max", b.y_max, dims.height);
    if (b.x_min > b.x_max || b.y_min > b.y_max) throw InputError("inverted box");
    return {quantize_coordinate(b.x_min, dims.width), quantize_coordinate(b.y_min, dims.height),
            quantize_coordinate(b.x_max, dims.width), quantize_coordinate(b.y_max, dims.height)};
}

BBox dequantize(const QuantizedBox& q, ImageDims dims) {
    return {dequantize_coordinate(q.bx_min, dims.width), dequantize_coordinate(q.by_min, dims.height),
            dequantize_coordinate(q.bx_max, dims.width), dequantize_coordinate(q.by_max, dims.height)};
}

namespace {

bool same_row_band(const BBox& a, const BBox& b) noexcept {
    const double overlap = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    const double min_h = std::min(a.height(), b.height());
    if (min_h <= 0.0) return overlap >= 0.0;
    return overlap >= kRowBandOverlap * min_h;
}

}  // namespace

bool reading_order_less(const BBox& a, const BBox& b) noexcept {
    if (!same_row_band(a, b)) {
        const double ca = a.y_min + a.y_max;
        const double cb = b.y_min + b.y_max;
        if (ca != cb) return ca < cb;
    }
    if (a.x_max != b.x_max) return a.x_max > b.x_max;
    return std::tuple(a.y_min, -a.x_max, a.x_min, a.y_max) < std::tuple(b.y_min, -b.x_max, b.x_min, b.y_max);
}

}  // namespace mangapipe
