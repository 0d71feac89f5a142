#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <ostream>

namespace mangapipe {

/// Number of location bins per image axis.
inline constexpr int kLocationBins = 1000;

/// Axis-aligned rectangle in pixel space, origin top-left.
struct BBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const noexcept { return x_max - x_min; }
    double height() const noexcept { return y_max - y_min; }
    double area() const noexcept { return width() * height(); }
    bool valid() const noexcept;
    BBox translated(double dx, double dy) const noexcept { return {x_min + dx, y_min + dy, x_max + dx, y_max + dy}; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Rectangle in location-bin space; every index lies in [0, kLocationBins).
struct QuantizedBox {
    int bx_min = 0;
    int by_min = 0;
    int bx_max = 0;
    int by_max = 0;

    bool valid() const noexcept;
    std::array<int, 4> as_array() const noexcept { return {bx_min, by_min, bx_max, by_max}; }

    friend auto operator<=>(const QuantizedBox&, const QuantizedBox&) = default;
};

struct ImageDims {
    int width = 1;
    int height = 1;

    friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

std::ostream& operator<<(std::ostream& os, const BBox& b);
std::ostream& operator<<(std::ostream& os, const QuantizedBox& q);

double intersection_area(const BBox& a, const BBox& b) noexcept;

/// Intersection over union; 0 when the union is empty.
double iou(const BBox& a, const BBox& b) noexcept;

/// Maps pixel coordinates onto the 1000-bin grid with floor(c / d * 1000)
/// clamped to 999. Throws OutOfBoundsError if the box leaves the image.
QuantizedBox quantize(const BBox& b, ImageDims dims);
int quantize_coordinate(double c, int extent);

/// Inverse of quantize, returning bin centres.
BBox dequantize(const QuantizedBox& q, ImageDims dims);
double dequantize_coordinate(int bin, int extent);

/// Manga reading order: top to bottom, then right to left. Two boxes share a
/// row band when their vertical overlap is at least 30% of the smaller
/// height. Only used to validate or repair an emission order.
bool reading_order_less(const BBox& a, const BBox& b) noexcept;

inline constexpr double kRowBandOverlap = 0.3;

}  // namespace mangapipe
