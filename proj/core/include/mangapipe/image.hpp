#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mangapipe/geometry.hpp"

namespace mangapipe {

/// Integer pixel rectangle, half-open: [x, x+width) x [y, y+height).
struct PixelRect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

inline constexpr int kPanelCropInset = 2;

/// Pixel rectangle covering a detected panel box, shrunk by `inset` on every
/// side and clipped to the image. Falls back to the uninset rectangle when the
/// inset would leave nothing.
PixelRect panel_crop_rect(const BBox& box, ImageDims dims, int inset = kPanelCropInset);

class PageImage {
public:
    static PageImage load(const std::filesystem::path& path);
    static PageImage decode(const std::string& encoded_bytes);

    PageImage(PageImage&&) noexcept;
    PageImage& operator=(PageImage&&) noexcept;
    ~PageImage();

    ImageDims dims() const;
    /// Original file bytes, as sent over the wire.
    const std::string& bytes() const;
    /// Lossless PNG of the region; deterministic for identical pixels.
    std::string crop_png(const PixelRect& rect) const;

private:
    struct Impl;
    explicit PageImage(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

}  // namespace mangapipe
