#include "mangapipe/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "mangapipe/dataset_io.hpp"
#include "mangapipe/error.hpp"

namespace mangapipe {

struct PageImage::Impl {
    std::string bytes;
    cv::Mat pixels;
};

PageImage::PageImage(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
PageImage::PageImage(PageImage&&) noexcept = default;
PageImage& PageImage::operator=(PageImage&&) noexcept = default;
PageImage::~PageImage() = default;

PageImage PageImage::decode(const std::string& encoded_bytes) {
    auto impl = std::make_unique<Impl>();
    impl->bytes = encoded_bytes;
    const cv::Mat raw(1, static_cast<int>(encoded_bytes.size()), CV_8UC1,
                      const_cast<char*>(encoded_bytes.data()));
    impl->pixels = cv::imdecode(raw, cv::IMREAD_COLOR);
    if (impl->pixels.empty()) throw InputError("image bytes could not be decoded");
    return PageImage(std::move(impl));
}

PageImage PageImage::load(const std::filesystem::path& path) {
    try {
        return decode(read_file(path));
    } catch (const InputError&) {
        throw IoError(path.string(), "not a decodable image");
    }
}

ImageDims PageImage::dims() const { return {impl_->pixels.cols, impl_->pixels.rows}; }

const std::string& PageImage::bytes() const { return impl_->bytes; }

std::string PageImage::crop_png(const PixelRect& rect) const {
    const cv::Rect r(rect.x, rect.y, rect.width, rect.height);
    if (rect.width <= 0 || rect.height <= 0 || (r & cv::Rect(0, 0, impl_->pixels.cols, impl_->pixels.rows)) != r) {
        throw OutOfBoundsError("crop rectangle outside the image");
    }
    std::vector<uchar> buf;
    // fixed compression level so output bytes do not depend on library defaults
    if (!cv::imencode(".png", impl_->pixels(r), buf, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
        throw Error("png encoding failed");
    }
    return {buf.begin(), buf.end()};
}

PixelRect panel_crop_rect(const BBox& box, ImageDims dims, int inset) {
    auto clampi = [](double v, int lo, int hi) { return std::clamp(static_cast<int>(v), lo, hi); };
    const int x0 = clampi(std::floor(box.x_min), 0, dims.width - 1);
    const int y0 = clampi(std::floor(box.y_min), 0, dims.height - 1);
    const int x1 = clampi(std::ceil(box.x_max), x0 + 1, dims.width);
    const int y1 = clampi(std::ceil(box.y_max), y0 + 1, dims.height);
    if (x1 - x0 > 2 * inset && y1 - y0 > 2 * inset) {
        return {x0 + inset, y0 + inset, x1 - x0 - 2 * inset, y1 - y0 - 2 * inset};
    }
    return {x0, y0, x1 - x0, y1 - y0};
}

}  // namespace mangapipe
