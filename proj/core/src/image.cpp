#include "octarec/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace octarec {

Image2D::Image2D(int w, int h, float fill)
    : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw std::invalid_argument("Image2D: negative dimensions");
}

void Image2D::validate() const {
    if (width < 0 || height < 0)
        throw std::invalid_argument("Image2D: negative dimensions");
    if (data.size() != static_cast<size_t>(width) * height)
        throw std::invalid_argument("Image2D: data length != width*height");
    for (float v : data)
        if (!std::isfinite(v)) throw std::invalid_argument("Image2D: non-finite value");
}

BinaryMask::BinaryMask(int w, int h, std::uint8_t fill)
    : width(w), height(h), bits(static_cast<size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw std::invalid_argument("BinaryMask: negative dimensions");
    if (fill > 1) throw std::invalid_argument("BinaryMask: fill must be 0 or 1");
}

size_t BinaryMask::count() const {
    size_t n = 0;
    for (auto b : bits) n += b;
    return n;
}

void BinaryMask::validate() const {
    if (bits.size() != static_cast<size_t>(width) * height)
        throw std::invalid_argument("BinaryMask: bits length != width*height");
    for (auto b : bits)
        if (b > 1) throw std::invalid_argument("BinaryMask: value not in {0,1}");
}

Image2D BinaryMask::to_image() const {
    Image2D img(width, height);
    for (size_t i = 0; i < bits.size(); ++i) img.data[i] = bits[i] ? 1.0f : 0.0f;
    return img;
}

BinaryMask BinaryMask::from_image(const Image2D& img, float threshold) {
    BinaryMask m(img.width, img.height);
    for (size_t i = 0; i < img.data.size(); ++i) m.bits[i] = img.data[i] >= threshold ? 1 : 0;
    return m;
}

DepthMap::DepthMap(int w, int h) : image(w, h), valid(w, h) {}

DepthMap::DepthMap(Image2D img) : image(std::move(img)), valid(image.width, image.height, 1) {}

void DepthMap::validate() const {
    image.validate();
    valid.validate();
    if (valid.width != image.width || valid.height != image.height)
        throw std::invalid_argument("DepthMap: valid mask dimensions differ from image");
    for (size_t i = 0; i < image.data.size(); ++i) {
        if (valid.bits[i] && (image.data[i] < 0.0f || image.data[i] > 1.0f))
            throw std::invalid_argument("DepthMap: valid pixel outside [0,1]");
    }
}

float bilinear_sample(const Image2D& img, double x, double y) {
    if (img.width < 1 || img.height < 1)
        throw std::domain_error("bilinear_sample: empty image");
    if (!(x >= 0.0 && x <= img.width - 1.0) || !(y >= 0.0 && y <= img.height - 1.0))
        throw std::domain_error("bilinear_sample: coordinate (" + std::to_string(x) + "," +
                                std::to_string(y) + ") outside image");
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    if (x0 > img.width - 2) x0 = img.width - 2;  // sample exactly on the far edge
    if (y0 > img.height - 2) y0 = img.height - 2;
    if (x0 < 0) x0 = 0;
    if (y0 < 0) y0 = 0;
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double v00 = img.at(x0, y0);
    const double v10 = img.at(x1, y0);
    const double v01 = img.at(x0, y1);
    const double v11 = img.at(x1, y1);
    const double top = v00 * (1.0 - fx) + v10 * fx;
    const double bot = v01 * (1.0 - fx) + v11 * fx;
    return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

} // namespace octarec
