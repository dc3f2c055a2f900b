#pragma once

#include <cstdint>
#include <vector>

namespace octarec {

/// Single-channel float raster, row-major. Carries angiograms, masks and
/// depth values in [0,1].
struct Image2D {
    int width = 0;
    int height = 0;
    std::vector<float> data; // size == width*height

    Image2D() = default;
    Image2D(int w, int h, float fill = 0.0f);

    float& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    float at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }

    /// Throws std::invalid_argument if dimensions and payload disagree or a
    /// value is non-finite.
    void validate() const;
};

/// Raster of {0,1} values.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits; // size == width*height, values 0 or 1

    BinaryMask() = default;
    BinaryMask(int w, int h, std::uint8_t fill = 0);

    std::uint8_t& at(int x, int y) { return bits[static_cast<size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x]; }

    size_t count() const; // number of set pixels
    void validate() const;

    Image2D to_image() const;
    static BinaryMask from_image(const Image2D& img, float threshold = 0.5f);
};

/// Depth raster plus validity mask. Values in [0,1], 0 = nearest to the
/// imaging sensor. Pixels with valid==0 carry no depth information.
struct DepthMap {
    Image2D image;
    BinaryMask valid;

    DepthMap() = default;
    DepthMap(int w, int h);
    explicit DepthMap(Image2D img); // all pixels valid

    int width() const { return image.width; }
    int height() const { return image.height; }

    void validate() const;
};

/// Four-neighbor bilinear blend at fractional pixel coordinates.
/// Requires 0 <= x <= width-1 and 0 <= y <= height-1; outside that range a
/// std::domain_error is thrown rather than clamping.
float bilinear_sample(const Image2D& img, double x, double y);

} // namespace octarec
