#pragma once

#include <cstdint>
#include <vector>

#include "octarec/image.hpp"

namespace octarec {

/// Interleaved 8-bit RGB raster.
struct Rgb8Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb; // size == 3*width*height

    Rgb8Image() = default;
    Rgb8Image(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0) {}

    std::uint8_t* px(int x, int y) { return &rgb[3 * (static_cast<size_t>(y) * width + x)]; }
    const std::uint8_t* px(int x, int y) const { return &rgb[3 * (static_cast<size_t>(y) * width + x)]; }
};

/// Piecewise-linear red->green->blue palette over depth in [0,1]:
/// 0 (nearest to the sensor) -> (255,0,0), 0.5 -> (0,255,0), 1 -> (0,0,255).
/// Invalid pixels encode to black (0,0,0), which no valid depth produces.
Rgb8Image depth_colormap_encode(const DepthMap& d);

/// Inverse of the palette; black pixels decode as invalid. Valid pixels
/// round-trip within 1/255.
DepthMap depth_colormap_decode(const Rgb8Image& img);

} // namespace octarec
