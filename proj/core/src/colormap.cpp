#include "octarec/colormap.hpp"

#include <cmath>

namespace octarec {

namespace {

std::uint8_t to_u8(double v) {
    if (v <= 0.0) return 0;
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v));
}

} // namespace

Rgb8Image depth_colormap_encode(const DepthMap& d) {
    d.validate();
    Rgb8Image out(d.width(), d.height());
    for (int y = 0; y < d.height(); ++y) {
        for (int x = 0; x < d.width(); ++x) {
            std::uint8_t* p = out.px(x, y);
            if (!d.valid.at(x, y)) continue; // stays black
            const double z = d.image.at(x, y);
            if (z <= 0.5) {
                p[0] = to_u8(255.0 * (1.0 - 2.0 * z));
                p[1] = to_u8(255.0 * 2.0 * z);
                p[2] = 0;
            } else {
                p[0] = 0;
                p[1] = to_u8(255.0 * (2.0 - 2.0 * z));
                p[2] = to_u8(255.0 * (2.0 * z - 1.0));
            }
        }
    }
    return out;
}

DepthMap depth_colormap_decode(const Rgb8Image& img) {
    DepthMap d(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const std::uint8_t* p = img.px(x, y);
            const double r = p[0], g = p[1], b = p[2];
            if (r == 0.0 && g == 0.0 && b == 0.0) continue; // invalid
            d.valid.at(x, y) = 1;
            double z;
            if (b == 0.0) {
                z = 0.5 * g / (r + g); // red..green leg, r+g ~ 255
            } else {
                z = 0.5 * (b / (g + b) + 1.0); // green..blue leg
            }
            d.image.at(x, y) = static_cast<float>(z);
        }
    }
    return d;
}

} // namespace octarec
