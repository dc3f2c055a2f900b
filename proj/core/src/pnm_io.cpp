#include "octarec/pnm_io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "octarec/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "pnm_io assumes a little-endian host");

namespace octarec {

namespace {

// Skips whitespace and '#' comments, then reads one unsigned decimal token.
int read_header_int(std::istream& in, const char* what) {
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) throw format_error(std::string("PGM header: bad ") + what);
    long value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (value > 1 << 30) throw format_error(std::string("PGM header: huge ") + what);
        c = in.get();
    }
    if (c != EOF) in.unget();
    return static_cast<int>(value);
}

std::ifstream open_input(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw missing_input_error("no such file: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    return in;
}

} // namespace

Image2D load_pgm(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5')
        throw format_error("not a binary PGM (expected magic P5): " + path.string());
    const int w = read_header_int(in, "width");
    const int h = read_header_int(in, "height");
    const int maxval = read_header_int(in, "maxval");
    if (w <= 0 || h <= 0) throw format_error("PGM header: non-positive dimensions");
    if (maxval != 255 && maxval != 65535)
        throw format_error("PGM header: unsupported maxval " + std::to_string(maxval));
    in.get(); // single whitespace byte after maxval

    Image2D img(w, h);
    const size_t n = img.size();
    if (maxval == 255) {
        std::vector<std::uint8_t> raw(n);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in.gcount()) != n) throw io_error("PGM payload truncated");
        for (size_t i = 0; i < n; ++i) img.data[i] = raw[i] / 255.0f;
    } else {
        std::vector<std::uint8_t> raw(n * 2);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
        if (static_cast<size_t>(in.gcount()) != n * 2) throw io_error("PGM payload truncated");
        for (size_t i = 0; i < n; ++i) {
            const unsigned v = (unsigned(raw[2 * i]) << 8) | raw[2 * i + 1]; // big-endian
            img.data[i] = v / 65535.0f;
        }
    }
    return img;
}

void save_pgm(const Image2D& img, const std::filesystem::path& path) {
    img.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> raw(img.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        const float v = std::min(1.0f, std::max(0.0f, img.data[i]));
        raw[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw io_error("short write: " + path.string());
}

BinaryMask load_mask_pgm(const std::filesystem::path& path, float threshold) {
    return BinaryMask::from_image(load_pgm(path), threshold);
}

void save_mask_pgm(const BinaryMask& mask, const std::filesystem::path& path) {
    save_pgm(mask.to_image(), path);
}

Image2D load_pfm(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    std::string magic;
    in >> magic;
    if (magic == "PF")
        throw format_error("3-channel PFM is not supported: " + path.string());
    if (magic != "Pf") throw format_error("not a grayscale PFM (expected magic Pf): " + path.string());
    int w = 0, h = 0;
    double scale = 0.0;
    in >> w >> h >> scale;
    if (!in || w <= 0 || h <= 0) throw format_error("PFM header: bad dimensions");
    if (!(scale < 0.0))
        throw format_error("PFM header: big-endian scale is not supported");
    in.get(); // whitespace byte terminating the header

    Image2D img(w, h);
    std::vector<float> row(static_cast<size_t>(w));
    for (int y = h - 1; y >= 0; --y) { // payload rows run bottom to top
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(w * sizeof(float)));
        if (static_cast<size_t>(in.gcount()) != w * sizeof(float))
            throw io_error("PFM payload truncated");
        std::memcpy(&img.data[static_cast<size_t>(y) * w], row.data(), w * sizeof(float));
    }
    return img;
}

void save_pfm(const Image2D& img, const std::filesystem::path& path) {
    img.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    out << "Pf\n" << img.width << " " << img.height << "\n-1.0\n";
    for (int y = img.height - 1; y >= 0; --y) {
        out.write(reinterpret_cast<const char*>(&img.data[static_cast<size_t>(y) * img.width]),
                  static_cast<std::streamsize>(img.width * sizeof(float)));
    }
    if (!out) throw io_error("short write: " + path.string());
}

} // namespace octarec
