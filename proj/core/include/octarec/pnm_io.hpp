#pragma once

#include <filesystem>

#include "octarec/image.hpp"

namespace octarec {

/// Binary PGM ("P5"). Reads 8-bit (maxval 255) and 16-bit (maxval 65535,
/// big-endian) payloads, scaling to [0,1]. Writes 8-bit only.
Image2D load_pgm(const std::filesystem::path& path);
void save_pgm(const Image2D& img, const std::filesystem::path& path);

BinaryMask load_mask_pgm(const std::filesystem::path& path, float threshold = 0.5f);
void save_mask_pgm(const BinaryMask& mask, const std::filesystem::path& path);

/// Grayscale PFM ("Pf", scale -1.0 = little-endian, rows stored bottom to
/// top). Round-trips float payloads bit-exactly. The 3-channel "PF" variant
/// and big-endian scales are rejected.
Image2D load_pfm(const std::filesystem::path& path);
void save_pfm(const Image2D& img, const std::filesystem::path& path);

} // namespace octarec
