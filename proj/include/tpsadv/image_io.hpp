#pragma once

#include <filesystem>
#include <stdexcept>

#include "tpsadv/image.hpp"

namespace tpsadv {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raw float format: magic "PF32", little-endian u32 width, height, channels,
/// then f32 samples row-major (interleaved channels).
void write_pf32(const Image& img, const std::filesystem::path& path);
Image read_pf32(const std::filesystem::path& path);

/// 8-bit RGB PNG; values are clamped to [0,1] and rounded on write.
void write_png(const Image& img, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

/// Dispatches on extension (.pf32 or .png).
Image read_image(const std::filesystem::path& path);
void write_image(const Image& img, const std::filesystem::path& path);

}  // namespace tpsadv
