#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace lqg {

// Writes an 8-bit RGB PNG (no external compression library: the zlib stream
// uses stored deflate blocks). rgb is row-major, 3 bytes per pixel.
void write_png_rgb(const std::filesystem::path& path, std::uint32_t width,
                   std::uint32_t height, const std::vector<std::uint8_t>& rgb);

}  // namespace lqg
