#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace synthcp {

struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 (gray) or 3 (RGB)
    std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

// 8-bit PNG output with fixed compression settings, so equal inputs give
// byte-identical files.
void write_png(const std::filesystem::path& path, const Image8& image);
Image8 read_png(const std::filesystem::path& path);

}  // namespace synthcp
