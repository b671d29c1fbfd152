#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dfr {

// 8-bit interleaved image, row-major. The pipeline only produces RGB (3 channels).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int ch) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
  std::uint8_t at(int y, int x, int ch) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
  bool operator==(const Image&) const = default;
};

// Spatial size after pooling divisibility is enforced.
struct SnappedSize {
  int width = 0;
  int height = 0;
  bool adjusted = false;
};

inline constexpr int kSpatialMultiple = 16;

// Largest multiples of 16 not exceeding the request. Throws ConfigError when
// either requested dimension is < 16.
SnappedSize snap_to_pool_grid(int requested_width, int requested_height);

// Decodes PNG/JPEG into RGB. Throws IoError naming the path.
Image load_image(const std::filesystem::path& path);

// Bilinear resize to exactly (width, height).
Image resize_image(const Image& image, int width, int height);

// Loads, snaps the requested size to the 16-pixel grid (logging a warning when
// it changes) and bilinearly resizes.
Image load_and_resize(const std::filesystem::path& path, int target_width = 412,
                      int target_height = 522);

// Throws IoError if the file cannot be written.
void save_png(const Image& image, const std::filesystem::path& path);

}  // namespace dfr
