#include "dfr/image.hpp"

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "dfr/errors.hpp"

namespace dfr {

namespace {

cv::Mat to_bgr_mat(const Image& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

Image from_rgb_mat(const cv::Mat& rgb) {
  Image image{rgb.cols, rgb.rows, 3, {}};
  image.pixels.resize(static_cast<std::size_t>(rgb.cols) * rgb.rows * 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<std::uint8_t>(y);
    std::copy(row, row + static_cast<std::size_t>(rgb.cols) * 3,
              image.pixels.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
  }
  return image;
}

void check_image(const Image& image, const char* what) {
  if (image.channels != 3 || image.width < 1 || image.height < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw ConfigError(fmt::format("{}: expected a non-empty RGB image", what));
  }
}

}  // namespace

SnappedSize snap_to_pool_grid(int requested_width, int requested_height) {
  if (requested_width < kSpatialMultiple || requested_height < kSpatialMultiple) {
    throw ConfigError(fmt::format("target size {}x{} must be at least {}x{}", requested_width,
                                  requested_height, kSpatialMultiple, kSpatialMultiple));
  }
  SnappedSize s;
  s.width = requested_width / kSpatialMultiple * kSpatialMultiple;
  s.height = requested_height / kSpatialMultiple * kSpatialMultiple;
  s.adjusted = s.width != requested_width || s.height != requested_height;
  return s;
}

Image load_image(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw IoError(fmt::format("cannot read image {}: no such file", path.string()));
  }
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw IoError(fmt::format("cannot decode image {}", path.string()));
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return from_rgb_mat(rgb);
}

Image resize_image(const Image& image, int width, int height) {
  check_image(image, "resize_image");
  if (width < 1 || height < 1) {
    throw ConfigError(fmt::format("resize_image: target {}x{} must be positive", width, height));
  }
  if (width == image.width && height == image.height) return image;
  cv::Mat src(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return from_rgb_mat(dst);
}

Image load_and_resize(const std::filesystem::path& path, int target_width,
                      int target_height) {
  if (target_width <= 0 || target_height <= 0) {
    throw ConfigError(fmt::format("target size {}x{} must be positive", target_width,
                                  target_height));
  }
  const SnappedSize size = snap_to_pool_grid(target_width, target_height);
  if (size.adjusted) {
    spdlog::warn("requested {}x{} is not divisible by {}; using {}x{}", target_width,
                 target_height, kSpatialMultiple, size.width, size.height);
  }
  return resize_image(load_image(path), size.width, size.height);
}

void save_png(const Image& image, const std::filesystem::path& path) {
  check_image(image, "save_png");
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), to_bgr_mat(image));
  } catch (const cv::Exception& e) {
    throw IoError(fmt::format("cannot write {}: {}", path.string(), e.what()));
  }
  if (!ok) throw IoError(fmt::format("cannot write {}", path.string()));
}

}  // namespace dfr
