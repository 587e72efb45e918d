#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "siamapn/tensor.hpp"

namespace siamapn {

/// 8-bit RGB image, rows top to bottom, channels interleaved.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  std::array<double, 3> channel_mean() const;

  bool operator==(const Image&) const = default;
};

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

/// Pixel value to network input: [0, 255] -> [-1, 1].
inline double normalize_pixel(double v) { return v / 127.5 - 1.0; }

/// Square crop of side `region` frame pixels centered at (cx, cy), resampled
/// bilinearly to out_size x out_size and returned as a [1,3,S,S] tensor.
/// Output pixel u samples frame x = cx + (u + 0.5 - S/2) * region / S; any
/// frame pixel outside the image reads as `fill`.
Tensor crop_to_tensor(const Image& image, double cx, double cy, double region,
                      std::size_t out_size, const std::array<double, 3>& fill);

/// Concatenates [1,3,S,S] crops along the batch axis.
Tensor stack_batch(const std::vector<Tensor>& items);

}  // namespace siamapn
