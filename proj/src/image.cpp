#include "siamapn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace siamapn {

std::array<double, 3> Image::channel_mean() const {
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  const std::size_t n = width * height;
  if (n == 0) return sum;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) sum[c] += pixels[i * 3 + c];
  }
  for (double& s : sum) s /= static_cast<double>(n);
  return sum;
}

Image read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw std::runtime_error("read_png: " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image out(img.width, img.height);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error("read_png: " + path.string() + ": " + img.message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw std::runtime_error("write_png: " + path.string() + ": " + img.message);
  }
}

Tensor crop_to_tensor(const Image& image, double cx, double cy, double region,
                      std::size_t out_size, const std::array<double, 3>& fill) {
  if (out_size == 0 || !(region > 0.0)) {
    throw std::invalid_argument("crop_to_tensor: empty crop");
  }
  const double step = region / static_cast<double>(out_size);
  const double half = 0.5 * static_cast<double>(out_size);
  const long w = static_cast<long>(image.width), h = static_cast<long>(image.height);

  // Per-axis source indices and weights are shared by all rows/columns.
  struct Tap {
    long i0;
    double t;
  };
  auto taps = [&](double center) {
    std::vector<Tap> out(out_size);
    for (std::size_t u = 0; u < out_size; ++u) {
      const double f = center + (static_cast<double>(u) + 0.5 - half) * step - 0.5;
      const double fl = std::floor(f);
      out[u] = Tap{static_cast<long>(fl), f - fl};
    }
    return out;
  };
  const std::vector<Tap> xs = taps(cx), ys = taps(cy);

  Tensor t(Shape{1, 3, out_size, out_size});
  double* d = t.data_mut().data();
  const std::size_t plane = out_size * out_size;
  auto px = [&](long x, long y, std::size_t c) -> double {
    if (x < 0 || y < 0 || x >= w || y >= h) return fill[c];
    return image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
  };
  for (std::size_t v = 0; v < out_size; ++v) {
    const Tap ty = ys[v];
    for (std::size_t u = 0; u < out_size; ++u) {
      const Tap tx = xs[u];
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1.0 - tx.t) * px(tx.i0, ty.i0, c) + tx.t * px(tx.i0 + 1, ty.i0, c);
        const double bot =
            (1.0 - tx.t) * px(tx.i0, ty.i0 + 1, c) + tx.t * px(tx.i0 + 1, ty.i0 + 1, c);
        d[c * plane + v * out_size + u] = normalize_pixel((1.0 - ty.t) * top + ty.t * bot);
      }
    }
  }
  return t;
}

Tensor stack_batch(const std::vector<Tensor>& items) {
  if (items.empty()) throw std::invalid_argument("stack_batch: no items");
  Shape shape = items.front().shape();
  if (shape.empty() || shape[0] != 1) throw ShapeError("stack_batch: items must have batch 1");
  std::vector<double> data;
  data.reserve(items.size() * items.front().numel());
  for (const Tensor& t : items) {
    if (t.shape() != shape) {
      throw ShapeError("stack_batch: shape mismatch " + shape_str(t.shape()) + " vs " +
                       shape_str(shape));
    }
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  shape[0] = items.size();
  return Tensor(shape, std::move(data));
}

}  // namespace siamapn
