#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace olat {

// Row-major, top-left origin, interleaved RGB raster.
template <typename T>
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(std::size_t w, std::size_t h, T fill = T{}) : width(w), height(h), data(w * h * 3, fill) {}

  std::size_t pixel_count() const { return width * height; }
  bool empty() const { return data.empty(); }
  bool same_size(const auto& other) const { return width == other.width && height == other.height; }

  T& at(std::size_t x, std::size_t y, std::size_t c) { return data[(y * width + x) * 3 + c]; }
  const T& at(std::size_t x, std::size_t y, std::size_t c) const { return data[(y * width + x) * 3 + c]; }

  std::span<T> row(std::size_t y) { return std::span<T>(data).subspan(y * width * 3, width * 3); }
  std::span<const T> row(std::size_t y) const {
    return std::span<const T>(data).subspan(y * width * 3, width * 3);
  }

  friend bool operator==(const Raster&, const Raster&) = default;
};

/// Linear scene-referred radiance, 32-bit float storage.
using HdrImage = Raster<float>;
/// Double-precision radiance raster used by the oracle and exact checks.
using HdrImageD = Raster<double>;
/// Display-referred 8-bit RGB.
using LdrImage = Raster<std::uint8_t>;

// Throws DomainError unless every value is finite and >= 0 and the buffer
// length matches the dimensions.
void validate(const HdrImage& img);

template <typename To, typename From>
Raster<To> convert(const Raster<From>& src) {
  Raster<To> out;
  out.width = src.width;
  out.height = src.height;
  out.data.assign(src.data.begin(), src.data.end());
  return out;
}

struct ToneMapParams {
  double exposure_stops = 0.0;
  double gamma = 2.2;
};

// out = clamp(floor(255 * (2^stops * v)^(1/gamma) + 0.5), 0, 255)
LdrImage tone_map(const HdrImage& img, const ToneMapParams& params);
std::uint8_t tone_map_value(double v, const ToneMapParams& params);

// Rec. 709 luminance, one value per pixel.
std::vector<float> luminance(const HdrImage& img);

}  // namespace olat
