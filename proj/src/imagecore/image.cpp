#include "olatkit/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "olatkit/error.hpp"

namespace olat {

void validate(const HdrImage& img) {
  if (img.data.size() != img.width * img.height * 3) {
    throw DomainError("image buffer holds " + std::to_string(img.data.size()) + " values, expected " +
                      std::to_string(img.width * img.height * 3));
  }
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const float v = img.data[i];
    if (!std::isfinite(v) || v < 0.0f) {
      throw DomainError("image value at index " + std::to_string(i) + " is negative or non-finite");
    }
  }
}

std::uint8_t tone_map_value(double v, const ToneMapParams& params) {
  const double scaled = std::exp2(params.exposure_stops) * v;
  if (!(scaled > 0.0)) return 0;
  const double out = std::floor(255.0 * std::pow(scaled, 1.0 / params.gamma) + 0.5);
  return static_cast<std::uint8_t>(std::clamp(out, 0.0, 255.0));
}

LdrImage tone_map(const HdrImage& img, const ToneMapParams& params) {
  LdrImage out(img.width, img.height);
  const double gain = std::exp2(params.exposure_stops);
  const double inv_gamma = 1.0 / params.gamma;
  const auto n = static_cast<std::ptrdiff_t>(img.data.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double scaled = gain * img.data[i];
    std::uint8_t v = 0;
    if (scaled > 0.0) {
      const double t = std::floor(255.0 * std::pow(scaled, inv_gamma) + 0.5);
      v = static_cast<std::uint8_t>(std::clamp(t, 0.0, 255.0));
    }
    out.data[i] = v;
  }
  return out;
}

std::vector<float> luminance(const HdrImage& img) {
  std::vector<float> out(img.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float* p = &img.data[i * 3];
    out[i] = 0.2126f * p[0] + 0.7152f * p[1] + 0.0722f * p[2];
  }
  return out;
}

}  // namespace olat
