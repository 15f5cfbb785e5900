#include <array>
#include <cstddef>
#include <span>

#include "olatkit/relight.hpp"

namespace olat::kernels {

template <typename In, typename Acc>
void accumulate_row(std::span<const In* const> images, std::span<const std::array<double, 3>> weights,
                    std::size_t image_width, std::size_t y, std::size_t x0, std::size_t x1, Acc* acc) {
  const std::size_t n = (x1 - x0) * 3;
  const std::size_t offset = (y * image_width + x0) * 3;
  // Twelve values = four RGB pixels, a whole number of SIMD lanes.
  const std::size_t blocked = n - n % 12;
  for (std::size_t l = 0; l < images.size(); ++l) {
    const In* src = images[l] + offset;
    const auto& w = weights[l];
    Acc pattern[12];
    for (std::size_t k = 0; k < 12; ++k) pattern[k] = static_cast<Acc>(w[k % 3]);
    for (std::size_t i = 0; i < blocked; i += 12) {
      for (std::size_t k = 0; k < 12; ++k) acc[i + k] += pattern[k] * static_cast<Acc>(src[i + k]);
    }
    for (std::size_t i = blocked; i < n; ++i) acc[i] += pattern[i % 3] * static_cast<Acc>(src[i]);
  }
}

template void accumulate_row<float, double>(std::span<const float* const>, std::span<const std::array<double, 3>>,
                                            std::size_t, std::size_t, std::size_t, std::size_t, double*);
template void accumulate_row<float, float>(std::span<const float* const>, std::span<const std::array<double, 3>>,
                                           std::size_t, std::size_t, std::size_t, std::size_t, float*);
template void accumulate_row<double, double>(std::span<const double* const>, std::span<const std::array<double, 3>>,
                                             std::size_t, std::size_t, std::size_t, std::size_t, double*);

}  // namespace olat::kernels
