#include <cmath>
#include <vector>

#include "olatkit/error.hpp"
#include "olatkit/quality.hpp"

namespace olat {
namespace {

template <typename T>
void require_same(const Raster<T>& a, const Raster<T>& b) {
  if (a.width != b.width || a.height != b.height || a.data.size() != b.data.size()) {
    throw ContractError("images differ in size (" + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                        std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
  }
}

template <typename T>
double l1_impl(const Raster<T>& a, const Raster<T>& b) {
  require_same(a, b);
  if (a.data.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    sum += std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
  }
  return sum / static_cast<double>(a.data.size());
}

template <typename T>
double rmse_impl(const Raster<T>& a, const Raster<T>& b) {
  require_same(a, b);
  if (a.data.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(a.data.size()));
}

// Inclusive-exclusive summed-area table over one channel, (w+1) x (h+1).
struct Integral {
  std::size_t stride;
  std::vector<double> sum;
  double box(std::size_t x, std::size_t y, std::size_t k) const {
    return sum[(y + k) * stride + x + k] - sum[y * stride + x + k] - sum[(y + k) * stride + x] + sum[y * stride + x];
  }
};

template <typename F>
Integral integrate(std::size_t w, std::size_t h, F value) {
  Integral t{w + 1, std::vector<double>((w + 1) * (h + 1), 0.0)};
  for (std::size_t y = 0; y < h; ++y) {
    double row = 0.0;
    for (std::size_t x = 0; x < w; ++x) {
      row += value(x, y);
      t.sum[(y + 1) * t.stride + x + 1] = t.sum[y * t.stride + x + 1] + row;
    }
  }
  return t;
}

template <typename T>
double ssim_impl(const Raster<T>& a, const Raster<T>& b, double peak) {
  require_same(a, b);
  if (!(peak > 0.0)) throw DomainError("peak must be positive");
  const std::size_t k = kSsimWindow;
  if (a.width < k || a.height < k) throw ContractError("SSIM needs images of at least 8x8 pixels");
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const double n = static_cast<double>(k * k);
  const std::size_t nx = a.width - k + 1;
  const std::size_t ny = a.height - k + 1;
  double total = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const auto av = [&](std::size_t x, std::size_t y) { return static_cast<double>(a.at(x, y, c)); };
    const auto bv = [&](std::size_t x, std::size_t y) { return static_cast<double>(b.at(x, y, c)); };
    const Integral sa = integrate(a.width, a.height, av);
    const Integral sb = integrate(a.width, a.height, bv);
    const Integral saa = integrate(a.width, a.height, [&](std::size_t x, std::size_t y) { return av(x, y) * av(x, y); });
    const Integral sbb = integrate(a.width, a.height, [&](std::size_t x, std::size_t y) { return bv(x, y) * bv(x, y); });
    const Integral sab = integrate(a.width, a.height, [&](std::size_t x, std::size_t y) { return av(x, y) * bv(x, y); });
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t x = 0; x < nx; ++x) {
        const double mu_a = sa.box(x, y, k) / n;
        const double mu_b = sb.box(x, y, k) / n;
        const double var_a = saa.box(x, y, k) / n - mu_a * mu_a;
        const double var_b = sbb.box(x, y, k) / n - mu_b * mu_b;
        const double cov = sab.box(x, y, k) / n - mu_a * mu_b;
        total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                 ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      }
    }
  }
  return total / static_cast<double>(3 * nx * ny);
}

}  // namespace

double l1_loss(const HdrImage& a, const HdrImage& b) { return l1_impl(a, b); }
double l1_loss(const HdrImageD& a, const HdrImageD& b) { return l1_impl(a, b); }
double rmse(const HdrImage& a, const HdrImage& b) { return rmse_impl(a, b); }
double rmse(const HdrImageD& a, const HdrImageD& b) { return rmse_impl(a, b); }

double psnr_from_rmse(double rmse_value, double peak) {
  if (!(peak > 0.0)) throw DomainError("peak must be positive");
  if (rmse_value < peak * 1e-5) return 100.0;
  return 20.0 * std::log10(peak / rmse_value);
}

double psnr(const HdrImage& a, const HdrImage& b, double peak) { return psnr_from_rmse(rmse(a, b), peak); }
double psnr(const HdrImageD& a, const HdrImageD& b, double peak) { return psnr_from_rmse(rmse(a, b), peak); }
double ssim(const HdrImage& a, const HdrImage& b, double peak) { return ssim_impl(a, b, peak); }
double ssim(const HdrImageD& a, const HdrImageD& b, double peak) { return ssim_impl(a, b, peak); }

}  // namespace olat
