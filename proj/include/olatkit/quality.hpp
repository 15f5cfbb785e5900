#pragma once

#include <cstddef>

#include "olatkit/image.hpp"

namespace olat {

// Mean absolute difference over all pixels and channels.
double l1_loss(const HdrImage& a, const HdrImage& b);
double l1_loss(const HdrImageD& a, const HdrImageD& b);

double rmse(const HdrImage& a, const HdrImage& b);
double rmse(const HdrImageD& a, const HdrImageD& b);

// 20 log10(peak / rmse), capped at 100 dB once rmse < peak * 1e-5.
double psnr(const HdrImage& a, const HdrImage& b, double peak);
double psnr(const HdrImageD& a, const HdrImageD& b, double peak);
double psnr_from_rmse(double rmse_value, double peak);

// Mean SSIM over every 8x8 window position and channel, uniform window,
// population statistics, K1 = 0.01, K2 = 0.03, dynamic range = peak.
double ssim(const HdrImage& a, const HdrImage& b, double peak = 1.0);
double ssim(const HdrImageD& a, const HdrImageD& b, double peak = 1.0);

inline constexpr std::size_t kSsimWindow = 8;

// Raw-patch ID-MRF. Scale 1 uses the full-resolution images, scale 2 their
// 2x2 box-downsampled versions. Patches are mean-centred over all their
// values and divided by sqrt(|p|^2 + eps^2).
struct MrfConfig {
  std::size_t patch_full = 5;
  std::size_t patch_half = 5;
  std::size_t stride = 2;
  double bandwidth = 0.5;
  double epsilon = 1e-5;
};

void validate(const MrfConfig& cfg);

// Sum over both scales of -log(mean_u max_v wbar(v, u)), where u ranges over
// patches of `x` (generated) and v over patches of `y` (target). When
// grad_x is given it receives dL/dx (same size as x); argmin/argmax
// selections are treated as constants.
double idmrf_loss(const HdrImageD& x, const HdrImageD& y, const MrfConfig& cfg = {}, HdrImageD* grad_x = nullptr);
double idmrf_loss(const HdrImage& x, const HdrImage& y, const MrfConfig& cfg = {});

// Single-scale matching term on explicit images, exposed for tests.
double idmrf_scale_term(const HdrImageD& x, const HdrImageD& y, std::size_t patch, std::size_t stride,
                        const MrfConfig& cfg, HdrImageD* grad_x = nullptr);

// 2x2 box downsample (floor of odd dimensions).
HdrImageD box_downsample(const HdrImageD& img);

}  // namespace olat
