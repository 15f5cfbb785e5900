#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>

#include "olatkit/align.hpp"
#include "olatkit/error.hpp"

namespace olat {
namespace {

void require_dims(std::size_t w0, std::size_t h0, std::size_t w1, std::size_t h1, const char* what) {
  if (w0 != w1 || h0 != h1) {
    throw ContractError(std::string(what) + ": dimension mismatch (" + std::to_string(w0) + "x" + std::to_string(h0) +
                        " vs " + std::to_string(w1) + "x" + std::to_string(h1) + ")");
  }
}

// Bilinear sample of a strided float plane with clamp-to-edge addressing.
// Integer positions return the stored value unchanged.
inline float sample(const float* data, std::size_t width, std::size_t height, std::size_t stride, std::size_t channel,
                    double sx, double sy) {
  const double max_x = static_cast<double>(width - 1);
  const double max_y = static_cast<double>(height - 1);
  sx = std::clamp(sx, 0.0, max_x);
  sy = std::clamp(sy, 0.0, max_y);
  const double fx0 = std::floor(sx);
  const double fy0 = std::floor(sy);
  const auto x0 = static_cast<std::size_t>(fx0);
  const auto y0 = static_cast<std::size_t>(fy0);
  const double tx = sx - fx0;
  const double ty = sy - fy0;
  const auto at = [&](std::size_t x, std::size_t y) { return static_cast<double>(data[(y * width + x) * stride + channel]); };
  if (tx == 0.0 && ty == 0.0) return data[(y0 * width + x0) * stride + channel];
  const std::size_t x1 = std::min(x0 + 1, width - 1);
  const std::size_t y1 = std::min(y0 + 1, height - 1);
  const double top = at(x0, y0) + tx * (at(x1, y0) - at(x0, y0));
  const double bottom = at(x0, y1) + tx * (at(x1, y1) - at(x0, y1));
  return static_cast<float>(top + ty * (bottom - top));
}

GrayImage downsample(const GrayImage& img) {
  GrayImage out{img.width / 2, img.height / 2, {}};
  out.data.resize(out.width * out.height);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      out.data[y * out.width + x] = 0.25f * (img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) + img.at(2 * x, 2 * y + 1) +
                                             img.at(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

GrayImage warp_gray(const GrayImage& img, const FlowField& flow) {
  GrayImage out{img.width, img.height, std::vector<float>(img.data.size())};
  const auto rows = static_cast<std::ptrdiff_t>(img.height);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t yi = 0; yi < rows; ++yi) {
    const auto y = static_cast<std::size_t>(yi);
    for (std::size_t x = 0; x < img.width; ++x) {
      out.data[y * img.width + x] =
          sample(img.data.data(), img.width, img.height, 1, 0, static_cast<double>(x) + flow.dx(x, y),
                 static_cast<double>(y) + flow.dy(x, y));
    }
  }
  return out;
}

FlowField upsample_flow(const FlowField& coarse, std::size_t width, std::size_t height) {
  FlowField out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double sx = (static_cast<double>(x) + 0.5) * 0.5 - 0.5;
      const double sy = (static_cast<double>(y) + 0.5) * 0.5 - 0.5;
      out.dx(x, y) = 2.0f * sample(coarse.data.data(), coarse.width, coarse.height, 2, 0, sx, sy);
      out.dy(x, y) = 2.0f * sample(coarse.data.data(), coarse.width, coarse.height, 2, 1, sx, sy);
    }
  }
  return out;
}

// Box sum of `v` over a (2r+1)^2 window, clamped at the borders.
std::vector<double> box_sum(const std::vector<double>& v, std::size_t w, std::size_t h, std::size_t r) {
  std::vector<double> integral((w + 1) * (h + 1), 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    double row = 0.0;
    for (std::size_t x = 0; x < w; ++x) {
      row += v[y * w + x];
      integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
    }
  }
  std::vector<double> out(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t y0 = y >= r ? y - r : 0;
    const std::size_t y1 = std::min(h, y + r + 1);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t x0 = x >= r ? x - r : 0;
      const std::size_t x1 = std::min(w, x + r + 1);
      out[y * w + x] = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1] - integral[y1 * (w + 1) + x0] +
                       integral[y0 * (w + 1) + x0];
    }
  }
  return out;
}

void refine(const GrayImage& from, const GrayImage& to, FlowField& flow, const FlowParams& params) {
  const std::size_t w = to.width;
  const std::size_t h = to.height;
  const std::size_t r = params.window / 2;
  const double lambda = params.regularization * static_cast<double>(params.window * params.window);
  const double max_step = static_cast<double>(std::max<std::size_t>(r, 1));
  const auto grad = [](const GrayImage& img, std::size_t x, std::size_t y, double& gx, double& gy) {
    const std::size_t xm = x > 0 ? x - 1 : 0;
    const std::size_t xp = std::min(x + 1, img.width - 1);
    const std::size_t ym = y > 0 ? y - 1 : 0;
    const std::size_t yp = std::min(y + 1, img.height - 1);
    gx = (img.at(xp, y) - img.at(xm, y)) / static_cast<double>(std::max<std::size_t>(xp - xm, 1));
    gy = (img.at(x, yp) - img.at(x, ym)) / static_cast<double>(std::max<std::size_t>(yp - ym, 1));
  };
  for (std::size_t it = 0; it < params.iterations; ++it) {
    const GrayImage warped = warp_gray(from, flow);
    std::vector<double> ixx(w * h), ixy(w * h), iyy(w * h), ixt(w * h), iyt(w * h);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double gx0, gy0, gx1, gy1;
        grad(warped, x, y, gx0, gy0);
        grad(to, x, y, gx1, gy1);
        const double gx = 0.5 * (gx0 + gx1);
        const double gy = 0.5 * (gy0 + gy1);
        const double e = static_cast<double>(to.at(x, y)) - warped.at(x, y);
        const std::size_t i = y * w + x;
        ixx[i] = gx * gx;
        ixy[i] = gx * gy;
        iyy[i] = gy * gy;
        ixt[i] = gx * e;
        iyt[i] = gy * e;
      }
    }
    const auto sxx = box_sum(ixx, w, h, r);
    const auto sxy = box_sum(ixy, w, h, r);
    const auto syy = box_sum(iyy, w, h, r);
    const auto sxt = box_sum(ixt, w, h, r);
    const auto syt = box_sum(iyt, w, h, r);
    // Per-pixel proposals, then a confidence-weighted window average: the
    // smaller eigenvalue of the structure tensor weights each proposal, which
    // fills flat and aperture-limited regions from well-textured neighbours
    // and keeps noise along weak directions from accumulating over iterations.
    std::vector<double> conf(w * h), wx(w * h), wy(w * h);
    for (std::size_t i = 0; i < w * h; ++i) {
      const double a = sxx[i] + lambda;
      const double b = sxy[i];
      const double d = syy[i] + lambda;
      const double det = a * d - b * b;
      double px = flow.data[i * 2];
      double py = flow.data[i * 2 + 1];
      if (det > 0.0) {
        px += std::clamp((d * sxt[i] - b * syt[i]) / det, -max_step, max_step);
        py += std::clamp((a * syt[i] - b * sxt[i]) / det, -max_step, max_step);
      }
      const double half_trace = 0.5 * (sxx[i] + syy[i]);
      const double gap = std::sqrt(0.25 * (sxx[i] - syy[i]) * (sxx[i] - syy[i]) + b * b);
      conf[i] = std::max(half_trace - gap, 0.0);
      wx[i] = conf[i] * px;
      wy[i] = conf[i] * py;
    }
    // Numerically flat windows carry no information; dropping them keeps
    // rounding noise from steering the flow in textureless areas.
    const double floor = 1e-6 * *std::max_element(conf.begin(), conf.end());
    for (std::size_t i = 0; i < w * h; ++i) {
      if (conf[i] <= floor) conf[i] = wx[i] = wy[i] = 0.0;
    }
    const auto csum = box_sum(conf, w, h, r);
    const auto xsum = box_sum(wx, w, h, r);
    const auto ysum = box_sum(wy, w, h, r);
    for (std::size_t i = 0; i < w * h; ++i) {
      if (!(csum[i] > 0.0)) continue;
      flow.data[i * 2] = static_cast<float>(xsum[i] / csum[i]);
      flow.data[i * 2 + 1] = static_cast<float>(ysum[i] / csum[i]);
    }
  }
}

std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace

FlowField::FlowField(std::size_t w, std::size_t h, float dx0, float dy0) : width(w), height(h), data(w * h * 2) {
  for (std::size_t i = 0; i < w * h; ++i) {
    data[i * 2] = dx0;
    data[i * 2 + 1] = dy0;
  }
}

FlowField constant_flow(std::size_t width, std::size_t height, float dx, float dy) {
  return FlowField(width, height, dx, dy);
}

GrayImage to_gray(const HdrImage& img) { return GrayImage{img.width, img.height, luminance(img)}; }

FlowField compute_flow(const GrayImage& from, const GrayImage& to, const FlowParams& params) {
  require_dims(from.width, from.height, to.width, to.height, "compute_flow");
  if (params.levels < 1) throw ContractError("compute_flow: levels must be >= 1");
  if (params.window < 3 || params.window % 2 == 0) throw ContractError("compute_flow: window must be odd and >= 3");
  // The regularizer is absolute, so bring both images to unit mean intensity
  // to make the estimate independent of exposure.
  double mean = 0.0;
  for (float v : to.data) mean += std::abs(static_cast<double>(v));
  mean /= static_cast<double>(std::max<std::size_t>(to.data.size(), 1));
  const float gain = mean > 0.0 && std::isfinite(mean) ? static_cast<float>(1.0 / mean) : 1.0f;
  std::vector<GrayImage> pyr_from{from};
  std::vector<GrayImage> pyr_to{to};
  for (float& v : pyr_from[0].data) v *= gain;
  for (float& v : pyr_to[0].data) v *= gain;
  while (pyr_from.size() < params.levels && pyr_from.back().width / 2 >= params.window &&
         pyr_from.back().height / 2 >= params.window) {
    pyr_from.push_back(downsample(pyr_from.back()));
    pyr_to.push_back(downsample(pyr_to.back()));
  }
  FlowField flow(pyr_to.back().width, pyr_to.back().height);
  for (std::size_t level = pyr_to.size(); level-- > 0;) {
    const GrayImage& f = pyr_from[level];
    const GrayImage& t = pyr_to[level];
    if (flow.width != t.width || flow.height != t.height) flow = upsample_flow(flow, t.width, t.height);
    refine(f, t, flow, params);
  }
  return flow;
}

FlowField compute_flow(const HdrImage& from, const HdrImage& to, const FlowParams& params) {
  require_dims(from.width, from.height, to.width, to.height, "compute_flow");
  return compute_flow(to_gray(from), to_gray(to), params);
}

FlowField interpolate_flow(const FlowField& f0, const FlowField& f1, double t) {
  require_dims(f0.width, f0.height, f1.width, f1.height, "interpolate_flow");
  if (t == 0.0) return f0;
  if (t == 1.0) return f1;
  FlowField out(f0.width, f0.height);
  for (std::size_t i = 0; i < f0.data.size(); ++i) {
    out.data[i] = static_cast<float>((1.0 - t) * f0.data[i] + t * f1.data[i]);
  }
  return out;
}

HdrImage warp(const HdrImage& img, const FlowField& flow) {
  require_dims(img.width, img.height, flow.width, flow.height, "warp");
  HdrImage out(img.width, img.height);
  const auto rows = static_cast<std::ptrdiff_t>(img.height);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t yi = 0; yi < rows; ++yi) {
    const auto y = static_cast<std::size_t>(yi);
    for (std::size_t x = 0; x < img.width; ++x) {
      const double sx = static_cast<double>(x) + flow.dx(x, y);
      const double sy = static_cast<double>(y) + flow.dy(x, y);
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = sample(img.data.data(), img.width, img.height, 3, c, sx, sy);
    }
  }
  return out;
}

FlowField warp(const FlowField& field, const FlowField& flow) {
  require_dims(field.width, field.height, flow.width, flow.height, "warp");
  FlowField out(field.width, field.height);
  for (std::size_t y = 0; y < field.height; ++y) {
    for (std::size_t x = 0; x < field.width; ++x) {
      const double sx = static_cast<double>(x) + flow.dx(x, y);
      const double sy = static_cast<double>(y) + flow.dy(x, y);
      out.dx(x, y) = sample(field.data.data(), field.width, field.height, 2, 0, sx, sy);
      out.dy(x, y) = sample(field.data.data(), field.width, field.height, 2, 1, sx, sy);
    }
  }
  return out;
}

FlowField compose_flow(const FlowField& first, const FlowField& second) {
  FlowField out = warp(second, first);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += first.data[i];
  return out;
}

Bytes encode_flow(const FlowField& flow) {
  const std::string header = "PF2\n" + std::to_string(flow.width) + " " + std::to_string(flow.height) + "\n-1.0\n";
  Bytes out(header.begin(), header.end());
  const std::size_t base = out.size();
  out.resize(base + flow.data.size() * 4);
  for (std::size_t sy = 0; sy < flow.height; ++sy) {
    const std::size_t y = flow.height - 1 - sy;
    for (std::size_t i = 0; i < flow.width * 2; ++i) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(flow.data[y * flow.width * 2 + i]);
      if constexpr (std::endian::native == std::endian::big) bits = bswap32(bits);
      std::memcpy(out.data() + base + (sy * flow.width * 2 + i) * 4, &bits, 4);
    }
  }
  return out;
}

FlowField decode_flow(std::span<const std::uint8_t> bytes) {
  const std::string text(reinterpret_cast<const char*>(bytes.data()), std::min<std::size_t>(bytes.size(), 256));
  if (text.rfind("PF2\n", 0) != 0) throw FormatError("missing flow magic 'PF2'");
  std::size_t pos = 4;
  const auto line = [&]() {
    const std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) throw TruncationError("flow header ends early", bytes.size());
    std::string s = text.substr(pos, end - pos);
    pos = end + 1;
    return s;
  };
  const std::string dims = line();
  const std::string scale_line = line();
  long w = 0, h = 0;
  double scale = 0.0;
  if (std::sscanf(dims.c_str(), "%ld %ld", &w, &h) != 2 || w <= 0 || h <= 0) throw FormatError("malformed flow size line");
  if (std::sscanf(scale_line.c_str(), "%lf", &scale) != 1 || scale == 0.0) throw FormatError("malformed flow scale line");
  const bool swap = (scale < 0.0) != (std::endian::native == std::endian::little);
  FlowField flow(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
  if (bytes.size() - pos < flow.data.size() * 4) throw TruncationError("flow raster truncated", bytes.size());
  for (std::size_t sy = 0; sy < flow.height; ++sy) {
    const std::size_t y = flow.height - 1 - sy;
    for (std::size_t i = 0; i < flow.width * 2; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, bytes.data() + pos + (sy * flow.width * 2 + i) * 4, 4);
      if (swap) bits = bswap32(bits);
      flow.data[y * flow.width * 2 + i] = std::bit_cast<float>(bits);
    }
  }
  return flow;
}

}  // namespace olat
