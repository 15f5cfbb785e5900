#include "olatkit/relight.hpp"

#include <algorithm>
#include <memory>
#include <string>

#include "olatkit/error.hpp"

namespace olat {
namespace {

bool is_zero(const std::array<double, 3>& w) { return w[0] == 0.0 && w[1] == 0.0 && w[2] == 0.0; }

void check_weights(const OlatStack& stack, const WeightVector& w) {
  if (w.size() != stack.size()) {
    throw ContractError("weight vector has " + std::to_string(w.size()) + " entries but the stack has " +
                        std::to_string(stack.size()) + " lights");
  }
  validate(w, stack.rig());
}

struct ActiveSet {
  std::vector<std::shared_ptr<const HdrImage>> owners;
  std::vector<const float*> pixels;
  std::vector<std::array<double, 3>> weights;
};

ActiveSet fetch_active(const OlatStack& stack, const WeightVector& w) {
  ActiveSet set;
  for (std::size_t l = 0; l < w.size(); ++l) {
    if (is_zero(w.weights[l])) continue;
    auto img = stack.image(l);
    if (img->width != stack.width() || img->height != stack.height()) {
      throw ValidationError("OLAT image for light '" + stack.rig().labels[l] + "' has mismatched dimensions");
    }
    set.pixels.push_back(img->data.data());
    set.weights.push_back(w.weights[l]);
    set.owners.push_back(std::move(img));
  }
  return set;
}

struct TileRect {
  std::size_t x0, y0, x1, y1;
};

std::vector<TileRect> tiles_of_band(std::size_t width, std::size_t y0, std::size_t y1, const TilePlan& plan) {
  std::vector<TileRect> out;
  for (std::size_t x0 = 0; x0 < width; x0 += plan.tile_width) out.push_back({x0, y0, std::min(width, x0 + plan.tile_width), y1});
  return out;
}

template <typename Acc>
void render_tile(const ActiveSet& set, std::size_t image_width, const TileRect& t, float* out, std::size_t out_stride,
                 std::vector<Acc>& scratch) {
  const std::size_t n = (t.x1 - t.x0) * 3;
  scratch.assign(n, Acc{0});
  for (std::size_t y = t.y0; y < t.y1; ++y) {
    std::fill(scratch.begin(), scratch.end(), Acc{0});
    kernels::accumulate_row<float, Acc>(set.pixels, set.weights, image_width, y, t.x0, t.x1, scratch.data());
    float* dst = out + (y - t.y0) * out_stride;
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(scratch[i]);
  }
}

}  // namespace

void validate(const TilePlan& plan) {
  if (plan.tile_width < 1 || plan.tile_height < 1) throw ContractError("tile dimensions must be >= 1");
}

HdrImage combine(const OlatStack& stack, const WeightVector& w, const TilePlan& plan) {
  check_weights(stack, w);
  validate(plan);
  const std::size_t width = stack.width();
  const std::size_t height = stack.height();
  HdrImage out(width, height);
  const ActiveSet set = fetch_active(stack, w);
  if (set.pixels.empty()) return out;

  std::vector<TileRect> tiles;
  for (std::size_t y0 = 0; y0 < height; y0 += plan.tile_height) {
    auto band = tiles_of_band(width, y0, std::min(height, y0 + plan.tile_height), plan);
    tiles.insert(tiles.end(), band.begin(), band.end());
  }
  const auto count = static_cast<std::ptrdiff_t>(tiles.size());
#pragma omp parallel
  {
    std::vector<double> scratch64;
    std::vector<float> scratch32;
#pragma omp for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      const TileRect& t = tiles[static_cast<std::size_t>(i)];
      float* dst = out.data.data() + (t.y0 * width + t.x0) * 3;
      if (plan.precision == AccumPrecision::float64) {
        render_tile<double>(set, width, t, dst, width * 3, scratch64);
      } else {
        render_tile<float>(set, width, t, dst, width * 3, scratch32);
      }
    }
  }
  return out;
}

HdrImageD combine(std::span<const HdrImageD> images, const WeightVector& w) {
  if (images.size() != w.size()) throw ContractError("image count does not match weight count");
  if (images.empty()) return {};
  const std::size_t width = images.front().width;
  const std::size_t height = images.front().height;
  std::vector<const double*> pixels;
  std::vector<std::array<double, 3>> weights;
  for (std::size_t l = 0; l < images.size(); ++l) {
    if (images[l].width != width || images[l].height != height) throw ContractError("basis images differ in size");
    if (is_zero(w.weights[l])) continue;
    pixels.push_back(images[l].data.data());
    weights.push_back(w.weights[l]);
  }
  HdrImageD out(width, height);
  const auto rows = static_cast<std::ptrdiff_t>(height);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t y = 0; y < rows; ++y) {
    kernels::accumulate_row<double, double>(pixels, weights, width, static_cast<std::size_t>(y), 0, width,
                                            out.row(static_cast<std::size_t>(y)).data());
  }
  return out;
}

void combine_stream(const OlatStack& stack, const WeightVector& w, const TilePlan& plan, const TileSink& sink) {
  check_weights(stack, w);
  validate(plan);
  const std::size_t width = stack.width();
  const std::size_t height = stack.height();
  for (std::size_t y0 = 0; y0 < height; y0 += plan.tile_height) {
    const std::size_t y1 = std::min(height, y0 + plan.tile_height);
    const auto band = tiles_of_band(width, y0, y1, plan);
    std::vector<std::vector<float>> buffers(band.size());
    {
      // Images are held only for the duration of one band.
      const ActiveSet set = fetch_active(stack, w);
      const auto count = static_cast<std::ptrdiff_t>(band.size());
#pragma omp parallel
      {
        std::vector<double> scratch64;
        std::vector<float> scratch32;
#pragma omp for schedule(dynamic, 1)
        for (std::ptrdiff_t i = 0; i < count; ++i) {
          const TileRect& t = band[static_cast<std::size_t>(i)];
          auto& buf = buffers[static_cast<std::size_t>(i)];
          const std::size_t tw = t.x1 - t.x0;
          buf.assign(tw * (t.y1 - t.y0) * 3, 0.0f);
          if (set.pixels.empty()) continue;
          if (plan.precision == AccumPrecision::float64) {
            render_tile<double>(set, width, t, buf.data(), tw * 3, scratch64);
          } else {
            render_tile<float>(set, width, t, buf.data(), tw * 3, scratch32);
          }
        }
      }
    }
    for (std::size_t i = 0; i < band.size(); ++i) {
      const TileRect& t = band[i];
      if (!sink(Tile{t.x0, t.y0, t.x1 - t.x0, t.y1 - t.y0, buffers[i]})) return;
    }
  }
}

std::vector<HdrImage> combine_many(const OlatStack& stack, std::span<const WeightVector> weights) {
  for (const auto& w : weights) check_weights(stack, w);
  const std::size_t width = stack.width();
  const std::size_t height = stack.height();
  const std::size_t n = width * height * 3;
  std::vector<std::vector<double>> acc(weights.size(), std::vector<double>(n, 0.0));
  for (std::size_t l = 0; l < stack.size(); ++l) {
    std::vector<std::size_t> users;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!is_zero(weights[i].weights[l])) users.push_back(i);
    }
    if (users.empty()) continue;
    const auto img = stack.image(l);
    if (img->width != width || img->height != height) {
      throw ValidationError("OLAT image for light '" + stack.rig().labels[l] + "' has mismatched dimensions");
    }
    const float* src = img->data.data();
    const auto rows = static_cast<std::ptrdiff_t>(height);
    for (std::size_t i : users) {
      const std::array<const float*, 1> one_image{src};
      const std::array<std::array<double, 3>, 1> one_weight{weights[i].weights[l]};
      double* dst = acc[i].data();
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t y = 0; y < rows; ++y) {
        const auto yy = static_cast<std::size_t>(y);
        kernels::accumulate_row<float, double>(one_image, one_weight, width, yy, 0, width, dst + yy * width * 3);
      }
    }
  }
  std::vector<HdrImage> out;
  out.reserve(weights.size());
  for (auto& a : acc) {
    HdrImage img(width, height);
    for (std::size_t k = 0; k < n; ++k) img.data[k] = static_cast<float>(a[k]);
    out.push_back(std::move(img));
    std::vector<double>().swap(a);
  }
  return out;
}

namespace reference {
namespace {

template <typename T>
Raster<double> combine_naive(std::span<const Raster<T>> images, const WeightVector& w) {
  if (images.size() != w.size()) throw ContractError("image count does not match weight count");
  if (images.empty()) return {};
  const std::size_t width = images.front().width;
  const std::size_t height = images.front().height;
  Raster<double> out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (std::size_t l = 0; l < images.size(); ++l) {
          if (w.weights[l][0] == 0.0 && w.weights[l][1] == 0.0 && w.weights[l][2] == 0.0) continue;
          sum += w.weights[l][c] * static_cast<double>(images[l].at(x, y, c));
        }
        out.at(x, y, c) = sum;
      }
    }
  }
  return out;
}

}  // namespace

HdrImage combine(std::span<const HdrImage> images, const WeightVector& w) {
  return convert<float>(combine_naive<float>(images, w));
}

HdrImageD combine(std::span<const HdrImageD> images, const WeightVector& w) { return combine_naive<double>(images, w); }

}  // namespace reference
}  // namespace olat
