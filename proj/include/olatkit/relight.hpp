#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "olatkit/image.hpp"
#include "olatkit/lightrig.hpp"
#include "olatkit/olat_stack.hpp"

namespace olat {

enum class AccumPrecision { float64, float32 };

struct TilePlan {
  std::size_t tile_width = 256;
  std::size_t tile_height = 256;
  AccumPrecision precision = AccumPrecision::float64;
};

void validate(const TilePlan& plan);

// One emitted tile of a streamed relight: `data` holds tile_width x
// tile_height RGB floats, row-major.
struct Tile {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::span<const float> data;
};

// Return false to stop the stream after the current tile.
using TileSink = std::function<bool(const Tile&)>;

// out[p][c] = sum_l w_l[c] * O_l[p][c], accumulated in double in ascending
// light order. Lights whose three weights are exactly zero are never loaded.
HdrImage combine(const OlatStack& stack, const WeightVector& w, const TilePlan& plan = {});

// Same sum for double-precision basis images.
HdrImageD combine(std::span<const HdrImageD> images, const WeightVector& w);

// Memory-bounded variant: processes one band of tiles at a time, fetching
// OLATs through the stack's cache, and emits tiles row-major. With float64
// precision the reassembled image is bit-identical to combine().
void combine_stream(const OlatStack& stack, const WeightVector& w, const TilePlan& plan, const TileSink& sink);

// One output per weight vector; every OLAT is fetched at most once.
std::vector<HdrImage> combine_many(const OlatStack& stack, std::span<const WeightVector> weights);

namespace kernels {

// Accumulates sum_l weights[l] * images[l] over pixels [x0, x1) of row y
// into acc (3 * (x1 - x0) values). Lights are added in the order given.
template <typename In, typename Acc>
void accumulate_row(std::span<const In* const> images, std::span<const std::array<double, 3>> weights,
                    std::size_t image_width, std::size_t y, std::size_t x0, std::size_t x1, Acc* acc);

}  // namespace kernels

namespace reference {

// Naive per-pixel, per-channel, per-light loop in double. Serial; used as the
// test oracle for the parallel kernels.
HdrImage combine(std::span<const HdrImage> images, const WeightVector& w);
HdrImageD combine(std::span<const HdrImageD> images, const WeightVector& w);

}  // namespace reference

}  // namespace olat
