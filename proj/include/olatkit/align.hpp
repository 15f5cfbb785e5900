#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "olatkit/codec.hpp"
#include "olatkit/image.hpp"

namespace olat {

// Per-pixel displacement, destination -> source: a backward warp samples the
// source image at p + flow(p).
struct FlowField {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> data;  // interleaved (dx, dy)

  FlowField() = default;
  FlowField(std::size_t w, std::size_t h, float dx = 0.0f, float dy = 0.0f);

  float& dx(std::size_t x, std::size_t y) { return data[(y * width + x) * 2]; }
  float& dy(std::size_t x, std::size_t y) { return data[(y * width + x) * 2 + 1]; }
  float dx(std::size_t x, std::size_t y) const { return data[(y * width + x) * 2]; }
  float dy(std::size_t x, std::size_t y) const { return data[(y * width + x) * 2 + 1]; }

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

// Single-channel float raster used by the flow estimator.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> data;

  float at(std::size_t x, std::size_t y) const { return data[y * width + x]; }
};

GrayImage to_gray(const HdrImage& img);

struct TakeLayout {
  std::size_t frame_count = 0;
  std::vector<std::size_t> tracking;  // strictly increasing frame indices
  std::size_t block_size = 21;

  // Tracking frames at 0, K, 2K, ... (< frame_count).
  static TakeLayout regular(std::size_t frame_count, std::size_t block_size);
};

void validate(const TakeLayout& layout);

struct FlowParams {
  std::size_t levels = 4;
  std::size_t window = 7;
  std::size_t iterations = 3;
  double regularization = 1e-4;  // added to the diagonal of each 2x2 system
};

// Coarse-to-fine dense Lucas-Kanade: to[p] ~= from[p + flow(p)].
FlowField compute_flow(const GrayImage& from, const GrayImage& to, const FlowParams& params = {});
FlowField compute_flow(const HdrImage& from, const HdrImage& to, const FlowParams& params = {});

// (1 - t) f0 + t f1; t == 0 and t == 1 return the endpoints unchanged.
FlowField interpolate_flow(const FlowField& f0, const FlowField& f1, double t);

// out[p] = bilinear(img, p + flow(p)) with clamp-to-edge sampling.
HdrImage warp(const HdrImage& img, const FlowField& flow);
FlowField warp(const FlowField& field, const FlowField& flow);

// result(p) = first(p) + second(p + first(p)).
FlowField compose_flow(const FlowField& first, const FlowField& second);

FlowField constant_flow(std::size_t width, std::size_t height, float dx, float dy);

struct AlignResult {
  std::vector<HdrImage> frames;
  std::vector<FlowField> flows;  // per frame, toward the reference tracking frame
};

// Flows between consecutive tracking frames are estimated, chained toward
// tracking frame `reference` (an index into layout.tracking), and linearly
// interpolated for the frames in between. Frames before the first or after
// the last tracking frame take the nearest tracking flow.
AlignResult align_take(std::span<const HdrImage> frames, const TakeLayout& layout, std::size_t reference = 0,
                       const FlowParams& params = {});

// Same, with externally supplied flows: pair_flows[i] maps tracking frame
// i+1 onto tracking frame i, i.e. T_i[p] ~= T_{i+1}[p + f(p)].
AlignResult align_take_with_flows(std::span<const HdrImage> frames, const TakeLayout& layout,
                                  std::span<const FlowField> pair_flows, std::size_t reference = 0);

// Two-channel flow interchange: "PF2\n<w> <h>\n<scale>\n" followed by float
// pairs, bottom row first, little-endian when scale < 0.
Bytes encode_flow(const FlowField& flow);
FlowField decode_flow(std::span<const std::uint8_t> bytes);

}  // namespace olat
