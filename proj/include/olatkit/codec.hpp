#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "olatkit/image.hpp"

namespace olat {

using Bytes = std::vector<std::uint8_t>;

// Radiance RGBE (.hdr). Decoding accepts flat, new-style RLE and old-style
// RLE scanlines in any of the four non-transposed orientations and returns a
// top-left-origin raster. Encoding writes "-Y H +X W" with new-style RLE when
// 8 <= W < 32768 and flat scanlines otherwise.
HdrImage decode_hdr(std::span<const std::uint8_t> bytes);
Bytes encode_hdr(const HdrImage& img);

// Single texel conversions. Decoding uses m * 2^(e-136) with no half-step bias.
void rgbe_to_float(const std::uint8_t rgbe[4], float out[3]);
void float_to_rgbe(const float rgb[3], std::uint8_t out[4]);

// Portable float map, colour ("PF") only. Rows are stored bottom-to-top as
// the format requires; negative scale means little-endian.
HdrImage decode_pfm(std::span<const std::uint8_t> bytes);
Bytes encode_pfm(const HdrImage& img);

// 8-bit RGB PNG.
Bytes encode_png(const LdrImage& img);
// tone_map followed by encode_png; the CLI and the service both go through
// this so their PNG bytes agree.
Bytes encode_png(const HdrImage& img, const ToneMapParams& params);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Extension dispatch: .hdr or .pfm.
HdrImage load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const HdrImage& img);

}  // namespace olat
