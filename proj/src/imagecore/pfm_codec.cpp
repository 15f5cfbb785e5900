#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "olatkit/codec.hpp"
#include "olatkit/error.hpp"

namespace olat {
namespace {

bool is_space(std::uint8_t c) { return c == ' ' || c == '\n' || c == '\r' || c == '\t'; }

std::string token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size() && is_space(bytes[pos])) ++pos;
  const std::size_t start = pos;
  while (pos < bytes.size() && !is_space(bytes[pos])) ++pos;
  if (start == pos) throw TruncationError("PFM header ends early", pos);
  return std::string(reinterpret_cast<const char*>(bytes.data() + start), pos - start);
}

std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace

HdrImage decode_pfm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  const std::string magic = token(bytes, pos);
  if (magic == "Pf") throw UnsupportedFormatError("grayscale PFM ('Pf') is not supported");
  if (magic != "PF") throw FormatError("missing PFM magic 'PF'");
  const std::string ws = token(bytes, pos);
  const std::string hs = token(bytes, pos);
  const std::string ss = token(bytes, pos);
  long w = 0, h = 0;
  double scale = 0.0;
  try {
    std::size_t used = 0;
    w = std::stol(ws, &used);
    if (used != ws.size()) throw FormatError("");
    h = std::stol(hs, &used);
    if (used != hs.size()) throw FormatError("");
    scale = std::stod(ss, &used);
    if (used != ss.size()) throw FormatError("");
  } catch (const std::exception&) {
    throw FormatError("malformed PFM header");
  }
  if (w <= 0 || h <= 0 || scale == 0.0 || !std::isfinite(scale)) throw FormatError("invalid PFM size or scale");
  if (pos >= bytes.size() || !is_space(bytes[pos])) throw TruncationError("PFM header ends early", pos);
  ++pos;  // single whitespace before raster

  const bool little = scale < 0.0;
  const bool swap = little != (std::endian::native == std::endian::little);
  const std::size_t width = static_cast<std::size_t>(w);
  const std::size_t height = static_cast<std::size_t>(h);
  const std::size_t need = width * height * 3 * 4;
  if (bytes.size() - pos < need) throw TruncationError("PFM raster truncated", bytes.size());

  HdrImage img(width, height);
  for (std::size_t sy = 0; sy < height; ++sy) {
    float* dst = img.row(height - 1 - sy).data();
    const std::uint8_t* src = bytes.data() + pos + sy * width * 12;
    for (std::size_t i = 0; i < width * 3; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, src + i * 4, 4);
      if (swap) bits = bswap32(bits);
      dst[i] = std::bit_cast<float>(bits);
    }
  }
  return img;
}

Bytes encode_pfm(const HdrImage& img) {
  const std::string header = "PF\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
  Bytes out(header.begin(), header.end());
  const std::size_t base = out.size();
  out.resize(base + img.data.size() * 4);
  for (std::size_t sy = 0; sy < img.height; ++sy) {
    const float* src = img.row(img.height - 1 - sy).data();
    std::uint8_t* dst = out.data() + base + sy * img.width * 12;
    for (std::size_t i = 0; i < img.width * 3; ++i) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(src[i]);
      if constexpr (std::endian::native == std::endian::big) bits = bswap32(bits);
      std::memcpy(dst + i * 4, &bits, 4);
    }
  }
  return out;
}

}  // namespace olat
