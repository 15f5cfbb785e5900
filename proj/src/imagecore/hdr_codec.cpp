#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <string_view>

#include "olatkit/codec.hpp"
#include "olatkit/error.hpp"

namespace olat {
namespace {

constexpr std::size_t kMinRun = 4;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }

  std::uint8_t next(const char* what) {
    if (pos_ >= bytes_.size()) throw TruncationError(std::string("unexpected end of data in ") + what, pos_);
    return bytes_[pos_++];
  }

  void read(std::uint8_t* out, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw TruncationError(std::string("unexpected end of data in ") + what, bytes_.size());
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }

  // Header line without the trailing newline.
  std::string line() {
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
    if (pos_ >= bytes_.size()) throw FormatError("unterminated header line at byte offset " + std::to_string(start));
    std::string s(reinterpret_cast<const char*>(bytes_.data() + start), pos_ - start);
    ++pos_;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct Orientation {
  std::size_t width = 0;
  std::size_t height = 0;
  bool flip_y = false;  // "+Y": first stored row is the bottom row
  bool flip_x = false;  // "-X": first stored column is the rightmost one
};

Orientation parse_resolution(const std::string& line) {
  char ys = 0, xs = 0, ya = 0, xa = 0;
  long h = 0, w = 0;
  char tail = 0;
  const int n = std::sscanf(line.c_str(), " %c%c %ld %c%c %ld %c", &ys, &ya, &h, &xs, &xa, &w, &tail);
  if (n != 6 || ya != 'Y' || xa != 'X' || (ys != '-' && ys != '+') || (xs != '-' && xs != '+')) {
    if (n >= 6 && ya == 'X' && xa == 'Y') throw UnsupportedFormatError("transposed orientation '" + line + "' is not supported");
    throw FormatError("malformed resolution line '" + line + "'");
  }
  if (h <= 0 || w <= 0) throw FormatError("non-positive image size in '" + line + "'");
  return {static_cast<std::size_t>(w), static_cast<std::size_t>(h), ys == '+', xs == '-'};
}

// Decodes one scanline of `width` RGBE texels into `out` (4 bytes per texel).
void read_scanline(Reader& in, std::size_t width, std::uint8_t* out) {
  if (width >= 8 && width < 32768) {
    std::uint8_t head[4];
    const std::size_t start = in.offset();
    in.read(head, 4, "scanline");
    if (head[0] == 2 && head[1] == 2 && (head[2] & 0x80) == 0) {
      const std::size_t encoded = (static_cast<std::size_t>(head[2]) << 8) | head[3];
      if (encoded != width) throw FormatError("RLE scanline length mismatch at byte offset " + std::to_string(start));
      for (std::size_t c = 0; c < 4; ++c) {
        std::size_t x = 0;
        while (x < width) {
          std::uint8_t count = in.next("RLE scanline");
          if (count > 128) {
            const std::size_t run = count - 128u;
            if (x + run > width) throw FormatError("RLE run overflows scanline at byte offset " + std::to_string(in.offset()));
            const std::uint8_t v = in.next("RLE run");
            for (std::size_t k = 0; k < run; ++k) out[(x + k) * 4 + c] = v;
            x += run;
          } else {
            if (count == 0 || x + count > width)
              throw FormatError("bad RLE literal count at byte offset " + std::to_string(in.offset() - 1));
            for (std::size_t k = 0; k < count; ++k) out[(x + k) * 4 + c] = in.next("RLE literal");
            x += count;
          }
        }
      }
      return;
    }
    std::memcpy(out, head, 4);
    // fall through to flat decoding of the remaining texels
    std::size_t x = 1;
    int shift = 0;
    while (x < width) {
      std::uint8_t texel[4];
      in.read(texel, 4, "scanline");
      if (texel[0] == 1 && texel[1] == 1 && texel[2] == 1) {
        const std::size_t repeat = static_cast<std::size_t>(texel[3]) << shift;
        if (x + repeat > width) throw FormatError("old-style run overflows scanline");
        for (std::size_t k = 0; k < repeat; ++k) std::memcpy(out + (x + k) * 4, out + (x - 1) * 4, 4);
        x += repeat;
        shift += 8;
      } else {
        std::memcpy(out + x * 4, texel, 4);
        ++x;
        shift = 0;
      }
    }
    return;
  }
  in.read(out, width * 4, "scanline");
}

void write_rle_component(Bytes& out, const std::uint8_t* data, std::size_t n) {
  std::size_t cur = 0;
  while (cur < n) {
    std::size_t beg_run = cur;
    std::size_t run_count = 0;
    std::size_t old_run_count = 0;
    while (run_count < kMinRun && beg_run < n) {
      beg_run += run_count;
      old_run_count = run_count;
      run_count = 1;
      while (beg_run + run_count < n && run_count < 127 && data[beg_run] == data[beg_run + run_count]) ++run_count;
    }
    if (old_run_count > 1 && old_run_count == beg_run - cur) {
      out.push_back(static_cast<std::uint8_t>(128 + old_run_count));
      out.push_back(data[cur]);
      cur = beg_run;
    }
    while (cur < beg_run) {
      const std::size_t literal = std::min<std::size_t>(128, beg_run - cur);
      out.push_back(static_cast<std::uint8_t>(literal));
      out.insert(out.end(), data + cur, data + cur + literal);
      cur += literal;
    }
    if (run_count >= kMinRun) {
      out.push_back(static_cast<std::uint8_t>(128 + run_count));
      out.push_back(data[beg_run]);
      cur += run_count;
    }
  }
}

}  // namespace

void rgbe_to_float(const std::uint8_t rgbe[4], float out[3]) {
  if (rgbe[3] == 0) {
    out[0] = out[1] = out[2] = 0.0f;
    return;
  }
  const int e = static_cast<int>(rgbe[3]) - 136;
  for (int c = 0; c < 3; ++c) out[c] = std::ldexp(static_cast<float>(rgbe[c]), e);
}

void float_to_rgbe(const float rgb[3], std::uint8_t out[4]) {
  const double v = std::max({static_cast<double>(rgb[0]), static_cast<double>(rgb[1]), static_cast<double>(rgb[2])});
  int e = 0;
  const double frac = std::frexp(v, &e);
  if (!(v > 0.0) || frac == 0.0 || e < -127) {
    out[0] = out[1] = out[2] = out[3] = 0;
    return;
  }
  double m[3];
  for (int attempt = 0; attempt < 2; ++attempt) {
    const double scale = std::ldexp(1.0, 8 - e);
    for (int c = 0; c < 3; ++c) m[c] = std::floor(std::max(0.0, static_cast<double>(rgb[c])) * scale + 0.5);
    if (std::max({m[0], m[1], m[2]}) < 256.0) break;
    ++e;  // mantissa rounded up to 256
  }
  if (e + 128 > 255) {
    out[0] = out[1] = out[2] = 255;
    out[3] = 255;
    return;
  }
  for (int c = 0; c < 3; ++c) out[c] = static_cast<std::uint8_t>(m[c]);
  out[3] = static_cast<std::uint8_t>(e + 128);
}

HdrImage decode_hdr(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (bytes.size() < 2 || bytes[0] != '#' || bytes[1] != '?') throw FormatError("missing Radiance magic '#?'");
  const std::string magic = in.line();
  if (magic != "#?RADIANCE" && magic != "#?RGBE") throw FormatError("unrecognised Radiance program type '" + magic + "'");
  for (;;) {
    const std::string line = in.line();
    if (line.empty()) break;
    if (line.rfind("FORMAT=", 0) == 0) {
      const std::string_view fmt = std::string_view(line).substr(7);
      if (fmt == "32-bit_rle_xyze") throw UnsupportedFormatError("XYZE Radiance files are not supported");
      if (fmt != "32-bit_rle_rgbe") throw FormatError("unknown FORMAT '" + std::string(fmt) + "'");
    }
  }
  const Orientation orient = parse_resolution(in.line());
  const std::size_t w = orient.width;
  const std::size_t h = orient.height;
  if (w > (1u << 20) || h > (1u << 20)) throw FormatError("image dimensions exceed 2^20");

  HdrImage img(w, h);
  std::vector<std::uint8_t> scan(w * 4);
  for (std::size_t sy = 0; sy < h; ++sy) {
    read_scanline(in, w, scan.data());
    const std::size_t y = orient.flip_y ? h - 1 - sy : sy;
    float* dst = img.row(y).data();
    for (std::size_t sx = 0; sx < w; ++sx) {
      const std::size_t x = orient.flip_x ? w - 1 - sx : sx;
      rgbe_to_float(&scan[sx * 4], dst + x * 3);
    }
  }
  return img;
}

Bytes encode_hdr(const HdrImage& img) {
  validate(img);
  const std::size_t w = img.width;
  const std::size_t h = img.height;
  const std::string header =
      "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " + std::to_string(h) + " +X " + std::to_string(w) + "\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + w * h * 4);

  const bool rle = w >= 8 && w < 32768;
  std::vector<std::uint8_t> texels(w * 4);
  std::vector<std::uint8_t> plane(w);
  for (std::size_t y = 0; y < h; ++y) {
    const float* src = img.row(y).data();
    for (std::size_t x = 0; x < w; ++x) float_to_rgbe(src + x * 3, &texels[x * 4]);
    if (!rle) {
      out.insert(out.end(), texels.begin(), texels.end());
      continue;
    }
    out.push_back(2);
    out.push_back(2);
    out.push_back(static_cast<std::uint8_t>(w >> 8));
    out.push_back(static_cast<std::uint8_t>(w & 0xff));
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t x = 0; x < w; ++x) plane[x] = texels[x * 4 + c];
      write_rle_component(out, plane.data(), w);
    }
  }
  return out;
}

}  // namespace olat
