#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <string>

#include "olatkit/codec.hpp"
#include "olatkit/error.hpp"
#include "support.hpp"

using namespace olat;

namespace {

Bytes text_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

Bytes hdr_header(const std::string& res) { return text_bytes("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n" + res + "\n"); }

void append(Bytes& out, std::initializer_list<int> values) {
  for (int v : values) out.push_back(static_cast<std::uint8_t>(v));
}

void put_f32(Bytes& out, float v, bool little) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i) {
    const int shift = little ? 8 * i : 8 * (3 - i);
    out.push_back(static_cast<std::uint8_t>(bits >> shift));
  }
}

}  // namespace

TEST_CASE("rgbe texel conversions") {
  const std::uint8_t one[4] = {128, 0, 0, 129};
  float rgb[3];
  rgbe_to_float(one, rgb);
  CHECK(rgb[0] == 1.0f);
  CHECK(rgb[1] == 0.0f);
  CHECK(rgb[2] == 0.0f);

  const std::uint8_t zero[4] = {0, 0, 0, 0};
  rgbe_to_float(zero, rgb);
  CHECK((rgb[0] == 0.0f && rgb[1] == 0.0f && rgb[2] == 0.0f));

  // a zero exponent wins over non-zero mantissas
  const std::uint8_t junk[4] = {200, 17, 3, 0};
  rgbe_to_float(junk, rgb);
  CHECK(rgb[0] == 0.0f);

  std::uint8_t e[4];
  const float white[3] = {1.0f, 1.0f, 1.0f};
  float_to_rgbe(white, e);
  CHECK(e[0] == 128);
  CHECK(e[3] == 129);

  const float black[3] = {0.0f, 0.0f, 0.0f};
  float_to_rgbe(black, e);
  CHECK((e[0] == 0 && e[1] == 0 && e[2] == 0 && e[3] == 0));

  // mantissa that rounds up to 256 bumps the exponent
  const float almost_two[3] = {1.999f, 0.0f, 0.0f};
  float_to_rgbe(almost_two, e);
  CHECK(e[0] == 128);
  CHECK(e[3] == 130);
}

TEST_CASE("hdr encode of zeros and 1.0") {
  HdrImage img(3, 2, 0.0f);
  img.at(1, 1, 0) = img.at(1, 1, 1) = img.at(1, 1, 2) = 1.0f;
  const Bytes b = encode_hdr(img);
  const Bytes header = hdr_header("-Y 2 +X 3");
  REQUIRE(b.size() == header.size() + 3 * 2 * 4);
  CHECK(std::equal(header.begin(), header.end(), b.begin()));
  const std::uint8_t* px = b.data() + header.size();
  for (std::size_t i = 0; i < 6; ++i) {
    if (i == 4) {
      CHECK(px[i * 4 + 0] == 128);
      CHECK(px[i * 4 + 3] == 129);
    } else {
      CHECK((px[i * 4] == 0 && px[i * 4 + 1] == 0 && px[i * 4 + 2] == 0 && px[i * 4 + 3] == 0));
    }
  }
}

TEST_CASE("hdr 4x2 flat file round trips to identical bytes") {
  Bytes file = hdr_header("-Y 2 +X 4");
  for (int i = 0; i < 8; ++i) append(file, {128, 128, 128, 129});
  const HdrImage img = decode_hdr(file);
  REQUIRE(img.width == 4);
  REQUIRE(img.height == 2);
  for (float v : img.data) CHECK(v == 1.0f);
  CHECK(encode_hdr(img) == file);
}

TEST_CASE("hdr round trip error bound") {
  std::mt19937_64 rng(11);
  // gray pixels: every channel within one mantissa step
  HdrImage gray(100, 100);
  for (std::size_t i = 0; i < gray.pixel_count(); ++i) {
    const float v = static_cast<float>(std::exp(uniform(rng, std::log(1e-4), std::log(1e4))));
    gray.data[i * 3] = gray.data[i * 3 + 1] = gray.data[i * 3 + 2] = v;
  }
  gray.data[0] = gray.data[1] = gray.data[2] = 0.0f;
  const HdrImage back = decode_hdr(encode_hdr(gray));
  double worst = 0.0;
  for (std::size_t i = 0; i < gray.data.size(); ++i) {
    if (gray.data[i] == 0.0f) {
      CHECK(back.data[i] == 0.0f);
      continue;
    }
    worst = std::max(worst, std::abs(static_cast<double>(back.data[i]) - gray.data[i]) / gray.data[i]);
  }
  CHECK(worst <= std::ldexp(1.0, -8));

  // coloured pixels share one exponent: the bound is relative to the largest channel
  const HdrImage color = test::random_image(64, 64, 5, 1e-4, 1e4);
  const HdrImage cback = decode_hdr(encode_hdr(color));
  for (std::size_t p = 0; p < color.pixel_count(); ++p) {
    const float* a = &color.data[p * 3];
    const float* b = &cback.data[p * 3];
    const double peak = std::max({a[0], a[1], a[2]});
    for (int c = 0; c < 3; ++c) CHECK(std::abs(static_cast<double>(b[c]) - a[c]) <= std::ldexp(peak, -8));
  }
}

TEST_CASE("hdr RLE scanlines") {
  HdrImage img(40, 3, 0.0f);
  for (std::size_t x = 0; x < 40; ++x) {
    for (std::size_t y = 0; y < 3; ++y) {
      img.at(x, y, 0) = x < 20 ? 0.5f : static_cast<float>(x);
      img.at(x, y, 1) = static_cast<float>(y + 1);
      img.at(x, y, 2) = 0.0f;
    }
  }
  const Bytes b = encode_hdr(img);
  const Bytes header = hdr_header("-Y 3 +X 40");
  // new-style marker and the runs make the file smaller than flat storage
  CHECK(b[header.size()] == 2);
  CHECK(b[header.size() + 1] == 2);
  CHECK(b.size() < header.size() + 40 * 3 * 4);
  const HdrImage back = decode_hdr(b);
  REQUIRE(back.same_size(img));
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    CHECK(std::abs(back.data[i] - img.data[i]) <= std::ldexp(std::max(1.0f, img.data[i]), -7));
  }
  CHECK(encode_hdr(back) == b);
}

TEST_CASE("hdr old-style RLE and flat scanlines with width >= 8") {
  Bytes file = hdr_header("-Y 1 +X 8");
  append(file, {128, 64, 32, 129});
  append(file, {1, 1, 1, 6});  // repeat previous texel 6 times
  append(file, {64, 64, 64, 129});
  const HdrImage img = decode_hdr(file);
  REQUIRE(img.width == 8);
  for (std::size_t x = 0; x < 7; ++x) {
    CHECK(img.at(x, 0, 0) == 1.0f);
    CHECK(img.at(x, 0, 1) == 0.5f);
    CHECK(img.at(x, 0, 2) == 0.25f);
  }
  CHECK(img.at(7, 0, 0) == 0.5f);

  Bytes flat = hdr_header("-Y 1 +X 8");
  for (int x = 0; x < 8; ++x) append(flat, {x * 16 + 8, 0, 0, 136});
  const HdrImage f = decode_hdr(flat);
  for (std::size_t x = 0; x < 8; ++x) CHECK(f.at(x, 0, 0) == static_cast<float>(x * 16 + 8));
}

TEST_CASE("hdr orientations normalise to top-left origin") {
  auto file_for = [](const std::string& res) {
    Bytes b = hdr_header(res);
    // stored order: texel values 8, 16, 24, 32 (R channel)
    for (int v : {8, 16, 24, 32}) append(b, {v, 0, 0, 136});
    return b;
  };
  const HdrImage a = decode_hdr(file_for("-Y 2 +X 2"));
  CHECK(a.at(0, 0, 0) == 8.0f);
  CHECK(a.at(1, 0, 0) == 16.0f);
  CHECK(a.at(0, 1, 0) == 24.0f);
  const HdrImage b = decode_hdr(file_for("+Y 2 +X 2"));
  CHECK(b.at(0, 1, 0) == 8.0f);
  CHECK(b.at(0, 0, 0) == 24.0f);
  const HdrImage c = decode_hdr(file_for("-Y 2 -X 2"));
  CHECK(c.at(1, 0, 0) == 8.0f);
  CHECK(c.at(0, 0, 0) == 16.0f);
  const HdrImage d = decode_hdr(file_for("+Y 2 -X 2"));
  CHECK(d.at(1, 1, 0) == 8.0f);
  CHECK_THROWS_AS(decode_hdr(file_for("-X 2 +Y 2")), UnsupportedFormatError);
}

TEST_CASE("hdr malformed and truncated input") {
  CHECK_THROWS_AS(decode_hdr(text_bytes("P6\n2 2\n255\n")), FormatError);
  CHECK_THROWS_AS(decode_hdr(text_bytes("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y two +X 2\n")), FormatError);
  CHECK_THROWS_AS(decode_hdr(text_bytes("#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 1\n")), UnsupportedFormatError);
  CHECK_THROWS_AS(decode_hdr(text_bytes("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n")), FormatError);

  HdrImage img = test::random_image(16, 4, 3, 0.1, 2.0);
  Bytes b = encode_hdr(img);
  b.resize(b.size() - 10);
  try {
    decode_hdr(b);
    FAIL("expected a truncation error");
  } catch (const TruncationError& e) {
    CHECK(e.offset() <= b.size());
    CHECK(e.offset() > hdr_header("-Y 4 +X 16").size());
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
}

TEST_CASE("hdr encode rejects non-finite and negative pixels") {
  HdrImage img(2, 2, 1.0f);
  img.data[5] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(encode_hdr(img), DomainError);
  img.data[5] = std::nanf("");
  CHECK_THROWS_AS(encode_hdr(img), DomainError);
  img.data[5] = -1.0f;
  CHECK_THROWS_AS(encode_hdr(img), DomainError);
}

TEST_CASE("pfm round trip is bit exact") {
  HdrImage img = test::random_image(13, 7, 21, 0.0, 1e6);
  img.data[0] = 0.0f;
  img.data[1] = std::numeric_limits<float>::denorm_min();
  img.data[2] = std::numeric_limits<float>::max();
  const HdrImage back = decode_pfm(encode_pfm(img));
  REQUIRE(back.same_size(img));
  CHECK(std::memcmp(back.data.data(), img.data.data(), img.data.size() * 4) == 0);
}

TEST_CASE("pfm endianness and row order") {
  Bytes le = text_bytes("PF\n1 1\n-1.0\n");
  put_f32(le, 1.0f, true);
  put_f32(le, 2.0f, true);
  put_f32(le, 0.5f, true);
  HdrImage a = decode_pfm(le);
  CHECK(a.data == std::vector<float>{1.0f, 2.0f, 0.5f});

  Bytes be = text_bytes("PF\n1 1\n1.0\n");
  put_f32(be, 1.0f, false);
  put_f32(be, 2.0f, false);
  put_f32(be, 0.5f, false);
  CHECK(decode_pfm(be).data == a.data);

  // first stored row is the bottom one
  Bytes rows = text_bytes("PF\n1 2\n-1.0\n");
  for (float v : {1.0f, 1.0f, 1.0f, 7.0f, 7.0f, 7.0f}) put_f32(rows, v, true);
  const HdrImage r = decode_pfm(rows);
  CHECK(r.at(0, 0, 0) == 7.0f);
  CHECK(r.at(0, 1, 0) == 1.0f);
}

TEST_CASE("pfm errors") {
  Bytes gray = text_bytes("Pf\n1 1\n-1.0\n");
  put_f32(gray, 1.0f, true);
  CHECK_THROWS_AS(decode_pfm(gray), UnsupportedFormatError);
  CHECK_THROWS_AS(decode_pfm(text_bytes("P6\n1 1\n255\n")), FormatError);
  CHECK_THROWS_AS(decode_pfm(text_bytes("PF\n1 1\n-1.0\n\x01\x02")), TruncationError);
  CHECK_THROWS_AS(decode_pfm(text_bytes("PF\nx 1\n-1.0\n")), FormatError);
}

TEST_CASE("tone map formula") {
  CHECK(tone_map_value(1.0, {0.0, 1.0}) == 255);
  CHECK(tone_map_value(0.0, {3.0, 0.7}) == 0);
  CHECK(tone_map_value(0.25, {0.0, 2.2}) == 136);
  CHECK(tone_map_value(0.25, {2.0, 2.2}) == 255);
  CHECK(tone_map_value(1e9, {0.0, 2.2}) == 255);
  CHECK(tone_map_value(0.5, {-1.0, 1.0}) == 64);

  HdrImage img(3, 1, 0.0f);
  img.data = {1.0f, 0.0f, 0.25f, 0.5f, 2.0f, 0.1f, 0.0f, 0.0f, 0.0f};
  const LdrImage out = tone_map(img, {0.0, 2.2});
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(out.data[i] == tone_map_value(img.data[i], {0.0, 2.2}));
}

TEST_CASE("tone map is monotone in radiance") {
  for (const ToneMapParams p : {ToneMapParams{0.0, 2.2}, ToneMapParams{-3.0, 1.0}, ToneMapParams{2.5, 0.45}}) {
    std::uint8_t prev = 0;
    for (int i = 0; i <= 4000; ++i) {
      const std::uint8_t v = tone_map_value(i * 1e-3, p);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("png export") {
  HdrImage img = test::random_image(5, 3, 2);
  const Bytes png = encode_png(img, {0.0, 2.2});
  const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  REQUIRE(png.size() > 33);
  CHECK(std::memcmp(png.data(), sig, 8) == 0);
  auto be32 = [&](std::size_t at) {
    return (std::uint32_t(png[at]) << 24) | (std::uint32_t(png[at + 1]) << 16) | (std::uint32_t(png[at + 2]) << 8) |
           png[at + 3];
  };
  CHECK(be32(16) == 5);
  CHECK(be32(20) == 3);
  CHECK(png[24] == 8);  // bit depth
  CHECK(png[25] == 2);  // RGB
  CHECK(encode_png(img, {0.0, 2.2}) == png);
  CHECK(encode_png(tone_map(img, {0.0, 2.2})) == png);
  CHECK_THROWS_AS(encode_png(LdrImage{}), DomainError);
}

TEST_CASE("file dispatch by extension") {
  test::TempDir dir("imagecore");
  const HdrImage img = test::random_image(9, 4, 8, 0.0, 3.0);
  save_image(dir / "a.pfm", img);
  CHECK(load_image(dir / "a.pfm") == img);
  save_image(dir / "a.hdr", img);
  const HdrImage h = load_image(dir / "a.hdr");
  CHECK(h == decode_hdr(encode_hdr(img)));
  CHECK_THROWS_AS(load_image(dir / "missing.hdr"), IoError);
  CHECK_THROWS_AS(write_file(dir / "no" / "such" / "dir.hdr", Bytes{1}), IoError);
}

TEST_CASE("image validation") {
  HdrImage img(2, 2, 0.5f);
  CHECK_NOTHROW(validate(img));
  img.data.pop_back();
  CHECK_THROWS_AS(validate(img), DomainError);
}
