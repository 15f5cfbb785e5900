#include <cmath>
#include <cstring>
#include <string>

#include "olatkit/error.hpp"
#include "olatkit/reflectfield.hpp"

namespace olat::field {
namespace {

constexpr char kMagic[8] = {'O', 'L', 'A', 'T', 'T', 'P', 'F', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeader = 8 + 4 * 4;

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

Bytes save_checkpoint(const TriplaneField<float>& field) {
  validate(field.dims);
  const ParamLayout lay(field.dims);
  if (field.params.size() != lay.total) throw ContractError("field parameter count mismatch");
  Bytes out(kMagic, kMagic + 8);
  out.reserve(kHeader + 4 * lay.total);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(field.dims.channels));
  put_u32(out, static_cast<std::uint32_t>(field.dims.resolution));
  put_u32(out, static_cast<std::uint32_t>(field.dims.hidden));
  for (float p : field.params) {
    std::uint32_t bits;
    std::memcpy(&bits, &p, 4);
    put_u32(out, bits);
  }
  return out;
}

TriplaneField<float> load_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeader) throw TruncationError("checkpoint header is truncated", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("not a field checkpoint (bad magic)");
  const std::uint32_t version = get_u32(bytes, 8);
  if (version != kVersion) throw UnsupportedFormatError("unsupported checkpoint version " + std::to_string(version));
  FieldDims dims{get_u32(bytes, 12), get_u32(bytes, 16), get_u32(bytes, 20)};
  try {
    validate(dims);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  TriplaneField<float> field(dims);
  const std::size_t need = kHeader + 4 * field.params.size();
  if (bytes.size() < need) throw TruncationError("checkpoint parameters are truncated", bytes.size());
  if (bytes.size() > need) throw FormatError("checkpoint has trailing bytes");
  for (std::size_t i = 0; i < field.params.size(); ++i) {
    const std::uint32_t bits = get_u32(bytes, kHeader + 4 * i);
    std::memcpy(&field.params[i], &bits, 4);
    if (!std::isfinite(field.params[i])) throw FormatError("checkpoint contains a non-finite parameter");
  }
  return field;
}

}  // namespace olat::field
