#include "hidden_dump.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "errors.hpp"
#include "fileio.hpp"

namespace thinkstop {

namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::span<const char> bytes, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::vector<char> encode_dump(const HiddenStateDump& dump) {
  const std::size_t expected = static_cast<std::size_t>(dump.steps) * dump.layers * dump.dim;
  if (dump.data.size() != expected) {
    throw ContractError("dump payload holds " + std::to_string(dump.data.size()) + " floats, expected " +
                        std::to_string(expected));
  }
  std::vector<char> out;
  out.reserve(kHsdHeaderBytes + expected * 4);
  for (char c : {'H', 'S', 'D', '1'}) out.push_back(c);
  put_u32(out, kHsdVersion);
  put_u32(out, dump.layers);
  put_u32(out, dump.dim);
  put_u32(out, dump.steps);
  for (float f : dump.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

HiddenStateDump decode_dump(std::span<const char> bytes, bool reject_non_finite) {
  if (bytes.size() < kHsdHeaderBytes) throw FormatError("dump shorter than its 20-byte header");
  if (std::memcmp(bytes.data(), "HSD1", 4) != 0) throw FormatError("bad dump magic");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kHsdVersion) throw FormatError("unsupported dump version " + std::to_string(version));

  HiddenStateDump dump;
  dump.layers = get_u32(bytes, 8);
  dump.dim = get_u32(bytes, 12);
  dump.steps = get_u32(bytes, 16);
  const std::size_t count = static_cast<std::size_t>(dump.steps) * dump.layers * dump.dim;
  if (bytes.size() - kHsdHeaderBytes != count * 4) {
    throw FormatError("dump payload is " + std::to_string(bytes.size() - kHsdHeaderBytes) +
                      " bytes, header declares " + std::to_string(count * 4));
  }
  dump.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    dump.data[i] = std::bit_cast<float>(get_u32(bytes, kHsdHeaderBytes + 4 * i));
    if (reject_non_finite && !std::isfinite(dump.data[i])) {
      throw FormatError("non-finite value at payload index " + std::to_string(i));
    }
  }
  return dump;
}

void write_dump(const std::filesystem::path& path, const HiddenStateDump& dump) {
  const auto bytes = encode_dump(dump);
  write_file_atomic(path, std::string_view(bytes.data(), bytes.size()));
}

HiddenStateDump read_dump(const std::filesystem::path& path, bool reject_non_finite) {
  const std::string bytes = read_file(path);
  try {
    auto dump = decode_dump(std::span<const char>(bytes.data(), bytes.size()), reject_non_finite);
    dump.trace_id = path.stem().string();
    return dump;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string dump_file_name(const std::string& trace_id) {
  static const char* kHex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : trace_id) {
    if ((c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '.' || c == '_' || c == '-') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  return out + ".hsd";
}

}  // namespace thinkstop
