#pragma once

// HSD1 hidden-state dumps: one file per trace holding the final-token hidden
// state of every step at every layer.
//
// Layout (little-endian):
//   char[4]  magic "HSD1"
//   u32      version (1)
//   u32      layer count L
//   u32      hidden dim d
//   u32      step count (n + 1)
//   f32[steps * L * d]  step-major, then layer, then dim

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace thinkstop {

struct HiddenStateDump {
  std::string trace_id;
  std::uint32_t layers = 0;
  std::uint32_t dim = 0;
  std::uint32_t steps = 0;
  std::vector<float> data;

  std::span<const float> at(std::uint32_t step, std::uint32_t layer) const {
    const std::size_t off = (static_cast<std::size_t>(step) * layers + layer) * dim;
    return {data.data() + off, dim};
  }
  std::span<float> at(std::uint32_t step, std::uint32_t layer) {
    const std::size_t off = (static_cast<std::size_t>(step) * layers + layer) * dim;
    return {data.data() + off, dim};
  }
};

inline constexpr std::uint32_t kHsdVersion = 1;
inline constexpr std::size_t kHsdHeaderBytes = 20;

std::vector<char> encode_dump(const HiddenStateDump& dump);

// Throws FormatError on bad magic, version or payload size. With
// reject_non_finite, NaN or infinite values are a FormatError too.
HiddenStateDump decode_dump(std::span<const char> bytes, bool reject_non_finite = true);

void write_dump(const std::filesystem::path& path, const HiddenStateDump& dump);
HiddenStateDump read_dump(const std::filesystem::path& path, bool reject_non_finite = true);

// File name for a trace's dump inside a dump directory. Characters outside
// [A-Za-z0-9._-] are percent-encoded.
std::string dump_file_name(const std::string& trace_id);

}  // namespace thinkstop
