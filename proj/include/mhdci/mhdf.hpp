#pragma once

// Binary dump format: "MHDF", version u32, n u32, points_per_axis u32,
// component count u32, then little-endian f64 values (row-major lattice
// order, components innermost).

#include <cstdint>
#include <string>
#include <vector>

namespace mhdci {

inline constexpr std::uint32_t kMhdfVersion = 1;

struct MhdfData {
  std::uint32_t version = kMhdfVersion;
  std::uint32_t n = 0;
  std::uint32_t points_per_axis = 0;
  std::uint32_t components = 0;
  std::vector<double> values;
};

void write_mhdf(const std::string& path, const MhdfData& data);
MhdfData read_mhdf(const std::string& path);

}  // namespace mhdci
