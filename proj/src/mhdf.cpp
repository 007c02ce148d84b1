#include "mhdci/mhdf.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mhdci/errors.hpp"

namespace mhdci {

namespace {
static_assert(std::endian::native == std::endian::little, "MHDF writer assumes a little-endian host");

void put_u32(std::ofstream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::ifstream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
}  // namespace

void write_mhdf(const std::string& path, const MhdfData& data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write("MHDF", 4);
  put_u32(os, data.version);
  put_u32(os, data.n);
  put_u32(os, data.points_per_axis);
  put_u32(os, data.components);
  os.write(reinterpret_cast<const char*>(data.values.data()),
           static_cast<std::streamsize>(data.values.size() * sizeof(double)));
  if (!os) throw IoError("write to '" + path + "' failed");
}

MhdfData read_mhdf(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MHDF", 4) != 0) throw IoError("'" + path + "' is not an MHDF file");
  MhdfData d;
  d.version = get_u32(is);
  d.n = get_u32(is);
  d.points_per_axis = get_u32(is);
  d.components = get_u32(is);
  if (!is) throw IoError("truncated MHDF header in '" + path + "'");
  std::vector<char> rest((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (rest.size() % sizeof(double) != 0) throw IoError("MHDF payload is not a whole number of f64");
  d.values.resize(rest.size() / sizeof(double));
  std::memcpy(d.values.data(), rest.data(), rest.size());
  return d;
}

}  // namespace mhdci
