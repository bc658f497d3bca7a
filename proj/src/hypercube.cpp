#include "that/hypercube.hpp"

#include <bit>
#include <cfenv>
#include <cmath>
#include <cstring>
#include <fstream>

namespace that {

static_assert(std::endian::native == std::endian::little,
              "cube container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'H', 'S', 'C', '1'};

void read_exact(std::ifstream& f, void* dst, std::size_t n, long long offset,
                const std::string& what) {
  f.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (f.gcount() != static_cast<std::streamsize>(n))
    throw DataError("truncated cube file: expected " + std::to_string(n) + " bytes of " + what +
                        " at byte " + std::to_string(offset),
                    offset);
}

}  // namespace

HyperCube load_cube(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  long long off = 0;

  char magic[4];
  read_exact(f, magic, 4, off, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("bad magic in " + path + " at byte 0, expected \"HSC1\"", 0);
  off += 4;

  std::uint32_t dims[3];
  read_exact(f, dims, sizeof(dims), off, "dimensions");
  off += sizeof(dims);
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0)
    throw DataError("zero extent in header of " + path + " at byte 4", 4);
  constexpr std::uint32_t kMaxExtent = 1u << 24;
  if (dims[0] > kMaxExtent || dims[1] > kMaxExtent || dims[2] > kMaxExtent)
    throw DataError("implausible extent in header of " + path + " at byte 4", 4);

  std::uint8_t has_wl = 0;
  read_exact(f, &has_wl, 1, off, "wavelength flag");
  if (has_wl > 1)
    throw DataError("wavelength flag must be 0 or 1, got " + std::to_string(has_wl) +
                        " at byte " + std::to_string(off),
                    off);
  off += 1;

  HyperCube cube(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]));
  if (has_wl) {
    cube.wavelengths_nm.resize(dims[2]);
    read_exact(f, cube.wavelengths_nm.data(), sizeof(double) * dims[2], off, "wavelengths");
    off += static_cast<long long>(sizeof(double)) * dims[2];
  }
  read_exact(f, cube.data.data(), sizeof(float) * cube.data.size(), off, "samples");
  return cube;
}

void save_cube(const std::string& path, const HyperCube& cube) {
  if (!cube.wavelengths_nm.empty() &&
      cube.wavelengths_nm.size() != static_cast<std::size_t>(cube.s))
    throw ContractError("wavelength count does not match band count");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f.write(kMagic, 4);
  std::uint32_t dims[3] = {static_cast<std::uint32_t>(cube.h), static_cast<std::uint32_t>(cube.w),
                           static_cast<std::uint32_t>(cube.s)};
  f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  std::uint8_t has_wl = cube.wavelengths_nm.empty() ? 0 : 1;
  f.write(reinterpret_cast<const char*>(&has_wl), 1);
  if (has_wl)
    f.write(reinterpret_cast<const char*>(cube.wavelengths_nm.data()),
            static_cast<std::streamsize>(sizeof(double) * cube.wavelengths_nm.size()));
  f.write(reinterpret_cast<const char*>(cube.data.data()),
          static_cast<std::streamsize>(sizeof(float) * cube.data.size()));
  if (!f) throw DataError("write failed for " + path);
}

namespace {

int to_gray(float v) {
  if (v < 0.0f) v = 0.0f;
  if (v > 1.0f) v = 1.0f;
  // nearbyint honors the default round-to-nearest-even mode
  return static_cast<int>(std::nearbyint(v * 255.0f));
}

void write_pgm(const std::string& path, int h, int w, const std::vector<int>& gray) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f << "P2\n" << w << ' ' << h << "\n255\n";
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f << gray[static_cast<std::size_t>(y) * w + x] << (x + 1 < w ? ' ' : '\n');
  }
  if (!f) throw DataError("write failed for " + path);
}

}  // namespace

void save_band_pgm(const std::string& path, const HyperCube& cube, int b) {
  if (b < 0 || b >= cube.s)
    throw ContractError("band " + std::to_string(b) + " out of range, cube has " +
                        std::to_string(cube.s));
  std::vector<int> gray(static_cast<std::size_t>(cube.h) * cube.w);
  for (int y = 0; y < cube.h; ++y)
    for (int x = 0; x < cube.w; ++x)
      gray[static_cast<std::size_t>(y) * cube.w + x] = to_gray(cube.at(y, x, b));
  write_pgm(path, cube.h, cube.w, gray);
}

void save_pan_pgm(const std::string& path, const PanImage& img) {
  std::vector<int> gray(img.data.size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = to_gray(img.data[i]);
  write_pgm(path, img.h, img.w, gray);
}

}  // namespace that
