#pragma once

// Hyperspectral cube container and on-disk formats.
//
// A cube is H x W x S float32, pixel-major: band varies fastest, so the
// spectrum of pixel (y, x) is contiguous. The binary container is
//   "HSC1" | u32 H | u32 W | u32 S | u8 has_wavelengths
//   [ S x f64 wavelengths (nm) ]
//   H*W*S x f32 samples
// with all integers and floats little-endian.

#include <cstdint>
#include <string>
#include <vector>

#include "that/errors.hpp"

namespace that {

struct HyperCube {
  int h = 0, w = 0, s = 0;
  std::vector<float> data;              // (y*w + x)*s + b
  std::vector<double> wavelengths_nm;   // empty or size s

  HyperCube() = default;
  HyperCube(int h_, int w_, int s_) : h(h_), w(w_), s(s_) {
    if (h_ <= 0 || w_ <= 0 || s_ <= 0) throw ShapeError("cube extents must be positive");
    data.assign(static_cast<std::size_t>(h_) * w_ * s_, 0.0f);
  }

  float& at(int y, int x, int b) {
    return data[(static_cast<std::size_t>(y) * w + x) * s + b];
  }
  float at(int y, int x, int b) const {
    return data[(static_cast<std::size_t>(y) * w + x) * s + b];
  }
  std::size_t size() const { return data.size(); }
};

struct PanImage {
  int h = 0, w = 0;
  std::vector<float> data;  // y*w + x

  PanImage() = default;
  PanImage(int h_, int w_) : h(h_), w(w_) {
    if (h_ <= 0 || w_ <= 0) throw ShapeError("image extents must be positive");
    data.assign(static_cast<std::size_t>(h_) * w_, 0.0f);
  }

  float& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  float at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
};

HyperCube load_cube(const std::string& path);
void save_cube(const std::string& path, const HyperCube& cube);

// Extracts band `b` as a plain-text PGM (P2, maxval 255). Values are clamped
// to [0,1] and scaled by 255 with round-half-even.
void save_band_pgm(const std::string& path, const HyperCube& cube, int b);
void save_pan_pgm(const std::string& path, const PanImage& img);

}  // namespace that
