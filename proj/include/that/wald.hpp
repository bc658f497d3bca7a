#pragma once

// Reduced-resolution dataset synthesis: a full-resolution cube is treated as
// ground truth, its blurred/decimated copy becomes the network input, and the
// pan image is the mean of the visible bands.

#include <cstdint>

#include "that/hypercube.hpp"

namespace that {

struct WaldConfig {
  int scale = 4;
  int blur_kernel = 20;
  double blur_sigma = 4.0;
  int crop = 256;
  double visible_lo_nm = 430.0;
  double visible_hi_nm = 700.0;

  // The blur gets a wide 20-tap kernel at scales 2 and 4 and a short 4-tap
  // one at scale 8; sigma follows the scale.
  static WaldConfig for_scale(int r);
  void validate() const;
};

// Global min-max normalization over the whole cube, then a centered
// crop x crop window. A constant cube maps to all zeros.
HyperCube normalize_crop(const HyperCube& cube, int crop);

// Mean over bands whose wavelength lies in [lo_nm, hi_nm]. Cubes without
// wavelength metadata average the first ceil(S/2) bands instead.
PanImage synth_pan(const HyperCube& cube, double lo_nm = 430.0, double hi_nm = 700.0);

struct WaldPair {
  HyperCube y;  // blurred + decimated input, crop/r on each side
  PanImage x;   // full-resolution pan channel
};

WaldPair wald_degrade(const HyperCube& hr, const WaldConfig& cfg);

// Deterministic pseudo-scene: a few smooth spectral signatures mixed by
// smooth abundance maps with sharp material patches, wavelengths linearly
// spaced over 430-860 nm.
HyperCube make_synthetic_scene(std::uint64_t seed, int h, int w, int s);

}  // namespace that
