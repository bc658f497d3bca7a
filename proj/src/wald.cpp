#include "that/wald.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "that/cube_tensor.hpp"
#include "that/image_ops.hpp"

namespace that {

WaldConfig WaldConfig::for_scale(int r) {
  WaldConfig c;
  c.scale = r;
  c.blur_kernel = r == 8 ? 4 : 20;
  c.blur_sigma = static_cast<double>(r);
  c.validate();
  return c;
}

void WaldConfig::validate() const {
  if (scale != 2 && scale != 4 && scale != 8)
    throw ConfigError("wald: scale must be 2, 4 or 8");
  if (blur_kernel < 1) throw ConfigError("wald: blur_kernel must be >= 1");
  if (!(blur_sigma > 0.0)) throw ConfigError("wald: blur_sigma must be positive");
  if (crop < scale || crop % scale != 0)
    throw ConfigError("wald: crop (" + std::to_string(crop) + ") must be divisible by scale (" +
                      std::to_string(scale) + ")");
}

HyperCube normalize_crop(const HyperCube& cube, int crop) {
  if (crop < 1) throw ContractError("normalize_crop: crop must be positive");
  if (cube.h < crop || cube.w < crop)
    throw ShapeError("normalize_crop: cube " + std::to_string(cube.h) + "x" +
                     std::to_string(cube.w) + " smaller than crop " + std::to_string(crop));
  const auto [lo_it, hi_it] = std::minmax_element(cube.data.begin(), cube.data.end());
  const float lo = *lo_it, hi = *hi_it;
  const float span = hi - lo;
  HyperCube out(crop, crop, cube.s);
  out.wavelengths_nm = cube.wavelengths_nm;
  const int oy = (cube.h - crop) / 2, ox = (cube.w - crop) / 2;
  for (int y = 0; y < crop; ++y)
    for (int x = 0; x < crop; ++x)
      for (int b = 0; b < cube.s; ++b) {
        const float v = cube.at(oy + y, ox + x, b);
        out.at(y, x, b) = span > 0.0f ? (v - lo) / span : 0.0f;
      }
  return out;
}

PanImage synth_pan(const HyperCube& cube, double lo_nm, double hi_nm) {
  std::vector<int> bands;
  if (cube.wavelengths_nm.empty()) {
    const int take = (cube.s + 1) / 2;
    for (int b = 0; b < take; ++b) bands.push_back(b);
  } else {
    for (int b = 0; b < cube.s; ++b)
      if (cube.wavelengths_nm[b] >= lo_nm && cube.wavelengths_nm[b] <= hi_nm)
        bands.push_back(b);
  }
  if (bands.empty())
    throw ContractError("synth_pan: no band inside [" + std::to_string(lo_nm) + ", " +
                        std::to_string(hi_nm) + "] nm");
  PanImage pan(cube.h, cube.w);
  for (int y = 0; y < cube.h; ++y)
    for (int x = 0; x < cube.w; ++x) {
      double acc = 0.0;
      for (int b : bands) acc += cube.at(y, x, b);
      pan.at(y, x) = static_cast<float>(acc / bands.size());
    }
  return pan;
}

WaldPair wald_degrade(const HyperCube& hr, const WaldConfig& cfg) {
  cfg.validate();
  if (hr.h % cfg.scale != 0 || hr.w % cfg.scale != 0)
    throw ShapeError("wald_degrade: cube extents " + std::to_string(hr.h) + "x" +
                     std::to_string(hr.w) + " not divisible by scale " +
                     std::to_string(cfg.scale));
  auto t = cube_to_tensor<float>(hr);
  auto low = decimate(gaussian_blur(t, cfg.blur_kernel, cfg.blur_sigma), cfg.scale);
  WaldPair out;
  out.y = tensor_to_cube(low);
  out.y.wavelengths_nm = hr.wavelengths_nm;
  out.x = synth_pan(hr, cfg.visible_lo_nm, cfg.visible_hi_nm);
  return out;
}

HyperCube make_synthetic_scene(std::uint64_t seed, int h, int w, int s) {
  if (h < 8 || w < 8 || s < 8)
    throw ContractError("make_synthetic_scene: extents must be >= 8");
  constexpr int kComponents = 5;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // smooth spectral signatures in [0.05, 0.95]
  std::vector<std::vector<double>> sig(kComponents, std::vector<double>(s));
  for (auto& sk : sig) {
    const double freq = 0.5 + 2.0 * u(rng), phase = u(rng);
    for (int b = 0; b < s; ++b)
      sk[b] = 0.5 + 0.45 * std::sin(2.0 * 3.14159265358979323846 * (freq * b / s + phase));
  }

  // abundance fields: gaussian bumps plus hard-edged rectangles
  std::vector<std::vector<double>> ab(kComponents, std::vector<double>(h * w, 0.05));
  for (auto& ak : ab)
    for (int bump = 0; bump < 3; ++bump) {
      const double cy = u(rng) * h, cx = u(rng) * w;
      const double sd = (0.15 + 0.2 * u(rng)) * std::min(h, w);
      const double amp = 0.3 + 0.7 * u(rng);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          ak[y * w + x] += amp * std::exp(-d2 / (2.0 * sd * sd));
        }
    }
  for (int patch = 0; patch < 4; ++patch) {
    const int k = static_cast<int>(u(rng) * kComponents) % kComponents;
    int y0 = static_cast<int>(u(rng) * h), y1 = static_cast<int>(u(rng) * h);
    int x0 = static_cast<int>(u(rng) * w), x1 = static_cast<int>(u(rng) * w);
    if (y0 > y1) std::swap(y0, y1);
    if (x0 > x1) std::swap(x0, x1);
    for (int y = y0; y <= y1 && y < h; ++y)
      for (int x = x0; x <= x1 && x < w; ++x) ab[k][y * w + x] += 1.5;
  }

  HyperCube cube(h, w, s);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double total = 0.0;
      for (int k = 0; k < kComponents; ++k) total += ab[k][y * w + x];
      for (int b = 0; b < s; ++b) {
        double v = 0.0;
        for (int k = 0; k < kComponents; ++k) v += ab[k][y * w + x] / total * sig[k][b];
        cube.at(y, x, b) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  cube.wavelengths_nm.resize(s);
  for (int b = 0; b < s; ++b) cube.wavelengths_nm[b] = 430.0 + 430.0 * b / (s - 1);
  return cube;
}

}  // namespace that
