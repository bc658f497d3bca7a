#pragma once

// Full-reference fusion quality metrics. All statistics run in double
// precision regardless of the cube storage type.

#include <string>
#include <utility>
#include <vector>

#include "that/hypercube.hpp"

namespace that {

struct MetricsReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double sam_deg = 0.0;
  double ergas = 0.0;
  double scc = 0.0;
  std::vector<double> psnr_per_band;
};

// Band-wise peak signal-to-noise ratio against a [0,1] reference, capped at
// 100 dB; returns the band mean and the per-band curve.
std::pair<double, std::vector<double>> psnr(const HyperCube& pred, const HyperCube& ref);

// Mean structural similarity per band: 11x11 Gaussian window (sigma 1.5),
// K1=0.01, K2=0.03, dynamic range 1, valid windows only.
double ssim(const HyperCube& pred, const HyperCube& ref);

// Mean spectral angle in degrees over pixels; pixels whose spectrum norm
// falls below 1e-8 on either side contribute 0.
double sam(const HyperCube& pred, const HyperCube& ref);

// 100/r * sqrt(mean_b RMSE_b^2 / mu_b^2) over bands whose reference mean is
// at least 1e-8 in magnitude; `excluded`, when given, receives the rest.
double ergas(const HyperCube& pred, const HyperCube& ref, int scale,
             std::vector<int>* excluded = nullptr);

// Mean per-band Pearson correlation of 3x3 Laplacian-filtered interiors;
// bands whose filtered signal has zero variance contribute 0 and are counted
// into `degenerate` when given.
double scc(const HyperCube& pred, const HyperCube& ref, int* degenerate = nullptr);

MetricsReport evaluate_metrics(const HyperCube& pred, const HyperCube& ref, int scale);

std::string metrics_csv_header();
std::string metrics_csv_line(const std::string& dataset, int scale, const MetricsReport& r);

// Multi-line "band,wavelength_nm,psnr_db" table; the wavelength column stays
// empty when the cube carries no wavelengths.
std::string band_psnr_csv(const MetricsReport& r, const std::vector<double>& wavelengths_nm);

}  // namespace that
