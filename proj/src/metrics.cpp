#include "that/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace that {

namespace {

constexpr double kPsnrCap = 100.0;
constexpr double kNormFloor = 1e-8;

void check_same_shape(const HyperCube& a, const HyperCube& b, const char* what) {
  if (a.h != b.h || a.w != b.w || a.s != b.s)
    throw ShapeError(std::string(what) + ": cube shapes differ (" + std::to_string(a.h) + "x" +
                     std::to_string(a.w) + "x" + std::to_string(a.s) + " vs " +
                     std::to_string(b.h) + "x" + std::to_string(b.w) + "x" +
                     std::to_string(b.s) + ")");
}

std::vector<double> band_image(const HyperCube& c, int b) {
  std::vector<double> img(static_cast<std::size_t>(c.h) * c.w);
  for (int y = 0; y < c.h; ++y)
    for (int x = 0; x < c.w; ++x) img[static_cast<std::size_t>(y) * c.w + x] = c.at(y, x, b);
  return img;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::pair<double, std::vector<double>> psnr(const HyperCube& pred, const HyperCube& ref) {
  check_same_shape(pred, ref, "psnr");
  const std::size_t px = static_cast<std::size_t>(ref.h) * ref.w;
  std::vector<double> per_band(ref.s);
  double mean = 0.0;
  for (int b = 0; b < ref.s; ++b) {
    double mse = 0.0;
    for (int y = 0; y < ref.h; ++y)
      for (int x = 0; x < ref.w; ++x) {
        const double d = static_cast<double>(pred.at(y, x, b)) - ref.at(y, x, b);
        mse += d * d;
      }
    mse /= static_cast<double>(px);
    per_band[b] = mse > 0.0 ? std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse)) : kPsnrCap;
    mean += per_band[b];
  }
  return {mean / ref.s, per_band};
}

double ssim(const HyperCube& pred, const HyperCube& ref) {
  check_same_shape(pred, ref, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5, kC1 = 1e-4, kC2 = 9e-4;  // (K L)^2 for K1/K2
  if (ref.h < kWin || ref.w < kWin)
    throw ShapeError("ssim: image " + std::to_string(ref.h) + "x" + std::to_string(ref.w) +
                     " smaller than the " + std::to_string(kWin) + "-pixel window");
  double w2d[kWin][kWin];
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double dy = i - (kWin - 1) / 2.0, dx = j - (kWin - 1) / 2.0;
      w2d[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * kSigma * kSigma));
      wsum += w2d[i][j];
    }
  for (auto& row : w2d)
    for (auto& v : row) v /= wsum;

  double band_mean = 0.0;
  for (int b = 0; b < ref.s; ++b) {
    auto p = band_image(pred, b), r = band_image(ref, b);
    double acc = 0.0;
    int n = 0;
    for (int y = 0; y + kWin <= ref.h; ++y)
      for (int x = 0; x + kWin <= ref.w; ++x) {
        double mp = 0, mr = 0, pp = 0, rr = 0, pr = 0;
        for (int i = 0; i < kWin; ++i)
          for (int j = 0; j < kWin; ++j) {
            const double wv = w2d[i][j];
            const double pv = p[static_cast<std::size_t>(y + i) * ref.w + x + j];
            const double rv = r[static_cast<std::size_t>(y + i) * ref.w + x + j];
            mp += wv * pv;
            mr += wv * rv;
            pp += wv * pv * pv;
            rr += wv * rv * rv;
            pr += wv * pv * rv;
          }
        const double vp = pp - mp * mp, vr = rr - mr * mr, cov = pr - mp * mr;
        acc += ((2 * mp * mr + kC1) * (2 * cov + kC2)) /
               ((mp * mp + mr * mr + kC1) * (vp + vr + kC2));
        ++n;
      }
    band_mean += acc / n;
  }
  return band_mean / ref.s;
}

double sam(const HyperCube& pred, const HyperCube& ref) {
  check_same_shape(pred, ref, "sam");
  double acc = 0.0;
  for (int y = 0; y < ref.h; ++y)
    for (int x = 0; x < ref.w; ++x) {
      double np = 0, nr = 0;
      for (int b = 0; b < ref.s; ++b) {
        const double pv = pred.at(y, x, b), rv = ref.at(y, x, b);
        np += pv * pv;
        nr += rv * rv;
      }
      np = std::sqrt(np);
      nr = std::sqrt(nr);
      if (np < kNormFloor || nr < kNormFloor) continue;  // contributes 0
      // Half-angle form of arccos(dot / (np*nr)): identical spectra give
      // exactly zero, where the acos of a once-rounded cosine lands ~1e-8 rad
      // off; elsewhere the two agree to machine precision.
      double dm = 0, dp = 0;
      for (int b = 0; b < ref.s; ++b) {
        const double u = pred.at(y, x, b) / np, v = ref.at(y, x, b) / nr;
        dm += (u - v) * (u - v);
        dp += (u + v) * (u + v);
      }
      acc += 2.0 * std::atan2(std::sqrt(dm), std::sqrt(dp));
    }
  return acc / (static_cast<double>(ref.h) * ref.w) * 180.0 / 3.14159265358979323846;
}

double ergas(const HyperCube& pred, const HyperCube& ref, int scale,
             std::vector<int>* excluded) {
  check_same_shape(pred, ref, "ergas");
  if (scale < 1) throw ContractError("ergas: scale must be >= 1");
  const std::size_t px = static_cast<std::size_t>(ref.h) * ref.w;
  double acc = 0.0;
  int used = 0;
  for (int b = 0; b < ref.s; ++b) {
    double mu = 0.0, mse = 0.0;
    for (int y = 0; y < ref.h; ++y)
      for (int x = 0; x < ref.w; ++x) {
        mu += ref.at(y, x, b);
        const double d = static_cast<double>(pred.at(y, x, b)) - ref.at(y, x, b);
        mse += d * d;
      }
    mu /= static_cast<double>(px);
    mse /= static_cast<double>(px);
    if (std::abs(mu) < kNormFloor) {
      if (excluded) excluded->push_back(b);
      continue;
    }
    acc += mse / (mu * mu);  // RMSE^2 = MSE
    ++used;
  }
  if (used == 0) throw NumericError("ergas: every reference band has (near-)zero mean");
  return 100.0 / scale * std::sqrt(acc / used);
}

double scc(const HyperCube& pred, const HyperCube& ref, int* degenerate) {
  check_same_shape(pred, ref, "scc");
  if (ref.h < 3 || ref.w < 3)
    throw ShapeError("scc: image must be at least 3x3, got " + std::to_string(ref.h) + "x" +
                     std::to_string(ref.w));
  const int H = ref.h, W = ref.w;
  auto laplace = [&](const std::vector<double>& img) {
    std::vector<double> out(img.size(), 0.0);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 8.0 * img[static_cast<std::size_t>(y) * W + x];
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;  // zero pad
            acc -= img[static_cast<std::size_t>(yy) * W + xx];
          }
        out[static_cast<std::size_t>(y) * W + x] = acc;
      }
    return out;
  };

  double band_mean = 0.0;
  for (int b = 0; b < ref.s; ++b) {
    auto fp = laplace(band_image(pred, b));
    auto fr = laplace(band_image(ref, b));
    // interior only: the border ring mixes in the synthetic zero padding
    double mp = 0, mr = 0;
    const int n = (H - 2) * (W - 2);
    for (int y = 1; y < H - 1; ++y)
      for (int x = 1; x < W - 1; ++x) {
        mp += fp[static_cast<std::size_t>(y) * W + x];
        mr += fr[static_cast<std::size_t>(y) * W + x];
      }
    mp /= n;
    mr /= n;
    double vp = 0, vr = 0, cov = 0;
    for (int y = 1; y < H - 1; ++y)
      for (int x = 1; x < W - 1; ++x) {
        const double a = fp[static_cast<std::size_t>(y) * W + x] - mp;
        const double c = fr[static_cast<std::size_t>(y) * W + x] - mr;
        vp += a * a;
        vr += c * c;
        cov += a * c;
      }
    if (vp <= 0.0 || vr <= 0.0) {
      if (degenerate) ++*degenerate;
      continue;  // contributes 0
    }
    band_mean += cov / std::sqrt(vp * vr);
  }
  return band_mean / ref.s;
}

MetricsReport evaluate_metrics(const HyperCube& pred, const HyperCube& ref, int scale) {
  MetricsReport r;
  auto [mean_db, per_band] = psnr(pred, ref);
  r.psnr_db = mean_db;
  r.psnr_per_band = std::move(per_band);
  r.ssim = ssim(pred, ref);
  r.sam_deg = sam(pred, ref);
  r.ergas = ergas(pred, ref, scale);
  r.scc = scc(pred, ref);
  return r;
}

std::string metrics_csv_header() { return "dataset,scale,psnr,ssim,sam,ergas,scc"; }

std::string metrics_csv_line(const std::string& dataset, int scale, const MetricsReport& r) {
  std::ostringstream os;
  os << dataset << ',' << scale << ',' << fmt6(r.psnr_db) << ',' << fmt6(r.ssim) << ','
     << fmt6(r.sam_deg) << ',' << fmt6(r.ergas) << ',' << fmt6(r.scc);
  return os.str();
}

std::string band_psnr_csv(const MetricsReport& r, const std::vector<double>& wavelengths_nm) {
  std::ostringstream os;
  os << "band,wavelength_nm,psnr_db\n";
  for (std::size_t b = 0; b < r.psnr_per_band.size(); ++b) {
    os << b << ',';
    if (b < wavelengths_nm.size()) os << fmt6(wavelengths_nm[b]);
    os << ',' << fmt6(r.psnr_per_band[b]) << '\n';
  }
  return os.str();
}

}  // namespace that
