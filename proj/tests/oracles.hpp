#pragma once

// Brute-force reference implementations used only by tests. Each oracle is
// written directly from the defining formula, independent of the library's
// code paths, so agreement is meaningful.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "that/hypercube.hpp"

namespace oracle {

// Direct sliding-window cross-correlation. pad: 0 = zero, 1 = reflect,
// 2 = valid. Weights are [out, in/groups, kh, kw].
inline std::vector<double> conv2d(const std::vector<double>& x, int N, int Cin, int H, int W,
                                  const std::vector<double>& w, int Cout, int kh, int kw,
                                  const std::vector<double>& bias, int stride, int pad,
                                  int groups, int* out_h, int* out_w) {
  const int icpg = Cin / groups, ocpg = Cout / groups;
  const int ph = pad == 2 ? 0 : (kh - 1) / 2;
  const int pw = pad == 2 ? 0 : (kw - 1) / 2;
  const int OH = (H + 2 * ph - kh) / stride + 1;
  const int OW = (W + 2 * pw - kw) / stride + 1;
  *out_h = OH;
  *out_w = OW;
  auto sample = [&](int n, int c, int y, int xx) -> double {
    if (y < 0 || y >= H || xx < 0 || xx >= W) {
      if (pad != 1) return 0.0;
      if (y < 0) y = -y;
      if (y >= H) y = 2 * H - 2 - y;
      if (xx < 0) xx = -xx;
      if (xx >= W) xx = 2 * W - 2 - xx;
    }
    return x[((static_cast<std::size_t>(n) * Cin + c) * H + y) * W + xx];
  };
  std::vector<double> out(static_cast<std::size_t>(N) * Cout * OH * OW, 0.0);
  for (int n = 0; n < N; ++n)
    for (int oc = 0; oc < Cout; ++oc)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[oc];
          const int g = oc / ocpg;
          for (int j = 0; j < icpg; ++j)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx)
                acc += sample(n, g * icpg + j, oy * stride - ph + ky, ox * stride - pw + kx) *
                       w[((static_cast<std::size_t>(oc) * icpg + j) * kh + ky) * kw + kx];
          out[((static_cast<std::size_t>(n) * Cout + oc) * OH + oy) * OW + ox] = acc;
        }
  return out;
}

inline double cubic_weight(double t) {
  const double a = -0.5;
  t = std::fabs(t);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

// Dense 2-D cubic resampling of a single-channel image: evaluates the full
// 4x4 tap sum per output pixel, no separable passes.
inline std::vector<double> bicubic(const std::vector<double>& x, int H, int W, int OH, int OW) {
  std::vector<double> out(static_cast<std::size_t>(OH) * OW, 0.0);
  const double sy = static_cast<double>(H) / OH, sx = static_cast<double>(W) / OW;
  for (int i = 0; i < OH; ++i)
    for (int j = 0; j < OW; ++j) {
      const double srcy = (i + 0.5) * sy - 0.5, srcx = (j + 0.5) * sx - 0.5;
      const int by = static_cast<int>(std::floor(srcy)) - 1;
      const int bx = static_cast<int>(std::floor(srcx)) - 1;
      double acc = 0.0;
      for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n) {
          const int ym = std::clamp(by + m, 0, H - 1);
          const int xn = std::clamp(bx + n, 0, W - 1);
          acc += cubic_weight(srcy - (by + m)) * cubic_weight(srcx - (bx + n)) *
                 x[static_cast<std::size_t>(ym) * W + xn];
        }
      out[static_cast<std::size_t>(i) * OW + j] = acc;
    }
  return out;
}

// Dense single-stack attention: optionally l2-normalize Q/K rows, score
// (with scale, temperature and additive bias), softmax each row, weight V.
// Q, K are [T, d] row-major; V is [T, dv]; bias empty or [T, T].
inline std::vector<double> attention_ref(std::vector<double> q, std::vector<double> k,
                                         const std::vector<double>& v, int T, int d, int dv,
                                         bool norm_qk, double tau, double scale,
                                         const std::vector<double>& bias) {
  if (norm_qk) {
    for (auto* m : {&q, &k})
      for (int i = 0; i < T; ++i) {
        double ss = 0.0;
        for (int j = 0; j < d; ++j) ss += (*m)[i * d + j] * (*m)[i * d + j];
        const double denom = std::max(std::sqrt(ss), 1e-8);
        for (int j = 0; j < d; ++j) (*m)[i * d + j] /= denom;
      }
  }
  std::vector<double> s(static_cast<std::size_t>(T) * T);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j) {
      double acc = 0.0;
      for (int p = 0; p < d; ++p) acc += q[i * d + p] * k[j * d + p];
      s[static_cast<std::size_t>(i) * T + j] =
          acc * tau * scale + (bias.empty() ? 0.0 : bias[static_cast<std::size_t>(i) * T + j]);
    }
  std::vector<double> out(static_cast<std::size_t>(T) * dv, 0.0);
  for (int i = 0; i < T; ++i) {
    double mx = s[static_cast<std::size_t>(i) * T];
    for (int j = 1; j < T; ++j) mx = std::max(mx, s[static_cast<std::size_t>(i) * T + j]);
    double sum = 0.0;
    std::vector<double> e(T);
    for (int j = 0; j < T; ++j) {
      e[j] = std::exp(s[static_cast<std::size_t>(i) * T + j] - mx);
      sum += e[j];
    }
    for (int j = 0; j < T; ++j) {
      const double a = e[j] / sum;
      for (int p = 0; p < dv; ++p) out[static_cast<std::size_t>(i) * dv + p] += a * v[j * dv + p];
    }
  }
  return out;
}

// Optimal 1-D two-cluster partition by exhaustive search over the T-1
// sorted-order thresholds, minimizing within-cluster SSE via the centered
// two-pass formula. Returns 1 for members of the higher-mean cluster;
// constant rows are all 1. Exactly tied optima (e.g. symmetric value
// patterns) resolve to the smallest split, with a rounding-noise band so
// the pick does not depend on the SSE accumulation order.
inline std::vector<unsigned char> two_partition_ref(const std::vector<double>& row) {
  const int n = static_cast<int>(row.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return row[a] < row[b]; });
  if (row[order.front()] == row[order.back()]) return std::vector<unsigned char>(n, 1);
  double sum_abs = 0.0, sum_sq = 0.0;
  for (double x : row) {
    sum_abs += std::abs(x);
    sum_sq += x * x;
  }
  const double tie_band = 1e-12 * (sum_sq + sum_abs + 1.0);
  double best_sse = 0.0;
  int best_split = -1;
  for (int s = 1; s < n; ++s) {
    if (row[order[s - 1]] == row[order[s]]) continue;  // not a separating threshold
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < s; ++i) m1 += row[order[i]];
    for (int i = s; i < n; ++i) m2 += row[order[i]];
    m1 /= s;
    m2 /= n - s;
    double sse = 0.0;
    for (int i = 0; i < s; ++i) sse += (row[order[i]] - m1) * (row[order[i]] - m1);
    for (int i = s; i < n; ++i) sse += (row[order[i]] - m2) * (row[order[i]] - m2);
    if (best_split < 0 || sse < best_sse - tie_band) {
      best_sse = sse;
      best_split = s;
    }
  }
  std::vector<unsigned char> mask(n, 0);
  for (int i = best_split; i < n; ++i) mask[order[i]] = 1;
  return mask;
}


// ---------------------------------------------------------------------------
// Fusion quality metrics, straight from their defining formulas.
// ---------------------------------------------------------------------------

constexpr double kOraclePi = 3.14159265358979323846;

using that::HyperCube;

inline double psnr_oracle(const HyperCube& p, const HyperCube& r) {
  double mean = 0.0;
  for (int b = 0; b < r.s; ++b) {
    double mse = 0.0;
    for (int y = 0; y < r.h; ++y)
      for (int x = 0; x < r.w; ++x)
        mse += (p.at(y, x, b) - (double)r.at(y, x, b)) * (p.at(y, x, b) - (double)r.at(y, x, b));
    mse /= r.h * (double)r.w;
    mean += mse == 0.0 ? 100.0 : std::min(100.0, -10.0 * std::log10(mse));
  }
  return mean / r.s;
}

inline double ssim_oracle(const HyperCube& p, const HyperCube& r) {
  double w[11][11], total = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      w[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / 4.5);
      total += w[i][j];
    }
  double out = 0.0;
  for (int b = 0; b < r.s; ++b) {
    double acc = 0.0;
    int n = 0;
    for (int y0 = 0; y0 + 11 <= r.h; ++y0)
      for (int x0 = 0; x0 + 11 <= r.w; ++x0, ++n) {
        double mx = 0, my = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            mx += w[i][j] / total * p.at(y0 + i, x0 + j, b);
            my += w[i][j] / total * r.at(y0 + i, x0 + j, b);
          }
        double vx = 0, vy = 0, cv = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double dx = p.at(y0 + i, x0 + j, b) - mx;
            const double dy = r.at(y0 + i, x0 + j, b) - my;
            vx += w[i][j] / total * dx * dx;
            vy += w[i][j] / total * dy * dy;
            cv += w[i][j] / total * dx * dy;
          }
        acc += ((2 * mx * my + 1e-4) * (2 * cv + 9e-4)) /
               ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
      }
    out += acc / n;
  }
  return out / r.s;
}

inline double sam_oracle(const HyperCube& p, const HyperCube& r) {
  double acc = 0.0;
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x) {
      double d = 0, a = 0, c = 0;
      for (int b = 0; b < r.s; ++b) {
        d += p.at(y, x, b) * (double)r.at(y, x, b);
        a += p.at(y, x, b) * (double)p.at(y, x, b);
        c += r.at(y, x, b) * (double)r.at(y, x, b);
      }
      if (std::sqrt(a) < 1e-8 || std::sqrt(c) < 1e-8) continue;
      acc += std::acos(std::clamp(d / std::sqrt(a * c), -1.0, 1.0)) * 180.0 / kOraclePi;
    }
  return acc / (r.h * (double)r.w);
}

inline double ergas_oracle(const HyperCube& p, const HyperCube& r, int scale) {
  double acc = 0.0;
  int used = 0;
  for (int b = 0; b < r.s; ++b) {
    double mu = 0, mse = 0;
    for (int y = 0; y < r.h; ++y)
      for (int x = 0; x < r.w; ++x) {
        mu += r.at(y, x, b);
        mse += (p.at(y, x, b) - (double)r.at(y, x, b)) * (p.at(y, x, b) - (double)r.at(y, x, b));
      }
    mu /= r.h * (double)r.w;
    mse /= r.h * (double)r.w;
    if (std::abs(mu) < 1e-8) continue;
    acc += mse / (mu * mu);
    ++used;
  }
  return 100.0 / scale * std::sqrt(acc / used);
}

inline double scc_oracle(const HyperCube& p, const HyperCube& r) {
  static const int kK[3][3] = {{-1, -1, -1}, {-1, 8, -1}, {-1, -1, -1}};
  auto filt = [&](const HyperCube& c, int b, int y, int x) {
    double acc = 0.0;
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j) {
        const int yy = y + i, xx = x + j;
        const double v =
            (yy < 0 || yy >= c.h || xx < 0 || xx >= c.w) ? 0.0 : c.at(yy, xx, b);
        acc += kK[i + 1][j + 1] * v;
      }
    return acc;
  };
  double out = 0.0;
  for (int b = 0; b < r.s; ++b) {
    std::vector<double> fp, fr;
    for (int y = 1; y < r.h - 1; ++y)
      for (int x = 1; x < r.w - 1; ++x) {
        fp.push_back(filt(p, b, y, x));
        fr.push_back(filt(r, b, y, x));
      }
    double mp = 0, mr = 0;
    for (std::size_t i = 0; i < fp.size(); ++i) {
      mp += fp[i];
      mr += fr[i];
    }
    mp /= fp.size();
    mr /= fr.size();
    double vp = 0, vr = 0, cv = 0;
    for (std::size_t i = 0; i < fp.size(); ++i) {
      vp += (fp[i] - mp) * (fp[i] - mp);
      vr += (fr[i] - mr) * (fr[i] - mr);
      cv += (fp[i] - mp) * (fr[i] - mr);
    }
    if (vp <= 0 || vr <= 0) continue;
    out += cv / std::sqrt(vp * vr);
  }
  return out / r.s;
}

}  // namespace oracle
