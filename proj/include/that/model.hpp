#pragma once

// The full pansharpening network: shallow extraction of the upsampled
// hyperspectral input fused with the high-resolution pan channel, a stack of
// attention blocks, and reconstruction with a global bicubic residual.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "that/attention.hpp"
#include "that/cube_tensor.hpp"
#include "that/image_ops.hpp"
#include "that/mvfn.hpp"
#include "that/tensor.hpp"

namespace that {

enum class UpsampleStage { input, output };

struct ModelConfig {
  int bands = 8;
  int channels = 48;
  int blocks = 4;
  int heads = 6;
  int window = 8;
  int scale = 4;
  bool use_pci = true;
  bool use_ptsa = true;
  bool use_mvfn = true;
  UpsampleStage upsample_stage = UpsampleStage::input;

  int conv_channels() const { return use_pci ? channels - 1 : channels; }

  AttentionConfig attention() const {
    AttentionConfig a;
    a.heads = heads;
    a.window = window;
    return a;
  }

  void validate() const {
    if (bands < 1) throw ConfigError("model: bands must be >= 1");
    if (blocks < 1) throw ConfigError("model: blocks must be >= 1");
    if (channels < (use_pci ? 2 : 1)) throw ConfigError("model: channels too small");
    if (scale != 2 && scale != 4 && scale != 8)
      throw ConfigError("model: scale must be 2, 4 or 8");
    that::validate(attention());
    if (channels % heads != 0)
      throw ConfigError("model: channels (" + std::to_string(channels) +
                        ") not divisible by heads (" + std::to_string(heads) + ")");
  }
};

template <class T>
struct PtsgBlockParams {
  Tensor<T> ln1_g, ln1_b;  // only when the block runs PTSA
  PtsaParams<T> ptsa;
  Tensor<T> ln2_g, ln2_b;
  WsaParams<T> wsa;
  Tensor<T> ln3_g, ln3_b;  // only when the block runs the feed-forward
  MvfnParams<T> mvfn;
};

template <class T>
struct ThatModel {
  ModelConfig cfg;
  Tensor<T> shallow_w, shallow_b;
  std::vector<PtsgBlockParams<T>> block;
  Tensor<T> recon_w, recon_b;

  static ThatModel zeros(const ModelConfig& cfg) { return build(cfg, nullptr); }

  static ThatModel init(const ModelConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return build(cfg, &rng);
  }

  // Stable name -> tensor listing; the order defines the optimizer slot and
  // checkpoint layout.
  std::vector<std::pair<std::string, Tensor<T>>> named_params() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    out.emplace_back("shallow.w", shallow_w);
    out.emplace_back("shallow.b", shallow_b);
    for (size_t i = 0; i < block.size(); ++i) {
      const std::string pre = "block" + std::to_string(i) + ".";
      auto& b = block[i];
      if (cfg.use_ptsa) {
        out.emplace_back(pre + "ln1.g", b.ln1_g);
        out.emplace_back(pre + "ln1.b", b.ln1_b);
        out.emplace_back(pre + "ptsa.wq", b.ptsa.wq);
        out.emplace_back(pre + "ptsa.wk", b.ptsa.wk);
        out.emplace_back(pre + "ptsa.wv", b.ptsa.wv);
        out.emplace_back(pre + "ptsa.wo", b.ptsa.wo);
        out.emplace_back(pre + "ptsa.bo", b.ptsa.bo);
        out.emplace_back(pre + "ptsa.tau", b.ptsa.tau);
      }
      out.emplace_back(pre + "ln2.g", b.ln2_g);
      out.emplace_back(pre + "ln2.b", b.ln2_b);
      out.emplace_back(pre + "wsa.wq", b.wsa.wq);
      out.emplace_back(pre + "wsa.wk", b.wsa.wk);
      out.emplace_back(pre + "wsa.wv", b.wsa.wv);
      out.emplace_back(pre + "wsa.wo", b.wsa.wo);
      out.emplace_back(pre + "wsa.bo", b.wsa.bo);
      out.emplace_back(pre + "wsa.rel_bias", b.wsa.rel_bias);
      if (cfg.use_mvfn) {
        out.emplace_back(pre + "ln3.g", b.ln3_g);
        out.emplace_back(pre + "ln3.b", b.ln3_b);
        out.emplace_back(pre + "mvfn.expand.w", b.mvfn.expand_w);
        out.emplace_back(pre + "mvfn.expand.b", b.mvfn.expand_b);
        for (int k = 0; k < 3; ++k) {
          const std::string kn = std::to_string(MvfnParams<T>::kernel_of(k));
          out.emplace_back(pre + "mvfn.dw" + kn + ".w", b.mvfn.dw_w[k]);
          out.emplace_back(pre + "mvfn.dw" + kn + ".b", b.mvfn.dw_b[k]);
          out.emplace_back(pre + "mvfn.var" + kn + ".scale", b.mvfn.var_scale[k]);
          out.emplace_back(pre + "mvfn.var" + kn + ".bias", b.mvfn.var_bias[k]);
        }
        out.emplace_back(pre + "mvfn.merge.w", b.mvfn.merge_w);
        out.emplace_back(pre + "mvfn.merge.b", b.mvfn.merge_b);
        out.emplace_back(pre + "mvfn.out.w", b.mvfn.out_w);
        out.emplace_back(pre + "mvfn.out.b", b.mvfn.out_b);
      }
    }
    out.emplace_back("recon.w", recon_w);
    out.emplace_back("recon.b", recon_b);
    return out;
  }

  long long param_count() {
    long long n = 0;
    for (auto& [name, t] : named_params()) n += t.numel();
    return n;
  }

 private:
  static Tensor<T> conv_init(Shape shape, std::mt19937_64* rng) {
    auto t = Tensor<T>::zeros(std::move(shape), true);
    if (rng) fill_trunc_normal(t, *rng, T(0.02));
    return t;
  }

  static ThatModel build(const ModelConfig& cfg, std::mt19937_64* rng) {
    cfg.validate();
    const int C = cfg.channels, S = cfg.bands;
    ThatModel m;
    m.cfg = cfg;
    m.shallow_w = conv_init({cfg.conv_channels(), S, 3, 3}, rng);
    m.shallow_b = Tensor<T>::zeros({cfg.conv_channels()}, true);
    m.block.resize(cfg.blocks);
    for (auto& b : m.block) {
      if (cfg.use_ptsa) {
        b.ln1_g = rng ? Tensor<T>::full({C}, T(1), true) : Tensor<T>::zeros({C}, true);
        b.ln1_b = Tensor<T>::zeros({C}, true);
        b.ptsa = rng ? PtsaParams<T>::init(C, cfg.heads, *rng)
                     : PtsaParams<T>::zeros(C, cfg.heads, T(0));
      }
      b.ln2_g = rng ? Tensor<T>::full({C}, T(1), true) : Tensor<T>::zeros({C}, true);
      b.ln2_b = Tensor<T>::zeros({C}, true);
      b.wsa = rng ? WsaParams<T>::init(C, cfg.heads, cfg.window, *rng)
                  : WsaParams<T>::zeros(C, cfg.heads, cfg.window);
      if (cfg.use_mvfn) {
        b.ln3_g = rng ? Tensor<T>::full({C}, T(1), true) : Tensor<T>::zeros({C}, true);
        b.ln3_b = Tensor<T>::zeros({C}, true);
        b.mvfn = rng ? MvfnParams<T>::init(C, *rng) : MvfnParams<T>::zeros(C);
      }
    }
    const int recon_out = cfg.upsample_stage == UpsampleStage::output
                              ? S * cfg.scale * cfg.scale
                              : S;
    m.recon_w = conv_init({recon_out, C, 3, 3}, rng);
    m.recon_b = Tensor<T>::zeros({recon_out}, true);
    return m;
  }
};

namespace detail {

template <class T>
Tensor<T> channel_ln(const Tensor<T>& x, const Tensor<T>& g, const Tensor<T>& b) {
  return add_axis(mul_axis(layer_norm(x, 1), g, 1), b, 1);
}

}  // namespace detail

// Upsample + extract features from the spectral input and (optionally) append
// the pan channel. With output-stage upsampling the body runs at the low
// resolution, so the pan channel is bicubic-reduced to match.
template <class T>
Tensor<T> shallow_extract(const Tensor<T>& y, const Tensor<T>& x, const ThatModel<T>& m) {
  check_feature_map(y, "shallow_extract");
  const auto& cfg = m.cfg;
  if (y.dim(1) != cfg.bands)
    throw ShapeError("shallow_extract: expected " + std::to_string(cfg.bands) +
                     " bands, got " + std::to_string(y.dim(1)));
  const bool full_res = cfg.upsample_stage == UpsampleStage::input;
  const int bh = full_res ? y.dim(2) * cfg.scale : y.dim(2);
  const int bw = full_res ? y.dim(3) * cfg.scale : y.dim(3);
  auto base = full_res ? bicubic_resize(y, bh, bw) : y;
  auto feat = relu(conv2d(base, m.shallow_w, m.shallow_b));
  if (!cfg.use_pci) return feat;
  check_feature_map(x, "shallow_extract");
  if (x.dim(0) != y.dim(0) || x.dim(1) != 1 || x.dim(2) != y.dim(2) * cfg.scale ||
      x.dim(3) != y.dim(3) * cfg.scale)
    throw ShapeError("shallow_extract: pan image " + shape_str(x.shape()) +
                     " does not match spectral input " + shape_str(y.shape()) +
                     " at scale " + std::to_string(cfg.scale));
  auto pan = full_res ? x : bicubic_resize(x, bh, bw);
  return concat<T>({feat, pan}, 1);
}

template <class T>
Tensor<T> ptsg_forward(const Tensor<T>& f, const PtsgBlockParams<T>& b, const ModelConfig& cfg,
                       MaskState* state = nullptr) {
  auto acfg = cfg.attention();
  auto f1 = cfg.use_ptsa
                ? add(f, ptsa_forward(detail::channel_ln(f, b.ln1_g, b.ln1_b), b.ptsa, acfg,
                                      state))
                : f;
  auto f2 = add(f1, wsa_forward(detail::channel_ln(f1, b.ln2_g, b.ln2_b), b.wsa, acfg));
  if (!cfg.use_mvfn) return f2;
  return add(f2, mvfn_forward(detail::channel_ln(f2, b.ln3_g, b.ln3_b), b.mvfn));
}

// Map features back to bands and add the bicubic-upsampled spectral input as
// a global residual. `y` is the original low-resolution input.
template <class T>
Tensor<T> reconstruct(const Tensor<T>& f, const Tensor<T>& y, const ThatModel<T>& m) {
  const auto& cfg = m.cfg;
  const int H = y.dim(2) * cfg.scale, W = y.dim(3) * cfg.scale;
  auto body = conv2d(f, m.recon_w, m.recon_b);
  if (cfg.upsample_stage == UpsampleStage::output) body = pixel_shuffle(body, cfg.scale);
  if (body.dim(2) != H || body.dim(3) != W)
    throw ShapeError("reconstruct: feature map " + shape_str(f.shape()) +
                     " does not reach output " + std::to_string(H) + "x" + std::to_string(W));
  return add(body, bicubic_resize(y, H, W));
}

// y: [N, S, h, w] in [0,1]; x: [N, 1, r*h, r*w]; returns [N, S, r*h, r*w].
template <class T>
Tensor<T> that_forward(const Tensor<T>& y, const Tensor<T>& x, const ThatModel<T>& m,
                       MaskState* state = nullptr) {
  auto f = shallow_extract(y, x, m);
  for (const auto& b : m.block) f = ptsg_forward(f, b, m.cfg, state);
  return reconstruct(f, y, m);
}

struct ParamFlops {
  long long params = 0;
  long long flops = 0;  // multiply-accumulates of convolutions and attention
                        // products; normalization, pooling, interpolation and
                        // other elementwise work excluded
};

// Analytic count for one forward pass producing an out_h x out_w output.
// conv: k^2 * Cin/groups * Cout * Hb * Wb MACs, k^2 * Cin/groups * Cout + Cout
// params; attention: 2 * T^2 * d MACs per stack (scores and value mix).
inline ParamFlops count_params_flops(const ModelConfig& cfg, int out_h, int out_w) {
  cfg.validate();
  if (out_h % cfg.scale != 0 || out_w % cfg.scale != 0)
    throw ContractError("count_params_flops: output extents must be divisible by scale");
  const long long C = cfg.channels, S = cfg.bands, heads = cfg.heads, w = cfg.window;
  const bool full_res = cfg.upsample_stage == UpsampleStage::input;
  const long long bh = full_res ? out_h : out_h / cfg.scale;
  const long long bw = full_res ? out_w : out_w / cfg.scale;
  const long long area = bh * bw;
  ParamFlops t;
  auto conv = [&](long long cin, long long cout, long long k, long long groups, bool bias) {
    t.params += k * k * (cin / groups) * cout + (bias ? cout : 0);
    t.flops += k * k * (cin / groups) * cout * area;
  };

  conv(S, cfg.conv_channels(), 3, 1, true);  // shallow (pan concat is free)

  const long long ln = 2 * C;  // gain + bias, no MACs counted
  for (int i = 0; i < cfg.blocks; ++i) {
    if (cfg.use_ptsa) {
      t.params += ln;
      conv(C, C, 1, 1, false);  // q
      conv(C, C, 1, 1, false);  // k
      conv(C, C, 1, 1, false);  // v
      conv(C, C, 1, 1, true);   // out
      t.params += heads;        // temperatures
      const long long tok = C / heads;
      t.flops += 2 * heads * tok * tok * area;
    }
    t.params += ln;
    conv(C, C, 1, 1, false);
    conv(C, C, 1, 1, false);
    conv(C, C, 1, 1, false);
    conv(C, C, 1, 1, true);
    t.params += heads * (2 * w - 1) * (2 * w - 1);
    const long long wins = ((bh + w - 1) / w) * ((bw + w - 1) / w);
    const long long dh = C / heads;
    t.flops += 2 * wins * heads * (w * w) * (w * w) * dh;
    if (cfg.use_mvfn) {
      t.params += ln;
      const long long gc = 2 * C;
      conv(C, gc, 1, 1, true);  // expand
      for (long long k : {3, 5, 7}) {
        conv(gc, gc, k, gc, true);  // depthwise
        t.params += 2 * gc;         // variance gate affine
      }
      conv(3 * gc, gc, 1, 1, true);  // merge
      conv(gc, C, 1, 1, true);       // out
    }
  }

  const long long recon_out = full_res ? S : S * cfg.scale * cfg.scale;
  conv(C, recon_out, 3, 1, true);
  return t;
}

}  // namespace that
