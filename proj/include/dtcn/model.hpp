#pragma once

// Mask-estimation separator: encoder -> cumulative norm -> bottleneck ->
// X*R residual convolutional blocks (optionally deformable, optionally with
// one shared stack of X blocks) -> mask head -> masked decoding -> overlap-add.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtcn/deformconv.hpp"
#include "dtcn/frames.hpp"
#include "dtcn/numcore.hpp"
#include "dtcn/params.hpp"

namespace dtcn {

struct DTCNConfig {
  std::size_t N = 512;  // encoder basis size
  std::size_t B = 128;  // bottleneck channels
  std::size_t H = 512;  // block hidden channels
  std::size_t P = 3;    // kernel taps
  std::size_t L = 16;   // encoder block length in samples
  std::size_t X = 8;    // blocks per stack
  std::size_t R = 3;    // stack repeats
  std::size_t C = 2;    // sources
  bool deformable = true;
  bool shared_weights = false;
  bool skip_connections = false;
  int sample_rate = 8000;

  std::size_t num_blocks() const { return X * R; }

  void validate() const {
    if (!N || !B || !H || !P || !X || !R || !C) throw std::invalid_argument("DTCNConfig: all dimensions must be positive");
    if (L < 2 || L % 2) throw std::invalid_argument("DTCNConfig: block length must be even and >= 2");
    if (sample_rate <= 0) throw std::invalid_argument("DTCNConfig: sample rate must be positive");
  }

  friend bool operator==(const DTCNConfig&, const DTCNConfig&) = default;
};

/// Dilation of each block within a stack: 1, 2, 4, ..., 2^(X-1).
inline std::vector<std::size_t> dilation_schedule(std::size_t X) {
  if (X < 1) throw std::invalid_argument("dilation_schedule: X must be >= 1");
  if (X > 62) throw std::invalid_argument("dilation_schedule: X too large");
  std::vector<std::size_t> f(X);
  for (std::size_t i = 0; i < X; ++i) f[i] = std::size_t{1} << i;
  return f;
}

struct BlockParams {
  ParamId in_w, in_b, prelu1, norm1_gain, norm1_bias;
  ParamId kernel;
  ParamId prelu2, norm2_gain, norm2_bias;
  ParamId out_w, out_b;
  ParamId skip_w, skip_b;                          // skip_connections only
  ParamId offset_kernel, offset_w, offset_b, offset_prelu;  // deformable only
};

class SeparatorModel {
 public:
  DTCNConfig config;
  ParamStore params;
  ParamId encoder, decoder, norm_gain, norm_bias, bottleneck_w, bottleneck_b, mask_w, mask_b;
  std::vector<BlockParams> blocks;  // X*R entries, or X when weights are shared

  const BlockParams& block(std::size_t i) const { return blocks[config.shared_weights ? i % config.X : i]; }
  std::size_t dilation(std::size_t i) const { return std::size_t{1} << (i % config.X); }

  const Tensor& operator[](ParamId id) const { return params.value(id); }
};

inline SeparatorModel build_separator(const DTCNConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SeparatorModel m;
  m.config = cfg;
  Rng rng(mix_seed(seed, 0xD7C4));
  auto& ps = m.params;
  auto linear = [&](const std::string& name, std::size_t in, std::size_t out, ParamId& w, ParamId& b) {
    w = ps.add(name + ".weight", fan_in_init({in, out}, in, rng));
    b = ps.add(name + ".bias", fan_in_init({out}, in, rng));
  };

  m.encoder = ps.add("encoder.basis", fan_in_init({cfg.L, cfg.N}, cfg.L, rng));
  m.decoder = ps.add("decoder.basis", fan_in_init({cfg.N, cfg.L}, cfg.N, rng));
  m.norm_gain = ps.add("norm.gain", Tensor({cfg.N}, 1.0));
  m.norm_bias = ps.add("norm.bias", Tensor({cfg.N}));
  linear("bottleneck", cfg.N, cfg.B, m.bottleneck_w, m.bottleneck_b);

  const std::size_t stored = cfg.shared_weights ? cfg.X : cfg.num_blocks();
  for (std::size_t i = 0; i < stored; ++i) {
    const std::string pre = "block" + std::to_string(i);
    BlockParams bp;
    linear(pre + ".in", cfg.B, cfg.H, bp.in_w, bp.in_b);
    bp.prelu1 = ps.add(pre + ".prelu1", Tensor({1}, 0.25));
    bp.norm1_gain = ps.add(pre + ".norm1.gain", Tensor({cfg.H}, 1.0));
    bp.norm1_bias = ps.add(pre + ".norm1.bias", Tensor({cfg.H}));
    bp.kernel = ps.add(pre + ".depthwise", fan_in_init({cfg.H, cfg.P}, cfg.P, rng));
    if (cfg.deformable) {
      bp.offset_kernel = ps.add(pre + ".offset.depthwise", fan_in_init({cfg.H, cfg.P}, cfg.P, rng));
      // Zero projection: offsets start at 0, so the block begins as a plain dilated conv.
      bp.offset_w = ps.add(pre + ".offset.weight", Tensor({cfg.H, cfg.P}));
      bp.offset_b = ps.add(pre + ".offset.bias", Tensor({cfg.P}));
      bp.offset_prelu = ps.add(pre + ".offset.prelu", Tensor({1}, 0.25));
    }
    bp.prelu2 = ps.add(pre + ".prelu2", Tensor({1}, 0.25));
    bp.norm2_gain = ps.add(pre + ".norm2.gain", Tensor({cfg.H}, 1.0));
    bp.norm2_bias = ps.add(pre + ".norm2.bias", Tensor({cfg.H}));
    linear(pre + ".out", cfg.H, cfg.B, bp.out_w, bp.out_b);
    if (cfg.skip_connections) linear(pre + ".skip", cfg.H, cfg.B, bp.skip_w, bp.skip_b);
    m.blocks.push_back(bp);
  }
  linear("mask", cfg.B, cfg.C * cfg.N, m.mask_w, m.mask_b);
  return m;
}

inline std::size_t count_params(const SeparatorModel& m) { return m.params.count_scalars(); }

/// Multiply-accumulates for one forward pass over `input_len` samples.
/// Counts encoder, decoder, every pointwise/depthwise/deformable conv and the
/// two interpolation multiplies per deformable tap; norms, activations and
/// mask application are excluded.
inline std::uint64_t count_macs(const DTCNConfig& c, std::size_t input_len) {
  const std::uint64_t frames = num_frames_for(std::max<std::size_t>(input_len, 1), c.L);
  std::uint64_t per_block = c.B * c.H + c.H * c.P + c.H * c.B;
  if (c.deformable) per_block += c.H * c.P + c.H * c.P + 2 * c.H * c.P;
  if (c.skip_connections) per_block += c.H * c.B;
  const std::uint64_t per_frame = c.L * c.N                   // encoder
                                  + c.N * c.B                 // bottleneck
                                  + c.num_blocks() * per_block  //
                                  + c.B * c.C * c.N           // mask head
                                  + c.C * c.N * c.L;          // decoder
  return frames * per_frame;
}

inline std::uint64_t count_macs(const SeparatorModel& m, std::size_t input_len) { return count_macs(m.config, input_len); }

// ---- forward / backward -------------------------------------------------------

struct BlockCache {
  Tensor input;  // residual stream entering the block
  Tensor h1;     // after input projection
  NormCache norm1;
  Tensor n1;     // normalized hidden, input to the depthwise conv
  Tensor o1;     // offset branch: depthwise output
  Tensor o2;     // offset branch: projection output (taps, frames)
  OffsetField tau;
  Tensor d;      // depthwise / deformable output
  NormCache norm2;
  Tensor n2;
};

struct ForwardCache {
  FrameMatrix frames;
  Tensor enc_pre;
  Tensor w;  // encoded features (N, frames)
  NormCache norm;
  Tensor normed;  // cumulative-norm output, bottleneck input
  Tensor z0;
  std::vector<BlockCache> blocks;
  Tensor mask_in;
  Tensor mask_pre;  // (C*N, frames)
  std::vector<Tensor> masks;
  std::vector<Tensor> v;
  std::size_t length = 0;
};

namespace detail {

inline Tensor rows(const Tensor& t, std::size_t first, std::size_t count) {
  Tensor out({count, t.dim(1)});
  std::copy_n(&t(first, 0), count * t.dim(1), out.data().data());
  return out;
}

inline Tensor block_forward(const SeparatorModel& m, std::size_t i, const Tensor& z, BlockCache* bc, Tensor* skip) {
  const auto& bp = m.block(i);
  const auto& ps = m.params;
  const std::size_t f = m.dilation(i);
  BlockCache local;
  BlockCache& c = bc ? *bc : local;
  c.input = z;
  c.h1 = channel_linear(z, ps.value(bp.in_w), ps.value(bp.in_b));
  c.n1 = global_layer_norm(prelu(c.h1, ps.value(bp.prelu1)), ps.value(bp.norm1_gain), ps.value(bp.norm1_bias), &c.norm1);
  const DepthwiseKernel k{ps.value(bp.kernel), f};
  if (m.config.deformable) {
    c.o1 = dconv(c.n1, DepthwiseKernel{ps.value(bp.offset_kernel), f});
    c.o2 = channel_linear(c.o1, ps.value(bp.offset_w), ps.value(bp.offset_b));
    c.tau = OffsetField{prelu(c.o2, ps.value(bp.offset_prelu)).transposed()};
    c.d = ddconv(c.n1, k, c.tau);
  } else {
    c.d = dconv(c.n1, k);
  }
  c.n2 = global_layer_norm(prelu(c.d, ps.value(bp.prelu2)), ps.value(bp.norm2_gain), ps.value(bp.norm2_bias), &c.norm2);
  if (skip) *skip += channel_linear(c.n2, ps.value(bp.skip_w), ps.value(bp.skip_b));
  Tensor out = channel_linear(c.n2, ps.value(bp.out_w), ps.value(bp.out_b));
  out += z;
  return out;
}

/// Returns the gradient w.r.t. the block input, excluding the residual path.
inline Tensor block_backward(SeparatorModel& m, std::size_t i, const BlockCache& c, const Tensor& dout, const Tensor* dskip) {
  const auto& bp = m.block(i);
  auto& ps = m.params;
  const std::size_t f = m.dilation(i);
  Tensor dn2 = channel_linear_backward(c.n2, ps.value(bp.out_w), dout, ps.grad(bp.out_w), &ps.grad(bp.out_b));
  if (dskip) dn2 += channel_linear_backward(c.n2, ps.value(bp.skip_w), *dskip, ps.grad(bp.skip_w), &ps.grad(bp.skip_b));
  Tensor da2 = global_layer_norm_backward(c.norm2, ps.value(bp.norm2_gain), dn2, ps.grad(bp.norm2_gain), ps.grad(bp.norm2_bias));
  Tensor dd = prelu_backward(c.d, ps.value(bp.prelu2), std::move(da2), ps.grad(bp.prelu2));
  const DepthwiseKernel k{ps.value(bp.kernel), f};
  Tensor dn1;
  if (m.config.deformable) {
    DeformGrads g = ddconv_backward(dd, c.n1, k, c.tau);
    ps.grad(bp.kernel) += g.dk;
    dn1 = std::move(g.dy);
    Tensor do2 = prelu_backward(c.o2, ps.value(bp.offset_prelu), g.dtau.transposed(), ps.grad(bp.offset_prelu));
    Tensor do1 = channel_linear_backward(c.o1, ps.value(bp.offset_w), do2, ps.grad(bp.offset_w), &ps.grad(bp.offset_b));
    DeformGrads go = dconv_backward(do1, c.n1, DepthwiseKernel{ps.value(bp.offset_kernel), f});
    ps.grad(bp.offset_kernel) += go.dk;
    dn1 += go.dy;
  } else {
    DeformGrads g = dconv_backward(dd, c.n1, k);
    ps.grad(bp.kernel) += g.dk;
    dn1 = std::move(g.dy);
  }
  Tensor da1 = global_layer_norm_backward(c.norm1, ps.value(bp.norm1_gain), dn1, ps.grad(bp.norm1_gain), ps.grad(bp.norm1_bias));
  Tensor dh1 = prelu_backward(c.h1, ps.value(bp.prelu1), std::move(da1), ps.grad(bp.prelu1));
  return channel_linear_backward(c.input, ps.value(bp.in_w), dh1, ps.grad(bp.in_w), &ps.grad(bp.in_b));
}

}  // namespace detail

/// Mask estimation from encoded features (N, frames): one nonnegative (N, frames) mask per source.
inline std::vector<Tensor> estimate_masks(const Tensor& w, const SeparatorModel& m, ForwardCache* cache = nullptr) {
  const auto& cfg = m.config;
  const auto& ps = m.params;
  if (w.rank() != 2 || w.dim(0) != cfg.N) throw ShapeError("estimate_masks: features must be (N, frames), got " + shape_str(w.shape()));
  NormCache norm;
  Tensor normed = cumulative_layer_norm(w, ps.value(m.norm_gain), ps.value(m.norm_bias), &norm);
  Tensor z0 = channel_linear(normed, ps.value(m.bottleneck_w), ps.value(m.bottleneck_b));
  std::vector<BlockCache> bcs(cache ? cfg.num_blocks() : 0);
  std::optional<Tensor> skip;
  if (cfg.skip_connections) skip.emplace(z0.shape());
  Tensor z = z0;
  for (std::size_t i = 0; i < cfg.num_blocks(); ++i)
    z = detail::block_forward(m, i, z, cache ? &bcs[i] : nullptr, skip ? &*skip : nullptr);
  Tensor mask_in = skip ? std::move(*skip) : std::move(z);
  Tensor mask_pre = channel_linear(mask_in, ps.value(m.mask_w), ps.value(m.mask_b));
  std::vector<Tensor> masks;
  for (std::size_t c = 0; c < cfg.C; ++c) masks.push_back(relu(detail::rows(mask_pre, c * cfg.N, cfg.N)));
  if (cache) {
    cache->norm = std::move(norm);
    cache->normed = std::move(normed);
    cache->z0 = std::move(z0);
    cache->blocks = std::move(bcs);
    cache->mask_in = std::move(mask_in);
    cache->mask_pre = std::move(mask_pre);
    cache->masks = masks;
  }
  return masks;
}

/// Full separation pipeline; each output has the input's length.
inline std::vector<Waveform> separate(const Waveform& x, const SeparatorModel& m, ForwardCache* cache = nullptr) {
  const auto& cfg = m.config;
  if (x.size() < cfg.L)
    throw EmptyInputError("separate: input has " + std::to_string(x.size()) + " samples, need at least " + std::to_string(cfg.L));
  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  fc.length = x.size();
  fc.frames = segment(x, cfg.L);
  fc.w = encode(fc.frames, m[m.encoder], &fc.enc_pre);
  const auto masks = estimate_masks(fc.w, m, cache ? &fc : nullptr);
  fc.v.clear();
  std::vector<Waveform> out;
  for (std::size_t c = 0; c < cfg.C; ++c) {
    Tensor v = apply_mask(fc.w, masks[c]);
    out.push_back(Waveform{overlap_add(decode(v, m[m.decoder]), x.size()), x.sample_rate});
    if (cache) fc.v.push_back(std::move(v));
  }
  return out;
}

/// Accumulates parameter gradients given d(loss)/d(output waveform) per source.
inline void separator_backward(SeparatorModel& m, const ForwardCache& fc, const std::vector<std::vector<double>>& dsources) {
  const auto& cfg = m.config;
  auto& ps = m.params;
  if (dsources.size() != cfg.C) throw ShapeError("separator_backward: one gradient per source required");
  const std::size_t frames = fc.frames.num_frames();
  Tensor dw(fc.w.shape());
  Tensor dmask_pre(fc.mask_pre.shape());
  for (std::size_t c = 0; c < cfg.C; ++c) {
    const Tensor gframes = overlap_add_backward(dsources[c], frames, cfg.L);
    const Tensor dv = decode_backward(fc.v[c], ps.value(m.decoder), gframes, ps.grad(m.decoder));
    const Tensor& mask = fc.masks[c];
    for (std::size_t n = 0; n < cfg.N; ++n)
      for (std::size_t t = 0; t < frames; ++t) {
        const double g = dv(n, t);
        dw(n, t) += g * mask(n, t);
        const double pre = fc.mask_pre(c * cfg.N + n, t);
        if (pre > 0.0) dmask_pre(c * cfg.N + n, t) = g * fc.w(n, t);
      }
  }
  Tensor dmask_in = channel_linear_backward(fc.mask_in, ps.value(m.mask_w), dmask_pre, ps.grad(m.mask_w), &ps.grad(m.mask_b));
  Tensor dz;
  const Tensor* dskip = nullptr;
  if (cfg.skip_connections) {
    dskip = &dmask_in;
    dz = Tensor(fc.z0.shape());
  } else {
    dz = dmask_in;
  }
  for (std::size_t i = cfg.num_blocks(); i-- > 0;) dz += detail::block_backward(m, i, fc.blocks[i], dz, dskip);
  const Tensor dnormed = channel_linear_backward(fc.normed, ps.value(m.bottleneck_w), dz, ps.grad(m.bottleneck_w),
                                                 &ps.grad(m.bottleneck_b));
  dw += cumulative_layer_norm_backward(fc.norm, ps.value(m.norm_gain), dnormed, ps.grad(m.norm_gain), ps.grad(m.norm_bias));
  encode_backward(fc.frames, ps.value(m.encoder), fc.enc_pre, dw, ps.grad(m.encoder));
}

}  // namespace dtcn
