#pragma once

// 50%-overlap framing, the learned encoder/decoder pair, masking and
// overlap-add reconstruction.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtcn/numcore.hpp"
#include "dtcn/tensor.hpp"

namespace dtcn {

struct EmptyInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;

  std::size_t size() const { return samples.size(); }
  friend bool operator==(const Waveform&, const Waveform&) = default;
};

/// Frames stored as (frame, sample-in-frame); hop is always half the block length.
struct FrameMatrix {
  Tensor frames;
  std::size_t hop = 0;

  std::size_t num_frames() const { return frames.dim(0); }
  std::size_t block() const { return frames.dim(1); }
};

/// Length after tail zero-padding so that the final frame is complete.
inline std::size_t padded_length(std::size_t n, std::size_t block) {
  const std::size_t hop = block / 2;
  if (n <= block) return block;
  return block + ((n - block + hop - 1) / hop) * hop;
}

inline std::size_t num_frames_for(std::size_t n, std::size_t block) {
  return (padded_length(n, block) - block) / (block / 2) + 1;
}

inline FrameMatrix segment(std::span<const double> x, std::size_t block) {
  if (x.empty()) throw EmptyInputError("segment: empty waveform");
  if (block < 2 || block % 2 != 0) throw std::invalid_argument("segment: block length must be even and >= 2");
  const std::size_t hop = block / 2;
  const std::size_t frames = num_frames_for(x.size(), block);
  FrameMatrix out{Tensor({frames, block}), hop};
  for (std::size_t l = 0; l < frames; ++l)
    for (std::size_t i = 0; i < block; ++i) {
      const std::size_t src = l * hop + i;
      out.frames(l, i) = src < x.size() ? x[src] : 0.0;
    }
  return out;
}

inline FrameMatrix segment(const Waveform& x, std::size_t block) { return segment(x.samples, block); }

/// Number of frames covering each sample of the padded signal (1 at the edges, 2 inside).
inline std::vector<double> overlap_counts(std::size_t frames, std::size_t block) {
  const std::size_t hop = block / 2;
  std::vector<double> count((frames - 1) * hop + block, 0.0);
  for (std::size_t l = 0; l < frames; ++l)
    for (std::size_t i = 0; i < block; ++i) count[l * hop + i] += 1.0;
  return count;
}

inline std::vector<double> overlap_add(const FrameMatrix& fm, std::size_t out_len) {
  const std::size_t L = fm.num_frames(), block = fm.block(), hop = fm.hop;
  if (hop * 2 != block) throw std::invalid_argument("overlap_add: hop must be half the block length");
  const std::size_t full = (L - 1) * hop + block;
  if (out_len > full)
    throw std::invalid_argument("overlap_add: requested " + std::to_string(out_len) + " samples but only " +
                                std::to_string(full) + " are reconstructable");
  const auto count = overlap_counts(L, block);
  std::vector<double> out(full, 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t i = 0; i < block; ++i) out[l * hop + i] += fm.frames(l, i);
  for (std::size_t i = 0; i < full; ++i) out[i] /= count[i];
  out.resize(out_len);
  return out;
}

inline Tensor overlap_add_backward(std::span<const double> gout, std::size_t frames, std::size_t block) {
  const std::size_t hop = block / 2;
  const auto count = overlap_counts(frames, block);
  Tensor g({frames, block});
  for (std::size_t l = 0; l < frames; ++l)
    for (std::size_t i = 0; i < block; ++i) {
      const std::size_t s = l * hop + i;
      if (s < gout.size()) g(l, i) = gout[s] / count[s];
    }
  return g;
}

// ---- encoder / decoder ------------------------------------------------------

/// w = relu(frames * B), returned as (N, frames) so each basis channel is contiguous.
inline Tensor encode(const FrameMatrix& fm, const Tensor& basis, Tensor* pre_activation = nullptr) {
  if (basis.rank() != 2 || basis.dim(0) != fm.block())
    throw ShapeError("encode: basis " + shape_str(basis.shape()) + " does not match block length " + std::to_string(fm.block()));
  Tensor pre = channel_linear(fm.frames.transposed(), basis, Tensor{});
  Tensor w = relu(pre);
  if (pre_activation) *pre_activation = std::move(pre);
  return w;
}

/// Returns d(frames) and accumulates d(basis).
inline Tensor encode_backward(const FrameMatrix& fm, const Tensor& basis, const Tensor& pre_activation,
                              const Tensor& gout, Tensor& dbasis) {
  const Tensor g = relu_backward(pre_activation, gout);
  return channel_linear_backward(fm.frames.transposed(), basis, g, dbasis, nullptr).transposed();
}

inline Tensor apply_mask(const Tensor& w, const Tensor& mask) {
  w.require_same_shape(mask, "apply_mask");
  Tensor v(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) v[i] = w[i] * mask[i];
  return v;
}

/// Frames = v^T * U; v is (N, frames), U is (N, block).
inline FrameMatrix decode(const Tensor& v, const Tensor& synthesis) {
  if (synthesis.rank() != 2 || synthesis.dim(0) != v.dim(0))
    throw ShapeError("decode: synthesis basis " + shape_str(synthesis.shape()) + " does not match features " + shape_str(v.shape()));
  const std::size_t block = synthesis.dim(1);
  return FrameMatrix{channel_linear(v, synthesis, Tensor{}).transposed(), block / 2};
}

/// Returns d(v) and accumulates d(U). `gframes` is (frames, block).
inline Tensor decode_backward(const Tensor& v, const Tensor& synthesis, const Tensor& gframes, Tensor& dsynthesis) {
  return channel_linear_backward(v, synthesis, gframes.transposed(), dsynthesis, nullptr);
}

}  // namespace dtcn
