#pragma once

// Dilated depthwise convolution and its deformable counterpart.
//
// Both use "same" zero padding: output frame l is anchored at input index
// a = l - pad with pad = ((P-1)*f)/2, and tap p (0-based) nominally reads
// a + f*p. The deformable version reads a + f*p + tau[l,p] by two-point
// linear interpolation; the lower interpolation index is clamped to
// a + P*f - 1, which bounds how far right a tap can reach. Offsets are shared
// by all channels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtcn/tensor.hpp"

namespace dtcn {

struct DepthwiseKernel {
  Tensor weights;  // (channels, taps)
  std::size_t dilation = 1;

  std::size_t channels() const { return weights.dim(0); }
  std::size_t taps() const { return weights.dim(1); }
};

struct OffsetField {
  Tensor tau;  // (frames, taps)
};

struct DeformGrads {
  Tensor dy;
  Tensor dk;
  Tensor dtau;
};

inline std::size_t same_padding(std::size_t taps, std::size_t dilation) { return ((taps - 1) * dilation) / 2; }

namespace detail {

inline void check_kernel(const Tensor& y, const DepthwiseKernel& k, const char* what) {
  if (y.rank() != 2) throw ShapeError(std::string(what) + ": input must be (channel, time)");
  if (k.weights.rank() != 2 || k.weights.dim(0) != y.dim(0) || k.taps() < 1)
    throw ShapeError(std::string(what) + ": kernel " + shape_str(k.weights.shape()) + " vs input " + shape_str(y.shape()));
  if (k.dilation < 1) throw std::invalid_argument(std::string(what) + ": dilation must be >= 1");
}

inline double read(const double* row, std::int64_t len, std::int64_t u) { return (u >= 0 && u < len) ? row[u] : 0.0; }

/// Two-point sampling stencil for one (frame, tap) position.
struct Stencil {
  std::int64_t u0 = 0;
  double w0 = 0.0, w1 = 0.0;    // interpolation weights of u0 and u0 + 1
  double dw0 = 0.0, dw1 = 0.0;  // left derivatives of those weights w.r.t. position
};

// Left derivative of max(0, 1 - |u - pos|) w.r.t. pos.
inline double hat_slope(double u, double pos) {
  if (pos > u - 1.0 && pos <= u) return 1.0;
  if (pos > u && pos <= u + 1.0) return -1.0;
  return 0.0;
}

inline Stencil make_stencil(double pos, double upper, std::int64_t len) {
  // At an exact integer the stencil starts one sample to the left. The value
  // is unchanged (the integer sample gets weight 1 either way) while the
  // derivative picks up the left limit.
  double lo = std::floor(pos);
  if (lo == pos) lo -= 1.0;
  lo = std::min(lo, upper);
  Stencil s;
  s.w0 = std::max(0.0, 1.0 - std::abs(lo - pos));
  s.w1 = std::max(0.0, 1.0 - std::abs(lo + 1.0 - pos));
  s.dw0 = hat_slope(lo, pos);
  s.dw1 = hat_slope(lo + 1.0, pos);
  // Both reads fall outside the signal beyond these bounds, where zero extension applies.
  s.u0 = static_cast<std::int64_t>(std::clamp(lo, -2.0, static_cast<double>(len) + 1.0));
  return s;
}

inline std::vector<Stencil> stencils(const OffsetField& tau, std::size_t frames, std::size_t taps, std::size_t dilation,
                                     std::size_t len) {
  const auto pad = static_cast<double>(same_padding(taps, dilation));
  const double f = static_cast<double>(dilation);
  std::vector<Stencil> out(frames * taps);
  for (std::size_t l = 0; l < frames; ++l) {
    const double anchor = static_cast<double>(l) - pad;
    const double upper = anchor + static_cast<double>(taps) * f - 1.0;
    for (std::size_t p = 0; p < taps; ++p) {
      const double pos = anchor + f * static_cast<double>(p) + tau.tau(l, p);
      if (!std::isfinite(pos)) throw std::invalid_argument("ddconv: non-finite sampling position");
      out[l * taps + p] = make_stencil(pos, upper, static_cast<std::int64_t>(len));
    }
  }
  return out;
}

}  // namespace detail

/// Linear interpolation of channel g at a real position; zero outside [0, L-1].
inline double linear_interp(const Tensor& y, double pos, std::size_t g) {
  if (!std::isfinite(pos)) throw std::invalid_argument("linear_interp: non-finite position");
  const auto len = static_cast<std::int64_t>(y.dim(1));
  const double lo = std::floor(pos);
  if (lo < -2.0 || lo > static_cast<double>(len)) return 0.0;
  const auto u = static_cast<std::int64_t>(lo);
  const double frac = pos - lo;
  const double* row = &y(g, 0);
  return (1.0 - frac) * detail::read(row, len, u) + frac * detail::read(row, len, u + 1);
}

inline Tensor dconv(const Tensor& y, const DepthwiseKernel& k) {
  detail::check_kernel(y, k, "dconv");
  const std::size_t G = y.dim(0), P = k.taps(), f = k.dilation;
  const auto L = static_cast<std::int64_t>(y.dim(1));
  const auto pad = static_cast<std::int64_t>(same_padding(P, f));
  Tensor out(y.shape());
  for (std::size_t g = 0; g < G; ++g) {
    const double* row = &y(g, 0);
    double* o = &out(g, 0);
    for (std::size_t p = 0; p < P; ++p) {
      const double w = k.weights(g, p);
      const std::int64_t shift = static_cast<std::int64_t>(f * p) - pad;
      const std::int64_t lo = std::max<std::int64_t>(0, -shift);
      const std::int64_t hi = std::min<std::int64_t>(L, L - shift);
      for (std::int64_t l = lo; l < hi; ++l) o[l] += w * row[l + shift];
    }
  }
  return out;
}

/// Gradients w.r.t. input and kernel (dtau left empty).
inline DeformGrads dconv_backward(const Tensor& gout, const Tensor& y, const DepthwiseKernel& k) {
  const std::size_t G = y.dim(0), P = k.taps(), f = k.dilation;
  const auto L = static_cast<std::int64_t>(y.dim(1));
  const auto pad = static_cast<std::int64_t>(same_padding(P, f));
  DeformGrads g{Tensor(y.shape()), Tensor(k.weights.shape()), Tensor{}};
  for (std::size_t c = 0; c < G; ++c) {
    const double* row = &y(c, 0);
    const double* go = &gout(c, 0);
    double* dy = &g.dy(c, 0);
    for (std::size_t p = 0; p < P; ++p) {
      const double w = k.weights(c, p);
      const std::int64_t shift = static_cast<std::int64_t>(f * p) - pad;
      const std::int64_t lo = std::max<std::int64_t>(0, -shift);
      const std::int64_t hi = std::min<std::int64_t>(L, L - shift);
      double acc = 0.0;
      for (std::int64_t l = lo; l < hi; ++l) {
        acc += go[l] * row[l + shift];
        dy[l + shift] += w * go[l];
      }
      g.dk(c, p) += acc;
    }
  }
  return g;
}

inline Tensor ddconv(const Tensor& y, const DepthwiseKernel& k, const OffsetField& tau) {
  detail::check_kernel(y, k, "ddconv");
  const std::size_t G = y.dim(0), L = y.dim(1), P = k.taps();
  if (tau.tau.rank() != 2 || tau.tau.dim(0) != L || tau.tau.dim(1) != P)
    throw ShapeError("ddconv: offsets " + shape_str(tau.tau.shape()) + " expected [" + std::to_string(L) + "x" +
                     std::to_string(P) + "]");
  const auto st = detail::stencils(tau, L, P, k.dilation, L);
  const auto len = static_cast<std::int64_t>(L);
  Tensor out(y.shape());
  for (std::size_t g = 0; g < G; ++g) {
    const double* row = &y(g, 0);
    const double* kw = &k.weights(g, 0);
    double* o = &out(g, 0);
    for (std::size_t l = 0; l < L; ++l) {
      double acc = 0.0;
      for (std::size_t p = 0; p < P; ++p) {
        const auto& s = st[l * P + p];
        acc += kw[p] * (s.w0 * detail::read(row, len, s.u0) + s.w1 * detail::read(row, len, s.u0 + 1));
      }
      o[l] = acc;
    }
  }
  return out;
}

inline DeformGrads ddconv_backward(const Tensor& gout, const Tensor& y, const DepthwiseKernel& k, const OffsetField& tau) {
  const std::size_t G = y.dim(0), L = y.dim(1), P = k.taps();
  const auto st = detail::stencils(tau, L, P, k.dilation, L);
  const auto len = static_cast<std::int64_t>(L);
  DeformGrads g{Tensor(y.shape()), Tensor(k.weights.shape()), Tensor(tau.tau.shape())};
  for (std::size_t c = 0; c < G; ++c) {
    const double* row = &y(c, 0);
    const double* go = &gout(c, 0);
    const double* kw = &k.weights(c, 0);
    double* dy = &g.dy(c, 0);
    for (std::size_t l = 0; l < L; ++l) {
      const double gl = go[l];
      if (gl == 0.0) continue;
      for (std::size_t p = 0; p < P; ++p) {
        const auto& s = st[l * P + p];
        const double y0 = detail::read(row, len, s.u0), y1 = detail::read(row, len, s.u0 + 1);
        g.dk(c, p) += gl * (s.w0 * y0 + s.w1 * y1);
        g.dtau(l, p) += gl * kw[p] * (s.dw0 * y0 + s.dw1 * y1);
        const double gk = gl * kw[p];
        if (s.u0 >= 0 && s.u0 < len) dy[s.u0] += gk * s.w0;
        if (s.u0 + 1 >= 0 && s.u0 + 1 < len) dy[s.u0 + 1] += gk * s.w1;
      }
    }
  }
  return g;
}

}  // namespace dtcn
