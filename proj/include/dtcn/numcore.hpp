#pragma once

// Elementary layers over (channel, time) tensors, each with an explicit
// vector-Jacobian product. Backward functions return the input gradient and
// accumulate (+=) parameter gradients into caller-owned buffers.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dtcn/tensor.hpp"

namespace dtcn {

inline constexpr double kEps = 1e-8;

namespace detail {
inline void require_rank2(const Tensor& x, const char* what) {
  if (x.rank() != 2) throw ShapeError(std::string(what) + ": expected (channel, time) tensor, got " + shape_str(x.shape()));
}
}  // namespace detail

// ---- pointwise (1x1) convolution -------------------------------------------

/// out[c,t] = b[c] + sum_j x[j,t] * W[j,c]. An empty `b` means no bias.
inline Tensor channel_linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  detail::require_rank2(x, "channel_linear");
  if (W.rank() != 2 || W.dim(0) != x.dim(0))
    throw ShapeError("channel_linear: weight " + shape_str(W.shape()) + " incompatible with input " + shape_str(x.shape()));
  const std::size_t cin = W.dim(0), cout = W.dim(1), T = x.dim(1);
  if (!b.empty() && b.size() != cout)
    throw ShapeError("channel_linear: bias has " + std::to_string(b.size()) + " entries, expected " + std::to_string(cout));
  Tensor out({cout, T});
  for (std::size_t c = 0; c < cout; ++c) {
    double* o = &out(c, 0);
    if (!b.empty()) std::fill(o, o + T, b[c]);
    for (std::size_t j = 0; j < cin; ++j) {
      const double w = W(j, c);
      if (w == 0.0) continue;
      const double* xi = &x(j, 0);
      for (std::size_t t = 0; t < T; ++t) o[t] += w * xi[t];
    }
  }
  return out;
}

inline Tensor channel_linear_backward(const Tensor& x, const Tensor& W, const Tensor& gout, Tensor& dW, Tensor* db) {
  const std::size_t cin = W.dim(0), cout = W.dim(1), T = x.dim(1);
  Tensor dx({cin, T});
  for (std::size_t c = 0; c < cout; ++c) {
    const double* g = &gout(c, 0);
    if (db) {
      double s = 0.0;
      for (std::size_t t = 0; t < T; ++t) s += g[t];
      (*db)[c] += s;
    }
    for (std::size_t j = 0; j < cin; ++j) {
      const double* xi = &x(j, 0);
      double s = 0.0;
      for (std::size_t t = 0; t < T; ++t) s += xi[t] * g[t];
      dW(j, c) += s;
      const double w = W(j, c);
      if (w == 0.0) continue;
      double* d = &dx(j, 0);
      for (std::size_t t = 0; t < T; ++t) d[t] += w * g[t];
    }
  }
  return dx;
}

// ---- activations ----------------------------------------------------------

inline Tensor relu(Tensor x) {
  for (auto& v : x.data()) v = v > 0.0 ? v : 0.0;
  return x;
}

/// Gradient of relu given its *input*; zero at and below 0.
inline Tensor relu_backward(const Tensor& x, Tensor g) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(x[i] > 0.0)) g[i] = 0.0;
  return g;
}

/// Slope `a` holds either one value shared by every channel or one per channel.
inline Tensor prelu(Tensor x, const Tensor& a) {
  const std::size_t C = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t T = x.size() / std::max<std::size_t>(C, 1);
  if (a.size() != 1 && a.size() != C)
    throw ShapeError("prelu: slope must be scalar or per-channel, got " + shape_str(a.shape()));
  for (std::size_t c = 0; c < C; ++c) {
    const double s = a.size() == 1 ? a[0] : a[c];
    for (std::size_t t = 0; t < T; ++t) {
      double& v = x[c * T + t];
      if (v < 0.0) v *= s;
    }
  }
  return x;
}

inline Tensor prelu_backward(const Tensor& x, const Tensor& a, Tensor g, Tensor& da) {
  const std::size_t C = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t T = x.size() / std::max<std::size_t>(C, 1);
  for (std::size_t c = 0; c < C; ++c) {
    const bool shared = a.size() == 1;
    const double s = shared ? a[0] : a[c];
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t i = c * T + t;
      if (x[i] < 0.0) {
        acc += g[i] * x[i];
        g[i] *= s;
      }
    }
    da[shared ? 0 : c] += acc;
  }
  return g;
}

// ---- normalization ----------------------------------------------------------

struct NormCache {
  Tensor input;
  Tensor xhat;
  std::vector<double> mean;  // one entry (global) or one per frame (cumulative)
  std::vector<double> rstd;
};

namespace detail {
inline Tensor norm_affine(const Tensor& xhat, const Tensor& gain, const Tensor& bias) {
  const std::size_t C = xhat.dim(0), T = xhat.dim(1);
  if (gain.size() != C || bias.size() != C)
    throw ShapeError("layer norm: gain/bias must have one entry per channel (" + std::to_string(C) + ")");
  Tensor y({C, T});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t) y(c, t) = xhat(c, t) * gain[c] + bias[c];
  return y;
}

// Returns ghat = g * gain and accumulates affine gradients.
inline Tensor norm_affine_backward(const NormCache& cache, const Tensor& gain, const Tensor& g, Tensor& dgain, Tensor& dbias) {
  const std::size_t C = g.dim(0), T = g.dim(1);
  Tensor ghat({C, T});
  for (std::size_t c = 0; c < C; ++c) {
    double sg = 0.0, sgx = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      sg += g(c, t);
      sgx += g(c, t) * cache.xhat(c, t);
      ghat(c, t) = g(c, t) * gain[c];
    }
    dgain[c] += sgx;
    dbias[c] += sg;
  }
  return ghat;
}
}  // namespace detail

/// Normalizes jointly over channel and time, then applies a per-channel affine map.
inline Tensor global_layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, NormCache* cache = nullptr) {
  detail::require_rank2(x, "global_layer_norm");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x.data()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x.data()) var += (v - mean) * (v - mean);
  var /= n;
  const double r = 1.0 / std::sqrt(var + kEps);
  Tensor xhat(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) xhat[i] = (x[i] - mean) * r;
  Tensor y = detail::norm_affine(xhat, gain, bias);
  if (cache) *cache = NormCache{x, std::move(xhat), {mean}, {r}};
  return y;
}

inline Tensor global_layer_norm_backward(const NormCache& cache, const Tensor& gain, const Tensor& g, Tensor& dgain, Tensor& dbias) {
  const Tensor ghat = detail::norm_affine_backward(cache, gain, g, dgain, dbias);
  const double n = static_cast<double>(g.size());
  double mg = 0.0, mgx = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    mg += ghat[i];
    mgx += ghat[i] * cache.xhat[i];
  }
  mg /= n;
  mgx /= n;
  const double r = cache.rstd[0];
  Tensor dx(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) dx[i] = r * (ghat[i] - mg - cache.xhat[i] * mgx);
  return dx;
}

/// Frame t is normalized with statistics over every channel of frames 0..t.
inline Tensor cumulative_layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, NormCache* cache = nullptr) {
  detail::require_rank2(x, "cumulative_layer_norm");
  const std::size_t C = x.dim(0), T = x.dim(1);
  std::vector<double> mean(T), rstd(T);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      s1 += x(c, t);
      s2 += x(c, t) * x(c, t);
    }
    const double n = static_cast<double>(C * (t + 1));
    mean[t] = s1 / n;
    const double var = std::max(0.0, s2 / n - mean[t] * mean[t]);
    rstd[t] = 1.0 / std::sqrt(var + kEps);
  }
  Tensor xhat(x.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t) xhat(c, t) = (x(c, t) - mean[t]) * rstd[t];
  Tensor y = detail::norm_affine(xhat, gain, bias);
  if (cache) *cache = NormCache{x, std::move(xhat), std::move(mean), std::move(rstd)};
  return y;
}

inline Tensor cumulative_layer_norm_backward(const NormCache& cache, const Tensor& gain, const Tensor& g, Tensor& dgain, Tensor& dbias) {
  const Tensor ghat = detail::norm_affine_backward(cache, gain, g, dgain, dbias);
  const Tensor& x = cache.input;
  const std::size_t C = g.dim(0), T = g.dim(1);
  // Per frame t: dL/dmean_t = A_t, dL/dvar_t = B_t; both feed every earlier frame.
  std::vector<double> a_over_n(T), b_over_n(T), bmu_over_n(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double r = cache.rstd[t];
    double sg = 0.0, sgc = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      sg += ghat(c, t);
      sgc += ghat(c, t) * (x(c, t) - cache.mean[t]);
    }
    const double n = static_cast<double>(C * (t + 1));
    const double A = -r * sg;
    const double B = -0.5 * r * r * r * sgc;
    a_over_n[t] = A / n;
    b_over_n[t] = B / n;
    bmu_over_n[t] = B * cache.mean[t] / n;
  }
  Tensor dx(g.shape());
  double ca = 0.0, cb = 0.0, cbm = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    ca += a_over_n[t];
    cb += b_over_n[t];
    cbm += bmu_over_n[t];
    for (std::size_t c = 0; c < C; ++c)
      dx(c, t) = cache.rstd[t] * ghat(c, t) + ca + 2.0 * x(c, t) * cb - 2.0 * cbm;
  }
  return dx;
}

// ---- finite-difference verification ----------------------------------------

/// Central-difference comparison against analytic gradients of a scalar loss.
/// Returns the max over all entries of |a - n| / max(1e-8, |a| + |n|).
inline double grad_check(const std::function<double(const std::vector<Tensor>&)>& loss,
                         std::vector<Tensor> inputs, const std::vector<Tensor>& analytic, double h = 1e-6) {
  if (inputs.size() != analytic.size()) throw ShapeError("grad_check: one analytic gradient per input required");
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    inputs[k].require_same_shape(analytic[k], "grad_check");
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + h;
      const double fp = loss(inputs);
      inputs[k][i] = orig - h;
      const double fm = loss(inputs);
      inputs[k][i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      if (!std::isfinite(numeric) || !std::isfinite(a))
        throw NonFiniteError("grad_check: non-finite gradient at input " + std::to_string(k) + "[" + std::to_string(i) + "]");
      worst = std::max(worst, std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace dtcn
