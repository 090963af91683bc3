#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "dtcn/frames.hpp"
#include "dtcn/numcore.hpp"

namespace dtcn {

struct SISDRValue {
  double db = 0.0;
  bool capped = false;  // error energy fell below the stabilizing epsilon
};

namespace detail {
inline void check_pair(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size()) throw ShapeError("sisdr: estimate and reference lengths differ");
  if (ref.empty()) throw EmptyInputError("sisdr: zero-length reference");
}

// Both signals scaled to unit energy; the projection is computed on these.
struct UnitPair {
  std::vector<double> e, r, noise;  // e = est/|est|, r = ref/|ref|, noise = e - alpha r
  double est_norm = 0.0, alpha = 0.0, noise_energy = 0.0;
};

inline UnitPair unit_pair(std::span<const double> est, std::span<const double> ref) {
  check_pair(est, ref);
  const double ref_norm = std::sqrt(sum_sq(ref));
  if (ref_norm == 0.0) throw std::invalid_argument("sisdr: all-zero reference");
  UnitPair u;
  u.est_norm = std::sqrt(sum_sq(est));
  const double inv_est = u.est_norm == 0.0 ? 0.0 : 1.0 / u.est_norm;  // NaN propagates
  u.e.resize(est.size());
  u.r.resize(ref.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    u.e[i] = est[i] * inv_est;
    u.r[i] = ref[i] / ref_norm;
  }
  u.alpha = dot(u.e, u.r);
  u.noise.resize(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) u.noise[i] = u.e[i] - u.alpha * u.r[i];
  u.noise_energy = sum_sq(u.noise);
  return u;
}
}  // namespace detail

/// 10 log10(|a s|^2 / |e - a s|^2) on unit-energy copies e, s of est and ref,
/// a = <e, s>; both energies offset by 1e-8, so a perfect estimate reads
/// 10 log10((1 + 1e-8) / 1e-8) = 80 dB whatever its scale.
inline SISDRValue sisdr(std::span<const double> est, std::span<const double> ref) {
  const auto u = detail::unit_pair(est, ref);
  return {10.0 * std::log10((u.alpha * u.alpha + kEps) / (u.noise_energy + kEps)), u.noise_energy < kEps};
}

inline SISDRValue sisdr(const Waveform& est, const Waveform& ref) { return sisdr(est.samples, ref.samples); }

/// d sisdr(est, ref) [dB] / d est. Zero for an all-zero estimate.
inline std::vector<double> sisdr_grad(std::span<const double> est, std::span<const double> ref) {
  const auto u = detail::unit_pair(est, ref);
  std::vector<double> g(est.size(), 0.0);
  if (u.est_norm == 0.0) return g;
  const double S = u.alpha * u.alpha + kEps, N = u.noise_energy + kEps;
  const double k = 10.0 / std::log(10.0);
  // Gradient w.r.t. the unit-norm estimate, then through e = est / |est|.
  for (std::size_t i = 0; i < est.size(); ++i) g[i] = k * (2.0 * u.alpha * u.r[i] / S - 2.0 * u.noise[i] / N);
  const double radial = dot(g, u.e);
  for (std::size_t i = 0; i < est.size(); ++i) g[i] = (g[i] - radial * u.e[i]) / u.est_norm;
  return g;
}

inline double delta_sisdr(std::span<const double> est, std::span<const double> ref, std::span<const double> mixture) {
  return sisdr(est, ref).db - sisdr(mixture, ref).db;
}

/// perm[i] is the reference index assigned to estimate i.
using PermutationAssignment = std::vector<std::size_t>;

struct PITResult {
  double loss = 0.0;  // mean negative SI-SDR under the chosen assignment
  PermutationAssignment perm;
};

inline double assignment_loss(const std::vector<std::vector<double>>& ests, const std::vector<std::vector<double>>& refs,
                              const PermutationAssignment& perm) {
  double s = 0.0;
  for (std::size_t i = 0; i < ests.size(); ++i) s -= sisdr(ests[i], refs[perm[i]]).db;
  return s / static_cast<double>(ests.size());
}

/// Utterance-level PIT: exhaustive search over all C! assignments.
/// Ties resolve to the lexicographically smallest permutation.
inline PITResult pit_loss(const std::vector<std::vector<double>>& ests, const std::vector<std::vector<double>>& refs) {
  if (ests.empty()) throw std::invalid_argument("pit_loss: no sources");
  if (ests.size() != refs.size()) throw ShapeError("pit_loss: estimate/reference count mismatch");
  for (std::size_t i = 0; i < ests.size(); ++i)
    if (ests[i].size() != ests[0].size() || refs[i].size() != ests[0].size())
      throw ShapeError("pit_loss: all signals must share one length");
  const std::size_t C = ests.size();
  // Pairwise table, then search permutations over it.
  std::vector<double> table(C * C);
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j) table[i * C + j] = -sisdr(ests[i], refs[j]).db;
  PermutationAssignment perm(C);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  PITResult best{std::numeric_limits<double>::infinity(), perm};
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < C; ++i) s += table[i * C + perm[i]];
    s /= static_cast<double>(C);
    if (s < best.loss) best = {s, perm};
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Gradient of the PIT loss w.r.t. each estimate with the assignment held fixed.
inline std::vector<std::vector<double>> pit_loss_grad(const std::vector<std::vector<double>>& ests,
                                                      const std::vector<std::vector<double>>& refs,
                                                      const PermutationAssignment& perm) {
  const double scale = -1.0 / static_cast<double>(ests.size());
  std::vector<std::vector<double>> g;
  for (std::size_t i = 0; i < ests.size(); ++i) {
    auto gi = sisdr_grad(ests[i], refs[perm[i]]);
    for (auto& v : gi) v *= scale;
    g.push_back(std::move(gi));
  }
  return g;
}

}  // namespace dtcn
