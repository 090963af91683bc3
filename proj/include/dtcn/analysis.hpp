#pragma once

// Offset-field study: capture per-block offsets, average them per utterance,
// pick the block with the largest offset variance, and correlate mean offsets
// of different kernel taps across utterances.

#include <algorithm>
#include <cmath>
#include <limits>
#include <iomanip>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtcn/model.hpp"

namespace dtcn {

struct UndefinedCorrelationError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Offsets of one block for one utterance, (frames, taps).
struct OffsetTrace {
  std::size_t block = 0;
  Tensor tau;
};

/// Separates `x` and records every block's offset field; `outputs` receives the separation.
inline std::vector<OffsetTrace> capture_offsets(const SeparatorModel& m, const Waveform& x, std::vector<Waveform>* outputs = nullptr) {
  if (!m.config.deformable) throw std::invalid_argument("capture_offsets: model has no deformable blocks");
  ForwardCache cache;
  auto out = separate(x, m, &cache);
  std::vector<OffsetTrace> traces;
  for (std::size_t i = 0; i < cache.blocks.size(); ++i) traces.push_back({i, std::move(cache.blocks[i].tau.tau)});
  if (outputs) *outputs = std::move(out);
  return traces;
}

/// Per-tap mean over frames.
inline std::vector<double> utterance_means(const OffsetTrace& t) {
  if (t.tau.empty()) throw std::invalid_argument("utterance_means: empty trace");
  const std::size_t L = t.tau.dim(0), P = t.tau.dim(1);
  std::vector<double> mean(P, 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t p = 0; p < P; ++p) mean[p] += t.tau(l, p);
  for (auto& v : mean) v /= static_cast<double>(L);
  return mean;
}

/// Population variance pooled over every (frame, tap) entry.
inline double trace_variance(const OffsetTrace& t) {
  if (t.tau.empty()) throw std::invalid_argument("trace_variance: empty trace");
  const auto n = static_cast<double>(t.tau.size());
  double mean = 0.0;
  for (double v : t.tau.data()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : t.tau.data()) var += (v - mean) * (v - mean);
  return var / n;
}

struct BlockStats {
  std::size_t block = 0;
  std::vector<double> mean_offsets;  // per tap, averaged over utterances
  double variance = 0.0;             // trace variance averaged over utterances
};

/// `traces[u][b]` is block b of utterance u.
inline std::vector<BlockStats> block_stats(const std::vector<std::vector<OffsetTrace>>& traces) {
  if (traces.empty() || traces[0].empty()) throw std::invalid_argument("block_stats: no traces");
  const std::size_t blocks = traces[0].size();
  std::vector<BlockStats> stats(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    stats[b].block = traces[0][b].block;
    stats[b].mean_offsets.assign(traces[0][b].tau.dim(1), 0.0);
  }
  for (const auto& utt : traces) {
    if (utt.size() != blocks) throw std::invalid_argument("block_stats: utterances disagree on block count");
    for (std::size_t b = 0; b < blocks; ++b) {
      const auto means = utterance_means(utt[b]);
      for (std::size_t p = 0; p < means.size(); ++p) stats[b].mean_offsets[p] += means[p];
      stats[b].variance += trace_variance(utt[b]);
    }
  }
  const auto U = static_cast<double>(traces.size());
  for (auto& s : stats) {
    for (auto& v : s.mean_offsets) v /= U;
    s.variance /= U;
  }
  return stats;
}

/// Position (within `stats`) of the highest average variance; ties go to the lowest.
inline std::size_t select_block(const std::vector<BlockStats>& stats) {
  if (stats.empty()) throw std::invalid_argument("select_block: no blocks");
  std::size_t best = 0;
  for (std::size_t i = 1; i < stats.size(); ++i)
    if (stats[i].variance > stats[best].variance) best = i;
  return best;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: need two equal-length sequences of at least 2");
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedCorrelationError("pearson: zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct ScatterTable {
  std::size_t p = 0, q = 0;  // tap indices (0-based)
  std::vector<double> x, y;  // mean offset of tap p / tap q per utterance
  bool defined = false;  // false when either tap has zero variance across utterances
  double rho = 0.0;
  double slope = 0.0, intercept = 0.0;  // least-squares y = slope * x + intercept
};

/// `means[u][p]` is the mean offset of tap p in utterance u. A zero-variance tap leaves the fit undefined (NaN).
inline ScatterTable export_scatter(const std::vector<std::vector<double>>& means, std::size_t p, std::size_t q) {
  if (means.size() < 2) throw std::invalid_argument("export_scatter: need at least two utterances");
  ScatterTable t;
  t.p = p;
  t.q = q;
  for (const auto& m : means) {
    t.x.push_back(m.at(p));
    t.y.push_back(m.at(q));
  }
  try {
    t.rho = pearson(t.x, t.y);
  } catch (const UndefinedCorrelationError&) {
    t.rho = t.slope = t.intercept = std::numeric_limits<double>::quiet_NaN();
    return t;
  }
  t.defined = true;
  const auto n = static_cast<double>(t.x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < t.x.size(); ++i) {
    mx += t.x[i];
    my += t.y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < t.x.size(); ++i) {
    sxy += (t.x[i] - mx) * (t.y[i] - my);
    sxx += (t.x[i] - mx) * (t.x[i] - mx);
  }
  t.slope = sxy / sxx;
  t.intercept = my - t.slope * mx;
  return t;
}

/// Columns: utterance,tau_p,tau_q (taps 1-based in the header); fit summary as trailing comment lines.
inline void write_scatter_csv(std::ostream& os, const ScatterTable& t) {
  os << std::setprecision(17);
  os << "utterance,tau" << t.p + 1 << ",tau" << t.q + 1 << '\n';
  for (std::size_t i = 0; i < t.x.size(); ++i) os << i << ',' << t.x[i] << ',' << t.y[i] << '\n';
  os << "# rho=" << t.rho << " slope=" << t.slope << " intercept=" << t.intercept << '\n';
}

/// Columns: block,stack_position,repeat,variance,mean_tau1..mean_tauP.
inline void write_block_stats_csv(std::ostream& os, const std::vector<BlockStats>& stats, std::size_t X) {
  os << std::setprecision(17);
  os << "block,stack_position,repeat,variance";
  const std::size_t P = stats.empty() ? 0 : stats[0].mean_offsets.size();
  for (std::size_t p = 0; p < P; ++p) os << ",mean_tau" << p + 1;
  os << '\n';
  for (const auto& s : stats) {
    os << s.block << ',' << s.block % X << ',' << s.block / X << ',' << s.variance;
    for (double v : s.mean_offsets) os << ',' << v;
    os << '\n';
  }
}

}  // namespace dtcn
