#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dtcn/mixsim.hpp"
#include "dtcn/model.hpp"
#include "dtcn/objective.hpp"

namespace dtcn {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 4;
  double lr = 1e-3;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  bool dynamic_mixing = false;
  std::size_t eval_interval = 1;
  std::size_t patience = 3;  // epochs without validation improvement before halving lr
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!epochs || !batch_size || !eval_interval || !patience) throw std::invalid_argument("TrainConfig: counts must be positive");
    if (!(lr > 0.0) || !(clip_norm > 0.0)) throw std::invalid_argument("TrainConfig: lr and clip norm must be positive");
  }
};

struct AdamState {
  std::vector<Tensor> m, v;
};

struct TrainState {
  SeparatorModel model;
  AdamState adam;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double best_delta = -std::numeric_limits<double>::infinity();
  double lr = 1e-3;
  std::uint64_t stall = 0;
};

inline TrainState init_train_state(SeparatorModel model, const TrainConfig& cfg) {
  TrainState s{std::move(model), {}, 0, 0, -std::numeric_limits<double>::infinity(), cfg.lr, 0};
  for (const auto& p : s.model.params.all()) {
    s.adam.m.emplace_back(p.value.shape());
    s.adam.v.emplace_back(p.value.shape());
  }
  return s;
}

/// Rescales gradients in place so the global norm is at most `bound`; returns the pre-clip norm.
inline double clip_grad_norm(ParamStore& ps, double bound) {
  const double norm = ps.grad_norm();
  if (norm > bound) {
    const double s = bound / norm;
    for (auto& p : ps.all()) p.grad *= s;
  }
  return norm;
}

inline void adam_update(TrainState& st, const TrainConfig& cfg) {
  ++st.step;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  auto& params = st.model.params.all();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = st.adam.m[k];
    auto& v = st.adam.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      p.value[i] -= st.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
    }
  }
}

inline std::vector<std::vector<double>> sample_vectors(const std::vector<Waveform>& ws) {
  std::vector<std::vector<double>> out;
  for (const auto& w : ws) out.push_back(w.samples);
  return out;
}

/// Forward + PIT loss + backward for one example; gradients accumulate scaled by `weight`.
inline double accumulate_example_grad(SeparatorModel& model, const MixtureExample& ex, double weight) {
  ForwardCache cache;
  const auto ests = sample_vectors(separate(ex.mixture, model, &cache));
  const auto refs = sample_vectors(ex.direct_targets);
  const PITResult pit = pit_loss(ests, refs);
  auto grads = pit_loss_grad(ests, refs, pit.perm);
  for (auto& g : grads)
    for (auto& v : g) v *= weight;
  separator_backward(model, cache, grads);
  return pit.loss;
}

inline std::vector<MixtureExample> materialize(const Manifest& m) {
  std::vector<MixtureExample> out;
  out.reserve(m.size());
  for (const auto& e : m.examples) out.push_back(build_example(e));
  return out;
}

struct StepLog {
  std::uint64_t epoch, step;
  double loss, lr, grad_norm;
};

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t steps = 0;
};

/// One shuffled pass over `data` with Adam steps on mini-batches.
inline EpochStats train_epoch(TrainState& st, const std::vector<MixtureExample>& data, const TrainConfig& cfg,
                              const std::function<void(const StepLog&)>& on_step = {}) {
  if (data.empty()) throw std::invalid_argument("train_epoch: empty training set");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(cfg.seed, 0x5EED0000 + st.epoch));
  std::shuffle(order.begin(), order.end(), rng);
  EpochStats stats;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    const double weight = 1.0 / static_cast<double>(end - start);
    st.model.params.zero_grad();
    double loss = 0.0;
    for (std::size_t b = start; b < end; ++b) loss += weight * accumulate_example_grad(st.model, data[order[b]], weight);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "non-finite training loss at epoch " << st.epoch << " step " << st.step << " (batch starting at example index "
          << order[start] << ")";
      throw NonFiniteError(msg.str());
    }
    const double norm = clip_grad_norm(st.model.params, cfg.clip_norm);
    adam_update(st, cfg);
    stats.mean_loss += loss;
    ++stats.steps;
    if (on_step) on_step({st.epoch, st.step, loss, st.lr, norm});
  }
  stats.mean_loss /= static_cast<double>(stats.steps);
  ++st.epoch;
  return stats;
}

// ---- evaluation -----------------------------------------------------------------------

struct EvalRow {
  std::size_t id = 0;
  double sisdr_mixture = 0.0;  // mean over sources
  double sisdr_estimate = 0.0;
  double delta = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_delta = 0.0;
  double mean_loss = 0.0;  // mean PIT loss (negative SI-SDR, dB)
};

/// PIT-aligned SI-SDR improvement for already-separated estimates.
inline EvalRow score_example(std::size_t id, const std::vector<std::vector<double>>& ests, const MixtureExample& ex) {
  const auto refs = sample_vectors(ex.direct_targets);
  const PITResult pit = pit_loss(ests, refs);
  EvalRow row{id, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < ests.size(); ++i) {
    row.sisdr_estimate += sisdr(ests[i], refs[pit.perm[i]]).db;
    row.sisdr_mixture += sisdr(ex.mixture.samples, refs[pit.perm[i]]).db;
  }
  const auto C = static_cast<double>(ests.size());
  row.sisdr_estimate /= C;
  row.sisdr_mixture /= C;
  row.delta = row.sisdr_estimate - row.sisdr_mixture;
  return row;
}

inline EvalReport summarize(std::vector<EvalRow> rows) {
  EvalReport r{std::move(rows), 0.0, 0.0};
  for (const auto& row : r.rows) {
    r.mean_delta += row.delta;
    r.mean_loss -= row.sisdr_estimate;
  }
  if (!r.rows.empty()) {
    r.mean_delta /= static_cast<double>(r.rows.size());
    r.mean_loss /= static_cast<double>(r.rows.size());
  }
  return r;
}

inline EvalReport evaluate(const SeparatorModel& model, const std::vector<MixtureExample>& data) {
  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < data.size(); ++i)
    rows.push_back(score_example(i, sample_vectors(separate(data[i].mixture, model)), data[i]));
  return summarize(std::move(rows));
}

inline void write_eval_csv(std::ostream& os, const EvalReport& r) {
  os << "id,sisdr_mixture_db,sisdr_estimate_db,delta_sisdr_db\n";
  os << std::setprecision(10);
  for (const auto& row : r.rows) os << row.id << ',' << row.sisdr_mixture << ',' << row.sisdr_estimate << ',' << row.delta << '\n';
}

/// Tracks validation progress and halves the learning rate after `patience` stalled evaluations.
inline void update_schedule(TrainState& st, double val_delta, const TrainConfig& cfg) {
  if (val_delta > st.best_delta) {
    st.best_delta = val_delta;
    st.stall = 0;
    return;
  }
  if (++st.stall >= cfg.patience) {
    st.lr *= 0.5;
    st.stall = 0;
  }
}

}  // namespace dtcn
