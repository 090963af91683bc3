#pragma once

// End-to-end training recipe over manifests: epochs, optional dynamic
// mixing, periodic evaluation and learning-rate schedule.

#include <chrono>
#include <functional>
#include <optional>

#include "dtcn/config.hpp"
#include "dtcn/trainer.hpp"

namespace dtcn {

struct EpochRecord {
  std::uint64_t epoch = 0;  // 1-based count of completed epochs
  double train_loss = 0.0;
  std::optional<EvalReport> eval;
  bool improved = false;  // new best validation ΔSISDR
  double lr = 0.0;        // after the schedule update
  double seconds = 0.0;
};

struct RecipeHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(const TrainState&, const EpochRecord&)> on_epoch;
};

inline Manifest train_manifest(const RunConfig& rc) { return build_manifest(rc.data, rc.train_count, rc.pool_seed, rc.train_seed); }
inline Manifest eval_manifest(const RunConfig& rc) { return build_manifest(rc.data, rc.eval_count, rc.pool_seed, rc.eval_seed); }

/// Trains until `st.epoch == rc.train.epochs`. Resuming a saved state continues the same sequence.
inline TrainState run_training(TrainState st, const TrainConfig& tc, const Manifest& train, const std::vector<MixtureExample>& eval,
                               const RecipeHooks& hooks = {}) {
  tc.validate();
  std::vector<MixtureExample> fixed;
  if (!tc.dynamic_mixing) fixed = materialize(train);
  while (st.epoch < tc.epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    const auto data = tc.dynamic_mixing ? materialize(dynamic_remix(train, st.epoch)) : std::vector<MixtureExample>{};
    rec.train_loss = train_epoch(st, tc.dynamic_mixing ? data : fixed, tc, hooks.on_step).mean_loss;
    rec.epoch = st.epoch;
    if (!eval.empty() && st.epoch % tc.eval_interval == 0) {
      rec.eval = evaluate(st.model, eval);
      const double before = st.best_delta;
      update_schedule(st, rec.eval->mean_delta, tc);
      rec.improved = st.best_delta > before;
    }
    rec.lr = st.lr;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (hooks.on_epoch) hooks.on_epoch(st, rec);
  }
  return st;
}

}  // namespace dtcn
