// dtcn: command-line entry point.
//
//   dtcn simulate  --out DIR [--config F] [--set k=v]... [--split train|eval|both] [--count N] [--wav]
//   dtcn train     --out DIR [--config F] [--set k=v]... [--train-manifest F] [--eval-manifest F] [--resume]
//   dtcn separate  --checkpoint F --input WAV [--out DIR]
//   dtcn evaluate  --checkpoint F --manifest F [--out CSV]
//   dtcn analyze   --checkpoint F --manifest F --out DIR [--limit N]
//   dtcn count     [--config F] [--set k=v]... [--length SAMPLES]
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "dtcn/analysis.hpp"
#include "dtcn/checkpoint.hpp"
#include "dtcn/config.hpp"
#include "dtcn/recipe.hpp"
#include "dtcn/wav.hpp"

namespace fs = std::filesystem;
using namespace dtcn;

namespace {

struct ConfigOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "INI config file ([model], [data], [train] sections)");
    app->add_option("--set", overrides, "Override a config value, e.g. --set train.epochs=5 (repeatable)");
    app->add_option("--seed", seed, "Shorthand for --set train.seed=N");
  }

  /// Toy recipe defaults, then the file, then --set overrides, then --seed.
  RunConfig resolve() const {
    RunConfig rc = RunConfig::toy();
    if (!config_path.empty()) rc = load_config(config_path, rc);
    apply_overrides(rc, overrides);
    if (seed) rc.train.seed = *seed;
    rc.validate();
    return rc;
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".write-probe";
  std::ofstream os(probe);
  if (!os) throw std::runtime_error("output directory is not writable: " + dir.string());
  os.close();
  fs::remove(probe, ec);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

/// Echo of the effective configuration plus the command's own arguments.
void write_run_manifest(const fs::path& path, const std::string& command, const std::map<std::string, std::string>& args,
                        const RunConfig* rc, const DTCNConfig* model = nullptr) {
  auto os = open_out(path);
  os << "# dtcn " << command << '\n';
  os << "[run]\ncommand = " << command << '\n';
  for (const auto& [k, v] : args) os << k << " = " << v << '\n';
  os << '\n';
  if (rc) write_config(os, *rc);
  if (model) os << "[checkpoint.model]\n" << format_model_config(*model);
}

Manifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest " + path);
  return read_manifest(is);
}

void check_manifest_matches(const Manifest& m, const DTCNConfig& cfg) {
  if (m.examples.empty()) throw std::runtime_error("manifest has no examples");
  for (const auto& e : m.examples) {
    if (e.sources.size() != cfg.C)
      throw std::runtime_error("manifest example " + std::to_string(e.id) + " has " + std::to_string(e.sources.size()) +
                               " sources but the model separates " + std::to_string(cfg.C));
    if (e.sample_rate != cfg.sample_rate)
      throw std::runtime_error("manifest example " + std::to_string(e.id) + " is at " + std::to_string(e.sample_rate) +
                               " Hz but the model expects " + std::to_string(cfg.sample_rate) + " Hz");
  }
}

// ---- simulate -----------------------------------------------------------------------

struct SimulateArgs {
  ConfigOptions cfg;
  std::string out;
  std::string split = "both";
  std::optional<std::size_t> count;
  std::optional<double> mix_snr_min, mix_snr_max, noise_snr_min, noise_snr_max;
  bool wav = false;
};

void export_wavs(const Manifest& m, const fs::path& dir) {
  ensure_dir(dir);
  for (const auto& spec : m.examples) {
    const auto ex = build_example(spec);
    const std::string stem = "ex" + std::to_string(spec.id);
    write_wav((dir / (stem + "_mix.wav")).string(), ex.mixture);
    for (std::size_t c = 0; c < ex.direct_targets.size(); ++c)
      write_wav((dir / (stem + "_s" + std::to_string(c + 1) + ".wav")).string(), ex.direct_targets[c]);
  }
}

int cmd_simulate(const SimulateArgs& a) {
  RunConfig rc = a.cfg.resolve();
  if (a.mix_snr_min) rc.data.mix_snr_min = *a.mix_snr_min;
  if (a.mix_snr_max) rc.data.mix_snr_max = *a.mix_snr_max;
  if (a.noise_snr_min) rc.data.noise_snr_min = *a.noise_snr_min;
  if (a.noise_snr_max) rc.data.noise_snr_max = *a.noise_snr_max;
  if (a.count) rc.train_count = rc.eval_count = *a.count;
  rc.validate();

  const fs::path out(a.out);
  ensure_dir(out);
  std::map<std::string, std::string> args{{"split", a.split}, {"wav", a.wav ? "true" : "false"}};
  write_run_manifest(out / "simulate.run.ini", "simulate", args, &rc);
  auto emit = [&](const std::string& name, const Manifest& m) {
    auto os = open_out(out / (name + ".manifest"));
    write_manifest(os, m);
    if (a.wav) export_wavs(m, out / ("wav_" + name));
    std::cout << "wrote " << (out / (name + ".manifest")).string() << " (" << m.size() << " examples)\n";
  };
  if (a.split == "train" || a.split == "both") emit("train", train_manifest(rc));
  if (a.split == "eval" || a.split == "both") emit("eval", eval_manifest(rc));
  return 0;
}

// ---- train --------------------------------------------------------------------------

struct TrainArgs {
  ConfigOptions cfg;
  std::string out;
  std::string train_manifest_path, eval_manifest_path;
  bool resume = false;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig rc = a.cfg.resolve();
  const fs::path out(a.out);
  ensure_dir(out);
  const fs::path last = out / "last.ckpt", best = out / "best.ckpt";

  const Manifest train = a.train_manifest_path.empty() ? train_manifest(rc) : load_manifest(a.train_manifest_path);
  const Manifest evalm = a.eval_manifest_path.empty() ? eval_manifest(rc) : load_manifest(a.eval_manifest_path);
  check_manifest_matches(train, rc.model);
  check_manifest_matches(evalm, rc.model);

  TrainState st = init_train_state(build_separator(rc.model, rc.init_seed), rc.train);
  if (a.resume) {
    if (!fs::exists(last)) throw std::runtime_error("--resume: no checkpoint at " + last.string());
    st = load_checkpoint(last.string());
    if (!(st.model.config == rc.model)) throw ConfigError("--resume: checkpoint model config differs from the effective config");
    std::cout << "resuming at epoch " << st.epoch << ", step " << st.step << '\n';
  }

  std::map<std::string, std::string> args{{"resume", a.resume ? "true" : "false"},
                                          {"train_manifest", a.train_manifest_path.empty() ? "(generated)" : a.train_manifest_path},
                                          {"eval_manifest", a.eval_manifest_path.empty() ? "(generated)" : a.eval_manifest_path}};
  write_run_manifest(out / "train.run.ini", "train", args, &rc);

  const auto mode = a.resume ? std::ios::app : std::ios::trunc;
  std::ofstream steps(out / "train_log.csv", mode), epochs(out / "epoch_log.csv", mode);
  if (!steps || !epochs) throw std::runtime_error("cannot write logs in " + out.string());
  if (!a.resume) {
    steps << "epoch,step,loss,lr,grad_norm\n";
    epochs << "epoch,train_loss,eval_delta_sisdr_db,eval_loss,lr,seconds\n";
  }
  steps << std::setprecision(10);
  epochs << std::setprecision(10);

  const auto eval_data = materialize(evalm);
  RecipeHooks hooks;
  hooks.on_step = [&](const StepLog& s) {
    steps << s.epoch << ',' << s.step << ',' << s.loss << ',' << s.lr << ',' << s.grad_norm << '\n';
  };
  hooks.on_epoch = [&](const TrainState& s, const EpochRecord& r) {
    epochs << r.epoch << ',' << r.train_loss << ',';
    if (r.eval) epochs << r.eval->mean_delta << ',' << r.eval->mean_loss;
    else epochs << ',';
    epochs << ',' << r.lr << ',' << r.seconds << '\n';
    epochs.flush();
    steps.flush();
    std::cout << "epoch " << r.epoch << "  train loss " << std::fixed << std::setprecision(3) << r.train_loss;
    if (r.eval) std::cout << "  eval dSISDR " << r.eval->mean_delta << " dB";
    std::cout << "  lr " << std::defaultfloat << r.lr << "  (" << std::fixed << std::setprecision(1) << r.seconds << " s)"
              << std::defaultfloat << std::endl;
    if (r.improved) save_checkpoint(s, best.string());
    save_checkpoint(s, last.string());
  };
  st = run_training(std::move(st), rc.train, train, eval_data, hooks);
  if (!fs::exists(last)) save_checkpoint(st, last.string());
  if (!fs::exists(best)) save_checkpoint(st, best.string());
  std::cout << "best eval dSISDR " << st.best_delta << " dB; checkpoints in " << out.string() << '\n';
  return 0;
}

// ---- separate -----------------------------------------------------------------------

int cmd_separate(const std::string& ckpt, const std::string& input, const std::string& out_dir) {
  const TrainState st = load_checkpoint(ckpt);
  const Waveform x = read_wav(input);
  if (x.sample_rate != st.model.config.sample_rate)
    throw std::runtime_error("input is " + std::to_string(x.sample_rate) + " Hz but the model expects " +
                             std::to_string(st.model.config.sample_rate) + " Hz; resample first");
  const fs::path in(input);
  const fs::path dir = out_dir.empty() ? (in.has_parent_path() ? in.parent_path() : fs::path(".")) : fs::path(out_dir);
  ensure_dir(dir);
  const auto est = separate(x, st.model);
  for (std::size_t c = 0; c < est.size(); ++c) {
    const fs::path p = dir / (in.stem().string() + "_spk" + std::to_string(c + 1) + ".wav");
    write_wav(p.string(), est[c]);
    std::cout << p.string() << '\n';
  }
  write_run_manifest(dir / (in.stem().string() + ".separate.run.ini"), "separate", {{"checkpoint", ckpt}, {"input", input}}, nullptr,
                     &st.model.config);
  return 0;
}

// ---- evaluate -----------------------------------------------------------------------

int cmd_evaluate(const std::string& ckpt, const std::string& manifest, const std::string& out_csv) {
  const TrainState st = load_checkpoint(ckpt);
  const Manifest m = load_manifest(manifest);
  check_manifest_matches(m, st.model.config);
  const EvalReport r = evaluate(st.model, materialize(m));
  if (!out_csv.empty()) {
    const fs::path p(out_csv);
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    auto os = open_out(p);
    write_eval_csv(os, r);
    write_run_manifest(fs::path(out_csv + ".run.ini"), "evaluate", {{"checkpoint", ckpt}, {"manifest", manifest}}, nullptr,
                       &st.model.config);
  } else {
    write_eval_csv(std::cout, r);
  }
  std::cout << "examples " << r.rows.size() << "  mean dSISDR " << std::setprecision(6) << r.mean_delta << " dB\n";
  return 0;
}

// ---- analyze ------------------------------------------------------------------------

int cmd_analyze(const std::string& ckpt, const std::string& manifest, const std::string& out_dir, std::size_t limit) {
  const TrainState st = load_checkpoint(ckpt);
  if (!st.model.config.deformable) throw std::runtime_error("analyze needs a deformable checkpoint; " + ckpt + " has fixed kernels");
  Manifest m = load_manifest(manifest);
  check_manifest_matches(m, st.model.config);
  if (limit && m.examples.size() > limit) m.examples.resize(limit);
  if (m.examples.size() < 2) throw std::runtime_error("analyze needs at least two utterances");

  std::vector<std::vector<OffsetTrace>> traces;
  for (const auto& spec : m.examples) traces.push_back(capture_offsets(st.model, build_example(spec).mixture));
  const auto stats = block_stats(traces);
  const std::size_t sel = select_block(stats);

  const fs::path out(out_dir);
  ensure_dir(out);
  {
    auto os = open_out(out / "block_stats.csv");
    write_block_stats_csv(os, stats, st.model.config.X);
  }
  std::vector<std::vector<double>> means;
  for (const auto& utt : traces) means.push_back(utterance_means(utt[sel]));
  const std::size_t P = st.model.config.P;
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t q = p + 1; q < P; ++q) {
      const auto t = export_scatter(means, p, q);
      auto os = open_out(out / ("scatter_tau" + std::to_string(p + 1) + "_tau" + std::to_string(q + 1) + ".csv"));
      write_scatter_csv(os, t);
      std::cout << "rho(tau" << p + 1 << ", tau" << q + 1 << ") = " << (t.defined ? std::to_string(t.rho) : "undefined") << '\n';
    }
  write_run_manifest(out / "analyze.run.ini", "analyze",
                     {{"checkpoint", ckpt}, {"manifest", manifest}, {"utterances", std::to_string(m.examples.size())}}, nullptr,
                     &st.model.config);
  std::cout << "selected block " << stats[sel].block << " (stack position " << stats[sel].block % st.model.config.X << ", repeat "
            << stats[sel].block / st.model.config.X << "), variance " << stats[sel].variance << '\n';
  return 0;
}

// ---- count --------------------------------------------------------------------------

int cmd_count(const ConfigOptions& co, std::size_t length) {
  const RunConfig rc = co.resolve();
  struct Variant {
    const char* name;
    bool deformable, shared, skip;
  };
  const Variant variants[] = {{"TCN", false, false, false}, {"TCN+SC", false, false, true}, {"TCN+SW", false, true, false},
                              {"DTCN", true, false, false}, {"DTCN+SC", true, false, true}, {"DTCN+SW", true, true, false}};
  std::cout << "config N=" << rc.model.N << " B=" << rc.model.B << " H=" << rc.model.H << " P=" << rc.model.P << " L=" << rc.model.L
            << " X=" << rc.model.X << " R=" << rc.model.R << " C=" << rc.model.C << "; MACs at " << length << " samples\n";
  std::cout << std::left << std::setw(10) << "variant" << std::right << std::setw(14) << "params" << std::setw(18) << "MACs" << '\n';
  for (const auto& v : variants) {
    DTCNConfig c = rc.model;
    c.deformable = v.deformable;
    c.shared_weights = v.shared;
    c.skip_connections = v.skip;
    std::cout << std::left << std::setw(10) << v.name << std::right << std::setw(14) << count_params(build_separator(c, 0))
              << std::setw(18) << count_macs(c, length) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformable temporal convolutional separation networks"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Write train/eval mixture manifests (and optional WAVs)");
  sim.cfg.attach(s);
  s->add_option("-o,--out", sim.out, "Output directory")->required();
  s->add_option("--split", sim.split, "Which manifest(s) to write")->check(CLI::IsMember({"train", "eval", "both"}));
  s->add_option("-n,--count", sim.count, "Examples per manifest (overrides data.train_count/eval_count)");
  s->add_option("--mix-snr-min", sim.mix_snr_min, "Relative speaker level range, dB");
  s->add_option("--mix-snr-max", sim.mix_snr_max);
  s->add_option("--noise-snr-min", sim.noise_snr_min, "Speech-to-noise range, dB");
  s->add_option("--noise-snr-max", sim.noise_snr_max);
  s->add_flag("--wav", sim.wav, "Also write mixture and target WAVs");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a separator; writes best.ckpt, last.ckpt and CSV logs");
  tr.cfg.attach(t);
  t->add_option("-o,--out", tr.out, "Run directory")->required();
  t->add_option("--train-manifest", tr.train_manifest_path, "Training manifest (default: generated from [data])");
  t->add_option("--eval-manifest", tr.eval_manifest_path, "Validation manifest (default: generated from [data])");
  t->add_flag("--resume", tr.resume, "Continue from <out>/last.ckpt");

  std::string ckpt, input, out, manifest;
  std::size_t limit = 0, length = 8000;
  auto* sp = app.add_subcommand("separate", "Separate a 16-bit mono WAV into <stem>_spk<c>.wav files");
  sp->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  sp->add_option("-i,--input", input, "Input WAV")->required();
  sp->add_option("-o,--out", out, "Output directory (default: next to the input)");

  auto* ev = app.add_subcommand("evaluate", "Per-example and mean SI-SDR improvement over a manifest");
  ev->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  ev->add_option("-m,--manifest", manifest, "Manifest file")->required();
  ev->add_option("-o,--out", out, "CSV output (default: stdout)");

  auto* an = app.add_subcommand("analyze", "Offset statistics per block and tap-pair scatter for the most variable block");
  an->add_option("--checkpoint", ckpt, "Deformable checkpoint")->required();
  an->add_option("-m,--manifest", manifest, "Manifest file")->required();
  an->add_option("-o,--out", out, "Output directory")->required();
  an->add_option("--limit", limit, "Use at most this many utterances (0 = all)");

  ConfigOptions count_cfg;
  auto* ct = app.add_subcommand("count", "Parameter and MAC counts for TCN/DTCN variants");
  count_cfg.attach(ct);
  ct->add_option("--length", length, "Input length in samples for the MAC count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*s) return cmd_simulate(sim);
    if (*t) return cmd_train(tr);
    if (*sp) return cmd_separate(ckpt, input, out);
    if (*ev) return cmd_evaluate(ckpt, manifest, out);
    if (*an) return cmd_analyze(ckpt, manifest, out, limit);
    if (*ct) return cmd_count(count_cfg, length);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
