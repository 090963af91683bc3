#pragma once

// Synthetic noisy reverberant mixtures: x = sum_c h_c * s_c + noise, with each
// reverberant image split into its direct-path and reverberant parts.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtcn/frames.hpp"
#include "dtcn/params.hpp"

namespace dtcn {

// ---- room impulse responses ----------------------------------------------------

struct RIRSpec {
  double t60 = 0.0;  // seconds
  std::size_t num_taps = 1;
  std::size_t direct_delay = 0;  // samples
  std::uint64_t seed = 0;
  double tail_gain = 0.05;  // amplitude scale of the reverberant tail
  int sample_rate = 8000;
};

struct RIR {
  std::vector<double> taps;
  std::size_t direct_index = 0;
};

/// Taps needed to cover the direct path plus the full -60 dB decay.
inline std::size_t rir_length_for(double t60, std::size_t direct_delay, int sample_rate) {
  return direct_delay + 1 + static_cast<std::size_t>(std::ceil(std::max(0.0, t60) * sample_rate));
}

/// Unit direct tap followed by white noise under an exponential envelope whose
/// energy falls by 60 dB after t60 seconds.
inline RIR gen_rir(const RIRSpec& spec) {
  if (spec.t60 < 0.0 || spec.num_taps < 1) throw std::invalid_argument("gen_rir: need t60 >= 0 and num_taps >= 1");
  if (spec.direct_delay >= spec.num_taps) throw std::invalid_argument("gen_rir: direct delay beyond the response length");
  RIR h{std::vector<double>(spec.t60 == 0.0 ? spec.direct_delay + 1 : spec.num_taps, 0.0), spec.direct_delay};
  h.taps[spec.direct_delay] = 1.0;
  if (spec.t60 == 0.0) return h;
  Rng rng(mix_seed(spec.seed, 0x4149));
  std::normal_distribution<double> noise(0.0, 1.0);
  const double samples_t60 = spec.t60 * spec.sample_rate;
  for (std::size_t i = spec.direct_delay + 1; i < spec.num_taps; ++i) {
    const double t = static_cast<double>(i - spec.direct_delay);
    h.taps[i] = spec.tail_gain * noise(rng) * std::pow(10.0, -3.0 * t / samples_t60);
  }
  return h;
}

/// (h * s)[n] for n < out_len.
inline std::vector<double> convolve(std::span<const double> h, std::span<const double> s, std::size_t out_len) {
  std::vector<double> out(out_len, 0.0);
  for (std::size_t k = 0; k < h.size(); ++k) {
    const double hk = h[k];
    if (hk == 0.0 || k >= out_len) continue;
    const std::size_t n_end = std::min(out_len, s.size() + k);
    for (std::size_t n = k; n < n_end; ++n) out[n] += hk * s[n - k];
  }
  return out;
}

struct DirectSplit {
  std::vector<double> direct;
  std::vector<double> reverberant;
};

/// Direct-path image (direct tap only, delay kept) and the remaining reflections,
/// both truncated to the dry signal's length.
inline DirectSplit split_direct(const RIR& h, std::span<const double> s) {
  std::vector<double> direct_taps(h.direct_index + 1, 0.0), tail = h.taps;
  direct_taps[h.direct_index] = h.taps[h.direct_index];
  tail[h.direct_index] = 0.0;
  return {convolve(direct_taps, s, s.size()), convolve(tail, s, s.size())};
}

// ---- sources ----------------------------------------------------------------------

enum class SourceKind { Harmonic, Noise };

inline std::string to_string(SourceKind k) { return k == SourceKind::Harmonic ? "harmonic" : "noise"; }
inline SourceKind parse_source_kind(const std::string& s) {
  if (s == "harmonic") return SourceKind::Harmonic;
  if (s == "noise") return SourceKind::Noise;
  throw std::invalid_argument("unknown source kind: " + s);
}

inline constexpr double kSourceRms = 0.1;

namespace detail {

inline void normalize_rms(std::vector<double>& x, double target) {
  const double rms = std::sqrt(sum_sq(x) / static_cast<double>(x.size()));
  if (rms > 0.0)
    for (auto& v : x) v *= target / rms;
}

// Syllable-like envelope: raised-cosine bursts at a few Hz with random depth.
inline std::vector<double> syllable_envelope(std::size_t n, int fs, Rng& rng) {
  std::uniform_real_distribution<double> rate(2.5, 6.0), depth(0.6, 1.0), phase(0.0, 2.0 * std::numbers::pi);
  const double r = rate(rng), d = depth(rng), ph = phase(rng);
  std::vector<double> env(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    env[i] = 1.0 - d * 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * r * t + ph));
  }
  return env;
}

// Two-pole resonator (constant peak gain form).
struct Resonator {
  double a1, a2, gain, y1 = 0.0, y2 = 0.0;
  Resonator(double freq, double bw, int fs) {
    const double rad = std::exp(-std::numbers::pi * bw / fs);
    a1 = -2.0 * rad * std::cos(2.0 * std::numbers::pi * freq / fs);
    a2 = rad * rad;
    gain = 1.0 - rad;
  }
  double operator()(double x) {
    const double y = gain * x - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace detail

/// One source waveform of the given kind, 1.2-3 s long, RMS-normalized.
inline Waveform gen_source(SourceKind kind, std::uint64_t seed, int sample_rate = 8000) {
  Rng rng(mix_seed(seed, kind == SourceKind::Harmonic ? 0x4841 : 0x4E4F));
  std::uniform_real_distribution<double> dur(1.2, 3.0);
  const auto n = static_cast<std::size_t>(dur(rng) * sample_rate);
  const double fs = sample_rate;
  std::vector<double> x(n, 0.0);
  if (kind == SourceKind::Harmonic) {
    // Gliding harmonic complex with 1/k amplitude tilt and slow vibrato.
    std::uniform_real_distribution<double> f0d(90.0, 260.0), glide(0.7, 1.4), vib(3.0, 7.0), ph(0.0, 2.0 * std::numbers::pi);
    const double f_start = f0d(rng), f_end = f_start * glide(rng), vrate = vib(rng);
    const std::size_t K = std::max<std::size_t>(1, static_cast<std::size_t>(0.45 * fs / std::max(f_start, f_end)));
    std::vector<double> phase(K);
    for (auto& p : phase) p = ph(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs;
      const double f0 = (f_start + (f_end - f_start) * static_cast<double>(i) / n) *
                        (1.0 + 0.02 * std::sin(2.0 * std::numbers::pi * vrate * t));
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        phase[k] += 2.0 * std::numbers::pi * f0 * static_cast<double>(k + 1) / fs;
        if (f0 * (k + 1) < 0.45 * fs) s += std::sin(phase[k]) / static_cast<double>(k + 1);
      }
      x[i] = s;
    }
  } else {
    // Fricative-like: pre-emphasized white noise through two high resonances.
    std::uniform_real_distribution<double> f1(1200.0, 2200.0), f2(2400.0, 3400.0), bw(150.0, 400.0);
    std::normal_distribution<double> white(0.0, 1.0);
    detail::Resonator r1(f1(rng), bw(rng), sample_rate), r2(f2(rng), bw(rng), sample_rate);
    double prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = white(rng);
      const double hp = w - 0.7 * prev;
      prev = w;
      x[i] = r1(hp) + 0.7 * r2(hp);
    }
  }
  const auto env = detail::syllable_envelope(n, sample_rate, rng);
  for (std::size_t i = 0; i < n; ++i) x[i] *= env[i];
  detail::normalize_rms(x, kSourceRms);
  return Waveform{std::move(x), sample_rate};
}

/// Deterministic pool: source i is gen_source(kind, mix_seed(seed, i)).
inline std::vector<Waveform> gen_sources(SourceKind kind, std::uint64_t seed, std::size_t count, int sample_rate = 8000) {
  std::vector<Waveform> pool;
  for (std::size_t i = 0; i < count; ++i) pool.push_back(gen_source(kind, mix_seed(seed, i), sample_rate));
  return pool;
}

/// Pink-ish noise (Kellet's economy filter on white noise), RMS-normalized.
inline Waveform gen_noise(std::uint64_t seed, std::size_t n, int sample_rate = 8000) {
  Rng rng(mix_seed(seed, 0x504B));
  std::normal_distribution<double> white(0.0, 1.0);
  double b0 = 0, b1 = 0, b2 = 0;
  std::vector<double> x(n);
  for (auto& v : x) {
    const double w = white(rng);
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    v = b0 + b1 + b2 + w * 0.1848;
  }
  detail::normalize_rms(x, kSourceRms);
  return Waveform{std::move(x), sample_rate};
}

/// Linear-interpolation resampling; output length round(len / factor).
inline Waveform speed_perturb(const Waveform& s, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("speed_perturb: factor must be positive");
  if (factor == 1.0) return s;
  const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(s.size()) / factor));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * factor;
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    const double a = lo < s.size() ? s.samples[lo] : 0.0;
    const double b = lo + 1 < s.size() ? s.samples[lo + 1] : 0.0;
    out[i] = (1.0 - frac) * a + frac * b;
  }
  return Waveform{std::move(out), s.sample_rate};
}

// ---- mixing -------------------------------------------------------------------------

inline double energy_db_ratio(std::span<const double> a, std::span<const double> b) {
  return 10.0 * std::log10(sum_sq(a) / sum_sq(b));
}

struct MixtureMeta {
  double mix_snr = 0.0;
  double noise_snr = 0.0;
  bool has_noise = false;
  std::vector<double> t60;
};

struct MixtureExample {
  Waveform mixture;
  std::vector<Waveform> direct_targets;  // scaled direct-path images
  std::vector<Waveform> reverberant;     // scaled reflection-only images
  std::vector<Waveform> sources;         // scaled dry sources
  std::vector<RIR> rirs;
  Waveform noise;  // scaled; empty when noiseless
  MixtureMeta meta;
};

/// Sources beyond the first are scaled so that the reverberant energy ratio
/// speaker1 / speaker c equals mix_snr; the noise is scaled so that total
/// reverberant speech / noise equals noise_snr. Pass an empty noise for none.
inline MixtureExample mix(const std::vector<Waveform>& sources, const std::vector<RIR>& rirs, const Waveform& noise,
                          double mix_snr, double noise_snr) {
  if (sources.empty()) throw std::invalid_argument("mix: need at least one source");
  if (rirs.size() != sources.size()) throw std::invalid_argument("mix: one RIR per source required");
  std::size_t n = sources[0].size();
  for (const auto& s : sources) n = std::min(n, s.size());
  if (!noise.samples.empty()) n = std::min(n, noise.size());
  if (n == 0) throw EmptyInputError("mix: empty source");
  const int fs = sources[0].sample_rate;

  MixtureExample ex;
  ex.meta.mix_snr = mix_snr;
  ex.meta.noise_snr = noise_snr;
  ex.meta.has_noise = !noise.samples.empty();
  ex.rirs = rirs;
  std::vector<std::vector<double>> images;
  double ref_energy = 0.0;
  for (std::size_t c = 0; c < sources.size(); ++c) {
    std::vector<double> s(sources[c].samples.begin(), sources[c].samples.begin() + static_cast<std::ptrdiff_t>(n));
    if (sum_sq(s) == 0.0) throw std::invalid_argument("mix: source " + std::to_string(c) + " is silent");
    DirectSplit parts = split_direct(rirs[c], s);
    std::vector<double> image(n);
    for (std::size_t i = 0; i < n; ++i) image[i] = parts.direct[i] + parts.reverberant[i];
    const double e = sum_sq(image);
    if (e == 0.0) throw std::invalid_argument("mix: source " + std::to_string(c) + " is silent after reverberation");
    double gain = 1.0;
    if (c == 0) ref_energy = e;
    else gain = std::sqrt(ref_energy / (e * std::pow(10.0, mix_snr / 10.0)));
    for (auto* v : {&s, &parts.direct, &parts.reverberant, &image})
      for (auto& x : *v) x *= gain;
    ex.sources.push_back(Waveform{std::move(s), fs});
    ex.direct_targets.push_back(Waveform{std::move(parts.direct), fs});
    ex.reverberant.push_back(Waveform{std::move(parts.reverberant), fs});
    images.push_back(std::move(image));
    ex.meta.t60.push_back(0.0);
  }
  std::vector<double> x(n, 0.0);
  for (const auto& im : images)
    for (std::size_t i = 0; i < n; ++i) x[i] += im[i];
  if (ex.meta.has_noise) {
    std::vector<double> v(noise.samples.begin(), noise.samples.begin() + static_cast<std::ptrdiff_t>(n));
    const double ev = sum_sq(v);
    if (ev == 0.0) throw std::invalid_argument("mix: silent noise");
    const double gain = std::sqrt(sum_sq(x) / (ev * std::pow(10.0, noise_snr / 10.0)));
    for (std::size_t i = 0; i < n; ++i) {
      v[i] *= gain;
      x[i] += v[i];
    }
    ex.noise = Waveform{std::move(v), fs};
  }
  ex.mixture = Waveform{std::move(x), fs};
  return ex;
}

// ---- manifests ------------------------------------------------------------------------

struct MixConfig {
  int sample_rate = 8000;
  std::size_t speakers = 2;
  std::size_t length = 8000;  // crop length in samples
  double mix_snr_min = 0.0, mix_snr_max = 5.0;
  double noise_snr_min = -6.0, noise_snr_max = 3.0;
  double t60_min = 0.1, t60_max = 0.4;
  double tail_gain = 0.05;
  std::size_t max_direct_delay = 0;
  std::size_t pool_size = 64;
  bool noise = true;
  bool speed_perturb = false;  // draw factors from {0.95, 1.0, 1.05}
  std::vector<SourceKind> kinds{SourceKind::Harmonic, SourceKind::Noise};

  friend bool operator==(const MixConfig&, const MixConfig&) = default;
};

struct SourceRef {
  SourceKind kind = SourceKind::Harmonic;
  std::uint64_t seed = 0;
  std::size_t pool_index = 0;
  std::size_t offset = 0;  // crop start within the (speed-perturbed) source
  double speed = 1.0;
  friend bool operator==(const SourceRef&, const SourceRef&) = default;
};

/// Everything needed to regenerate one example.
struct ExampleSpec {
  std::size_t id = 0;
  int sample_rate = 8000;
  std::size_t length = 0;
  std::vector<SourceRef> sources;
  std::vector<RIRSpec> rirs;
  double mix_snr = 0.0, noise_snr = 0.0;
  bool has_noise = false;
  std::uint64_t noise_seed = 0;
};

struct Manifest {
  std::uint64_t seed = 0;  // pool seed: fixes the source pool across remixes
  std::uint64_t draw_seed = 0;
  MixConfig config;
  std::vector<ExampleSpec> examples;

  std::size_t size() const { return examples.size(); }
};

inline std::uint64_t pool_source_seed(std::uint64_t pool_seed, std::size_t index) { return mix_seed(pool_seed, 0x1000 + index); }

inline SourceKind pool_source_kind(const MixConfig& cfg, std::size_t index) { return cfg.kinds[index % cfg.kinds.size()]; }

/// Draw `count` example specs. Pairings, gains, RIRs and crops come from
/// draw_seed; the source pool itself is fixed by pool_seed.
inline Manifest build_manifest(const MixConfig& cfg, std::size_t count, std::uint64_t pool_seed, std::uint64_t draw_seed) {
  if (cfg.speakers < 1 || cfg.pool_size < cfg.speakers) throw std::invalid_argument("build_manifest: pool smaller than speaker count");
  if (cfg.kinds.empty()) throw std::invalid_argument("build_manifest: no source kinds");
  if (cfg.mix_snr_min > cfg.mix_snr_max || cfg.noise_snr_min > cfg.noise_snr_max || cfg.t60_min > cfg.t60_max || cfg.t60_min < 0)
    throw std::invalid_argument("build_manifest: invalid range");
  Manifest m{pool_seed, draw_seed, cfg, {}};
  // Source durations are needed to draw valid crop offsets.
  std::vector<std::size_t> durations(cfg.pool_size, 0);
  Rng rng(mix_seed(draw_seed, 0x4D4E));
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  for (std::size_t e = 0; e < count; ++e) {
    ExampleSpec ex;
    ex.id = e;
    ex.sample_rate = cfg.sample_rate;
    ex.length = cfg.length;
    std::vector<std::size_t> picked;
    while (picked.size() < cfg.speakers) {
      const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, cfg.pool_size - 1)(rng);
      if (std::find(picked.begin(), picked.end(), idx) == picked.end()) picked.push_back(idx);
    }
    for (std::size_t idx : picked) {
      SourceRef ref;
      ref.pool_index = idx;
      ref.kind = pool_source_kind(cfg, idx);
      ref.seed = pool_source_seed(pool_seed, idx);
      if (cfg.speed_perturb) {
        static constexpr double kFactors[] = {0.95, 1.0, 1.05};
        ref.speed = kFactors[std::uniform_int_distribution<int>(0, 2)(rng)];
      }
      if (!durations[idx]) durations[idx] = gen_source(ref.kind, ref.seed, cfg.sample_rate).size();
      const auto len = static_cast<std::size_t>(std::llround(static_cast<double>(durations[idx]) / ref.speed));
      ref.offset = len > cfg.length ? std::uniform_int_distribution<std::size_t>(0, len - cfg.length)(rng) : 0;
      ex.sources.push_back(ref);
      RIRSpec r;
      r.t60 = uni(cfg.t60_min, cfg.t60_max);
      r.direct_delay = cfg.max_direct_delay ? std::uniform_int_distribution<std::size_t>(0, cfg.max_direct_delay)(rng) : 0;
      r.num_taps = rir_length_for(r.t60, r.direct_delay, cfg.sample_rate);
      r.seed = rng();
      r.tail_gain = cfg.tail_gain;
      r.sample_rate = cfg.sample_rate;
      ex.rirs.push_back(r);
    }
    ex.mix_snr = uni(cfg.mix_snr_min, cfg.mix_snr_max);
    ex.noise_snr = uni(cfg.noise_snr_min, cfg.noise_snr_max);
    ex.has_noise = cfg.noise;
    ex.noise_seed = rng();
    m.examples.push_back(std::move(ex));
  }
  return m;
}

/// Fresh pairings, gains and RIRs for an epoch over the same source pool.
inline Manifest dynamic_remix(const Manifest& base, std::uint64_t epoch) {
  return build_manifest(base.config, base.size(), base.seed, mix_seed(base.draw_seed, 0xE000 + epoch));
}

inline MixtureExample build_example(const ExampleSpec& spec) {
  std::vector<Waveform> srcs;
  std::vector<RIR> rirs;
  for (std::size_t c = 0; c < spec.sources.size(); ++c) {
    const auto& ref = spec.sources[c];
    Waveform w = speed_perturb(gen_source(ref.kind, ref.seed, spec.sample_rate), ref.speed);
    std::vector<double> crop(spec.length, 0.0);
    for (std::size_t i = 0; i < spec.length && ref.offset + i < w.size(); ++i) crop[i] = w.samples[ref.offset + i];
    srcs.push_back(Waveform{std::move(crop), spec.sample_rate});
    rirs.push_back(gen_rir(spec.rirs[c]));
  }
  Waveform noise{{}, spec.sample_rate};
  if (spec.has_noise) noise = gen_noise(spec.noise_seed, spec.length, spec.sample_rate);
  MixtureExample ex = mix(srcs, rirs, noise, spec.mix_snr, spec.noise_snr);
  for (std::size_t c = 0; c < spec.rirs.size(); ++c) ex.meta.t60[c] = spec.rirs[c].t60;
  return ex;
}

// Line-oriented text form: a header, one "config" line, one "example" line per
// example. Doubles are written with 17 significant digits so that parsing
// restores them exactly.

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline double parse_double(const std::string& s) {
  std::size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad number: " + s);
  return v;
}

inline std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("bad integer: " + s);
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace detail

inline constexpr const char* kManifestHeader = "# dtcn-manifest v1";

inline std::string format_example(const ExampleSpec& e) {
  using detail::fmt_double;
  std::ostringstream os;
  os << "example id=" << e.id << " rate=" << e.sample_rate << " length=" << e.length;
  for (std::size_t c = 0; c < e.sources.size(); ++c) {
    const auto& s = e.sources[c];
    const auto& r = e.rirs[c];
    os << " src=" << to_string(s.kind) << ':' << s.seed << ':' << s.pool_index << ':' << s.offset << ':' << fmt_double(s.speed);
    os << " rir=" << fmt_double(r.t60) << ':' << r.num_taps << ':' << r.direct_delay << ':' << r.seed << ':'
       << fmt_double(r.tail_gain);
  }
  os << " mix_snr=" << fmt_double(e.mix_snr) << " noise_snr=" << fmt_double(e.noise_snr) << " noise=" << (e.has_noise ? 1 : 0)
     << " noise_seed=" << e.noise_seed;
  return os.str();
}

inline ExampleSpec parse_example(const std::string& line) {
  using namespace detail;
  std::istringstream is(line);
  std::string tok;
  is >> tok;
  if (tok != "example") throw std::invalid_argument("manifest: expected 'example' line");
  ExampleSpec e;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("manifest: malformed token " + tok);
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "id") e.id = parse_u64(val);
    else if (key == "rate") e.sample_rate = static_cast<int>(parse_u64(val));
    else if (key == "length") e.length = parse_u64(val);
    else if (key == "src") {
      auto f = split(val, ':');
      if (f.size() != 5) throw std::invalid_argument("manifest: src needs 5 fields");
      e.sources.push_back({parse_source_kind(f[0]), parse_u64(f[1]), parse_u64(f[2]), parse_u64(f[3]), parse_double(f[4])});
    } else if (key == "rir") {
      auto f = split(val, ':');
      if (f.size() != 5) throw std::invalid_argument("manifest: rir needs 5 fields");
      RIRSpec r;
      r.t60 = parse_double(f[0]);
      r.num_taps = parse_u64(f[1]);
      r.direct_delay = parse_u64(f[2]);
      r.seed = parse_u64(f[3]);
      r.tail_gain = parse_double(f[4]);
      e.rirs.push_back(r);
    } else if (key == "mix_snr") e.mix_snr = parse_double(val);
    else if (key == "noise_snr") e.noise_snr = parse_double(val);
    else if (key == "noise") e.has_noise = val == "1";
    else if (key == "noise_seed") e.noise_seed = parse_u64(val);
    else throw std::invalid_argument("manifest: unknown key " + key);
  }
  if (e.sources.empty() || e.sources.size() != e.rirs.size()) throw std::invalid_argument("manifest: example needs matching src/rir entries");
  for (auto& r : e.rirs) r.sample_rate = e.sample_rate;
  return e;
}

inline void write_manifest(std::ostream& os, const Manifest& m) {
  using detail::fmt_double;
  const auto& c = m.config;
  os << kManifestHeader << '\n';
  os << "config seed=" << m.seed << " draw_seed=" << m.draw_seed << " rate=" << c.sample_rate << " speakers=" << c.speakers
     << " length=" << c.length << " mix_snr=" << fmt_double(c.mix_snr_min) << ':' << fmt_double(c.mix_snr_max)
     << " noise_snr=" << fmt_double(c.noise_snr_min) << ':' << fmt_double(c.noise_snr_max) << " t60=" << fmt_double(c.t60_min)
     << ':' << fmt_double(c.t60_max) << " tail_gain=" << fmt_double(c.tail_gain) << " max_delay=" << c.max_direct_delay
     << " pool=" << c.pool_size << " noise=" << (c.noise ? 1 : 0) << " speed=" << (c.speed_perturb ? 1 : 0) << " kinds=";
  for (std::size_t i = 0; i < c.kinds.size(); ++i) os << (i ? "," : "") << to_string(c.kinds[i]);
  os << '\n';
  for (const auto& e : m.examples) os << format_example(e) << '\n';
}

inline Manifest read_manifest(std::istream& is) {
  using namespace detail;
  std::string line;
  if (!std::getline(is, line) || line != kManifestHeader) throw std::invalid_argument("manifest: missing header");
  Manifest m;
  bool have_config = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("config ", 0) == 0) {
      std::istringstream ls(line.substr(7));
      std::string tok;
      auto& c = m.config;
      while (ls >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("manifest: malformed token " + tok);
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        auto range = [&](double& lo, double& hi) {
          auto f = split(val, ':');
          if (f.size() != 2) throw std::invalid_argument("manifest: range expected for " + key);
          lo = parse_double(f[0]);
          hi = parse_double(f[1]);
        };
        if (key == "seed") m.seed = parse_u64(val);
        else if (key == "draw_seed") m.draw_seed = parse_u64(val);
        else if (key == "rate") c.sample_rate = static_cast<int>(parse_u64(val));
        else if (key == "speakers") c.speakers = parse_u64(val);
        else if (key == "length") c.length = parse_u64(val);
        else if (key == "mix_snr") range(c.mix_snr_min, c.mix_snr_max);
        else if (key == "noise_snr") range(c.noise_snr_min, c.noise_snr_max);
        else if (key == "t60") range(c.t60_min, c.t60_max);
        else if (key == "tail_gain") c.tail_gain = parse_double(val);
        else if (key == "max_delay") c.max_direct_delay = parse_u64(val);
        else if (key == "pool") c.pool_size = parse_u64(val);
        else if (key == "noise") c.noise = val == "1";
        else if (key == "speed") c.speed_perturb = val == "1";
        else if (key == "kinds") {
          c.kinds.clear();
          for (const auto& k : split(val, ',')) c.kinds.push_back(parse_source_kind(k));
        } else throw std::invalid_argument("manifest: unknown config key " + key);
      }
      have_config = true;
    } else {
      m.examples.push_back(parse_example(line));
    }
  }
  if (!have_config) throw std::invalid_argument("manifest: missing config line");
  return m;
}

}  // namespace dtcn
