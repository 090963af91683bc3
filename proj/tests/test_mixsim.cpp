#include <gtest/gtest.h>

#include <complex>
#include <set>
#include <sstream>

#include "dtcn/mixsim.hpp"

using namespace dtcn;

namespace {

std::vector<double> add(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
  return w;
}

// Magnitude-weighted mean frequency from a plain DFT of the first 1024 samples.
double spectral_centroid(const Waveform& w) {
  const std::size_t n = std::min<std::size_t>(1024, w.size());
  double num = 0.0, den = 0.0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    std::complex<double> acc;
    for (std::size_t i = 0; i < n; ++i) acc += w.samples[i] * std::polar(1.0, -2.0 * std::numbers::pi * k * i / n);
    const double f = static_cast<double>(k) * w.sample_rate / n;
    num += f * std::abs(acc);
    den += std::abs(acc);
  }
  return num / den;
}

double zero_crossing_rate(const std::vector<double>& x) {
  std::size_t z = 0;
  for (std::size_t i = 1; i < x.size(); ++i) z += (x[i - 1] < 0.0) != (x[i] < 0.0);
  return static_cast<double>(z) / static_cast<double>(x.size());
}

MixConfig small_mix() {
  MixConfig c;
  c.length = 2000;
  c.pool_size = 16;
  return c;
}

}  // namespace

TEST(GenRir, AnechoicIsSingleUnitTap) {
  RIRSpec s;
  s.t60 = 0.0;
  s.num_taps = 50;
  s.direct_delay = 3;
  const RIR h = gen_rir(s);
  ASSERT_EQ(h.taps.size(), 4u);
  EXPECT_EQ(h.taps[3], 1.0);
  EXPECT_EQ(h.direct_index, 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(h.taps[i], 0.0);
}

TEST(GenRir, EnvelopeDecaysSixtyDbAtT60) {
  RIRSpec s;
  s.t60 = 0.5;
  s.num_taps = rir_length_for(s.t60, 0, 8000);
  s.seed = 11;
  const RIR h = gen_rir(s);
  // Energy in 200-tap windows, then a least-squares line through the dB values.
  const std::size_t win = 200;
  std::vector<double> t, db;
  for (std::size_t start = 1; start + win <= h.taps.size(); start += win) {
    double e = 0.0;
    for (std::size_t i = start; i < start + win; ++i) e += h.taps[i] * h.taps[i];
    t.push_back(static_cast<double>(start) + win / 2.0);
    db.push_back(10.0 * std::log10(e / win));
  }
  double mt = 0, md = 0;
  for (std::size_t i = 0; i < t.size(); ++i) mt += t[i], md += db[i];
  mt /= t.size();
  md /= t.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < t.size(); ++i) sxy += (t[i] - mt) * (db[i] - md), sxx += (t[i] - mt) * (t[i] - mt);
  EXPECT_NEAR(sxy / sxx * s.t60 * 8000, -60.0, 1.0);
}

TEST(GenRir, DeterministicPerSeedAndValidated) {
  RIRSpec s;
  s.t60 = 0.2;
  s.num_taps = 1000;
  s.seed = 4;
  EXPECT_EQ(gen_rir(s).taps, gen_rir(s).taps);
  RIRSpec other = s;
  other.seed = 5;
  EXPECT_NE(gen_rir(s).taps, gen_rir(other).taps);
  s.t60 = -1;
  EXPECT_THROW(gen_rir(s), std::invalid_argument);
}

TEST(SplitDirect, AnechoicGivesDelayedSourceAndNoTail) {
  RIRSpec s;
  s.direct_delay = 2;
  s.num_taps = 3;
  const auto src = gen_source(SourceKind::Harmonic, 1).samples;
  const auto parts = split_direct(gen_rir(s), src);
  for (double v : parts.reverberant) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(parts.direct[0], 0.0);
  for (std::size_t i = 2; i < src.size(); ++i) EXPECT_EQ(parts.direct[i], src[i - 2]);
}

TEST(SplitDirect, PartsSumToFullConvolution) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RIRSpec s;
    s.t60 = 0.05 + 0.05 * seed;
    s.direct_delay = seed;
    s.num_taps = rir_length_for(s.t60, s.direct_delay, 8000);
    s.seed = seed;
    const RIR h = gen_rir(s);
    const auto src = gen_source(SourceKind::Noise, seed).samples;
    const auto parts = split_direct(h, src);
    EXPECT_LT(max_diff(add(parts.direct, parts.reverberant), convolve(h.taps, src, src.size())), 1e-10);
  }
}

TEST(Mix, RequestedSnrsAreMeasuredBack) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto spec = build_manifest(small_mix(), 1, seed, seed + 1).examples[0];
    const auto ex = build_example(spec);
    const auto im0 = add(ex.direct_targets[0].samples, ex.reverberant[0].samples);
    const auto im1 = add(ex.direct_targets[1].samples, ex.reverberant[1].samples);
    EXPECT_NEAR(energy_db_ratio(im0, im1), spec.mix_snr, 1e-6);
    EXPECT_NEAR(energy_db_ratio(add(im0, im1), ex.noise.samples), spec.noise_snr, 1e-6);
    EXPECT_GE(spec.mix_snr, 0.0);
    EXPECT_LE(spec.mix_snr, 5.0);
    EXPECT_GE(spec.noise_snr, -6.0);
    EXPECT_LE(spec.noise_snr, 3.0);
  }
}

TEST(Mix, SingleAnechoicNoiselessSourceIsTheMixture) {
  const Waveform s = gen_source(SourceKind::Harmonic, 3);
  const auto ex = mix({s}, {gen_rir(RIRSpec{})}, Waveform{{}, 8000}, 0.0, 0.0);
  EXPECT_EQ(ex.mixture.samples, s.samples);
}

TEST(Mix, SilentSourceThrows) {
  const Waveform s = gen_source(SourceKind::Harmonic, 3);
  const Waveform silent{std::vector<double>(s.size(), 0.0), 8000};
  EXPECT_THROW(mix({s, silent}, {gen_rir(RIRSpec{}), gen_rir(RIRSpec{})}, Waveform{{}, 8000}, 0.0, 0.0), std::invalid_argument);
}

TEST(Mix, SignalModelIdentitiesOnRandomMixtures) {
  const auto m = build_manifest(small_mix(), 100, 21, 22);
  for (const auto& spec : m.examples) {
    const auto ex = build_example(spec);
    std::vector<double> rebuilt = ex.noise.samples;
    for (std::size_t c = 0; c < ex.sources.size(); ++c) {
      const auto full = convolve(ex.rirs[c].taps, ex.sources[c].samples, ex.mixture.size());
      EXPECT_LT(max_diff(add(ex.direct_targets[c].samples, ex.reverberant[c].samples), full), 1e-10);
      rebuilt = add(rebuilt, full);
    }
    EXPECT_LT(max_diff(rebuilt, ex.mixture.samples), 1e-10);
  }
}

TEST(Manifest, RoundTripRegeneratesBitIdenticalAudio) {
  MixConfig c = small_mix();
  c.speed_perturb = true;
  c.max_direct_delay = 5;
  const auto m = build_manifest(c, 8, 1, 2);
  std::stringstream ss;
  write_manifest(ss, m);
  const auto back = read_manifest(ss);
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.seed, m.seed);
  ASSERT_EQ(back.size(), m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto a = build_example(m.examples[i]), b = build_example(back.examples[i]);
    EXPECT_EQ(a.mixture.samples, b.mixture.samples);
    EXPECT_EQ(a.direct_targets[0].samples, b.direct_targets[0].samples);
  }
}

TEST(Manifest, MalformedInputThrows) {
  std::stringstream no_header("config seed=1\n");
  EXPECT_THROW(read_manifest(no_header), std::invalid_argument);
  std::stringstream bad_key(std::string(kManifestHeader) + "\nconfig bogus=1\n");
  EXPECT_THROW(read_manifest(bad_key), std::invalid_argument);
}

TEST(DynamicRemix, SameEpochIsIdentical) {
  const auto base = build_manifest(small_mix(), 20, 1, 2);
  std::stringstream a, b;
  write_manifest(a, dynamic_remix(base, 3));
  write_manifest(b, dynamic_remix(base, 3));
  EXPECT_EQ(a.str(), b.str());
}

TEST(DynamicRemix, ConsecutiveEpochsRarelyRepeatPairs) {
  MixConfig c = small_mix();
  c.pool_size = 64;
  const auto base = build_manifest(c, 50, 1, 2);
  auto pairs = [](const Manifest& m) {
    std::vector<std::set<std::size_t>> out;
    for (const auto& e : m.examples) out.push_back({e.sources[0].pool_index, e.sources[1].pool_index});
    return out;
  };
  std::size_t same = 0, total = 0;
  auto prev = pairs(dynamic_remix(base, 0));
  for (std::uint64_t e = 1; e <= 100; ++e) {
    const auto cur = pairs(dynamic_remix(base, e));
    for (std::size_t i = 0; i < cur.size(); ++i) same += cur[i] == prev[i];
    total += cur.size();
    prev = cur;
  }
  EXPECT_LT(static_cast<double>(same) / total, 0.05);
}

TEST(DynamicRemix, KeepsTheSourcePool) {
  const auto base = build_manifest(small_mix(), 30, 9, 2);
  for (const auto& e : dynamic_remix(base, 4).examples)
    for (const auto& s : e.sources) EXPECT_EQ(s.seed, pool_source_seed(9, s.pool_index));
}

TEST(SpeedPerturb, IdentityAndLengthContract) {
  const Waveform s = gen_source(SourceKind::Harmonic, 2);
  EXPECT_EQ(speed_perturb(s, 1.0).samples, s.samples);
  for (double f : {0.95, 1.05, 0.5, 2.0})
    EXPECT_EQ(speed_perturb(s, f).size(), static_cast<std::size_t>(std::llround(s.size() / f)));
  EXPECT_THROW(speed_perturb(s, 0.0), std::invalid_argument);
}

TEST(SpeedPerturb, RescalesToneFrequency) {
  std::vector<double> tone(4000);
  for (std::size_t i = 0; i < tone.size(); ++i) tone[i] = std::sin(2.0 * std::numbers::pi * 200.0 * i / 8000.0 + 0.1);
  const Waveform w{tone, 8000};
  const double base = zero_crossing_rate(tone);
  // Factor > 1 reads the input faster (shorter output, higher pitch); factor < 1 stretches it.
  EXPECT_NEAR(zero_crossing_rate(speed_perturb(w, 2.0).samples) / base, 2.0, 0.02);
  EXPECT_NEAR(zero_crossing_rate(speed_perturb(w, 0.5).samples) / base, 0.5, 0.02);
}

TEST(GenSources, DeterministicNormalizedAndDistinguishable) {
  const auto a = gen_sources(SourceKind::Harmonic, 5, 8), b = gen_sources(SourceKind::Harmonic, 5, 8);
  const auto n = gen_sources(SourceKind::Noise, 5, 8);
  std::vector<double> ch, cn;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].samples, b[i].samples);
    EXPECT_GE(a[i].size(), 8000u);
    EXPECT_LE(a[i].size(), 24000u);
    EXPECT_NEAR(std::sqrt(sum_sq(a[i].samples) / a[i].size()), kSourceRms, 1e-12);
    EXPECT_NEAR(std::sqrt(sum_sq(n[i].samples) / n[i].size()), kSourceRms, 1e-12);
    ch.push_back(spectral_centroid(a[i]));
    cn.push_back(spectral_centroid(n[i]));
  }
  // Welch t statistic on the two centroid samples.
  auto mean_var = [](const std::vector<double>& x) {
    double m = 0.0, v = 0.0;
    for (double e : x) m += e;
    m /= x.size();
    for (double e : x) v += (e - m) * (e - m);
    return std::pair{m, v / (x.size() - 1)};
  };
  const auto [mh, vh] = mean_var(ch);
  const auto [mn, vn] = mean_var(cn);
  EXPECT_GT(std::abs(mh - mn) / std::sqrt(vh / ch.size() + vn / cn.size()), 5.0);
}
