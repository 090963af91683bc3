// Acceptance checks. `acceptance N` runs criterion N (1-9) and prints one
// PASS/FAIL line; the exit status is 0 only on PASS.

#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "dtcn/analysis.hpp"
#include "dtcn/recipe.hpp"
#include "planted.hpp"

using namespace dtcn;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [failed]");
  }
};

std::string num(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

Tensor uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

double weighted(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

DTCNConfig full(bool deformable, bool shared = false, bool skip = false) {
  DTCNConfig c;
  c.deformable = deformable;
  c.shared_weights = shared;
  c.skip_connections = skip;
  return c;
}

std::size_t params_of(const DTCNConfig& c) { return count_params(build_separator(c, 0)); }

// ---- 1: parameter counts at the reference configuration ---------------------------------

void criterion1(Verdict& v) {
  auto within = [&](const char* name, double got, double target, double tol) {
    v.require(std::abs(got / target - 1.0) <= tol, std::string(name) + " " + num(got, 10) + " vs " + num(target) + " +-" + num(tol * 100) + "%");
  };
  within("TCN", static_cast<double>(params_of(full(false))), 3.4e6, 0.03);
  within("DTCN", static_cast<double>(params_of(full(true))), 3.6e6, 0.03);
  within("DTCN+SW", static_cast<double>(params_of(full(true, true))), 1.3e6, 0.05);
}

// ---- 2: relative overheads ---------------------------------------------------------------

void criterion2(Verdict& v) {
  const double tcn = static_cast<double>(params_of(full(false)));
  const double ratio = static_cast<double>(params_of(full(true))) / tcn;
  v.require(ratio >= 1.04 && ratio <= 1.08, "DTCN/TCN params " + num(ratio) + " in [1.04, 1.08]");
  const double sc = static_cast<double>(params_of(full(false, false, true))) / tcn - 1.0;
  v.require(sc >= 0.30 && sc <= 0.40, "skip connections add " + num(100 * sc, 4) + "% in [30, 40]%");
}

// ---- 3: MAC ratio ------------------------------------------------------------------------

void criterion3(Verdict& v) {
  for (std::size_t len : {8000u, 32000u}) {
    const double r = static_cast<double>(count_macs(full(true), len)) / static_cast<double>(count_macs(full(false), len));
    v.require(r >= 1.03 && r <= 1.10, "MACs ratio at " + std::to_string(len) + " samples " + num(r));
  }
}

// ---- 4: deformable kernel ----------------------------------------------------------------

void criterion4(Verdict& v) {
  double worst = 0.0;
  for (std::size_t P : {1, 2, 3, 5})
    for (std::size_t f : {1, 2, 4, 8})
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(mix_seed(seed, P * 100 + f));
        const Tensor y = uniform({4, 41}, rng);
        const DepthwiseKernel k{uniform({4, P}, rng), f};
        worst = std::max(worst, max_abs_diff(ddconv(y, k, OffsetField{Tensor({41, P})}), dconv(y, k)));
      }
  v.require(worst <= 1e-12, "max |ddconv(tau=0) - dconv| = " + num(worst));
  Tensor tau({5, 3});
  for (std::size_t p = 0; p < 3; ++p) tau(1, p) = 0.5;
  const double hand =
      ddconv(Tensor({1, 5}, std::vector<double>{1, 2, 3, 4, 5}), DepthwiseKernel{Tensor({1, 3}, 1.0), 1}, OffsetField{tau})(0, 1);
  v.require(hand == 7.5, "hand-worked half-sample case = " + num(hand));
}

// ---- 5: gradient suite -------------------------------------------------------------------

void criterion5(Verdict& v) {
  Rng rng(5);
  double worst_op = 0.0;
  auto check = [&](const std::string& name, const std::function<double(const std::vector<Tensor>&)>& loss,
                   const std::vector<Tensor>& in, const std::vector<Tensor>& grads) {
    const double e = grad_check(loss, in, grads);
    worst_op = std::max(worst_op, e);
    if (e >= 1e-4) v.require(false, name + " rel err " + num(e));
  };
  auto away = [](Tensor t) {
    for (auto& x : t.data())
      if (std::abs(x) < 0.05) x = x < 0 ? -0.05 : 0.05;
    return t;
  };

  {
    const Tensor x = uniform({4, 6}, rng), W = uniform({4, 3}, rng), b = uniform({3}, rng), w = uniform({3, 6}, rng);
    Tensor dW(W.shape()), db(b.shape());
    const Tensor dx = channel_linear_backward(x, W, w, dW, &db);
    check("channel_linear", [&](const auto& in) { return weighted(channel_linear(in[0], in[1], in[2]), w); }, {x, W, b}, {dx, dW, db});
  }
  {
    const Tensor x = away(uniform({3, 7}, rng)), w = uniform({3, 7}, rng);
    check("relu", [&](const auto& in) { return weighted(relu(in[0]), w); }, {x}, {relu_backward(x, w)});
    const Tensor a({1}, 0.25);
    Tensor da(a.shape());
    const Tensor dx = prelu_backward(x, a, w, da);
    check("prelu", [&](const auto& in) { return weighted(prelu(in[0], in[1]), w); }, {x, a}, {dx, da});
  }
  for (bool cumulative : {false, true}) {
    const Tensor x = uniform({4, 6}, rng), g = uniform({4}, rng), b = uniform({4}, rng), w = uniform({4, 6}, rng);
    auto fwd = [&](const Tensor& xx, const Tensor& gg, const Tensor& bb, NormCache* c) {
      return cumulative ? cumulative_layer_norm(xx, gg, bb, c) : global_layer_norm(xx, gg, bb, c);
    };
    NormCache cache;
    fwd(x, g, b, &cache);
    Tensor dg(g.shape()), db(b.shape());
    const Tensor dx = cumulative ? cumulative_layer_norm_backward(cache, g, w, dg, db) : global_layer_norm_backward(cache, g, w, dg, db);
    check(cumulative ? "cLN" : "gLN", [&](const auto& in) { return weighted(fwd(in[0], in[1], in[2], nullptr), w); }, {x, g, b},
          {dx, dg, db});
  }
  {
    const Tensor f = uniform({5, 8}, rng), w = uniform({24}, rng);
    check("overlap_add",
          [&](const auto& in) {
            const auto y = overlap_add(FrameMatrix{in[0], 4}, 24);
            return weighted(Tensor({24}, y), w);
          },
          {f}, {overlap_add_backward(w.data(), 5, 8)});
  }
  {
    const Tensor frames = uniform({5, 8}, rng), B = uniform({8, 6}, rng), w = uniform({6, 5}, rng);
    Tensor pre, dB(B.shape());
    encode(FrameMatrix{frames, 4}, B, &pre);
    const Tensor dframes = encode_backward(FrameMatrix{frames, 4}, B, pre, w, dB);
    check("encode", [&](const auto& in) { return weighted(encode(FrameMatrix{in[0], 4}, in[1]), w); }, {frames, B}, {dframes, dB});
  }
  {
    const Tensor a = uniform({3, 4}, rng), m = uniform({3, 4}, rng, 0, 1), g = uniform({3, 4}, rng);
    check("apply_mask", [&](const auto& in) { return weighted(apply_mask(in[0], in[1]), g); }, {a, m}, {apply_mask(g, m), apply_mask(g, a)});
    const Tensor vv = uniform({6, 5}, rng), U = uniform({6, 8}, rng), gf = uniform({5, 8}, rng);
    Tensor dU(U.shape());
    const Tensor dv = decode_backward(vv, U, gf, dU);
    check("decode", [&](const auto& in) { return weighted(decode(in[0], in[1]).frames, gf); }, {vv, U}, {dv, dU});
  }
  for (std::size_t f : {1, 2, 4}) {
    const Tensor y = uniform({3, 14}, rng), k = uniform({3, 3}, rng), w = uniform({3, 14}, rng);
    const auto g = dconv_backward(w, y, DepthwiseKernel{k, f});
    check("dconv", [&](const auto& in) { return weighted(dconv(in[0], DepthwiseKernel{in[1], f}), w); }, {y, k}, {g.dy, g.dk});
    Tensor tau = uniform({14, 3}, rng, -3, 3);
    for (auto& t : tau.data()) {
      const double frac = t - std::floor(t);
      t += frac < 0.1 ? 0.1 - frac : (frac > 0.9 ? 0.9 - frac : 0.0);
    }
    const auto gd = ddconv_backward(w, y, DepthwiseKernel{k, f}, OffsetField{tau});
    check("ddconv",
          [&](const auto& in) { return weighted(ddconv(in[0], DepthwiseKernel{in[1], f}, OffsetField{in[2]}), w); },
          {y, k, tau}, {gd.dy, gd.dk, gd.dtau});
  }
  {
    const Tensor est = uniform({30}, rng), ref = uniform({30}, rng);
    check("sisdr", [&](const auto& in) { return sisdr(in[0].data(), ref.data()).db; }, {est}, {Tensor({30}, sisdr_grad(est.data(), ref.data()))});
  }
  v.require(worst_op < 1e-4, "worst op rel err " + num(worst_op, 3) + " < 1e-4");

  // End-to-end toy separator with nonzero offsets.
  DTCNConfig c;
  c.N = 8;
  c.B = 4;
  c.H = 8;
  c.P = 3;
  c.L = 4;
  c.X = 2;
  c.R = 2;
  auto model = build_separator(c, 20);
  for (auto& p : model.params.all())
    if (p.name.find(".offset.weight") != std::string::npos || p.name.find(".offset.bias") != std::string::npos)
      p.value = uniform(p.value.shape(), rng, -1.5, 1.5);
  const Waveform x{uniform({40}, rng).storage(), 8000};
  const std::vector<std::vector<double>> refs{uniform({40}, rng).storage(), uniform({40}, rng).storage()};
  auto outputs = [&](const SeparatorModel& m, ForwardCache* fc) {
    std::vector<std::vector<double>> o;
    for (auto& w : separate(x, m, fc)) o.push_back(w.samples);
    return o;
  };
  ForwardCache fc;
  const auto ests = outputs(model, &fc);
  const auto perm = pit_loss(ests, refs).perm;
  model.params.zero_grad();
  separator_backward(model, fc, pit_loss_grad(ests, refs, perm));
  std::vector<Tensor> values, grads;
  for (const auto& p : model.params.all()) {
    values.push_back(p.value);
    grads.push_back(p.grad);
  }
  SeparatorModel probe = model;
  const double e2e = grad_check(
      [&](const std::vector<Tensor>& in) {
        for (std::size_t k = 0; k < in.size(); ++k) probe.params.all()[k].value = in[k];
        return assignment_loss(outputs(probe, nullptr), refs, perm);
      },
      values, grads);
  v.require(e2e < 1e-3, "end-to-end rel err " + num(e2e, 3) + " < 1e-3");
}

// ---- 6: PIT oracle -----------------------------------------------------------------------

void criterion6(Verdict& v) {
  Rng rng(6);
  std::size_t mismatches = 0, perm_changes = 0;
  double worst_scale = 0.0;
  for (std::size_t C : {2, 3, 4})
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::vector<double>> ests, refs;
      for (std::size_t c = 0; c < C; ++c) {
        ests.push_back(uniform({48}, rng).storage());
        refs.push_back(uniform({48}, rng).storage());
      }
      const auto r = pit_loss(ests, refs);
      std::vector<std::size_t> perm(C);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      double best = std::numeric_limits<double>::infinity();
      do {
        double s = 0.0;
        for (std::size_t i = 0; i < C; ++i) s -= sisdr(ests[i], refs[perm[i]]).db;
        best = std::min(best, s / static_cast<double>(C));
      } while (std::next_permutation(perm.begin(), perm.end()));
      mismatches += std::abs(best - r.loss) > 1e-12;
      for (double a : {0.1, 1.0, 10.0}) {
        auto scaled = ests;
        for (auto& s : scaled)
          for (auto& x : s) x *= a;
        const auto rs = pit_loss(scaled, refs);
        perm_changes += rs.perm != r.perm;
        worst_scale = std::max(worst_scale, std::abs(rs.loss - r.loss));
      }
    }
  v.require(mismatches == 0, std::to_string(mismatches) + " of 300 differ from exhaustive enumeration");
  v.require(perm_changes == 0 && worst_scale < 1e-6,
            std::to_string(perm_changes) + " argmin changes under scaling, max loss shift " + num(worst_scale, 3) + " dB");
}

// ---- 7: desk-scale learning --------------------------------------------------------------

void criterion7(Verdict& v) {
  const RunConfig rc = RunConfig::toy();
  const auto train = train_manifest(rc);
  const auto eval = materialize(eval_manifest(rc));
  auto train_variant = [&](bool deformable) {
    DTCNConfig c = rc.model;
    c.deformable = deformable;
    RecipeHooks hooks;
    hooks.on_epoch = [&](const TrainState&, const EpochRecord& r) {
      std::cerr << (deformable ? "deformable" : "plain") << " epoch " << r.epoch << " train loss " << num(r.train_loss, 4);
      if (r.eval) std::cerr << " eval dSISDR " << num(r.eval->mean_delta, 4);
      std::cerr << " (" << num(r.seconds, 3) << " s)" << std::endl;
    };
    const auto st = run_training(init_train_state(build_separator(c, rc.init_seed), rc.train), rc.train, train, eval, hooks);
    return evaluate(st.model, eval);
  };
  const auto deform = train_variant(true);
  const auto plain = train_variant(false);
  v.require(deform.mean_delta >= 5.0, "deformable eval dSISDR " + num(deform.mean_delta, 4) + " dB >= 5");
  v.require(deform.mean_loss <= plain.mean_loss + 0.5,
            "eval loss deformable " + num(deform.mean_loss, 4) + " <= plain " + num(plain.mean_loss, 4) + " + 0.5 dB");
}

// ---- 8: analysis pipeline on planted traces ----------------------------------------------

void criterion8(Verdict& v) {
  const auto corr = testing::reported_correlations();
  const std::vector<double> spread{0.2, 0.5, 0.3, 0.1, 1.1, 0.4, 0.6, 0.2};
  const auto traces = testing::planted_traces(testing::planted_means(corr, 100, 8), spread, 50);
  const auto stats = block_stats(traces);
  const std::size_t chosen = select_block(stats);
  v.require(chosen == 4, "selected block " + std::to_string(chosen) + " (planted 4)");
  std::vector<std::vector<double>> means;
  for (const auto& utt : traces) means.push_back(utterance_means(utt[chosen]));
  for (auto [p, q] : {std::pair{0, 1}, {0, 2}, {1, 2}}) {
    const double rho = export_scatter(means, p, q).rho;
    v.require(std::abs(rho - corr[p][q]) <= 0.01,
              "rho(tau" + std::to_string(p + 1) + ",tau" + std::to_string(q + 1) + ") " + num(rho, 6) + " vs " + num(corr[p][q]));
  }
}

// ---- 9: reconstruction and signal-model identities ---------------------------------------

void criterion9(Verdict& v) {
  Rng rng(9);
  double frames_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(16, 4000)(rng);
    const auto x = uniform({n}, rng).storage();
    const auto y = overlap_add(segment(x, 16), n);
    for (std::size_t i = 0; i < n; ++i) frames_err = std::max(frames_err, std::abs(x[i] - y[i]));
  }
  v.require(frames_err < 1e-6, "frames round trip " + num(frames_err, 3));

  MixConfig mc;
  mc.length = 4000;
  mc.max_direct_delay = 8;
  double eq1 = 0.0, eq2 = 0.0;
  for (const auto& spec : build_manifest(mc, 100, 91, 92).examples) {
    const auto ex = build_example(spec);
    std::vector<double> rebuilt = ex.noise.samples;
    for (std::size_t c = 0; c < ex.sources.size(); ++c) {
      const auto full = convolve(ex.rirs[c].taps, ex.sources[c].samples, ex.mixture.size());
      for (std::size_t i = 0; i < full.size(); ++i) {
        eq2 = std::max(eq2, std::abs(ex.direct_targets[c].samples[i] + ex.reverberant[c].samples[i] - full[i]));
        rebuilt[i] += full[i];
      }
    }
    for (std::size_t i = 0; i < rebuilt.size(); ++i) eq1 = std::max(eq1, std::abs(rebuilt[i] - ex.mixture.samples[i]));
  }
  v.require(eq1 < 1e-10, "mixture identity " + num(eq1, 3));
  v.require(eq2 < 1e-10, "direct + reverberant identity " + num(eq2, 3));
}

}  // namespace

int main(int argc, char** argv) {
  const std::function<void(Verdict&)> criteria[] = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                                    criterion6, criterion7, criterion8, criterion9};
  if (argc != 2) {
    std::cerr << "usage: acceptance <1-9>\n";
    return 2;
  }
  const int n = std::atoi(argv[1]);
  if (n < 1 || n > 9) {
    std::cerr << "criterion must be 1-9\n";
    return 2;
  }
  Verdict v;
  try {
    criteria[n - 1](v);
  } catch (const std::exception& e) {
    v.require(false, std::string("exception: ") + e.what());
  }
  std::cout << "criterion " << n << ": " << (v.pass ? "PASS" : "FAIL") << " - " << v.detail.str() << std::endl;
  return v.pass ? 0 : 1;
}
