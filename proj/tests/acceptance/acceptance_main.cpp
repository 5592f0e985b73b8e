// Acceptance checks at reduced, single-core sizes. Prints one PASS/FAIL line
// per criterion and exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "gdse/audio.hpp"
#include "gdse/diffusion.hpp"
#include "gdse/guided_sampler.hpp"
#include "gdse/metrics.hpp"
#include "gdse/noise_model.hpp"
#include "gdse/numerics/gradcheck.hpp"
#include "gdse/schedules.hpp"
#include "gdse/weights_io.hpp"

using namespace gdse;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

void perturb(std::vector<Param>& params, Rng& rng, double amount) {
  for (auto& p : params)
    for (auto& v : p.value) v += amount * rng.normal();
}

double gaussian_entropy(double var) {
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * var);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> ar1(std::size_t n, double a, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(n);
  double prev = 0.0;
  for (auto& x : w) x = prev = a * prev + rng.normal();
  return w;
}

// 1. Finite-difference agreement of the noise-model NLL and the backbone loss.
void autodiff_oracle(Outcome& o) {
  const auto s = DiffusionSchedule::linear(10, 1e-3, 0.1);
  Rng rng(101);
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    Rng init(200 + inst);
    NoiseModel m({}, s.fingerprint(), init);
    perturb(m.params(), init, 0.4);
    const int t = static_cast<int>(rng.uniform_int(1, 10));
    const auto v = rng.normal_vector(40);
    // Input gradient.
    const auto gi = loss_input_gradient(m, t, v);
    const auto ni = finite_difference_gradient(
        [&](std::span<const double> x) { return m.loss(t, x); }, v);
    worst = std::max(worst, max_relative_error(gi, ni, 1e-7));
    // Parameter gradient.
    auto params = m.step_params(t);
    for (Param* p : params) p->zero_grad();
    {
      Tape tape;
      Var in = tape.input(v);
      auto [mu, sigma] = m.forward(tape, t, in);
      tape.backward(nll_loss(in, mu, sigma));
    }
    for (Param* p : params) {
      const auto analytic = p->grad;
      const auto saved = p->value;
      const auto numeric = finite_difference_gradient(
          [&](std::span<const double> w) {
            std::copy(w.begin(), w.end(), p->value.begin());
            Tape tape;
            Var in = tape.input(v);
            auto [mu, sigma] = m.forward(tape, t, in, false);
            const double l = nll_loss(in, mu, sigma).item();
            p->value = saved;
            return l;
          },
          saved);
      worst = std::max(worst, max_relative_error(analytic, numeric, 1e-7));
    }
  }
  EpsilonNetConfig arch;
  arch.layers = 2;
  arch.channels = 4;
  arch.embed_dim = 8;
  arch.embed_hidden = 8;
  for (int inst = 0; inst < 10; ++inst) {
    Rng init(300 + inst);
    EpsilonNet net(arch, init);
    perturb(net.params(), init, 0.2);
    const std::vector<std::vector<double>> x0s{rng.normal_vector(24), rng.normal_vector(24)};
    const std::vector<std::vector<double>> eps{rng.normal_vector(24), rng.normal_vector(24)};
    const std::vector<int> ts{static_cast<int>(rng.uniform_int(1, 10)),
                              static_cast<int>(rng.uniform_int(1, 10))};
    for (auto& p : net.params()) p.zero_grad();
    {
      Tape tape;
      tape.backward(backbone_loss(tape, net, x0s, ts, eps, s));
    }
    for (auto& p : net.params()) {
      const auto analytic = p.grad;
      const auto saved = p.value;
      const auto numeric = finite_difference_gradient(
          [&](std::span<const double> w) {
            std::copy(w.begin(), w.end(), p.value.begin());
            Tape t;
            const double l = backbone_loss(t, net, x0s, ts, eps, s).item();
            p.value = saved;
            return l;
          },
          saved);
      worst = std::max(worst, max_relative_error(analytic, numeric, 1e-7));
    }
  }
  o.detail << "20 instances, max rel err " << worst << " ";
  o.check(worst < 1e-4, "max relative error < 1e-4");
}

// 2. Closed-form schedule identities on random beta schedules.
void schedule_identities(Outcome& o) {
  Rng rng(7);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int T = static_cast<int>(rng.uniform_int(1, 300));
    std::vector<double> b(static_cast<std::size_t>(T));
    for (auto& x : b) x = rng.uniform(1e-5, 0.2);
    const auto s = DiffusionSchedule::from_betas(b);
    double prod = 1.0, prev = 1.0;
    for (int t = 1; t <= T; ++t) {
      prod *= 1.0 - b[t - 1];
      worst = std::max(worst, std::abs(s.alpha_bar(t) - prod));
      const double tb = t == 1 ? b[0] : (1.0 - prev) / (1.0 - prod) * b[t - 1];
      worst = std::max(worst, std::abs(s.tilde_beta(t) - tb));
      worst = std::max(worst, std::abs(s.g(t) - std::sqrt((1.0 - prod) / prod)) /
                                  std::max(1.0, std::sqrt((1.0 - prod) / prod)));
      prev = prod;
    }
    const double lambda = rng.uniform(0.0, 2.0), gamma = rng.uniform(0.1, 2.0);
    const auto gs = guidance_scale(s, lambda, gamma);
    worst = std::max(worst, std::abs(gs.scale(1) - lambda));
    if (T > 1) {
      const double ratio = std::sqrt(1.0 - s.alpha_bar(T)) / std::sqrt(1.0 - s.alpha_bar(1));
      worst = std::max(worst, std::abs(gs.scale(T) - lambda * std::pow(ratio, gamma)) /
                                  std::max(1.0, gs.scale(T)));
    }
  }
  o.detail << "200 schedules, max deviation " << worst << " ";
  o.check(worst <= 1e-12, "identities to 1e-12");
}

// 3. Iterated forward steps against the closed-form marginal.
void marginal_consistency(Outcome& o) {
  const auto s = DiffusionSchedule::linear(200, 1e-4, 0.05);
  const std::size_t n = 10000;
  const std::vector<double> x0(n, 10.0);
  Rng chain_rng(11), direct_rng(12);
  auto x = x0;
  int t = 0;
  for (int target : {1, 100, 200}) {
    for (; t < target;) x = forward_step(x, ++t, s, chain_rng);
    const auto q = q_sample(x0, target, s, direct_rng).x_t;
    auto moments = [&](const std::vector<double>& v) {
      double m = 0.0, m2 = 0.0;
      for (double a : v) m += a;
      m /= double(v.size());
      for (double a : v) m2 += (a - m) * (a - m);
      return std::pair{m, m2 / double(v.size() - 1)};
    };
    const auto [mc, vc] = moments(x);
    const auto [mq, vq] = moments(q);
    const double dm = std::abs(mc - mq) / std::abs(mq), dv = std::abs(vc - vq) / vq;
    o.detail << "t=" << target << " mean " << mc << "/" << mq << " var " << vc << "/" << vq
             << "; ";
    o.check(dm < 0.05 && dv < 0.05, "t=" + std::to_string(target) + " within 5%");
  }
}

// 4. Held-out NLL against analytic Gaussian entropy (white) and an i.i.d. fit (AR(1)).
void noise_model_fidelity(Outcome& o) {
  const auto s = DiffusionSchedule::linear(25, 1e-4, 0.05);
  const double sw = 1.0;
  Rng data(21);
  const auto white = data.normal_vector(8000);
  NoiseTrainConfig cfg;
  cfg.epochs = 60;
  Rng rng(22);
  const auto r = train_noise_model(white, s, {}, cfg, rng);
  for (int t : {1, 6, 12}) {
    const double h = gaussian_entropy(sw * sw + s.g(t) * s.g(t));
    const double nll = r.reports[t - 1].final_val_nll;
    o.detail << "white t=" << t << " nll " << nll << " vs H " << h << "; ";
    o.check(std::abs(nll / h - 1.0) < 0.05, "white t=" + std::to_string(t) + " within 5%");
  }

  const auto clip = ar1(8000, 0.9, 23);
  cfg.epochs = 150;
  Rng rng2(24);
  const auto ra = train_noise_model(clip, s, {}, cfg, rng2);
  // Held-out part of v_1 exactly as training built it (step t draws from fork(t)).
  Rng step_rng = Rng(24).fork(1);
  const auto v = build_vt(clip, 1, s, step_rng, DrawMode::Vector).v;
  const auto n_train = static_cast<std::size_t>(std::floor(0.8 * double(v.size())));
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < n_train; ++i) mean += v[i];
  mean /= double(n_train);
  for (std::size_t i = 0; i < n_train; ++i) var += (v[i] - mean) * (v[i] - mean);
  var /= double(n_train);
  double iid = 0.0;
  for (std::size_t i = n_train; i < v.size(); ++i)
    iid += 0.5 * std::log(2.0 * std::numbers::pi * var) + (v[i] - mean) * (v[i] - mean) / (2.0 * var);
  iid /= double(v.size() - n_train);
  const double model =
      per_sample_nll(ra.model, 1, std::span<const double>(v).subspan(n_train));
  o.detail << "AR(1) t=1 model " << model << " vs iid " << iid;
  o.check(model < iid, "AR(1) below i.i.d. fit");
}

// 5. lambda_max = 0 against the unguided sampler.
void zero_guidance(Outcome& o) {
  const auto s = DiffusionSchedule::linear(25, 1e-4, 0.05);
  Rng init(31);
  EpsilonNetConfig arch;
  arch.layers = 3;
  arch.channels = 8;
  EpsilonNet net(arch, init);
  perturb(net.params(), init, 0.1);
  net.set_fingerprint(s.fingerprint());
  NoiseModel nm({}, s.fingerprint(), init);
  perturb(nm.params(), init, 0.1);
  const auto y = init.normal_vector(2000);
  std::size_t mismatches = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng a(seed), b(seed);
    const auto run = enhance(y, net, nm, s, guidance_scale(s, 0.0, 0.7), a);
    const auto ref = sample_unguided(y.size(), net, s, b);
    for (std::size_t i = 0; i < ref.size(); ++i) mismatches += run.x0[i] != ref[i];
  }
  o.detail << "3 seeds x 2000 samples, " << mismatches << " differing samples";
  o.check(mismatches == 0, "bit-identical");
}

// 6. Trained toy backbone and noise model on harmonic signals in white noise at 5 dB.
void enhancement_gain(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = DiffusionSchedule::linear(50, 1e-4, 0.05);
  const auto corpus_w = synth_corpus(CorpusKind::HarmonicVoiced, 32, 8000, 11);
  std::vector<std::vector<double>> corpus;
  for (const auto& w : corpus_w) corpus.push_back(w.samples);
  EpsilonNetConfig arch;
  BackboneTrainConfig bc;
  bc.epochs = 80;
  bc.batch = 8;
  bc.segment_length = 1024;
  Rng brng(5);
  const auto backbone = train_backbone(corpus, s, arch, bc, brng);

  const double sw = 0.1;
  const auto noise_clip = white_noise(16000, sw, 99);
  NoiseTrainConfig nc;
  nc.epochs = 100;
  Rng nrng(3);
  const auto noise = train_noise_model(noise_clip.samples, s, {}, nc, nrng);

  const auto tests = synth_corpus(CorpusKind::HarmonicVoiced, 10, 8000, 777);
  const auto gs = guidance_scale(s, 0.72, 0.7);
  std::vector<double> deltas;
  int improved = 0;
  for (std::size_t k = 0; k < tests.size(); ++k) {
    const auto w = white_noise(8000, 1.0, 1000 + k);
    const auto mix = mix_at_snr(tests[k], w, 5.0);
    // Rescale so the noise has the training noise level.
    std::vector<double> ref = tests[k].samples, y = mix.noisy.samples;
    for (auto& v : ref) v *= sw / mix.gain;
    for (auto& v : y) v *= sw / mix.gain;
    Rng erng(42 + k);
    const auto run = enhance(y, backbone.net, noise.model, s, gs, erng);
    const double in = si_sdr(y, ref), out = si_sdr(run.x0, ref);
    deltas.push_back(out - in);
    improved += out > in;
  }
  const double med = median(deltas);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.detail << "median dSI-SDR " << med << " dB, improved " << improved << "/10, " << secs << " s";
  o.check(med > 2.0, "median > +2 dB");
  o.check(improved >= 8, ">= 8/10 improved");
}

// 7. Exhaustive causality on length-64 inputs for every step.
void causality(Outcome& o) {
  const auto s = DiffusionSchedule::linear(25, 1e-4, 0.05);
  std::size_t violations = 0, probes = 0;
  for (bool shared : {false, true}) {
    NoiseModelConfig cfg;
    cfg.shared_trunk = shared;
    Rng init(41);
    NoiseModel m(cfg, s.fingerprint(), init);
    perturb(m.params(), init, 0.5);
    const auto v = init.normal_vector(64);
    for (int t = 1; t <= s.steps(); ++t) {
      const auto base = m.predict(t, v);
      for (std::size_t j = 0; j < 64; ++j) {
        auto vp = v;
        vp[j] += 1.0;
        const auto h = m.predict(t, vp);
        for (std::size_t i = 0; i <= j; ++i) {
          ++probes;
          violations += h.mu[i] != base.mu[i] || h.sigma[i] != base.sigma[i];
        }
      }
    }
  }
  o.detail << probes << " (t, i, j) probes, " << violations << " violations";
  o.check(violations == 0, "no dependence on indices >= i");
}

// 8. Fixed-seed reproducibility and byte-exact round trips.
void determinism(Outcome& o) {
  const auto s = DiffusionSchedule::linear(10, 1e-3, 0.1);
  const auto corpus_w = synth_corpus(CorpusKind::HarmonicVoiced, 4, 2048, 3);
  std::vector<std::vector<double>> corpus;
  for (const auto& w : corpus_w) corpus.push_back(w.samples);
  EpsilonNetConfig arch;
  arch.layers = 3;
  arch.channels = 8;
  BackboneTrainConfig bc;
  bc.epochs = 3;
  bc.batch = 4;
  bc.segment_length = 512;
  Rng b1(9), b2(9);
  const auto n1 = train_backbone(corpus, s, arch, bc, b1);
  const auto n2 = train_backbone(corpus, s, arch, bc, b2);
  const auto w1 = encode_weights(to_weights(n1.net, s.fingerprint()));
  o.check(w1 == encode_weights(to_weights(n2.net, s.fingerprint())), "backbone weights");

  const auto clip = white_noise(1000, 0.5, 4).samples;
  NoiseTrainConfig nc;
  nc.epochs = 3;
  Rng r1(10), r2(10);
  const auto m1 = train_noise_model(clip, s, {}, nc, r1);
  nc.workers = 2;
  const auto m2 = train_noise_model(clip, s, {}, nc, r2);
  const auto nw1 = encode_weights(to_weights(m1.model));
  o.check(nw1 == encode_weights(to_weights(m2.model)), "noise weights");

  const auto y = white_noise(2048, 0.3, 5).samples;
  Rng e1(12), e2(12);
  const auto gs = guidance_scale(s, 0.72, 0.7);
  Wave a, b;
  a.samples = enhance(y, n1.net, m1.model, s, gs, e1).x0;
  b.samples = enhance(y, n2.net, m2.model, s, gs, e2).x0;
  o.check(encode_wav(a) == encode_wav(b), "enhanced WAV bytes");

  const auto dir = std::filesystem::temp_directory_path() / "gdse_acceptance";
  std::filesystem::create_directories(dir);
  save_weights(to_weights(m1.model), dir / "a.gdse");
  save_weights(load_weights(dir / "a.gdse"), dir / "b.gdse");
  const auto ra = load_weights(dir / "a.gdse"), rb = load_weights(dir / "b.gdse");
  o.check(encode_weights(ra) == nw1 && encode_weights(rb) == nw1, "save-load-save bytes");
  write_wav(a, dir / "a.wav");
  o.check(encode_wav(read_wav(dir / "a.wav")) == encode_wav(a), "WAV file round trip");

  Rng mr(13);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    Wave clean, noise;
    clean.samples = mr.normal_vector(3000);
    noise.samples = mr.normal_vector(5000);
    const double snr = mr.uniform(-20.0, 30.0);
    const auto m = mix_at_snr(clean, noise, snr, static_cast<std::size_t>(mr.uniform_int(0, 2000)));
    worst = std::max(worst, std::abs(snr_db(clean.samples, m.scaled_noise.samples) - snr));
  }
  o.detail << "mix_at_snr max error " << worst << " dB";
  o.check(worst < 1e-9, "mix_at_snr to 1e-9 dB");
}

// 9. SI-SDR invariances.
void si_sdr_properties(Outcome& o) {
  Rng rng(51);
  double scale_err = 0.0, ortho_err = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto ref = rng.normal_vector(1000);
    auto est = rng.normal_vector(1000);
    for (std::size_t i = 0; i < est.size(); ++i) est[i] += rng.uniform(0.1, 3.0) * ref[i];
    const double base = si_sdr(est, ref);
    for (double c : {1e-3, 0.5, 7.0, -2.0}) {
      auto scaled = est;
      for (auto& v : scaled) v *= c;
      scale_err = std::max(scale_err, std::abs(si_sdr(scaled, ref) - base));
    }
    // Residual orthogonal to ref with the same energy.
    auto r = rng.normal_vector(1000);
    double rr = 0.0, rf = 0.0, ff = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      rf += r[i] * ref[i];
      ff += ref[i] * ref[i];
    }
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= rf / ff * ref[i];
    for (double v : r) rr += v * v;
    std::vector<double> ortho(ref.size());
    for (std::size_t i = 0; i < r.size(); ++i) ortho[i] = ref[i] + std::sqrt(ff / rr) * r[i];
    ortho_err = std::max(ortho_err, std::abs(si_sdr(ortho, ref)));
  }
  o.detail << "scale invariance err " << scale_err << " dB, orthogonal case " << ortho_err << " dB";
  o.check(scale_err < 1e-9, "scale invariance to 1e-9 dB");
  o.check(ortho_err < 1e-9, "orthogonal equal power 0 dB");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"autodiff oracle", autodiff_oracle},
      {"schedule identities", schedule_identities},
      {"marginal consistency", marginal_consistency},
      {"noise-model statistical fidelity", noise_model_fidelity},
      {"zero-guidance equivalence", zero_guidance},
      {"end-to-end enhancement gain", enhancement_gain},
      {"causality", causality},
      {"determinism and round trips", determinism},
      {"SI-SDR properties", si_sdr_properties},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[k].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s criterion %zu (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", k + 1,
                criteria[k].first.c_str(), o.detail.str().c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
