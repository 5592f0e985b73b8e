#include "gdse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gdse/audio.hpp"
#include "gdse/error.hpp"
#include "gdse/guided_sampler.hpp"
#include "gdse/metrics.hpp"
#include "gdse/weights_io.hpp"

namespace fs = std::filesystem;

namespace gdse {
namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

std::string snr_tag(double snr) {
  std::ostringstream s;
  s << (snr < 0 ? "m" : "") << std::abs(snr);
  return s.str();
}

std::string indexed(const std::string& prefix, std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", k);
  return prefix + buf + ".wav";
}

Wave make_noise(const Config& cfg, std::size_t length, std::uint64_t seed) {
  const std::string kind = cfg.get_string("io.noise_kind");
  const double sd = cfg.get_double("io.noise_sd");
  if (!(sd > 0.0)) throw InputError("config: io.noise_sd must be > 0");
  Wave w = white_noise(length, sd, seed);
  if (kind == "white") return w;
  if (kind == "ar1") {
    // w_i = 0.9 w_{i-1} + u_i, innovations rescaled for a stationary sd of `sd`.
    const double a = 0.9;
    const double k = std::sqrt(1.0 - a * a);
    double prev = 0.0;
    for (auto& s : w.samples) {
      prev = a * prev + k * s;
      s = prev;
    }
    return w;
  }
  throw InputError("config: io.noise_kind must be 'white' or 'ar1'");
}

std::size_t positive_size(const Config& cfg, const std::string& key) {
  const auto v = cfg.get_int(key);
  if (v < 1) throw InputError("config: " + key + " must be >= 1");
  return static_cast<std::size_t>(v);
}

StftConfig stft_from(const Config& cfg) {
  return {positive_size(cfg, "io.frame"), positive_size(cfg, "io.hop")};
}

Wave read_16k(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("input file not found: " + path.string());
  Wave w = read_wav(path);
  require_sample_rate(w);
  return w;
}

EpsilonNet load_backbone(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("backbone weights not found: " + path.string());
  return epsilon_net_from(load_weights(path));
}

NoiseModel load_noise(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("noise weights not found: " + path.string());
  return noise_model_from(load_weights(path));
}

EnhanceRun run_enhance(std::span<const double> y, const EpsilonNet& net, const NoiseModel& nm,
                       const DiffusionSchedule& sched, const GuidanceSchedule& gs,
                       std::uint64_t seed, const EnhanceOptions& opts) {
  Rng rng(seed);
  try {
    return enhance(y, net, nm, sched, gs, rng, opts);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
}

}  // namespace

fs::path out_dir(const Config& cfg) { return cfg.get_string("run.out_dir"); }

fs::path corpus_dir(const Config& cfg) {
  return cfg.is_set("io.corpus_dir") ? fs::path(cfg.get_string("io.corpus_dir"))
                                     : out_dir(cfg) / "corpus";
}

fs::path backbone_weights_path(const Config& cfg) {
  return cfg.is_set("io.backbone_weights") ? fs::path(cfg.get_string("io.backbone_weights"))
                                           : out_dir(cfg) / "backbone.gdse";
}

fs::path noise_weights_path(const Config& cfg) {
  return cfg.is_set("io.noise_weights") ? fs::path(cfg.get_string("io.noise_weights"))
                                        : out_dir(cfg) / "noise.gdse";
}

void log_resolved_config(const Config& cfg, const std::string& command, std::ostream& log) {
  const std::string text = cfg.resolved();
  log << "# resolved config for '" << command << "'\n" << text;
  auto out = open_out(out_dir(cfg) / (command + ".config.ini"));
  out << text;
}

SynthOutputs cmd_synth(const Config& cfg, std::ostream& log) {
  const Rng base(cfg.get_u64("run.seed"));
  const auto rng = base.fork(kSynthStream);
  const CorpusKind kind = [&] {
    try {
      return parse_corpus_kind(cfg.get_string("io.corpus_kind"));
    } catch (const std::invalid_argument& e) {
      throw InputError(std::string("config: ") + e.what());
    }
  }();
  const auto count = positive_size(cfg, "io.corpus_count");
  const auto length = positive_size(cfg, "io.clip_length");
  const auto tests = static_cast<std::size_t>(std::max<long long>(0, cfg.get_int("io.test_count")));

  SynthOutputs out;
  const fs::path cdir = corpus_dir(cfg);
  fs::create_directories(cdir);
  const auto corpus = synth_corpus(kind, count, length, Rng::derive_seed(rng.seed(), 1));
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    out.corpus.push_back(cdir / indexed("clean_", k));
    write_wav(corpus[k], out.corpus.back());
  }
  log << "synth: " << corpus.size() << " clean clips of " << length << " samples in "
      << cdir.string() << '\n';

  const fs::path odir = out_dir(cfg);
  fs::create_directories(odir);
  out.noise = odir / "noise.wav";
  write_wav(make_noise(cfg, positive_size(cfg, "io.noise_length"), Rng::derive_seed(rng.seed(), 2)),
            out.noise);
  log << "synth: noise clip " << out.noise.string() << '\n';

  if (tests == 0) return out;
  const fs::path tdir = odir / "test";
  fs::create_directories(tdir);
  const auto clean = synth_corpus(kind, tests, length, Rng::derive_seed(rng.seed(), 3));
  const Wave test_noise =
      make_noise(cfg, length * tests, Rng::derive_seed(rng.seed(), 4));
  // The clean clip is rescaled instead of the noise so that every mixture
  // carries noise from the same distribution as noise.wav.
  for (double snr : cfg.get_double_list("io.snr_list")) {
    for (std::size_t k = 0; k < clean.size(); ++k) {
      const auto mix = mix_at_snr(clean[k], test_noise, snr, k * length);
      Wave ref = clean[k], noisy = mix.noisy;
      for (auto& s : ref.samples) s /= mix.gain;
      for (auto& s : noisy.samples) s /= mix.gain;
      const std::string tag = "snr" + snr_tag(snr) + "_";
      out.test_clean.push_back(tdir / indexed("clean_" + tag, k));
      write_wav(ref, out.test_clean.back());
      out.test_noisy.push_back(tdir / indexed("noisy_" + tag, k));
      write_wav(noisy, out.test_noisy.back());
    }
  }
  log << "synth: " << out.test_noisy.size() << " test mixtures in " << tdir.string() << '\n';
  return out;
}

fs::path cmd_train_backbone(const Config& cfg, std::ostream& log) {
  const Rng base(cfg.get_u64("run.seed"));
  auto rng = base.fork(kBackboneStream);
  const auto sched = schedule_from(cfg);
  const fs::path dir = corpus_dir(cfg);
  if (!fs::is_directory(dir)) throw InputError("corpus directory not found: " + dir.string());

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InputError("no .wav files in " + dir.string());
  std::vector<std::vector<double>> corpus;
  for (const auto& f : files) corpus.push_back(read_16k(f).samples);

  const auto arch = epsilon_arch_from(cfg);
  const auto train = backbone_train_from(cfg);
  log << "train-backbone: " << corpus.size() << " clips, receptive field "
      << arch.receptive_field() << '\n';
  BackboneTrainResult result = [&] {
    try {
      return train_backbone(corpus, sched, arch, train, rng);
    } catch (const std::invalid_argument& e) {
      throw InputError(std::string("train-backbone: ") + e.what());
    }
  }();

  const fs::path weights = backbone_weights_path(cfg);
  if (weights.has_parent_path()) fs::create_directories(weights.parent_path());
  save_weights(to_weights(result.net, sched.fingerprint()), weights);
  auto csv = open_out(out_dir(cfg) / "backbone_loss.csv");
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < result.loss_trace.size(); ++e)
    csv << e + 1 << ',' << result.loss_trace[e] << '\n';
  if (!result.loss_trace.empty())
    log << "train-backbone: final epoch loss " << result.loss_trace.back() << '\n';
  log << "train-backbone: wrote " << weights.string() << '\n';
  return weights;
}

fs::path cmd_train_noise(const Config& cfg, const fs::path& noise_wav, std::ostream& log) {
  const Rng base(cfg.get_u64("run.seed"));
  auto rng = base.fork(kNoiseStream);
  const auto sched = schedule_from(cfg);
  const Wave noise = read_16k(noise_wav);
  const auto arch = noise_arch_from(cfg);
  const auto train = noise_train_from(cfg);
  NoiseTrainResult result = [&] {
    try {
      return train_noise_model(noise.samples, sched, arch, train, rng);
    } catch (const std::invalid_argument& e) {
      throw InputError(std::string("train-noise: ") + e.what());
    }
  }();

  const fs::path weights = noise_weights_path(cfg);
  if (weights.has_parent_path()) fs::create_directories(weights.parent_path());
  save_weights(to_weights(result.model), weights);

  auto loss = open_out(out_dir(cfg) / "noise_loss.csv");
  loss << "t,epoch,loss\n";
  auto summary = open_out(out_dir(cfg) / "noise_summary.csv");
  summary << "t,initial_val_nll,final_val_nll,aborted,diagnostic\n";
  int aborted = 0;
  for (const auto& r : result.reports) {
    for (std::size_t e = 0; e < r.loss_trace.size(); ++e)
      loss << r.t << ',' << e + 1 << ',' << r.loss_trace[e] << '\n';
    summary << r.t << ',' << r.initial_val_nll << ',' << r.final_val_nll << ','
            << (r.aborted ? 1 : 0) << ",\"" << r.diagnostic << "\"\n";
    if (r.aborted) {
      ++aborted;
      log << "train-noise: step " << r.t << " aborted: " << r.diagnostic << '\n';
    }
  }
  log << "train-noise: " << result.reports.size() << " steps trained, " << aborted
      << " aborted; wrote " << weights.string() << '\n';
  return weights;
}

EnhanceOutputs cmd_enhance(const Config& cfg, const fs::path& noisy, const fs::path& backbone,
                           const fs::path& noise, std::ostream& log) {
  const std::uint64_t seed = Rng::derive_seed(cfg.get_u64("run.seed"), kEnhanceStream);
  const Wave y = read_16k(noisy);
  const EpsilonNet net = load_backbone(backbone);
  const auto sched = schedule_from_fingerprint(*net.fingerprint());
  if (!(sched.fingerprint() == schedule_from(cfg).fingerprint()))
    log << "enhance: note: using the backbone's training schedule (T=" << sched.steps()
        << ") instead of the configured one\n";

  const fs::path odir = out_dir(cfg);
  fs::create_directories(odir);
  const std::string stem = noisy.stem().string();
  EnhanceOutputs out;
  out.wav = odir / (stem + "_enhanced.wav");
  out.diagnostics = odir / (stem + "_diagnostics.csv");
  auto csv = open_out(out.diagnostics);
  csv << "t,loss_t,grad_norm,s_t,clipped\n";

  Wave x0{{}, y.sample_rate};
  if (cfg.get_bool("guidance.unguided")) {
    Rng rng(seed);
    ReverseOptions ro;
    ro.noise_at_final_step = cfg.get_bool("guidance.noise_at_final_step");
    x0.samples = sample_unguided(y.size(), net, sched, rng, ro);
    log << "enhance: unguided sampling, " << sched.steps() << " steps\n";
  } else {
    const NoiseModel nm = load_noise(noise);
    const auto gs = guidance_from(cfg, sched);
    const auto run = run_enhance(y.samples, net, nm, sched, gs, seed, enhance_options_from(cfg));
    for (const auto& d : run.diagnostics)
      csv << d.t << ',' << d.loss << ',' << d.grad_norm << ',' << d.scale << ','
          << (d.clipped ? 1 : 0) << '\n';
    out.clip_events = run.clip_events;
    x0.samples = run.x0;
    log << "enhance: " << sched.steps() << " guided steps, " << run.clip_events
        << " gradient clip events\n";
  }
  write_wav(x0, out.wav);
  if (cfg.get_bool("io.spectrogram") && x0.size() >= stft_from(cfg).frame)
    spectrogram_export(x0.samples, stft_from(cfg), odir / (stem + "_enhanced_spec"));
  log << "enhance: wrote " << out.wav.string() << '\n';
  return out;
}

EvalReport evaluate(std::span<const double> reference, std::span<const double> estimate,
                    std::span<const double> noisy, const StftConfig& stft) {
  if (reference.size() != estimate.size() || reference.size() != noisy.size())
    throw InputError("eval: reference, estimate and noisy must have equal length");
  EvalReport r;
  try {
    r.si_sdr_input = si_sdr(noisy, reference);
    r.si_sdr_output = si_sdr(estimate, reference);
    r.lsd_input = log_spectral_distance(noisy, reference, stft);
    r.lsd_output = log_spectral_distance(estimate, reference, stft);
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("eval: ") + e.what());
  }
  return r;
}

std::string format_eval_table(const EvalReport& r) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << std::left << std::setw(10) << "Method" << std::right << std::setw(14) << "SI-SDR [dB]"
    << std::setw(12) << "LSD [dB]" << '\n';
  s << std::left << std::setw(10) << "Input" << std::right << std::setw(14) << r.si_sdr_input
    << std::setw(12) << r.lsd_input << '\n';
  s << std::left << std::setw(10) << "Enhanced" << std::right << std::setw(14) << r.si_sdr_output
    << std::setw(12) << r.lsd_output << '\n';
  s << std::left << std::setw(10) << "Delta" << std::right << std::showpos << std::setw(14)
    << r.delta_si_sdr() << std::setw(12) << r.delta_lsd() << '\n';
  return s.str();
}

EvalReport cmd_eval(const fs::path& reference, const fs::path& estimate, const fs::path& noisy,
                    const fs::path& out, const StftConfig& stft, std::ostream& log) {
  const Wave ref = read_16k(reference);
  const Wave est = read_16k(estimate);
  const Wave y = read_16k(noisy);
  const auto r = evaluate(ref.samples, est.samples, y.samples, stft);
  fs::create_directories(out);
  auto csv = open_out(out / "eval.csv");
  csv << "metric,input,enhanced,delta\n"
      << "si_sdr," << r.si_sdr_input << ',' << r.si_sdr_output << ',' << r.delta_si_sdr() << '\n'
      << "lsd," << r.lsd_input << ',' << r.lsd_output << ',' << r.delta_lsd() << '\n';
  const std::string table = format_eval_table(r);
  auto txt = open_out(out / "eval.txt");
  txt << table;
  log << table;
  return r;
}

std::vector<SweepRow> cmd_sweep(const Config& cfg, std::ostream& log) {
  if (!cfg.is_set("io.clean") || !cfg.is_set("io.noisy"))
    throw InputError("sweep: io.clean and io.noisy must name the calibration clip");
  const std::uint64_t seed = Rng::derive_seed(cfg.get_u64("run.seed"), kEnhanceStream);
  const Wave clean = read_16k(cfg.get_string("io.clean"));
  const Wave y = read_16k(cfg.get_string("io.noisy"));
  const EpsilonNet net = load_backbone(backbone_weights_path(cfg));
  const NoiseModel nm = load_noise(noise_weights_path(cfg));
  const auto sched = schedule_from_fingerprint(*net.fingerprint());
  const auto opts = enhance_options_from(cfg);
  const bool inverted = cfg.get_bool("guidance.ratio_inverted");
  const auto stft = stft_from(cfg);

  const auto lambdas = cfg.get_double_list("sweep.lambda_max");
  const auto gammas = cfg.get_double_list("sweep.gamma");
  if (lambdas.empty() || gammas.empty()) throw InputError("sweep: empty parameter grid");

  std::vector<SweepRow> rows;
  auto csv = open_out(out_dir(cfg) / "sweep.csv");
  csv << "lambda_max,gamma,si_sdr_input,si_sdr_output,delta_si_sdr,lsd_output\n";
  for (double lambda : lambdas) {
    for (double gamma : gammas) {
      GuidanceSchedule gs = [&] {
        try {
          return guidance_scale(sched, lambda, gamma, inverted);
        } catch (const std::invalid_argument& e) {
          throw InputError(std::string("sweep: ") + e.what());
        }
      }();
      const auto run = run_enhance(y.samples, net, nm, sched, gs, seed, opts);
      SweepRow row{lambda, gamma, evaluate(clean.samples, run.x0, y.samples, stft)};
      csv << lambda << ',' << gamma << ',' << row.report.si_sdr_input << ','
          << row.report.si_sdr_output << ',' << row.report.delta_si_sdr() << ','
          << row.report.lsd_output << '\n';
      log << "sweep: lambda_max=" << lambda << " gamma=" << gamma
          << " delta SI-SDR=" << row.report.delta_si_sdr() << " dB\n";
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace gdse
