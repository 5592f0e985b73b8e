// gdse: synthesize data, train the backbone and noise models, enhance and score.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gdse/config.hpp"
#include "gdse/error.hpp"
#include "gdse/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
  std::vector<std::string> overrides;
};

gdse::Config resolve(const Globals& g, bool need_seed) {
  gdse::Config cfg = g.config_path.empty() ? gdse::Config() : gdse::Config::load(g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw gdse::InputError("--set expects section.key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.set("run.seed", std::to_string(*g.seed));
  if (g.workers) cfg.set("run.workers", std::to_string(*g.workers));
  if (!g.out.empty()) cfg.set("run.out_dir", g.out);
  if (need_seed) cfg.get_u64("run.seed");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided diffusion speech enhancement with a learned noise model"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "Config file ([section] key = value)");
  app.add_option("--seed", g.seed, "Overrides run.seed");
  app.add_option("--workers", g.workers, "Overrides run.workers")->check(CLI::PositiveNumber);
  app.add_option("-o,--out", g.out, "Overrides run.out_dir");
  app.add_option("--set", g.overrides, "Override any key: section.key=value (repeatable)");

  auto* synth = app.add_subcommand("synth", "Write the clean corpus, a noise clip and test mixtures");
  auto* backbone = app.add_subcommand("train-backbone", "Train the noise-prediction backbone");

  auto* train_noise = app.add_subcommand("train-noise", "Train the per-step noise models");
  std::string noise_wav;
  train_noise->add_option("noise", noise_wav, "Noise-only WAV (default <out>/noise.wav)");

  auto* enhance = app.add_subcommand("enhance", "Guided sampling conditioned on a noisy WAV");
  std::string noisy, backbone_w, noise_w;
  enhance->add_option("noisy", noisy, "Noisy input WAV")->required();
  enhance->add_option("--backbone", backbone_w, "Backbone weights (default <out>/backbone.gdse)");
  enhance->add_option("--noise-model", noise_w, "Noise weights (default <out>/noise.gdse)");

  auto* eval = app.add_subcommand("eval", "SI-SDR and LSD of an estimate and the noisy input");
  std::string ref, est, eval_noisy;
  eval->add_option("reference", ref, "Clean reference WAV")->required();
  eval->add_option("estimate", est, "Enhanced WAV")->required();
  eval->add_option("noisy", eval_noisy, "Noisy input WAV")->required();

  auto* sweep = app.add_subcommand("sweep", "Grid over guidance lambda_max x gamma");

  CLI11_PARSE(app, argc, argv);

  try {
    gdse::Config cfg = resolve(g, !*eval);
    std::ostream& log = std::cerr;
    if (*synth) {
      gdse::log_resolved_config(cfg, "synth", log);
      gdse::cmd_synth(cfg, log);
    } else if (*backbone) {
      gdse::log_resolved_config(cfg, "train-backbone", log);
      gdse::cmd_train_backbone(cfg, log);
    } else if (*train_noise) {
      gdse::log_resolved_config(cfg, "train-noise", log);
      const fs::path in = noise_wav.empty() ? gdse::out_dir(cfg) / "noise.wav" : fs::path(noise_wav);
      gdse::cmd_train_noise(cfg, in, log);
    } else if (*enhance) {
      gdse::log_resolved_config(cfg, "enhance", log);
      gdse::cmd_enhance(cfg, noisy,
                        backbone_w.empty() ? gdse::backbone_weights_path(cfg) : fs::path(backbone_w),
                        noise_w.empty() ? gdse::noise_weights_path(cfg) : fs::path(noise_w), log);
    } else if (*eval) {
      gdse::log_resolved_config(cfg, "eval", log);
      const gdse::StftConfig stft{static_cast<std::size_t>(cfg.get_int("io.frame")),
                                  static_cast<std::size_t>(cfg.get_int("io.hop"))};
      gdse::cmd_eval(ref, est, eval_noisy, gdse::out_dir(cfg), stft, std::cout);
    } else if (*sweep) {
      gdse::log_resolved_config(cfg, "sweep", log);
      gdse::cmd_sweep(cfg, log);
    }
  } catch (const gdse::InputError& e) {
    std::cerr << "gdse: error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "gdse: error: " << e.what() << '\n';
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "gdse: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "gdse: internal error: " << e.what() << '\n';
    return 2;
  }
  return EXIT_SUCCESS;
}
