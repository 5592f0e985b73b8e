#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "gdse/config.hpp"
#include "gdse/spectral.hpp"

namespace gdse {

// Seed stream ids derived from run.seed, one per command.
inline constexpr std::uint64_t kSynthStream = 1;
inline constexpr std::uint64_t kBackboneStream = 2;
inline constexpr std::uint64_t kNoiseStream = 3;
inline constexpr std::uint64_t kEnhanceStream = 4;

// Default artifact locations under run.out_dir.
std::filesystem::path out_dir(const Config& cfg);
std::filesystem::path corpus_dir(const Config& cfg);
std::filesystem::path backbone_weights_path(const Config& cfg);
std::filesystem::path noise_weights_path(const Config& cfg);

// Writes the resolved config to `log` and to <out>/<command>.config.ini.
void log_resolved_config(const Config& cfg, const std::string& command, std::ostream& log);

struct SynthOutputs {
  std::vector<std::filesystem::path> corpus;
  std::filesystem::path noise;
  // One per (snr, test clip), snr-major; test_clean[k] is the reference
  // for test_noisy[k].
  std::vector<std::filesystem::path> test_clean;
  std::vector<std::filesystem::path> test_noisy;
};

// Clean training corpus, a noise-only clip for the noise model and test
// mixtures at every io.snr_list level built from held-out clean clips and an
// independent noise realization.
SynthOutputs cmd_synth(const Config& cfg, std::ostream& log);

// Writes backbone.gdse and backbone_loss.csv (epoch,loss).
std::filesystem::path cmd_train_backbone(const Config& cfg, std::ostream& log);

// Writes noise.gdse, noise_loss.csv (t,epoch,loss) and noise_summary.csv.
std::filesystem::path cmd_train_noise(const Config& cfg, const std::filesystem::path& noise_wav,
                                      std::ostream& log);

struct EnhanceOutputs {
  std::filesystem::path wav;
  std::filesystem::path diagnostics;
  int clip_events = 0;
};

// Writes <stem>_enhanced.wav and <stem>_diagnostics.csv
// (t,loss_t,grad_norm,s_t,clipped); optional spectrogram export. With
// guidance.unguided the sampler ignores y and the noise model.
EnhanceOutputs cmd_enhance(const Config& cfg, const std::filesystem::path& noisy,
                           const std::filesystem::path& backbone,
                           const std::filesystem::path& noise, std::ostream& log);

struct EvalReport {
  double si_sdr_input = 0.0;
  double si_sdr_output = 0.0;
  double lsd_input = 0.0;
  double lsd_output = 0.0;

  double delta_si_sdr() const { return si_sdr_output - si_sdr_input; }
  double delta_lsd() const { return lsd_output - lsd_input; }
};

EvalReport evaluate(std::span<const double> reference, std::span<const double> estimate,
                    std::span<const double> noisy, const StftConfig& stft = {});
std::string format_eval_table(const EvalReport& r);

// Writes eval.csv and eval.txt under `out`.
EvalReport cmd_eval(const std::filesystem::path& reference, const std::filesystem::path& estimate,
                    const std::filesystem::path& noisy, const std::filesystem::path& out,
                    const StftConfig& stft, std::ostream& log);

struct SweepRow {
  double lambda_max = 0.0;
  double gamma = 0.0;
  EvalReport report;
};

// Enhances io.noisy for every (sweep.lambda_max, sweep.gamma) pair with the
// same seed and scores it against io.clean. Writes sweep.csv.
std::vector<SweepRow> cmd_sweep(const Config& cfg, std::ostream& log);

}  // namespace gdse
