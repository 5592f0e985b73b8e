#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gdse {

inline constexpr std::uint32_t kDefaultSampleRate = 16000;

// Mono waveform with float samples nominally in [-1, 1].
struct Wave {
  std::vector<double> samples;
  std::uint32_t sample_rate = kDefaultSampleRate;

  std::size_t size() const { return samples.size(); }
};

// RIFF/WAVE, PCM 16-bit little-endian, mono. Samples map to int16 by x * 32768,
// rounded and saturated to [-32768, 32767]; reading divides by 32768.
Wave read_wav(const std::filesystem::path& path);
void write_wav(const Wave& wave, const std::filesystem::path& path);
Wave decode_wav(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_wav(const Wave& wave);
std::int16_t to_pcm16(double x);

// Throws InputError unless the wave is at `rate`; the message asks for
// resampling since the pipeline does not resample.
void require_sample_rate(const Wave& wave, std::uint32_t rate = kDefaultSampleRate);

struct Mixture {
  Wave noisy;
  Wave scaled_noise;
  double gain = 0.0;
};

// Crops `noise` to the clean length starting at `noise_offset`, then scales it
// by (||x|| / ||w||) 10^(-snr/20) so that 10 log10(||x||^2 / ||w'||^2) = snr.
Mixture mix_at_snr(const Wave& clean, const Wave& noise, double snr_db,
                   std::size_t noise_offset = 0);

double energy(std::span<const double> x);
double snr_db(std::span<const double> clean, std::span<const double> noise);

enum class CorpusKind {
  // Sum of 3-8 harmonics with vibrato and a smooth envelope.
  HarmonicVoiced,
  // White noise under a slow amplitude modulation.
  AmNoise,
  // Harmonic bursts separated by silence.
  SilenceMixed,
};

CorpusKind parse_corpus_kind(std::string_view name);
std::string_view corpus_kind_name(CorpusKind kind);

// Deterministic given `seed`; each clip is peak-normalized to 0.5.
std::vector<Wave> synth_corpus(CorpusKind kind, std::size_t count, std::size_t length,
                               std::uint64_t seed,
                               std::uint32_t sample_rate = kDefaultSampleRate);

struct HarmonicParams {
  double f0 = 0.0;           // Hz
  int harmonics = 0;
  double vibrato_rate = 0.0;   // Hz
  double vibrato_depth = 0.0;  // fraction of f0
};

// One harmonic-voiced clip; the drawn parameters are reported through `params`.
Wave synth_harmonic_clip(std::uint64_t seed, std::size_t length, std::uint32_t sample_rate,
                         HarmonicParams* params = nullptr);

// White Gaussian noise with standard deviation `sd`.
Wave white_noise(std::size_t length, double sd, std::uint64_t seed,
                 std::uint32_t sample_rate = kDefaultSampleRate);

}  // namespace gdse
