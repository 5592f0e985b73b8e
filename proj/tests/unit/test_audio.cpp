#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "gdse/audio.hpp"
#include "gdse/error.hpp"
#include "gdse/numerics/rng.hpp"
#include "gdse/spectral.hpp"

using namespace gdse;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "gdse_audio_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_tag(std::vector<std::uint8_t>& b, const char* tag) { b.insert(b.end(), tag, tag + 4); }

// Canonical 44-byte header followed by the given PCM samples.
std::vector<std::uint8_t> handmade_wav(const std::vector<std::int16_t>& pcm, std::uint32_t rate,
                                       std::uint16_t channels = 1, std::uint16_t bits = 16,
                                       std::uint16_t format = 1) {
  std::vector<std::uint8_t> b;
  const auto data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
  put_tag(b, "RIFF");
  put_u32(b, 36 + data_bytes);
  put_tag(b, "WAVE");
  put_tag(b, "fmt ");
  put_u32(b, 16);
  put_u16(b, format);
  put_u16(b, channels);
  put_u32(b, rate);
  put_u32(b, rate * channels * bits / 8);
  put_u16(b, static_cast<std::uint16_t>(channels * bits / 8));
  put_u16(b, bits);
  put_tag(b, "data");
  put_u32(b, data_bytes);
  for (auto s : pcm) put_u16(b, static_cast<std::uint16_t>(s));
  return b;
}

}  // namespace

TEST(Wav, RoundTripWithinHalfLsb) {
  Rng rng(1);
  Wave w;
  w.samples.resize(1000);
  for (auto& x : w.samples) x = rng.uniform(-1.0, 1.0 - 1.0 / 32768.0);
  const auto path = temp_path("roundtrip.wav");
  write_wav(w, path);
  const auto r = read_wav(path);
  ASSERT_EQ(r.size(), w.size());
  EXPECT_EQ(r.sample_rate, 16000u);
  for (std::size_t i = 0; i < w.size(); ++i)
    EXPECT_LE(std::abs(r.samples[i] - w.samples[i]), 0.5 / 32768.0 + 1e-15);
}

TEST(Wav, Pcm16ConversionSaturates) {
  EXPECT_EQ(to_pcm16(0.0), 0);
  EXPECT_EQ(to_pcm16(1.0), 32767);
  EXPECT_EQ(to_pcm16(5.0), 32767);
  EXPECT_EQ(to_pcm16(-1.0), -32768);
  EXPECT_EQ(to_pcm16(-7.0), -32768);
  EXPECT_EQ(to_pcm16(0.5), 16384);
}

TEST(Wav, EncodesCanonicalHeader) {
  Wave w;
  w.samples = {0.0, 0.5, -0.5};
  const auto bytes = encode_wav(w);
  EXPECT_EQ(bytes, handmade_wav({0, 16384, -16384}, 16000));
}

TEST(Wav, DecodesHandmadeHeader) {
  const auto w = decode_wav(handmade_wav({0, 16384, -32768, 32767}, 8000));
  EXPECT_EQ(w.sample_rate, 8000u);
  ASSERT_EQ(w.size(), 4u);
  EXPECT_EQ(w.samples[1], 0.5);
  EXPECT_EQ(w.samples[2], -1.0);
  EXPECT_EQ(w.samples[3], 32767.0 / 32768.0);
}

TEST(Wav, SkipsUnknownChunks) {
  auto b = handmade_wav({100, 200}, 16000);
  std::vector<std::uint8_t> extra;
  put_tag(extra, "LIST");
  put_u32(extra, 3);
  extra.insert(extra.end(), {1, 2, 3, 0});  // odd size is padded
  b.insert(b.begin() + 36, extra.begin(), extra.end());
  const auto w = decode_wav(b);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w.samples[0], 100.0 / 32768.0);
}

TEST(Wav, RejectsMalformedInput) {
  EXPECT_THROW(decode_wav(std::vector<std::uint8_t>{}), InputError);
  auto bad_magic = handmade_wav({1}, 16000);
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_wav(bad_magic), InputError);
  EXPECT_THROW(decode_wav(handmade_wav({1, 2}, 16000, 2)), InputError);
  EXPECT_THROW(decode_wav(handmade_wav({1}, 16000, 1, 16, 3)), InputError);
  auto truncated = handmade_wav({1, 2, 3}, 16000);
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(decode_wav(truncated), InputError);
  EXPECT_THROW(read_wav(temp_path("does_not_exist.wav")), InputError);
}

TEST(Wav, SampleRateCheck) {
  Wave w;
  w.sample_rate = 44100;
  EXPECT_THROW(require_sample_rate(w), InputError);
  w.sample_rate = 16000;
  EXPECT_NO_THROW(require_sample_rate(w));
}

TEST(Mix, HitsRequestedSnr) {
  Rng rng(2);
  Wave clean, noise;
  clean.samples = rng.normal_vector(4000);
  noise.samples = rng.normal_vector(9000);
  for (double snr : {10.0, 5.0, 0.0, -5.0}) {
    const auto m = mix_at_snr(clean, noise, snr, 1234);
    ASSERT_EQ(m.noisy.size(), clean.size());
    EXPECT_NEAR(snr_db(clean.samples, m.scaled_noise.samples), snr, 1e-9);
    for (std::size_t i = 0; i < clean.size(); ++i)
      EXPECT_DOUBLE_EQ(m.noisy.samples[i], clean.samples[i] + m.scaled_noise.samples[i]);
    EXPECT_DOUBLE_EQ(m.scaled_noise.samples[0], m.gain * noise.samples[1234]);
  }
}

TEST(Mix, ZeroDbWithEqualEnergiesIsUnitGain) {
  Wave clean, noise;
  clean.samples = {1.0, -1.0, 1.0, -1.0};
  noise.samples = {0.0, 2.0, 0.0, 0.0};
  const auto m = mix_at_snr(clean, noise, 0.0);
  EXPECT_NEAR(m.gain, 1.0, 1e-15);
  EXPECT_NEAR(energy(m.scaled_noise.samples), 4.0, 1e-12);
}

TEST(Mix, RejectsShortNoiseSilentNoiseAndRateMismatch) {
  Wave clean, noise;
  clean.samples = {1.0, 2.0, 3.0};
  noise.samples = {1.0, 1.0};
  EXPECT_THROW(mix_at_snr(clean, noise, 5.0), std::invalid_argument);
  noise.samples = {1.0, 1.0, 1.0, 1.0};
  EXPECT_THROW(mix_at_snr(clean, noise, 5.0, 2), std::invalid_argument);
  noise.samples = {0.0, 0.0, 0.0};
  EXPECT_THROW(mix_at_snr(clean, noise, 5.0), std::invalid_argument);
  noise.samples = {1.0, 1.0, 1.0};
  noise.sample_rate = 8000;
  EXPECT_THROW(mix_at_snr(clean, noise, 5.0), std::invalid_argument);
}

TEST(Synth, EmptyCorpus) {
  EXPECT_TRUE(synth_corpus(CorpusKind::HarmonicVoiced, 0, 1000, 1).empty());
}

TEST(Synth, DeterministicForFixedSeed) {
  for (auto kind : {CorpusKind::HarmonicVoiced, CorpusKind::AmNoise, CorpusKind::SilenceMixed}) {
    const auto a = synth_corpus(kind, 3, 2000, 9);
    const auto b = synth_corpus(kind, 3, 2000, 9);
    const auto c = synth_corpus(kind, 3, 2000, 10);
    ASSERT_EQ(a.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(a[i].samples, b[i].samples);
      EXPECT_NE(a[i].samples, c[i].samples);
      double peak = 0.0;
      for (double x : a[i].samples) peak = std::max(peak, std::abs(x));
      EXPECT_NEAR(peak, 0.5, 1e-12);
    }
  }
}

TEST(Synth, KindNamesRoundTrip) {
  for (auto kind : {CorpusKind::HarmonicVoiced, CorpusKind::AmNoise, CorpusKind::SilenceMixed})
    EXPECT_EQ(parse_corpus_kind(corpus_kind_name(kind)), kind);
  EXPECT_THROW(parse_corpus_kind("pink"), std::invalid_argument);
}

TEST(Synth, HarmonicClipPeaksNearMultiplesOfF0) {
  const std::size_t n = 8192;
  HarmonicParams hp;
  const auto w = synth_harmonic_clip(21, n, 16000, &hp);
  ASSERT_GT(hp.f0, 0.0);
  ASSERT_GE(hp.harmonics, 3);
  std::vector<std::complex<double>> f(w.samples.begin(), w.samples.end());
  const auto win = hann_window(n);
  for (std::size_t i = 0; i < n; ++i) f[i] *= win[i];
  fft(f);
  std::vector<double> mag(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) mag[k] = std::abs(f[k]);
  const double bin_hz = 16000.0 / double(n);
  // The strongest bin lies within vibrato range of some harmonic.
  std::size_t peak = 1;
  for (std::size_t k = 1; k < n / 2; ++k)
    if (mag[k] > mag[peak]) peak = k;
  const double fp = double(peak) * bin_hz;
  const double h = std::round(fp / hp.f0);
  ASSERT_GE(h, 1.0);
  ASSERT_LE(h, double(hp.harmonics));
  const double tol = h * hp.f0 * hp.vibrato_depth + 3.0 * bin_hz;
  EXPECT_NEAR(fp, h * hp.f0, tol);
  // Far between harmonics the spectrum is much weaker than at the peak.
  const auto mid = static_cast<std::size_t>(std::round(1.5 * hp.f0 / bin_hz));
  if (hp.vibrato_depth * 2.0 * hp.f0 < 0.3 * hp.f0) EXPECT_LT(mag[mid], 0.1 * mag[peak]);
}

TEST(Synth, WhiteNoiseHasRequestedSd) {
  const auto w = white_noise(50000, 0.2, 3);
  double m2 = 0.0;
  for (double x : w.samples) m2 += x * x;
  EXPECT_NEAR(std::sqrt(m2 / 50000.0), 0.2, 0.004);
}
