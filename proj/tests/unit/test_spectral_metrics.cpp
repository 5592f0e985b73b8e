#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include "gdse/metrics.hpp"
#include "gdse/numerics/rng.hpp"
#include "gdse/spectral.hpp"

using namespace gdse;

namespace {

std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      out[k] += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * i % n) / double(n));
  return out;
}

std::vector<double> tone(std::size_t n, double hz, double amp = 0.5) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / 16000.0);
  return x;
}

}  // namespace

TEST(Fft, MatchesNaiveDft) {
  Rng rng(1);
  for (std::size_t n : {1u, 2u, 8u, 64u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& c : x) c = {rng.normal(), rng.normal()};
    auto y = x;
    fft(y);
    const auto ref = naive_dft(x);
    for (std::size_t k = 0; k < n; ++k) EXPECT_LT(std::abs(y[k] - ref[k]), 1e-10);
    fft(y, true);
    for (std::size_t k = 0; k < n; ++k) EXPECT_LT(std::abs(y[k] - x[k]), 1e-12);
  }
}

TEST(Fft, RejectsNonPowerOfTwo) {
  std::vector<std::complex<double>> x(12);
  EXPECT_THROW(fft(x), std::invalid_argument);
}

TEST(Stft, ToneAt1kHzPeaksInBin32) {
  const auto s = stft(tone(4096, 1000.0));
  EXPECT_EQ(s.bins, 257u);
  EXPECT_EQ(s.frames, 1u + (4096 - 512) / 128);
  for (std::size_t f = 0; f < s.frames; ++f) {
    std::size_t best = 0;
    for (std::size_t k = 0; k < s.bins; ++k)
      if (std::abs(s.at(f, k)) > std::abs(s.at(f, best))) best = k;
    EXPECT_EQ(best, 32u);
  }
}

TEST(Stft, SilenceGivesFloorInDb) {
  const auto sp = spectrogram_db(std::vector<double>(1024, 0.0));
  for (double d : sp.db) EXPECT_DOUBLE_EQ(d, -200.0);
}

TEST(Stft, ChirpRidgeRisesOverTime) {
  const std::size_t n = 16000;
  std::vector<double> x(n);
  // Linear chirp from 500 Hz to 4500 Hz over one second.
  for (std::size_t i = 0; i < n; ++i) {
    const double t = double(i) / 16000.0;
    x[i] = std::sin(2.0 * std::numbers::pi * (500.0 * t + 2000.0 * t * t));
  }
  const auto s = stft(x);
  std::size_t prev = 0;
  for (std::size_t f = 0; f < s.frames; ++f) {
    std::size_t best = 0;
    for (std::size_t k = 0; k < s.bins; ++k)
      if (std::abs(s.at(f, k)) > std::abs(s.at(f, best))) best = k;
    const double centre = (double(f) * 128.0 + 256.0) / 16000.0;
    EXPECT_NEAR(double(best) * 16000.0 / 512.0, 500.0 + 4000.0 * centre, 2.0 * 31.25);
    EXPECT_GE(best + 1, prev);
    prev = best;
  }
}

TEST(Stft, ParsevalPerFrame) {
  Rng rng(2);
  const auto x = rng.normal_vector(512);
  StftConfig cfg{512, 512};
  const auto s = stft(x, cfg);
  ASSERT_EQ(s.frames, 1u);
  const auto w = hann_window(512);
  double time = 0.0;
  for (std::size_t i = 0; i < 512; ++i) time += (x[i] * w[i]) * (x[i] * w[i]);
  // One-sided spectrum: DC and Nyquist once, every other bin twice.
  double freq = std::norm(s.at(0, 0)) + std::norm(s.at(0, 256));
  for (std::size_t k = 1; k < 256; ++k) freq += 2.0 * std::norm(s.at(0, k));
  EXPECT_NEAR(freq / 512.0, time, 1e-9 * time);
}

TEST(Stft, ShortSignalRejected) {
  EXPECT_THROW(stft(std::vector<double>(100, 0.0)), std::invalid_argument);
}

TEST(Lsd, IdenticalSignalsGiveZero) {
  Rng rng(3);
  const auto x = rng.normal_vector(2048);
  EXPECT_EQ(log_spectral_distance(x, x), 0.0);
}

TEST(Lsd, DoublingGivesSixDb) {
  Rng rng(4);
  const auto x = rng.normal_vector(2048);
  std::vector<double> y(x);
  for (auto& v : y) v *= 2.0;
  EXPECT_NEAR(log_spectral_distance(x, y), 20.0 * std::log10(2.0), 1e-6);
  EXPECT_NEAR(log_spectral_distance(x, y), 6.0206, 1e-4);
}

TEST(Lsd, RejectsLengthMismatch) {
  EXPECT_THROW(log_spectral_distance(std::vector<double>(1024, 0.0), std::vector<double>(2048, 0.0)),
               std::invalid_argument);
}

TEST(SiSdr, ScaledReferenceHitsCap) {
  const auto ref = tone(1000, 440.0);
  std::vector<double> est(ref);
  for (auto& v : est) v *= 2.0;
  EXPECT_EQ(si_sdr(est, ref), kSiSdrCap);
  for (auto& v : est) v *= -0.5;
  EXPECT_EQ(si_sdr(est, ref), kSiSdrCap);
}

TEST(SiSdr, OrthogonalEqualPowerGivesZeroDb) {
  // ref + orthogonal residual of equal energy.
  const std::vector<double> ref{1.0, 0.0, 0.0, 0.0}, est{1.0, 1.0, 0.0, 0.0};
  EXPECT_NEAR(si_sdr(est, ref), 0.0, 1e-12);
}

TEST(SiSdr, ScaleInvariantInEstimate) {
  Rng rng(5);
  const auto ref = rng.normal_vector(500);
  auto est = rng.normal_vector(500);
  for (std::size_t i = 0; i < 500; ++i) est[i] += 2.0 * ref[i];
  const double a = si_sdr(est, ref);
  for (auto& v : est) v *= 7.5;
  EXPECT_NEAR(si_sdr(est, ref), a, 1e-10);
}

TEST(SiSdr, ZeroProjectionGivesNegativeCapAndZeroReferenceRejected) {
  const std::vector<double> ref{1.0, 0.0}, est{0.0, 1.0};
  EXPECT_EQ(si_sdr(est, ref), -kSiSdrCap);
  EXPECT_THROW(si_sdr(est, std::vector<double>{0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(si_sdr(std::vector<double>{1.0}, ref), std::invalid_argument);
}

TEST(SpectrogramExport, WritesCsvAndPgm) {
  const auto dir = std::filesystem::temp_directory_path() / "gdse_spec_tests";
  std::filesystem::create_directories(dir);
  const auto stem = dir / "tone";
  const auto x = tone(2048, 1000.0);
  spectrogram_export(x, {}, stem);
  const auto sp = spectrogram_db(x);

  std::ifstream csv(stem.string() + ".csv");
  ASSERT_TRUE(csv.good());
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    ++rows;
    std::size_t cols = 1;
    for (char c : line) cols += c == ',';
    EXPECT_EQ(cols, sp.bins);
  }
  EXPECT_EQ(rows, sp.frames);

  std::ifstream pgm(stem.string() + ".pgm", std::ios::binary);
  ASSERT_TRUE(pgm.good());
  std::string magic;
  std::size_t w = 0, h = 0, maxv = 0;
  pgm >> magic >> w >> h >> maxv;
  pgm.get();
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(w, sp.frames);
  EXPECT_EQ(h, sp.bins);
  EXPECT_EQ(maxv, 255u);
  std::vector<char> pix(w * h);
  pgm.read(pix.data(), static_cast<std::streamsize>(pix.size()));
  EXPECT_EQ(static_cast<std::size_t>(pgm.gcount()), pix.size());
  // Bin 32 is bright and sits 32 rows above the bottom.
  const auto row = h - 1 - 32;
  EXPECT_GE(static_cast<unsigned char>(pix[row * w]), 240);
}
