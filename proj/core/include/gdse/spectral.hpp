#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace gdse {

// In-place iterative radix-2 FFT; the size must be a power of two.
void fft(std::vector<std::complex<double>>& data, bool inverse = false);

struct StftConfig {
  std::size_t frame = 512;
  std::size_t hop = 128;
};

// Periodic Hann window.
std::vector<double> hann_window(std::size_t n);

// Frames x (frame/2 + 1) complex spectra of Hann-windowed frames, no padding.
// Throws when the signal is shorter than one frame.
struct Stft {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> data;  // row-major [frame][bin]

  std::complex<double> at(std::size_t f, std::size_t k) const { return data[f * bins + k]; }
};
Stft stft(std::span<const double> x, const StftConfig& cfg = {});

struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> db;  // row-major [frame][bin], 20 log10(|X| + 1e-10)
};

Spectrogram spectrogram_db(std::span<const double> x, const StftConfig& cfg = {});

// Writes `<stem>.csv` (frames rows, bins columns, dB values) and `<stem>.pgm`
// (binary P5, width = frames, height = bins, low frequencies at the bottom,
// per-file min/max normalized to 0..255).
void spectrogram_export(std::span<const double> x, const StftConfig& cfg,
                        const std::filesystem::path& stem);

// 8-bit image rows for a spectrogram: rows = bins (top = highest bin).
std::vector<std::uint8_t> spectrogram_gray(const Spectrogram& s);

}  // namespace gdse
