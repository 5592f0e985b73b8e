#include "gdse/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include "gdse/error.hpp"

namespace gdse {

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

Stft stft(std::span<const double> x, const StftConfig& cfg) {
  if (cfg.frame == 0 || (cfg.frame & (cfg.frame - 1)) != 0)
    throw std::invalid_argument("stft: frame must be a power of two");
  if (cfg.hop == 0) throw std::invalid_argument("stft: hop must be >= 1");
  if (x.size() < cfg.frame)
    throw std::invalid_argument("stft: signal of " + std::to_string(x.size()) +
                                " samples is shorter than one frame (" +
                                std::to_string(cfg.frame) + ")");
  const auto win = hann_window(cfg.frame);
  Stft s;
  s.frames = 1 + (x.size() - cfg.frame) / cfg.hop;
  s.bins = cfg.frame / 2 + 1;
  s.data.resize(s.frames * s.bins);
  std::vector<std::complex<double>> buf(cfg.frame);
  for (std::size_t f = 0; f < s.frames; ++f) {
    for (std::size_t i = 0; i < cfg.frame; ++i) buf[i] = win[i] * x[f * cfg.hop + i];
    fft(buf);
    std::copy_n(buf.begin(), s.bins, s.data.begin() + static_cast<std::ptrdiff_t>(f * s.bins));
  }
  return s;
}

Spectrogram spectrogram_db(std::span<const double> x, const StftConfig& cfg) {
  const auto s = stft(x, cfg);
  Spectrogram out;
  out.frames = s.frames;
  out.bins = s.bins;
  out.db.resize(s.data.size());
  for (std::size_t i = 0; i < s.data.size(); ++i)
    out.db[i] = 20.0 * std::log10(std::abs(s.data[i]) + 1e-10);
  return out;
}

std::vector<std::uint8_t> spectrogram_gray(const Spectrogram& s) {
  const auto [lo_it, hi_it] = std::minmax_element(s.db.begin(), s.db.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  std::vector<std::uint8_t> img(s.frames * s.bins);
  for (std::size_t row = 0; row < s.bins; ++row) {
    const std::size_t bin = s.bins - 1 - row;
    for (std::size_t f = 0; f < s.frames; ++f) {
      const double norm = range > 0.0 ? (s.db[f * s.bins + bin] - lo) / range : 0.0;
      img[row * s.frames + f] = static_cast<std::uint8_t>(std::lround(255.0 * norm));
    }
  }
  return img;
}

void spectrogram_export(std::span<const double> x, const StftConfig& cfg,
                        const std::filesystem::path& stem) {
  const auto s = spectrogram_db(x, cfg);
  auto csv_path = stem;
  csv_path += ".csv";
  std::ofstream csv(csv_path);
  if (!csv) throw InputError("cannot write " + csv_path.string());
  char buf[32];
  for (std::size_t f = 0; f < s.frames; ++f) {
    for (std::size_t k = 0; k < s.bins; ++k) {
      std::snprintf(buf, sizeof buf, "%.6f", s.db[f * s.bins + k]);
      csv << (k ? "," : "") << buf;
    }
    csv << '\n';
  }

  auto pgm_path = stem;
  pgm_path += ".pgm";
  std::ofstream pgm(pgm_path, std::ios::binary);
  if (!pgm) throw InputError("cannot write " + pgm_path.string());
  pgm << "P5\n" << s.frames << ' ' << s.bins << "\n255\n";
  const auto img = spectrogram_gray(s);
  pgm.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

}  // namespace gdse
