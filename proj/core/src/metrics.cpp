#include "gdse/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace gdse {

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) throw std::invalid_argument("si_sdr: length mismatch");
  double ref_energy = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ref_energy += reference[i] * reference[i];
    dot += estimate[i] * reference[i];
  }
  if (!(ref_energy > 0.0)) throw std::invalid_argument("si_sdr: reference has zero energy");
  const double alpha = dot / ref_energy;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference[i];
    const double e = estimate[i] - s;
    target += s * s;
    residual += e * e;
  }
  if (!(target > 0.0)) return -kSiSdrCap;
  if (residual < 1e-12 * target) return kSiSdrCap;
  return 10.0 * std::log10(target / residual);
}

double log_spectral_distance(std::span<const double> a, std::span<const double> b,
                             const StftConfig& cfg) {
  if (a.size() != b.size())
    throw std::invalid_argument("log_spectral_distance: length mismatch");
  const auto sa = stft(a, cfg);
  const auto sb = stft(b, cfg);
  constexpr double kEps = 1e-8;
  double acc = 0.0;
  for (std::size_t i = 0; i < sa.data.size(); ++i) {
    const double d =
        20.0 * (std::log10(std::abs(sa.data[i]) + kEps) - std::log10(std::abs(sb.data[i]) + kEps));
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(sa.data.size()));
}

}  // namespace gdse
