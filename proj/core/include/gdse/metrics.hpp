#pragma once

#include <span>

#include "gdse/spectral.hpp"

namespace gdse {

inline constexpr double kSiSdrCap = 100.0;

// Scale-invariant SDR in dB:
//   a = <est, ref> / ||ref||^2,  10 log10(||a ref||^2 / ||est - a ref||^2)
// Returns +kSiSdrCap when the residual energy is below 1e-12 of the target
// energy and -kSiSdrCap when the projection is zero.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

// RMS over frames and bins of 20 |log10(|A| + 1e-8) - log10(|B| + 1e-8)|.
double log_spectral_distance(std::span<const double> a, std::span<const double> b,
                             const StftConfig& cfg = {});

}  // namespace gdse
