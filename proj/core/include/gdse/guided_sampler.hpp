#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gdse/diffusion.hpp"
#include "gdse/noise_model.hpp"
#include "gdse/numerics/rng.hpp"
#include "gdse/schedules.hpp"

namespace gdse {

// v_t = y - mu_theta / sqrt(abar_t)
std::vector<double> estimate_vt(std::span<const double> y, std::span<const double> mu_theta,
                                int t, const DiffusionSchedule& sched);

enum class GuidanceSign {
  // grad_x log p(y | x) = +(1 / sqrt(abar_t)) grad_v, since dv/dx = -1 / sqrt(abar_t).
  // Moves the mean so that loss_t decreases.
  Ascent,
  // (-1 / sqrt(abar_t)) grad_v: the opposite direction, which increases loss_t.
  Reversed,
};

// mu_theta + s_t (beta_t / sqrt(alpha_t)) (+-1 / sqrt(abar_t)) grad_v
std::vector<double> guided_mean(std::span<const double> mu_theta, std::span<const double> grad_v,
                                int t, const DiffusionSchedule& sched,
                                const GuidanceSchedule& gsched,
                                GuidanceSign sign = GuidanceSign::Ascent);

struct EnhanceOptions {
  ReverseOptions reverse;
  // Rescale grad_v so that max |grad_v| <= this; <= 0 disables.
  double grad_clip = 1e3;
  GuidanceSign sign = GuidanceSign::Ascent;
  // Keep every k-th state (k = ceil(T / 20)) unless full_trajectory is set.
  bool full_trajectory = false;
  bool check_fingerprints = true;
};

struct StepDiagnostics {
  int t = 0;
  double loss = 0.0;
  // L2 norm of d loss / d v before clipping.
  double grad_norm = 0.0;
  double scale = 0.0;
  bool clipped = false;
};

struct TrajectoryState {
  // The state x_t (t = T..0).
  int t = 0;
  std::vector<double> x;
};

struct EnhanceRun {
  std::vector<double> x0;
  std::vector<StepDiagnostics> diagnostics;  // ordered t = T..1
  std::vector<TrajectoryState> trajectory;
  int clip_events = 0;
};

// Guided ancestral sampling from x_T ~ N(0, I). Throws NumericalError naming
// the step when a non-finite value appears and std::invalid_argument on a
// schedule fingerprint mismatch.
EnhanceRun enhance(std::span<const double> y, const Denoiser& net, const NoiseLikelihood& nm,
                   const DiffusionSchedule& sched, const GuidanceSchedule& gsched, Rng& rng,
                   const EnhanceOptions& opts = {});

}  // namespace gdse
