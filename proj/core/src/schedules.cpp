#include "gdse/schedules.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gdse {

DiffusionSchedule DiffusionSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("schedule: T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::invalid_argument("schedule: require 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas[i] = beta_start + (beta_end - beta_start) * frac;
  }
  betas.back() = beta_end;
  return DiffusionSchedule(std::move(betas));
}

DiffusionSchedule DiffusionSchedule::from_betas(std::span<const double> betas) {
  if (betas.empty()) throw std::invalid_argument("schedule: T must be >= 1");
  for (double b : betas)
    if (!(b >= 0.0 && b < 1.0)) throw std::invalid_argument("schedule: beta outside [0, 1)");
  return DiffusionSchedule(std::vector<double>(betas.begin(), betas.end()));
}

DiffusionSchedule::DiffusionSchedule(std::vector<double> betas)
    : steps_(static_cast<int>(betas.size())) {
  const std::size_t n = betas.size() + 1;
  beta_.assign(n, 0.0);
  alpha_.assign(n, 1.0);
  alpha_bar_.assign(n, 1.0);
  tilde_beta_.assign(n, 0.0);
  g_.assign(n, 0.0);
  for (std::size_t t = 1; t < n; ++t) {
    beta_[t] = betas[t - 1];
    alpha_[t] = 1.0 - beta_[t];
    alpha_bar_[t] = alpha_bar_[t - 1] * alpha_[t];
    tilde_beta_[t] = t == 1 ? beta_[1]
                            : (1.0 - alpha_bar_[t - 1]) / (1.0 - alpha_bar_[t]) * beta_[t];
    g_[t] = std::sqrt((1.0 - alpha_bar_[t]) / alpha_bar_[t]);
  }
}

std::size_t DiffusionSchedule::check(int t) const {
  if (t < 0 || t > steps_)
    throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [0, " +
                            std::to_string(steps_) + "]");
  return static_cast<std::size_t>(t);
}

ScheduleFingerprint DiffusionSchedule::fingerprint() const {
  return {static_cast<std::uint32_t>(steps_), beta_[1], beta_[steps_], hash_doubles(alpha_bars())};
}

std::uint64_t hash_doubles(std::span<const double> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

GuidanceSchedule::GuidanceSchedule(const DiffusionSchedule& sched, double lambda_max,
                                   double gamma, bool inverted)
    : lambda_max_(lambda_max), gamma_(gamma), inverted_(inverted) {
  if (!(lambda_max >= 0.0) || !std::isfinite(lambda_max))
    throw std::invalid_argument("guidance: lambda_max must be finite and >= 0");
  if (!(gamma > 0.0)) throw std::invalid_argument("guidance: gamma must be > 0");
  const double base = std::sqrt(1.0 - sched.alpha_bar(1));
  if (!(base > 0.0))
    throw std::invalid_argument("guidance: alpha_bar_1 == 1 (beta_1 = 0) makes the scale undefined");
  s_.assign(static_cast<std::size_t>(sched.steps()) + 1, 0.0);
  for (int t = 1; t <= sched.steps(); ++t) {
    const double noise = std::sqrt(1.0 - sched.alpha_bar(t));
    const double ratio = inverted ? base / noise : noise / base;
    s_[t] = lambda_max * std::pow(ratio, gamma);
  }
}

double GuidanceSchedule::scale(int t) const {
  if (t < 1 || t >= static_cast<int>(s_.size()))
    throw std::out_of_range("guidance step " + std::to_string(t) + " out of range");
  return s_[t];
}

GuidanceSchedule guidance_scale(const DiffusionSchedule& sched, double lambda_max, double gamma,
                                bool inverted) {
  return GuidanceSchedule(sched, lambda_max, gamma, inverted);
}

}  // namespace gdse
