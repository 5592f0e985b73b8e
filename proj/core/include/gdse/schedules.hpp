#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gdse {

// Identifies the exact schedule a model was trained under.
struct ScheduleFingerprint {
  std::uint32_t steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::uint64_t alpha_bar_hash = 0;

  friend bool operator==(const ScheduleFingerprint&, const ScheduleFingerprint&) = default;
};

// Precomputed diffusion tables. Steps are 1-indexed (1..T); index 0 is the
// clean state with beta = 0 and alpha_bar = 1.
class DiffusionSchedule {
 public:
  // Linearly spaced betas, endpoints inclusive. Requires T >= 1 and
  // 0 < beta_start <= beta_end < 1.
  static DiffusionSchedule linear(int steps, double beta_start, double beta_end);
  // Arbitrary betas in [0, 1). A zero beta is accepted for limit cases even
  // though it makes alpha_bar non-strictly decreasing.
  static DiffusionSchedule from_betas(std::span<const double> betas);

  int steps() const { return steps_; }
  double beta(int t) const { return beta_[check(t)]; }
  double alpha(int t) const { return alpha_[check(t)]; }
  double alpha_bar(int t) const { return alpha_bar_[check(t)]; }
  // Posterior variance: (1 - abar_{t-1}) / (1 - abar_t) * beta_t for t > 1,
  // beta_1 for t = 1.
  double tilde_beta(int t) const { return tilde_beta_[check(t)]; }
  // sqrt((1 - abar_t) / abar_t).
  double g(int t) const { return g_[check(t)]; }

  std::span<const double> betas() const { return std::span(beta_).subspan(1); }
  std::span<const double> alpha_bars() const { return std::span(alpha_bar_).subspan(1); }

  ScheduleFingerprint fingerprint() const;

 private:
  explicit DiffusionSchedule(std::vector<double> betas);
  std::size_t check(int t) const;

  int steps_ = 0;
  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> tilde_beta_;
  std::vector<double> g_;
};

// Per-step guidance multiplier
//   s_t = lambda_max * (sqrt(1 - abar_t) / sqrt(1 - abar_1))^gamma
// With `inverted`, the ratio is flipped so guidance is strongest at t = 1.
class GuidanceSchedule {
 public:
  GuidanceSchedule(const DiffusionSchedule& sched, double lambda_max, double gamma,
                   bool inverted = false);

  double lambda_max() const { return lambda_max_; }
  double gamma() const { return gamma_; }
  bool inverted() const { return inverted_; }
  int steps() const { return static_cast<int>(s_.size()) - 1; }
  double scale(int t) const;

 private:
  double lambda_max_;
  double gamma_;
  bool inverted_;
  std::vector<double> s_;
};

// Accepts lambda_max >= 0 so guidance can be switched off; gamma must be > 0.
GuidanceSchedule guidance_scale(const DiffusionSchedule& sched, double lambda_max, double gamma,
                                bool inverted = false);

// FNV-1a over the little-endian bytes of a double table.
std::uint64_t hash_doubles(std::span<const double> values);

}  // namespace gdse
