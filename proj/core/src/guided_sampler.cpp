#include "gdse/guided_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gdse/error.hpp"

namespace gdse {
namespace {

void check_step(int t, const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.steps())
    throw std::out_of_range("step " + std::to_string(t) + " outside [1, " +
                            std::to_string(sched.steps()) + "]");
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(std::span<const double> v, int t, const char* what) {
  if (!all_finite(v))
    throw NumericalError(std::string("enhance: non-finite ") + what + " at step " +
                         std::to_string(t));
}

}  // namespace

std::vector<double> estimate_vt(std::span<const double> y, std::span<const double> mu_theta,
                                int t, const DiffusionSchedule& sched) {
  check_step(t, sched);
  if (y.size() != mu_theta.size()) throw std::invalid_argument("estimate_vt: length mismatch");
  const double inv = 1.0 / std::sqrt(sched.alpha_bar(t));
  std::vector<double> v(y.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = y[i] - inv * mu_theta[i];
  return v;
}

std::vector<double> guided_mean(std::span<const double> mu_theta, std::span<const double> grad_v,
                                int t, const DiffusionSchedule& sched,
                                const GuidanceSchedule& gsched, GuidanceSign sign) {
  check_step(t, sched);
  if (mu_theta.size() != grad_v.size())
    throw std::invalid_argument("guided_mean: length mismatch");
  const double coef = gsched.scale(t) * (sched.beta(t) / std::sqrt(sched.alpha(t))) *
                      ((sign == GuidanceSign::Ascent ? 1.0 : -1.0) / std::sqrt(sched.alpha_bar(t)));
  std::vector<double> out(mu_theta.begin(), mu_theta.end());
  if (coef == 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += coef * grad_v[i];
  return out;
}

EnhanceRun enhance(std::span<const double> y, const Denoiser& net, const NoiseLikelihood& nm,
                   const DiffusionSchedule& sched, const GuidanceSchedule& gsched, Rng& rng,
                   const EnhanceOptions& opts) {
  if (y.empty()) throw std::invalid_argument("enhance: empty observation");
  if (!all_finite(y)) throw std::invalid_argument("enhance: observation has non-finite samples");
  if (gsched.steps() != sched.steps())
    throw std::invalid_argument("enhance: guidance schedule has a different step count");
  if (opts.check_fingerprints) {
    const auto fp = sched.fingerprint();
    const auto nm_fp = nm.fingerprint();
    if (nm_fp && !(*nm_fp == fp))
      throw std::invalid_argument("enhance: noise model was trained on a different schedule");
    const auto net_fp = net.fingerprint();
    if (net_fp && !(*net_fp == fp))
      throw std::invalid_argument("enhance: backbone was trained on a different schedule");
  }

  const int steps = sched.steps();
  const int thin = std::max(1, (steps + 19) / 20);
  EnhanceRun run;
  auto keep = [&](int t, const std::vector<double>& x) {
    if (opts.full_trajectory || t % thin == 0 || t == steps || t == 0)
      run.trajectory.push_back({t, x});
  };

  auto x = rng.normal_vector(y.size());
  keep(steps, x);
  std::vector<double> grad;
  for (int t = steps; t >= 1; --t) {
    const auto eps_hat = net.predict_noise(x, t);
    require_finite(eps_hat, t, "noise prediction");
    const auto mu = posterior_mean(x, t, eps_hat, sched);
    const auto v = estimate_vt(y, mu, t, sched);

    StepDiagnostics diag;
    diag.t = t;
    diag.scale = gsched.scale(t);
    diag.loss = nm.loss_and_input_gradient(t, v, &grad);
    if (!std::isfinite(diag.loss)) throw NumericalError("enhance: non-finite loss at step " +
                                                        std::to_string(t));
    require_finite(grad, t, "guidance gradient");
    double sq = 0.0, inf_norm = 0.0;
    for (double g : grad) {
      sq += g * g;
      inf_norm = std::max(inf_norm, std::abs(g));
    }
    diag.grad_norm = std::sqrt(sq);
    if (opts.grad_clip > 0.0 && inf_norm > opts.grad_clip) {
      const double f = opts.grad_clip / inf_norm;
      for (auto& g : grad) g *= f;
      diag.clipped = true;
      ++run.clip_events;
    }

    const auto mu_guided = guided_mean(mu, grad, t, sched, gsched, opts.sign);
    x = reverse_draw(mu_guided, t, sched, rng, opts.reverse);
    require_finite(x, t, "state");
    run.diagnostics.push_back(diag);
    keep(t - 1, x);
  }
  run.x0 = x;
  return run;
}

}  // namespace gdse
