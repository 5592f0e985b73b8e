#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "gdse/numerics/rng.hpp"
#include "gdse/numerics/tape.hpp"
#include "gdse/schedules.hpp"

namespace gdse {

// Anything that predicts the injected noise eps(x_t, t).
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::vector<double> predict_noise(std::span<const double> x_t, int t) const = 0;
  // Schedule the predictor was trained under, if known.
  virtual std::optional<ScheduleFingerprint> fingerprint() const { return std::nullopt; }
};

struct EpsilonNetConfig {
  int layers = 6;
  int channels = 16;
  int kernel = 3;
  // Dilation of layer l is 2^(l % dilation_cycle).
  int dilation_cycle = 6;
  int embed_dim = 16;
  int embed_hidden = 32;

  std::size_t receptive_field() const;
};

// Non-causal gated dilated conv stack with a sinusoidal step embedding that
// is projected and added to every layer input. The final projection starts at
// zero, so an untrained net predicts eps = 0.
class EpsilonNet final : public Denoiser {
 public:
  EpsilonNet(const EpsilonNetConfig& cfg, Rng& rng);
  // Wraps already-populated parameters (e.g. loaded from disk).
  EpsilonNet(const EpsilonNetConfig& cfg, std::vector<Param> params);

  // x: 1 x N. With `track_params`, parameters are recorded on the tape so
  // backward() reaches them.
  Var forward(Tape& tape, Var x, int t, bool track_params = true);

  std::vector<double> predict_noise(std::span<const double> x_t, int t) const override;
  std::optional<ScheduleFingerprint> fingerprint() const override { return fingerprint_; }
  void set_fingerprint(const ScheduleFingerprint& fp) { fingerprint_ = fp; }

  const EpsilonNetConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::vector<Param*> param_ptrs();

 private:
  void build_layout();
  Param& p(std::size_t idx) { return params_[idx]; }

  EpsilonNetConfig cfg_;
  std::vector<Param> params_;
  std::optional<ScheduleFingerprint> fingerprint_;
};

std::vector<double> step_embedding(int t, int dim);

struct ForwardDraw {
  std::vector<double> x_t;
  std::vector<double> eps;
  int t = 0;
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps. t = 0 returns x0 unchanged
// (eps is still drawn).
ForwardDraw q_sample(std::span<const double> x0, int t, const DiffusionSchedule& sched, Rng& rng);

// One forward Markov step x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) e_t.
std::vector<double> forward_step(std::span<const double> x_prev, int t,
                                 const DiffusionSchedule& sched, Rng& rng);

// (1/sqrt(alpha_t)) (x_t - (1 - alpha_t)/sqrt(1 - abar_t) eps_hat)
std::vector<double> posterior_mean(std::span<const double> x_t, int t,
                                   std::span<const double> eps_hat,
                                   const DiffusionSchedule& sched);

struct ReverseOptions {
  // Add tilde_beta_1 = beta_1 noise on the final step. When false the last
  // step returns the mean.
  bool noise_at_final_step = true;
};

// Reverse-kernel standard deviation at step t under `opts`.
double reverse_sigma(int t, const DiffusionSchedule& sched, const ReverseOptions& opts);

// x_{t-1} = mean + sigma_t z. Draws z only when sigma_t > 0.
std::vector<double> reverse_draw(std::span<const double> mean, int t,
                                 const DiffusionSchedule& sched, Rng& rng,
                                 const ReverseOptions& opts = {});

std::vector<double> unguided_step(std::span<const double> x_t, int t, const Denoiser& net,
                                  const DiffusionSchedule& sched, Rng& rng,
                                  const ReverseOptions& opts = {});

// Ancestral sampling from x_T ~ N(0, I) down to x_0.
std::vector<double> sample_unguided(std::size_t length, const Denoiser& net,
                                    const DiffusionSchedule& sched, Rng& rng,
                                    const ReverseOptions& opts = {});

struct BackboneTrainConfig {
  int epochs = 50;
  int batch = 16;
  std::size_t segment_length = 2048;
  double lr = 2e-3;
  double clip_norm = 1.0;
  // Optimizer steps per epoch; 0 means ceil(corpus size / batch).
  int steps_per_epoch = 0;
};

struct BackboneTrainResult {
  EpsilonNet net;
  // Mean per-sample squared error for each epoch.
  std::vector<double> loss_trace;
};

// Mean over batch and samples of (eps - eps_theta(x_t, t))^2 with
// t ~ U{1..T}, recorded on `tape`.
Var backbone_loss(Tape& tape, EpsilonNet& net, std::span<const std::vector<double>> x0_batch,
                  std::span<const int> steps, std::span<const std::vector<double>> eps_batch,
                  const DiffusionSchedule& sched);

BackboneTrainResult train_backbone(std::span<const std::vector<double>> corpus,
                                   const DiffusionSchedule& sched, const EpsilonNetConfig& arch,
                                   const BackboneTrainConfig& cfg, Rng& rng);

}  // namespace gdse
