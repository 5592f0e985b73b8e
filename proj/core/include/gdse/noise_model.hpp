#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gdse/numerics/rng.hpp"
#include "gdse/numerics/tape.hpp"
#include "gdse/schedules.hpp"

namespace gdse {

// Per-step likelihood of the combined noise v_t, as used by guidance.
class NoiseLikelihood {
 public:
  virtual ~NoiseLikelihood() = default;
  // Returns loss_t(v) (Gaussian NLL summed over samples). When `grad` is
  // non-null it receives d loss_t / d v.
  virtual double loss_and_input_gradient(int t, std::span<const double> v,
                                         std::vector<double>* grad) const = 0;
  virtual std::optional<ScheduleFingerprint> fingerprint() const { return std::nullopt; }
};

// Memoryless Gaussian with mu = 0 and a fixed variance per step.
class GaussianNoiseOracle final : public NoiseLikelihood {
 public:
  // variances[t - 1] is the variance used at step t.
  explicit GaussianNoiseOracle(std::vector<double> variances,
                               std::optional<ScheduleFingerprint> fp = std::nullopt);
  // variance_t = noise_variance + g(t)^2, the exact law of v_t for white noise.
  static GaussianNoiseOracle for_white_noise(const DiffusionSchedule& sched,
                                             double noise_variance);

  double loss_and_input_gradient(int t, std::span<const double> v,
                                 std::vector<double>* grad) const override;
  std::optional<ScheduleFingerprint> fingerprint() const override { return fp_; }
  double variance(int t) const;

 private:
  std::vector<double> variances_;
  std::optional<ScheduleFingerprint> fp_;
};

struct NoiseModelConfig {
  int channels = 2;
  int kernel = 9;
  std::vector<int> dilations{1, 2, 4, 8};
  double sigma_floor = 1e-4;
  // One trunk for all steps plus a learned per-step channel offset.
  bool shared_trunk = false;

  // Number of past samples visible to output i (all strictly before i).
  std::size_t receptive_field() const;
};

// Bank of causal gated CNNs phi_t. Each maps v_t to per-sample (mu, sigma)
// where sample i only sees v[0..i-1]:
//   z   = W_in shift(v) + b_in
//   per layer: h = WN-CausalConv(z), g = Conv1x1(h), z += tanh(h) * sigm(g)
//   mu = W_mu z + b_mu,  sigma = softplus(W_s z + b_s) + floor
class NoiseModel final : public NoiseLikelihood {
 public:
  NoiseModel(const NoiseModelConfig& cfg, const ScheduleFingerprint& fp, Rng& rng);
  // Wraps loaded parameters; names and shapes must match the layout.
  NoiseModel(const NoiseModelConfig& cfg, const ScheduleFingerprint& fp,
             std::vector<Param> params);

  int steps() const { return static_cast<int>(fp_.steps); }
  const NoiseModelConfig& config() const { return cfg_; }
  std::optional<ScheduleFingerprint> fingerprint() const override { return fp_; }

  // v: 1 x N. Returns (mu, sigma), each 1 x N.
  std::pair<Var, Var> forward(Tape& tape, int t, Var v, bool track_params = true);

  struct Heads {
    std::vector<double> mu;
    std::vector<double> sigma;
  };
  Heads predict(int t, std::span<const double> v) const;

  double loss(int t, std::span<const double> v) const;
  double loss_and_input_gradient(int t, std::span<const double> v,
                                 std::vector<double>* grad) const override;

  // Parameters that define phi_t (all of them in shared-trunk mode).
  std::vector<Param*> step_params(int t);
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  // Sets head biases from data: mu bias = mean, sigma bias = softplus^-1(sd).
  void init_heads_from_data(int t, std::span<const double> v);

 private:
  std::size_t block_begin(int t) const;
  std::size_t block_size() const;
  std::pair<Var, Var> forward_impl(Tape& tape, int t, Var v, bool track) const;

  NoiseModelConfig cfg_;
  ScheduleFingerprint fp_;
  std::vector<Param> params_;
};

enum class DrawMode {
  // One scalar e shared by all samples.
  Scalar,
  // i.i.d. e per sample.
  Vector,
};

struct CombinedNoise {
  std::vector<double> v;
  int t = 0;
};

// v_i = w_i - e_i g(t).
CombinedNoise build_vt(std::span<const double> noise_clip, int t,
                       const DiffusionSchedule& sched, Rng& rng, DrawMode mode);

// sum_i log(sqrt(2 pi) sigma_i) + (v_i - mu_i)^2 / (2 sigma_i^2)
double nll_loss(std::span<const double> v, std::span<const double> mu,
                std::span<const double> sigma);
Var nll_loss(Var v, Var mu, Var sigma);

struct NoiseTrainConfig {
  int epochs = 300;
  double lr = 1e-2;
  DrawMode draw_mode = DrawMode::Vector;
  // Build v_t once per step (strict); otherwise redraw e every epoch.
  bool build_once = true;
  double train_fraction = 0.8;
  int validate_every = 10;
  int workers = 1;
};

struct StepTrainReport {
  int t = 0;
  // Per-sample training NLL at each epoch.
  std::vector<double> loss_trace;
  double initial_val_nll = 0.0;
  double final_val_nll = 0.0;
  bool aborted = false;
  std::string diagnostic;
};

struct NoiseTrainResult {
  NoiseModel model;
  // reports[t - 1] describes step t.
  std::vector<StepTrainReport> reports;
};

// Maximum-likelihood training of every phi_t on the noise-only clip. The
// clip is split by time into train and held-out parts; the returned weights
// are the best held-out snapshot, so final_val_nll <= initial_val_nll.
NoiseTrainResult train_noise_model(std::span<const double> noise_clip,
                                   const DiffusionSchedule& sched, const NoiseModelConfig& arch,
                                   const NoiseTrainConfig& cfg, Rng& rng);

std::vector<double> loss_input_gradient(const NoiseLikelihood& model, int t,
                                        std::span<const double> v);

// Held-out per-sample NLL of phi_t on v.
double per_sample_nll(const NoiseModel& model, int t, std::span<const double> v);

}  // namespace gdse
