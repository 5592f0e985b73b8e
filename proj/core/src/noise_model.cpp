#include "gdse/noise_model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

#include "gdse/numerics/adam.hpp"
#include "gdse/numerics/ops.hpp"

namespace gdse {
namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

constexpr std::size_t kStemParams = 2;
constexpr std::size_t kLayerParams = 5;
constexpr std::size_t kHeadParams = 4;

void validate(const NoiseModelConfig& cfg) {
  if (cfg.channels < 1 || cfg.kernel < 1 || cfg.dilations.empty())
    throw std::invalid_argument("NoiseModelConfig: channels, kernel and dilations required");
  for (int d : cfg.dilations)
    if (d < 1) throw std::invalid_argument("NoiseModelConfig: dilation must be >= 1");
  if (!(cfg.sigma_floor > 0.0)) throw std::invalid_argument("NoiseModelConfig: sigma_floor > 0");
}

std::vector<Param> block_layout(const NoiseModelConfig& cfg, const std::string& pre) {
  const auto c = static_cast<std::size_t>(cfg.channels);
  const auto k = static_cast<std::size_t>(cfg.kernel);
  std::vector<Param> ps;
  ps.emplace_back(pre + "input.weight", std::vector<std::size_t>{c, 1, 1});
  ps.emplace_back(pre + "input.bias", std::vector<std::size_t>{c});
  for (std::size_t l = 0; l < cfg.dilations.size(); ++l) {
    const std::string lp = pre + "layer" + std::to_string(l) + ".";
    ps.emplace_back(lp + "conv.direction", std::vector<std::size_t>{c, c, k});
    ps.emplace_back(lp + "conv.magnitude", std::vector<std::size_t>{c});
    ps.emplace_back(lp + "conv.bias", std::vector<std::size_t>{c});
    ps.emplace_back(lp + "gate.weight", std::vector<std::size_t>{c, c, 1});
    ps.emplace_back(lp + "gate.bias", std::vector<std::size_t>{c});
  }
  ps.emplace_back(pre + "mu.weight", std::vector<std::size_t>{1, c, 1});
  ps.emplace_back(pre + "mu.bias", std::vector<std::size_t>{1});
  ps.emplace_back(pre + "sigma.weight", std::vector<std::size_t>{1, c, 1});
  ps.emplace_back(pre + "sigma.bias", std::vector<std::size_t>{1});
  return ps;
}

std::vector<Param> full_layout(const NoiseModelConfig& cfg, int steps) {
  std::vector<Param> all;
  if (cfg.shared_trunk) {
    all = block_layout(cfg, "trunk.");
    all.emplace_back("trunk.step_offset",
                     std::vector<std::size_t>{static_cast<std::size_t>(steps),
                                              static_cast<std::size_t>(cfg.channels)});
    return all;
  }
  for (int t = 1; t <= steps; ++t) {
    auto block = block_layout(cfg, "step" + std::to_string(t) + ".");
    for (auto& p : block) all.push_back(std::move(p));
  }
  return all;
}

Var bind(Tape& tape, const Param& p, bool track) {
  if (track) return tape.param(const_cast<Param&>(p));
  const std::size_t rows = p.shape.front();
  return tape.constant(p.value, rows, p.size() / rows);
}

double inverse_softplus(double y) {
  // log(exp(y) - 1), stable for large y.
  return y > 20.0 ? y : std::log(std::expm1(y));
}

void check_step(int t, int steps) {
  if (t < 1 || t > steps)
    throw std::out_of_range("noise model step " + std::to_string(t) + " outside [1, " +
                            std::to_string(steps) + "]");
}

}  // namespace

// ---------------------------------------------------------------------------
// Gaussian oracle

GaussianNoiseOracle::GaussianNoiseOracle(std::vector<double> variances,
                                         std::optional<ScheduleFingerprint> fp)
    : variances_(std::move(variances)), fp_(fp) {
  for (double v : variances_)
    if (!(v > 0.0)) throw std::invalid_argument("GaussianNoiseOracle: variances must be > 0");
}

GaussianNoiseOracle GaussianNoiseOracle::for_white_noise(const DiffusionSchedule& sched,
                                                         double noise_variance) {
  std::vector<double> vars;
  for (int t = 1; t <= sched.steps(); ++t) vars.push_back(noise_variance + sched.g(t) * sched.g(t));
  return GaussianNoiseOracle(std::move(vars), sched.fingerprint());
}

double GaussianNoiseOracle::variance(int t) const {
  check_step(t, static_cast<int>(variances_.size()));
  return variances_[static_cast<std::size_t>(t - 1)];
}

double GaussianNoiseOracle::loss_and_input_gradient(int t, std::span<const double> v,
                                                    std::vector<double>* grad) const {
  const double var = variance(t);
  const double log_norm = kHalfLog2Pi + 0.5 * std::log(var);
  double loss = 0.0;
  for (double x : v) loss += log_norm + x * x / (2.0 * var);
  if (grad != nullptr) {
    grad->resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) (*grad)[i] = v[i] / var;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// NoiseModel

std::size_t NoiseModelConfig::receptive_field() const {
  std::size_t rf = 1;
  for (int d : dilations) rf += static_cast<std::size_t>((kernel - 1) * d);
  return rf;
}

NoiseModel::NoiseModel(const NoiseModelConfig& cfg, const ScheduleFingerprint& fp, Rng& rng)
    : cfg_(cfg), fp_(fp) {
  validate(cfg_);
  if (fp_.steps < 1) throw std::invalid_argument("NoiseModel: schedule has no steps");
  params_ = full_layout(cfg_, steps());
  for (auto& p : params_) {
    const std::string& n = p.name;
    auto ends_with = [&](const char* suffix) {
      const std::string s(suffix);
      return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0;
    };
    if (ends_with("conv.direction") || ends_with("gate.weight") || ends_with("input.weight")) {
      const std::size_t fan_in = p.size() / p.shape.front();
      const double sd = std::sqrt(1.0 / static_cast<double>(fan_in));
      for (auto& v : p.value) v = sd * rng.normal();
    }
  }
  // Magnitudes start equal to the direction norms, i.e. w = v.
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name.find("conv.magnitude") == std::string::npos) continue;
    const Param& dir = params_[i - 1];
    const std::size_t rows = dir.shape.front(), cols = dir.size() / rows;
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += dir.value[r * cols + j] * dir.value[r * cols + j];
      params_[i].value[r] = std::sqrt(s);
    }
  }
  // sigma bias so the initial sigma is 1.
  for (auto& p : params_)
    if (p.name.ends_with("sigma.bias")) p.value[0] = inverse_softplus(1.0 - cfg_.sigma_floor);
}

NoiseModel::NoiseModel(const NoiseModelConfig& cfg, const ScheduleFingerprint& fp,
                       std::vector<Param> params)
    : cfg_(cfg), fp_(fp) {
  validate(cfg_);
  auto expected = full_layout(cfg_, steps());
  if (params.size() != expected.size())
    throw std::invalid_argument("NoiseModel: expected " + std::to_string(expected.size()) +
                                " parameter blocks, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != expected[i].name || params[i].shape != expected[i].shape)
      throw std::invalid_argument("NoiseModel: parameter block '" + params[i].name +
                                  "' does not match architecture (expected '" +
                                  expected[i].name + "')");
    params[i].grad.assign(params[i].value.size(), 0.0);
  }
  params_ = std::move(params);
}

std::size_t NoiseModel::block_size() const {
  return kStemParams + kLayerParams * cfg_.dilations.size() + kHeadParams;
}

std::size_t NoiseModel::block_begin(int t) const {
  check_step(t, steps());
  return cfg_.shared_trunk ? 0 : static_cast<std::size_t>(t - 1) * block_size();
}

std::vector<Param*> NoiseModel::step_params(int t) {
  std::vector<Param*> out;
  if (cfg_.shared_trunk) {
    check_step(t, steps());
    for (auto& p : params_) out.push_back(&p);
    return out;
  }
  const std::size_t b = block_begin(t);
  for (std::size_t i = 0; i < block_size(); ++i) out.push_back(&params_[b + i]);
  return out;
}

std::pair<Var, Var> NoiseModel::forward_impl(Tape& tape, int t, Var v, bool track) const {
  if (v.rows() != 1) throw std::invalid_argument("NoiseModel: input must be 1 x N");
  const std::size_t b = block_begin(t);
  const auto& ps = params_;
  const auto k = static_cast<std::size_t>(cfg_.kernel);

  Var z = conv1d(shift_right(v, 1), bind(tape, ps[b], track), bind(tape, ps[b + 1], track),
                 ConvGeometry{});
  if (cfg_.shared_trunk) {
    Var offsets = bind(tape, ps.back(), track);
    const auto row = static_cast<std::size_t>(t - 1);
    z = add_channel_bias(z, slice_rows(offsets, row, row + 1));
  }
  for (std::size_t l = 0; l < cfg_.dilations.size(); ++l) {
    const std::size_t p = b + kStemParams + l * kLayerParams;
    Var w = weight_norm(bind(tape, ps[p], track), bind(tape, ps[p + 1], track));
    Var h = conv1d(z, w, bind(tape, ps[p + 2], track),
                   ConvGeometry::causal(k, static_cast<std::size_t>(cfg_.dilations[l])));
    Var g = conv1d(h, bind(tape, ps[p + 3], track), bind(tape, ps[p + 4], track), ConvGeometry{});
    z = add(z, gated_activation(h, g));
  }
  const std::size_t hb = b + kStemParams + kLayerParams * cfg_.dilations.size();
  Var mu = conv1d(z, bind(tape, ps[hb], track), bind(tape, ps[hb + 1], track), ConvGeometry{});
  Var raw = conv1d(z, bind(tape, ps[hb + 2], track), bind(tape, ps[hb + 3], track), ConvGeometry{});
  Var sigma = add_scalar(softplus(raw), cfg_.sigma_floor);
  return {mu, sigma};
}

std::pair<Var, Var> NoiseModel::forward(Tape& tape, int t, Var v, bool track_params) {
  return forward_impl(tape, t, v, track_params);
}

NoiseModel::Heads NoiseModel::predict(int t, std::span<const double> v) const {
  Tape tape;
  auto [mu, sigma] = forward_impl(tape, t, tape.input(v), false);
  return {{mu.value().begin(), mu.value().end()}, {sigma.value().begin(), sigma.value().end()}};
}

double NoiseModel::loss(int t, std::span<const double> v) const {
  return loss_and_input_gradient(t, v, nullptr);
}

double NoiseModel::loss_and_input_gradient(int t, std::span<const double> v,
                                           std::vector<double>* grad) const {
  if (v.empty()) throw std::invalid_argument("NoiseModel: empty input");
  // Short inputs are left-padded with zeros up to the receptive field; only
  // the real samples enter the loss.
  const std::size_t rf = cfg_.receptive_field();
  const std::size_t pad = v.size() < rf ? rf - v.size() : 0;
  std::vector<double> padded(pad, 0.0);
  padded.insert(padded.end(), v.begin(), v.end());

  Tape tape;
  Var in = tape.input(std::move(padded), 1, pad + v.size(), grad != nullptr);
  auto [mu, sigma] = forward_impl(tape, t, in, false);
  Var loss;
  if (pad > 0) {
    const std::size_t end = pad + v.size();
    loss = nll_loss(slice_cols(in, pad, end), slice_cols(mu, pad, end),
                    slice_cols(sigma, pad, end));
  } else {
    loss = nll_loss(in, mu, sigma);
  }
  if (grad != nullptr) {
    tape.backward(loss);
    const auto g = in.grad();
    grad->assign(g.begin() + static_cast<std::ptrdiff_t>(pad), g.end());
  }
  return loss.item();
}

void NoiseModel::init_heads_from_data(int t, std::span<const double> v) {
  if (v.empty()) return;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  const double sd = std::max(std::sqrt(var) - cfg_.sigma_floor, 1e-6);
  const std::size_t hb = block_begin(t) + kStemParams + kLayerParams * cfg_.dilations.size();
  params_[hb + 1].value[0] = mean;
  params_[hb + 3].value[0] = inverse_softplus(sd);
}

// ---------------------------------------------------------------------------
// Data, loss

CombinedNoise build_vt(std::span<const double> noise_clip, int t, const DiffusionSchedule& sched,
                       Rng& rng, DrawMode mode) {
  if (t < 1 || t > sched.steps())
    throw std::out_of_range("build_vt: step " + std::to_string(t) + " out of range");
  const double g = sched.g(t);
  CombinedNoise out;
  out.t = t;
  out.v.resize(noise_clip.size());
  if (mode == DrawMode::Scalar) {
    const double e = rng.normal();
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = noise_clip[i] - e * g;
  } else {
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = noise_clip[i] - rng.normal() * g;
  }
  return out;
}

double nll_loss(std::span<const double> v, std::span<const double> mu,
                std::span<const double> sigma) {
  if (v.size() != mu.size() || v.size() != sigma.size())
    throw std::invalid_argument("nll_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw std::invalid_argument("nll_loss: sigma must be > 0");
    const double r = v[i] - mu[i];
    loss += kHalfLog2Pi + std::log(sigma[i]) + r * r / (2.0 * sigma[i] * sigma[i]);
  }
  return loss;
}

Var nll_loss(Var v, Var mu, Var sigma) {
  for (double s : sigma.value())
    if (!(s > 0.0)) throw std::invalid_argument("nll_loss: sigma must be > 0");
  const double n = static_cast<double>(v.size());
  Var quad = div(square(sub(v, mu)), scale(square(sigma), 2.0));
  return add_scalar(add(sum(log(sigma)), sum(quad)), n * kHalfLog2Pi);
}

double per_sample_nll(const NoiseModel& model, int t, std::span<const double> v) {
  return model.loss(t, v) / static_cast<double>(v.size());
}

std::vector<double> loss_input_gradient(const NoiseLikelihood& model, int t,
                                        std::span<const double> v) {
  std::vector<double> grad;
  model.loss_and_input_gradient(t, v, &grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct StepData {
  std::vector<double> train;
  std::vector<double> val;
};

StepData split(const std::vector<double>& v, std::size_t n_train) {
  return {{v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n_train)},
          {v.begin() + static_cast<std::ptrdiff_t>(n_train), v.end()}};
}

std::vector<std::vector<double>> snapshot(const std::vector<Param*>& ps) {
  std::vector<std::vector<double>> out;
  for (const Param* p : ps) out.push_back(p->value);
  return out;
}

void restore(const std::vector<Param*>& ps, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = snap[i];
}

void train_one_step(NoiseModel& model, int t, std::span<const double> clip, std::size_t n_train,
                    const DiffusionSchedule& sched, const NoiseTrainConfig& cfg, Rng rng,
                    StepTrainReport& report) {
  report.t = t;
  auto data = split(build_vt(clip, t, sched, rng, cfg.draw_mode).v, n_train);
  model.init_heads_from_data(t, data.train);
  report.initial_val_nll = per_sample_nll(model, t, data.val);
  double best = report.initial_val_nll;

  auto params = model.step_params(t);
  auto best_snap = snapshot(params);
  Adam opt(params, AdamConfig{cfg.lr});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (!cfg.build_once && epoch > 0)
      data.train = split(build_vt(clip, t, sched, rng, cfg.draw_mode).v, n_train).train;
    Tape tape;
    Var v = tape.input(data.train);
    auto [mu, sigma] = model.forward(tape, t, v);
    Var loss = nll_loss(v, mu, sigma);
    if (!std::isfinite(loss.item())) {
      report.aborted = true;
      report.diagnostic = "non-finite loss at step " + std::to_string(t) + ", epoch " +
                          std::to_string(epoch + 1);
      opt.zero_grad();
      break;
    }
    report.loss_trace.push_back(loss.item() / static_cast<double>(data.train.size()));
    tape.backward(loss);
    opt.step();
    const bool check = (epoch + 1) % std::max(1, cfg.validate_every) == 0 || epoch + 1 == cfg.epochs;
    if (check) {
      const double val = per_sample_nll(model, t, data.val);
      if (std::isfinite(val) && val < best) {
        best = val;
        best_snap = snapshot(params);
      }
    }
  }
  restore(params, best_snap);
  report.final_val_nll = best;
}

void train_shared(NoiseModel& model, std::span<const double> clip, std::size_t n_train,
                  const DiffusionSchedule& sched, const NoiseTrainConfig& cfg, Rng& rng,
                  std::vector<StepTrainReport>& reports) {
  const int steps = sched.steps();
  std::vector<Rng> rngs;
  std::vector<StepData> data;
  for (int t = 1; t <= steps; ++t) {
    rngs.push_back(rng.fork(static_cast<std::uint64_t>(t)));
    data.push_back(split(build_vt(clip, t, sched, rngs.back(), cfg.draw_mode).v, n_train));
  }
  auto eval_val = [&](std::vector<double>* per_t) {
    double total = 0.0;
    for (int t = 1; t <= steps; ++t) {
      const double v = per_sample_nll(model, t, data[static_cast<std::size_t>(t - 1)].val);
      if (per_t != nullptr) (*per_t)[static_cast<std::size_t>(t - 1)] = v;
      total += v;
    }
    return total / steps;
  };
  std::vector<double> val_now(static_cast<std::size_t>(steps));
  double best = eval_val(&val_now);
  std::vector<double> best_per_t = val_now;
  for (int t = 1; t <= steps; ++t) {
    reports[static_cast<std::size_t>(t - 1)].t = t;
    reports[static_cast<std::size_t>(t - 1)].initial_val_nll = val_now[static_cast<std::size_t>(t - 1)];
  }
  auto params = model.step_params(1);
  auto best_snap = snapshot(params);
  Adam opt(params, AdamConfig{cfg.lr});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    Var total;
    bool finite = true;
    for (int t = steps; t >= 1; --t) {
      auto& d = data[static_cast<std::size_t>(t - 1)];
      if (!cfg.build_once && epoch > 0)
        d.train = split(build_vt(clip, t, sched, rngs[static_cast<std::size_t>(t - 1)],
                                 cfg.draw_mode).v,
                        n_train).train;
      Var v = tape.input(d.train);
      auto [mu, sigma] = model.forward(tape, t, v);
      Var loss = scale(nll_loss(v, mu, sigma), 1.0 / static_cast<double>(d.train.size()));
      reports[static_cast<std::size_t>(t - 1)].loss_trace.push_back(loss.item());
      finite = finite && std::isfinite(loss.item());
      total = total.valid() ? add(total, loss) : loss;
    }
    if (!finite) {
      for (auto& r : reports) {
        r.aborted = true;
        r.diagnostic = "non-finite loss in shared trunk at epoch " + std::to_string(epoch + 1);
      }
      break;
    }
    tape.backward(scale(total, 1.0 / steps));
    opt.step();
    if ((epoch + 1) % std::max(1, cfg.validate_every) == 0 || epoch + 1 == cfg.epochs) {
      const double val = eval_val(&val_now);
      if (std::isfinite(val) && val < best) {
        best = val;
        best_per_t = val_now;
        best_snap = snapshot(params);
      }
    }
  }
  restore(params, best_snap);
  for (int t = 1; t <= steps; ++t)
    reports[static_cast<std::size_t>(t - 1)].final_val_nll = best_per_t[static_cast<std::size_t>(t - 1)];
}

}  // namespace

NoiseTrainResult train_noise_model(std::span<const double> noise_clip,
                                   const DiffusionSchedule& sched, const NoiseModelConfig& arch,
                                   const NoiseTrainConfig& cfg, Rng& rng) {
  if (cfg.epochs < 0) throw std::invalid_argument("train_noise_model: epochs must be >= 0");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
    throw std::invalid_argument("train_noise_model: train_fraction must be in (0, 1)");
  const std::size_t rf = arch.receptive_field();
  const auto n_train =
      static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(noise_clip.size())));
  if (n_train < rf || noise_clip.size() - n_train < 1)
    throw std::invalid_argument("train_noise_model: noise clip of " +
                                std::to_string(noise_clip.size()) +
                                " samples is too short for receptive field " +
                                std::to_string(rf));

  NoiseTrainResult result{NoiseModel(arch, sched.fingerprint(), rng), {}};
  result.reports.resize(static_cast<std::size_t>(sched.steps()));
  NoiseModel& model = result.model;

  if (arch.shared_trunk) {
    train_shared(model, noise_clip, n_train, sched, cfg, rng, result.reports);
    return result;
  }

  // Steps are visited from T down to 1. Every step owns a forked RNG stream
  // and a disjoint parameter block, so the result does not depend on the
  // worker count.
  std::vector<int> order;
  for (int t = sched.steps(); t >= 1; --t) order.push_back(t);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(order.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < order.size(); i = next++) {
      const int t = order[i];
      try {
        train_one_step(model, t, noise_clip, n_train, sched, cfg,
                       rng.fork(static_cast<std::uint64_t>(t)),
                       result.reports[static_cast<std::size_t>(t - 1)]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min(cfg.workers, sched.steps()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

}  // namespace gdse
