#include "gdse/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "gdse/error.hpp"
#include "gdse/numerics/adam.hpp"
#include "gdse/numerics/ops.hpp"

namespace gdse {
namespace {

constexpr std::size_t kParamsPerLayer = 6;
constexpr std::size_t kHeadParams = 4;  // input.{weight,bias}, embed.{weight,bias}

std::size_t layer_base(std::size_t l) { return kHeadParams + l * kParamsPerLayer; }

std::vector<Param> make_layout(const EpsilonNetConfig& cfg) {
  const auto c = static_cast<std::size_t>(cfg.channels);
  const auto k = static_cast<std::size_t>(cfg.kernel);
  const auto e = static_cast<std::size_t>(cfg.embed_dim);
  const auto h = static_cast<std::size_t>(cfg.embed_hidden);
  std::vector<Param> ps;
  ps.emplace_back("input.weight", std::vector<std::size_t>{c, 1, 1});
  ps.emplace_back("input.bias", std::vector<std::size_t>{c});
  ps.emplace_back("embed.weight", std::vector<std::size_t>{h, e, 1});
  ps.emplace_back("embed.bias", std::vector<std::size_t>{h});
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    ps.emplace_back(pre + "step.weight", std::vector<std::size_t>{c, h, 1});
    ps.emplace_back(pre + "step.bias", std::vector<std::size_t>{c});
    ps.emplace_back(pre + "dilated.weight", std::vector<std::size_t>{2 * c, c, k});
    ps.emplace_back(pre + "dilated.bias", std::vector<std::size_t>{2 * c});
    ps.emplace_back(pre + "res_skip.weight", std::vector<std::size_t>{2 * c, c, 1});
    ps.emplace_back(pre + "res_skip.bias", std::vector<std::size_t>{2 * c});
  }
  ps.emplace_back("output.hidden.weight", std::vector<std::size_t>{c, c, 1});
  ps.emplace_back("output.hidden.bias", std::vector<std::size_t>{c});
  ps.emplace_back("output.proj.weight", std::vector<std::size_t>{1, c, 1});
  ps.emplace_back("output.proj.bias", std::vector<std::size_t>{1});
  return ps;
}

void validate(const EpsilonNetConfig& cfg) {
  if (cfg.layers < 1 || cfg.channels < 1 || cfg.kernel < 1 || cfg.kernel % 2 == 0 ||
      cfg.dilation_cycle < 1 || cfg.embed_dim < 2 || cfg.embed_dim % 2 != 0 ||
      cfg.embed_hidden < 1)
    throw std::invalid_argument(
        "EpsilonNetConfig: layers/channels >= 1, odd kernel, even embed_dim >= 2 required");
}

std::size_t dilation_of(const EpsilonNetConfig& cfg, int l) {
  return std::size_t{1} << (l % cfg.dilation_cycle);
}

Var bind(Tape& tape, const Param& p, bool track) {
  if (track) return tape.param(const_cast<Param&>(p));
  const std::size_t rows = p.shape.front();
  return tape.constant(p.value, rows, p.size() / rows);
}

void check_step(int t, const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.steps())
    throw std::out_of_range("step " + std::to_string(t) + " outside [1, " +
                            std::to_string(sched.steps()) + "]");
}

Var forward_impl(const EpsilonNetConfig& cfg, const std::vector<Param>& ps, Tape& tape, Var x,
                 int t, bool track) {
  if (x.rows() != 1) throw std::invalid_argument("EpsilonNet: input must be 1 x N");
  const auto c = static_cast<std::size_t>(cfg.channels);
  const auto k = static_cast<std::size_t>(cfg.kernel);

  Var z = conv1d(x, bind(tape, ps[0], track), bind(tape, ps[1], track), ConvGeometry{});
  const auto emb = step_embedding(t, cfg.embed_dim);
  Var e = tape.constant(emb, emb.size(), 1);
  Var hidden = tanh(conv1d(e, bind(tape, ps[2], track), bind(tape, ps[3], track), ConvGeometry{}));

  Var skip_sum;
  const double res_scale = 1.0 / std::sqrt(2.0);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::size_t b = layer_base(static_cast<std::size_t>(l));
    Var step_bias =
        conv1d(hidden, bind(tape, ps[b], track), bind(tape, ps[b + 1], track), ConvGeometry{});
    Var y = add_channel_bias(z, step_bias);
    Var hg = conv1d(y, bind(tape, ps[b + 2], track), bind(tape, ps[b + 3], track),
                    ConvGeometry::same(k, dilation_of(cfg, l)));
    Var gated = gated_activation(slice_rows(hg, 0, c), slice_rows(hg, c, 2 * c));
    Var rs = conv1d(gated, bind(tape, ps[b + 4], track), bind(tape, ps[b + 5], track),
                    ConvGeometry{});
    z = scale(add(z, slice_rows(rs, 0, c)), res_scale);
    Var skip = slice_rows(rs, c, 2 * c);
    skip_sum = skip_sum.valid() ? add(skip_sum, skip) : skip;
  }
  skip_sum = scale(skip_sum, 1.0 / std::sqrt(static_cast<double>(cfg.layers)));
  const std::size_t o = layer_base(static_cast<std::size_t>(cfg.layers));
  Var h = tanh(conv1d(skip_sum, bind(tape, ps[o], track), bind(tape, ps[o + 1], track),
                      ConvGeometry{}));
  return conv1d(h, bind(tape, ps[o + 2], track), bind(tape, ps[o + 3], track), ConvGeometry{});
}

}  // namespace

std::size_t EpsilonNetConfig::receptive_field() const {
  std::size_t rf = 1;
  for (int l = 0; l < layers; ++l)
    rf += static_cast<std::size_t>(kernel - 1) * (std::size_t{1} << (l % dilation_cycle));
  return rf;
}

std::vector<double> step_embedding(int t, int dim) {
  const int half = dim / 2;
  std::vector<double> e(static_cast<std::size_t>(dim));
  for (int i = 0; i < half; ++i) {
    const double freq = half > 1 ? std::pow(10.0, -4.0 * i / (half - 1)) : 1.0;
    e[i] = std::sin(t * freq);
    e[i + half] = std::cos(t * freq);
  }
  return e;
}

EpsilonNet::EpsilonNet(const EpsilonNetConfig& cfg, Rng& rng) : cfg_(cfg) {
  validate(cfg_);
  params_ = make_layout(cfg_);
  for (auto& p : params_) {
    if (p.shape.size() == 1) continue;  // biases start at zero
    if (p.name == "output.proj.weight") continue;
    const std::size_t fan_in = p.size() / p.shape.front();
    const double sd = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (auto& v : p.value) v = sd * rng.normal();
  }
}

EpsilonNet::EpsilonNet(const EpsilonNetConfig& cfg, std::vector<Param> params) : cfg_(cfg) {
  validate(cfg_);
  auto expected = make_layout(cfg_);
  if (params.size() != expected.size())
    throw std::invalid_argument("EpsilonNet: expected " + std::to_string(expected.size()) +
                                " parameter blocks, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != expected[i].name || params[i].shape != expected[i].shape)
      throw std::invalid_argument("EpsilonNet: parameter block '" + params[i].name +
                                  "' does not match architecture (expected '" +
                                  expected[i].name + "')");
    params[i].grad.assign(params[i].value.size(), 0.0);
  }
  params_ = std::move(params);
}

Var EpsilonNet::forward(Tape& tape, Var x, int t, bool track_params) {
  return forward_impl(cfg_, params_, tape, x, t, track_params);
}

std::vector<double> EpsilonNet::predict_noise(std::span<const double> x_t, int t) const {
  Tape tape;
  Var x = tape.input(x_t);
  Var out = forward_impl(cfg_, params_, tape, x, t, false);
  const auto v = out.value();
  return {v.begin(), v.end()};
}

std::vector<Param*> EpsilonNet::param_ptrs() {
  std::vector<Param*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

ForwardDraw q_sample(std::span<const double> x0, int t, const DiffusionSchedule& sched,
                     Rng& rng) {
  if (t < 0 || t > sched.steps()) throw std::out_of_range("q_sample: step out of range");
  ForwardDraw d;
  d.t = t;
  d.eps = rng.normal_vector(x0.size());
  const double a = std::sqrt(sched.alpha_bar(t));
  const double s = std::sqrt(1.0 - sched.alpha_bar(t));
  d.x_t.resize(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) d.x_t[i] = a * x0[i] + s * d.eps[i];
  return d;
}

std::vector<double> forward_step(std::span<const double> x_prev, int t,
                                 const DiffusionSchedule& sched, Rng& rng) {
  check_step(t, sched);
  const double keep = std::sqrt(1.0 - sched.beta(t));
  const double noise = std::sqrt(sched.beta(t));
  std::vector<double> out(x_prev.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * x_prev[i] + noise * rng.normal();
  return out;
}

std::vector<double> posterior_mean(std::span<const double> x_t, int t,
                                   std::span<const double> eps_hat,
                                   const DiffusionSchedule& sched) {
  check_step(t, sched);
  if (x_t.size() != eps_hat.size())
    throw std::invalid_argument("posterior_mean: length mismatch");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
  const double one_minus_abar = 1.0 - sched.alpha_bar(t);
  const double coef = one_minus_abar > 0.0 ? (1.0 - sched.alpha(t)) / std::sqrt(one_minus_abar)
                                           : 0.0;
  std::vector<double> mu(x_t.size());
  for (std::size_t i = 0; i < mu.size(); ++i)
    mu[i] = inv_sqrt_alpha * (x_t[i] - coef * eps_hat[i]);
  return mu;
}

double reverse_sigma(int t, const DiffusionSchedule& sched, const ReverseOptions& opts) {
  if (t == 1 && !opts.noise_at_final_step) return 0.0;
  return std::sqrt(sched.tilde_beta(t));
}

std::vector<double> reverse_draw(std::span<const double> mean, int t,
                                 const DiffusionSchedule& sched, Rng& rng,
                                 const ReverseOptions& opts) {
  check_step(t, sched);
  std::vector<double> out(mean.begin(), mean.end());
  const double sigma = reverse_sigma(t, sched, opts);
  if (sigma > 0.0)
    for (auto& v : out) v += sigma * rng.normal();
  return out;
}

std::vector<double> unguided_step(std::span<const double> x_t, int t, const Denoiser& net,
                                  const DiffusionSchedule& sched, Rng& rng,
                                  const ReverseOptions& opts) {
  check_step(t, sched);
  const auto eps_hat = net.predict_noise(x_t, t);
  const auto mu = posterior_mean(x_t, t, eps_hat, sched);
  return reverse_draw(mu, t, sched, rng, opts);
}

std::vector<double> sample_unguided(std::size_t length, const Denoiser& net,
                                    const DiffusionSchedule& sched, Rng& rng,
                                    const ReverseOptions& opts) {
  if (length == 0) throw std::invalid_argument("sample_unguided: length must be >= 1");
  auto x = rng.normal_vector(length);
  for (int t = sched.steps(); t >= 1; --t) x = unguided_step(x, t, net, sched, rng, opts);
  return x;
}

Var backbone_loss(Tape& tape, EpsilonNet& net, std::span<const std::vector<double>> x0_batch,
                  std::span<const int> steps, std::span<const std::vector<double>> eps_batch,
                  const DiffusionSchedule& sched) {
  if (x0_batch.empty() || x0_batch.size() != steps.size() || x0_batch.size() != eps_batch.size())
    throw std::invalid_argument("backbone_loss: batch size mismatch");
  Var total;
  std::size_t count = 0;
  for (std::size_t b = 0; b < x0_batch.size(); ++b) {
    const auto& x0 = x0_batch[b];
    const auto& eps = eps_batch[b];
    const int t = steps[b];
    check_step(t, sched);
    const double a = std::sqrt(sched.alpha_bar(t));
    const double s = std::sqrt(1.0 - sched.alpha_bar(t));
    std::vector<double> xt(x0.size());
    for (std::size_t i = 0; i < xt.size(); ++i) xt[i] = a * x0[i] + s * eps[i];
    Var pred = net.forward(tape, tape.input(xt), t);
    Var err = sum(square(sub(tape.input(eps), pred)));
    total = total.valid() ? add(total, err) : err;
    count += x0.size();
  }
  return scale(total, 1.0 / static_cast<double>(count));
}

BackboneTrainResult train_backbone(std::span<const std::vector<double>> corpus,
                                   const DiffusionSchedule& sched, const EpsilonNetConfig& arch,
                                   const BackboneTrainConfig& cfg, Rng& rng) {
  if (corpus.empty()) throw std::invalid_argument("train_backbone: empty corpus");
  if (cfg.batch < 1 || cfg.segment_length < 1 || cfg.epochs < 0)
    throw std::invalid_argument("train_backbone: batch/segment_length must be >= 1");
  for (const auto& clip : corpus)
    if (clip.size() < cfg.segment_length)
      throw std::invalid_argument("train_backbone: clip shorter than segment_length (" +
                                  std::to_string(clip.size()) + " < " +
                                  std::to_string(cfg.segment_length) + ")");

  BackboneTrainResult result{EpsilonNet(arch, rng), {}};
  EpsilonNet& net = result.net;
  net.set_fingerprint(sched.fingerprint());
  Adam opt(net.param_ptrs(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.clip_norm});

  const int steps_per_epoch =
      cfg.steps_per_epoch > 0
          ? cfg.steps_per_epoch
          : static_cast<int>((corpus.size() + static_cast<std::size_t>(cfg.batch) - 1) /
                             static_cast<std::size_t>(cfg.batch));
  const auto bsz = static_cast<std::size_t>(cfg.batch);
  std::vector<std::vector<double>> x0s(bsz), epss(bsz);
  std::vector<int> ts(bsz);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double acc = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      for (std::size_t b = 0; b < bsz; ++b) {
        const auto& clip = corpus[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(corpus.size()) - 1))];
        const auto start = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(clip.size() - cfg.segment_length)));
        x0s[b].assign(clip.begin() + static_cast<std::ptrdiff_t>(start),
                      clip.begin() + static_cast<std::ptrdiff_t>(start + cfg.segment_length));
        ts[b] = static_cast<int>(rng.uniform_int(1, sched.steps()));
        epss[b] = rng.normal_vector(cfg.segment_length);
      }
      Tape tape;
      Var loss = backbone_loss(tape, net, x0s, ts, epss, sched);
      if (!std::isfinite(loss.item()))
        throw NumericalError("train_backbone: non-finite loss at epoch " +
                                 std::to_string(epoch));
      tape.backward(loss);
      opt.step();
      acc += loss.item();
    }
    result.loss_trace.push_back(acc / steps_per_epoch);
  }
  return result;
}

}  // namespace gdse
