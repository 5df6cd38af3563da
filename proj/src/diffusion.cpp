#include "ledit/diffusion.hpp"

#include <cmath>

namespace ledit {

void DiffusionSchedule::validate() const {
  if (T < 1 || betas.size() != static_cast<size_t>(T) || alphas.size() != betas.size() ||
      alpha_bars.size() != betas.size())
    throw ConfigError("schedule: array lengths do not match T");
  for (int t = 0; t < T; ++t) {
    if (!(betas[t] > 0.0 && betas[t] < 1.0)) throw ConfigError("schedule: beta out of (0,1)");
    if (t > 0 && betas[t] <= betas[t - 1]) throw ConfigError("schedule: betas must strictly increase");
    if (t > 0 && alpha_bars[t] >= alpha_bars[t - 1])
      throw ConfigError("schedule: alpha_bars must strictly decrease");
  }
}

DiffusionSchedule linear_schedule(int T, double beta_1, double beta_T) {
  if (T < 1) throw ConfigError("linear_schedule: T must be >= 1");
  if (!(0.0 < beta_1 && beta_1 < beta_T && beta_T < 1.0))
    throw ConfigError("linear_schedule: need 0 < beta_1 < beta_T < 1");
  DiffusionSchedule s;
  s.T = T;
  s.betas.resize(static_cast<size_t>(T));
  s.alphas.resize(static_cast<size_t>(T));
  s.alpha_bars.resize(static_cast<size_t>(T));
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    double b = T == 1 ? beta_1 : beta_1 + (beta_T - beta_1) * double(t) / double(T - 1);
    s.betas[t] = b;
    s.alphas[t] = 1.0 - b;
    prod *= s.alphas[t];
    s.alpha_bars[t] = prod;
  }
  s.validate();
  return s;
}

Tensor q_sample(const DiffusionSchedule& s, const Tensor& x0, int t, const Tensor& noise) {
  if (t < 0 || t >= s.T) throw InputError("q_sample: t " + std::to_string(t) + " out of [0," +
                                          std::to_string(s.T) + ")");
  if (!x0.same_shape(noise)) throw DimensionError("q_sample: noise shape must match x0");
  double a = std::sqrt(s.alpha_bars[t]);
  double b = std::sqrt(1.0 - s.alpha_bars[t]);
  Tensor out(x0.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + b * noise[i];
  return out;
}

Tensor cfg_combine(const Tensor& eps_c, const Tensor& eps_null, double w) {
  if (!eps_c.same_shape(eps_null)) throw DimensionError("cfg_combine: shape mismatch");
  Tensor out(eps_c.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = eps_null[i] + w * (eps_c[i] - eps_null[i]);
  return out;
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("train: steps must be >= 1");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (!(label_dropout >= 0.0 && label_dropout <= 1.0))
    throw ConfigError("train: label_dropout must be in [0,1]");
  dilation.validate();
}

// ---- training ----------------------------------------------------------------

TrainStepResult training_step(Model& model, AdamState& adam, const Dataset& data,
                              const DiffusionSchedule& schedule, const TrainConfig& cfg,
                              RngStream& rng) {
  cfg.validate();
  schedule.validate();
  if (data.size() == 0) throw InputError("training_step: empty dataset");
  if (data.height != model.cfg.train_h || data.width != model.cfg.train_w)
    throw DimensionError("training_step: dataset " + std::to_string(data.height) + "x" +
                         std::to_string(data.width) + " vs train resolution " +
                         std::to_string(model.cfg.train_h) + "x" + std::to_string(model.cfg.train_w));

  // Fixed rng draw order per step:
  //   1. conv spec coin (and rate if dilated)
  //   2. per sample: dataset index, timestep, noise image, label-dropout coin
  ConvSpec spec = sample_conv_spec(cfg.dilation, rng);

  Tape tape;
  TapeBinding bound = bind_params(tape, model, true);
  ForwardOptions opt;
  opt.conv_spec = spec;

  Var loss_sum{};
  for (int b = 0; b < cfg.batch; ++b) {
    size_t idx = rng.uniform_int(data.size());
    int t = int(rng.uniform_int(static_cast<uint64_t>(schedule.T)));
    Tensor noise = Tensor::randn(data.images[idx].shape, rng);
    int64_t row = resolve_label_row(data.labels[idx], model.cfg.num_classes, cfg.label_dropout, &rng);
    int label = row == model.cfg.num_classes ? kNullLabel : int(row);

    Tensor x_t = q_sample(schedule, data.images[idx], t, noise);
    Var eps_hat = model_forward_t(tape, model, bound, x_t, t, label, opt);
    Var loss = tape.mse(eps_hat, tape.constant(noise));
    loss_sum = b == 0 ? loss : tape.add(loss_sum, loss);
  }
  Var loss_mean = tape.scale(loss_sum, 1.0 / double(cfg.batch));
  double loss_value = tape.value(loss_mean)[0];
  if (!std::isfinite(loss_value)) throw NumericError("training_step: non-finite loss");
  tape.backward(loss_mean);

  // Adam update over the fixed parameter order.
  if (adam.m.empty()) {
    adam.m.reserve(model.params.size());
    adam.v.reserve(model.params.size());
    for (auto& kv : model.params) {
      adam.m.emplace_back(kv.second.shape);
      adam.v.emplace_back(kv.second.shape);
    }
  }
  adam.step_count += 1;
  double bc1 = 1.0 - std::pow(adam.beta1, double(adam.step_count));
  double bc2 = 1.0 - std::pow(adam.beta2, double(adam.step_count));
  for (size_t p = 0; p < model.params.size(); ++p) {
    Tensor g = tape.grad(bound.vars[p].second);
    Tensor& theta = model.params[p].second;
    Tensor &mm = adam.m[p], &vv = adam.v[p];
    for (int64_t i = 0; i < theta.numel(); ++i) {
      mm[i] = adam.beta1 * mm[i] + (1.0 - adam.beta1) * g[i];
      vv[i] = adam.beta2 * vv[i] + (1.0 - adam.beta2) * g[i] * g[i];
      double mhat = mm[i] / bc1;
      double vhat = vv[i] / bc2;
      theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + adam.eps);
    }
    if (!theta.all_finite())
      throw NumericError("training_step: non-finite parameter '" + model.params[p].first + "'");
  }
  return TrainStepResult{loss_value, spec};
}

// ---- sampling -----------------------------------------------------------------

// Strided timestep subsequence from T-1 down to 0 (inclusive), `steps` entries.
static std::vector<int> sample_timesteps(int T, int steps) {
  std::vector<int> taus;
  if (steps == 1) {
    taus.push_back(T - 1);
    return taus;
  }
  taus.reserve(static_cast<size_t>(steps));
  for (int j = 0; j < steps; ++j) {
    int tau = int((int64_t(T - 1) * (steps - 1 - j)) / (steps - 1));
    if (taus.empty() || tau != taus.back()) taus.push_back(tau);
  }
  return taus;
}

Tensor ddpm_sample(const Model& model, const DiffusionSchedule& schedule, const SampleConfig& cfg,
                   RngStream& rng) {
  schedule.validate();
  if (cfg.steps < 1 || cfg.steps > schedule.T)
    throw InputError("ddpm_sample: steps must be in [1, T=" + std::to_string(schedule.T) + "]");
  if (cfg.height % model.cfg.patch != 0 || cfg.width % model.cfg.patch != 0)
    throw DimensionError("ddpm_sample: resolution not divisible by patch size");
  if (!(cfg.cfg_scale >= 0.0)) throw ConfigError("ddpm_sample: cfg_scale must be >= 0");

  int64_t tokens = (int64_t(cfg.height) / model.cfg.patch) * (cfg.width / model.cfg.patch);
  LogitScalePolicy policy{model.cfg.train_tokens(), LogitScaleMode::LOG_RATIO};
  ForwardOptions opt;
  opt.conv_spec = standard_conv_spec();  // inference never dilates
  opt.logit_scale = attention_logit_scale(policy, tokens);
  opt.t_prime = cfg.t_prime;

  Tensor x = Tensor::randn({model.cfg.channels, cfg.height, cfg.width}, rng);
  std::vector<int> taus = sample_timesteps(schedule.T, cfg.steps);

  for (size_t k = 0; k < taus.size(); ++k) {
    int tau = taus[k];
    Tensor eps = model_forward(model, x, tau, cfg.label, opt);
    if (cfg.cfg_scale > 1.0) {
      Tensor eps_null = model_forward(model, x, tau, kNullLabel, opt);
      eps = cfg_combine(eps, eps_null, cfg.cfg_scale);
    }
    double abar = schedule.alpha_bars[tau];
    double abar_next = k + 1 < taus.size() ? schedule.alpha_bars[taus[k + 1]] : 1.0;
    double alpha_eff = abar / abar_next;
    double beta_eff = 1.0 - alpha_eff;
    double inv_sqrt_alpha = 1.0 / std::sqrt(alpha_eff);
    double eps_coef = beta_eff / std::sqrt(1.0 - abar);
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = inv_sqrt_alpha * (x[i] - eps_coef * eps[i]);
    if (k + 1 < taus.size()) {
      double sigma = std::sqrt(beta_eff * (1.0 - abar_next) / (1.0 - abar));
      for (int64_t i = 0; i < x.numel(); ++i) x[i] += sigma * rng.normal();
    }
    if (!x.all_finite())
      throw NumericError("ddpm_sample: non-finite sample at step " + std::to_string(k) +
                         " (t=" + std::to_string(tau) + ")");
  }
  return x;
}

}  // namespace ledit
