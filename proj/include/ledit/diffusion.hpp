#pragma once
// DDPM training and ancestral sampling with classifier-free guidance. The
// model predicts the noise (epsilon parameterization) under a linear beta
// schedule; sampling supports fewer steps than T via a strided timestep
// subsequence with exact respaced posterior coefficients.

#include <cstdint>
#include <vector>

#include "ledit/dataset.hpp"
#include "ledit/model.hpp"
#include "ledit/rng.hpp"
#include "ledit/tensor.hpp"

namespace ledit {

struct DiffusionSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;      // 1 - beta
  std::vector<double> alpha_bars;  // running product of alphas

  void validate() const;  // betas in (0,1) strictly increasing, alpha_bars strictly decreasing
};

DiffusionSchedule linear_schedule(int T = 1000, double beta_1 = 1e-4, double beta_T = 2e-2);

// sqrt(abar_t) x0 + sqrt(1 - abar_t) noise. t in [0, T).
Tensor q_sample(const DiffusionSchedule& s, const Tensor& x0, int t, const Tensor& noise);

// eps_null + w * (eps_c - eps_null).
Tensor cfg_combine(const Tensor& eps_c, const Tensor& eps_null, double w);

struct TrainConfig {
  int steps = 500;
  int batch = 8;
  double lr = 1e-3;
  double label_dropout = 0.1;
  uint64_t seed = 0;
  MultiDilationPolicy dilation;

  void validate() const;
};

// Adam moments parallel to Model::params order; created lazily on first step.
struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step_count = 0;
  std::vector<Tensor> m, v;
};

struct TrainStepResult {
  double loss = 0.0;
  ConvSpec conv_spec;  // the locality spec this step trained with
};

// One optimizer step: samples per-image (index, t, noise, label dropout) and a
// single conv spec for the whole batch, accumulates the batch-mean MSE(eps_hat,
// eps) gradient, applies Adam. Draw order from rng is fixed and documented in
// the implementation; same rng state in -> same result out, bitwise.
TrainStepResult training_step(Model& model, AdamState& adam, const Dataset& data,
                              const DiffusionSchedule& schedule, const TrainConfig& cfg,
                              RngStream& rng);

struct SampleConfig {
  int height = 16;
  int width = 16;
  int steps = 50;
  double cfg_scale = 1.0;  // > 1 enables guidance (two forwards per step)
  int label = 0;           // class id or kNullLabel
  int t_prime = 0;         // causal blocks run unmasked for t < t_prime
};

// Ancestral sampling from pure noise. Logit scale is derived from (train
// tokens -> current tokens); inference always uses the standard (3,1,1,1)
// locality spec. Throws NumericError naming the step if values blow up.
Tensor ddpm_sample(const Model& model, const DiffusionSchedule& schedule, const SampleConfig& cfg,
                   RngStream& rng);

}  // namespace ledit
