#pragma once
// Monte-Carlo lab for the implicit-position statistics of causal attention.
// A row of causal softmax weights over i visible keys is modeled as
// W_j = Z_j / sum(Z), and the attention output at position i is
// Y_i = sum_j W_j V_j with V ~ N(mu_V, sigma_V^2) i.i.d. The closed form under
// the Dirichlet(1,...,1) weight model is
//   Var(Y_i) = 2 sigma^2/(i+1) + (i-1) mu^2 / (i (i+1)).
// The lab measures how well simulation matches that formula under two logit
// laws, and measures the same per-position variance profile on a trained model.

#include <cstdint>
#include <vector>

#include "ledit/diffusion.hpp"
#include "ledit/model.hpp"
#include "ledit/tensor.hpp"

namespace ledit {

enum class LogitLaw : uint8_t {
  // Z ~ Exp(1): weights are exactly Dirichlet(1,...,1), so the only error
  // source is Monte-Carlo noise.
  EXPONENTIAL_EXACT = 0,
  // Z = exp(S), S ~ N(0,1): softmax of standard-normal logits, the setting the
  // Dirichlet model approximates.
  GAUSSIAN = 1,
};

const char* to_string(LogitLaw law);
LogitLaw logit_law_from_string(const std::string& s);

struct SimConfig {
  int64_t n = 64;          // positions 1..n
  int64_t trials = 100000;
  LogitLaw law = LogitLaw::EXPONENTIAL_EXACT;
  double mu_v = 0.0;
  double sigma_v = 1.0;
  uint64_t seed = 0;

  void validate() const;  // n >= 1, trials >= 2, sigma_v >= 0
};

struct VarianceReport {
  SimConfig config;
  // index k corresponds to position i = k+1 (i = number of visible keys)
  std::vector<double> empirical_var;
  std::vector<double> theoretical_var;
  std::vector<double> rel_error;
  double max_rel_error = 0.0;
  // first/second moments of the weight at fixed key j=1, per position
  std::vector<double> weight_mean;
  std::vector<double> weight_second_moment;
};

// Exact closed form above; i >= 1 (1-indexed = number of visible keys).
double theoretical_variance(int64_t i, double mu_v, double sigma_v);

// E[W^2] = 2/(i(i+1)) under Dirichlet(1,...,1); first moment is 1/i.
double dirichlet_second_moment(int64_t i);
double dirichlet_first_moment(int64_t i);

// Runs cfg.trials independent trials (trial k uses stream id k of cfg.seed)
// and accumulates per-position variance of Y_i plus weight moments at j=1.
VarianceReport simulate_causal_variance(const SimConfig& cfg);

// Per-token variance profile of one block's output tokens on a trained model:
// renders a batch of synthetic class images at (height, width), noises them at
// timestep t, runs the forward capturing block `layer`, takes the variance
// over the feature dimension per token, and averages over the batch. The
// layer must be a CA block (InputError otherwise).
std::vector<double> model_layer_variance(const Model& model, const DiffusionSchedule& schedule,
                                         int t, int layer, int height, int width, int batch,
                                         uint64_t seed);

// Spearman rank correlation with average-rank tie handling; 0 when either
// input has no rank variation. Lengths must match and be >= 2.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace ledit
