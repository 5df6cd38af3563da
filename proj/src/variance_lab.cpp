#include "ledit/variance_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ledit {

const char* to_string(LogitLaw law) {
  switch (law) {
    case LogitLaw::EXPONENTIAL_EXACT: return "exp";
    case LogitLaw::GAUSSIAN: return "gauss";
  }
  throw ConfigError("unknown LogitLaw value");
}

LogitLaw logit_law_from_string(const std::string& s) {
  if (s == "exp" || s == "exponential" || s == "exponential_exact") return LogitLaw::EXPONENTIAL_EXACT;
  if (s == "gauss" || s == "gaussian") return LogitLaw::GAUSSIAN;
  throw ConfigError("unknown logit law '" + s + "' (want exp|gauss)");
}

void SimConfig::validate() const {
  if (n < 1) throw ConfigError("variance sim: n must be >= 1");
  if (trials < 2) throw ConfigError("variance sim: trials must be >= 2");
  if (!(sigma_v >= 0.0)) throw ConfigError("variance sim: sigma_v must be >= 0");
}

double theoretical_variance(int64_t i, double mu_v, double sigma_v) {
  if (i < 1) throw InputError("theoretical_variance: position must be >= 1");
  double di = double(i);
  return 2.0 * sigma_v * sigma_v / (di + 1.0) + (di - 1.0) * mu_v * mu_v / (di * (di + 1.0));
}

double dirichlet_second_moment(int64_t i) {
  if (i < 1) throw InputError("dirichlet_second_moment: position must be >= 1");
  return 2.0 / (double(i) * double(i + 1));
}

double dirichlet_first_moment(int64_t i) {
  if (i < 1) throw InputError("dirichlet_first_moment: position must be >= 1");
  return 1.0 / double(i);
}

VarianceReport simulate_causal_variance(const SimConfig& cfg) {
  cfg.validate();
  size_t n = static_cast<size_t>(cfg.n);

  // Streaming mean/M2 per position (Welford) for Y_i, plus raw weight moments.
  std::vector<double> mean(n, 0.0), m2(n, 0.0), wsum(n, 0.0), w2sum(n, 0.0);
  std::vector<double> z(n), zv(n);

  for (int64_t trial = 0; trial < cfg.trials; ++trial) {
    // One trial = one draw of (Z_1..Z_n, V_1..V_n) shared across prefixes:
    // position i uses the first i pairs, matching a causal row that extends
    // as the position grows. Per-position variance statistics are unaffected
    // by this coupling across positions (each position is marginally exact).
    RngStream rng(cfg.seed, static_cast<uint64_t>(trial));
    double zacc = 0.0, zvacc = 0.0;
    for (size_t j = 0; j < n; ++j) {
      double zj = cfg.law == LogitLaw::EXPONENTIAL_EXACT ? rng.exponential()
                                                         : std::exp(rng.normal());
      double vj = cfg.mu_v + cfg.sigma_v * rng.normal();
      zacc += zj;
      zvacc += zj * vj;
      z[j] = zacc;    // prefix sum of Z
      zv[j] = zvacc;  // prefix sum of Z*V
    }
    double z1 = n > 0 ? (z[0]) : 0.0;  // Z_1 itself (first prefix sum)
    double count = double(trial + 1);
    for (size_t k = 0; k < n; ++k) {
      double y = zv[k] / z[k];
      double delta = y - mean[k];
      mean[k] += delta / count;
      m2[k] += delta * (y - mean[k]);
      double w = z1 / z[k];  // weight of key j=1 at position i=k+1
      wsum[k] += w;
      w2sum[k] += w * w;
    }
  }

  VarianceReport rep;
  rep.config = cfg;
  rep.empirical_var.resize(n);
  rep.theoretical_var.resize(n);
  rep.rel_error.resize(n);
  rep.weight_mean.resize(n);
  rep.weight_second_moment.resize(n);
  for (size_t k = 0; k < n; ++k) {
    int64_t i = static_cast<int64_t>(k) + 1;
    rep.empirical_var[k] = m2[k] / double(cfg.trials - 1);
    rep.theoretical_var[k] = theoretical_variance(i, cfg.mu_v, cfg.sigma_v);
    double denom = std::max(std::abs(rep.theoretical_var[k]), 1e-300);
    rep.rel_error[k] = std::abs(rep.empirical_var[k] - rep.theoretical_var[k]) / denom;
    rep.max_rel_error = std::max(rep.max_rel_error, rep.rel_error[k]);
    rep.weight_mean[k] = wsum[k] / double(cfg.trials);
    rep.weight_second_moment[k] = w2sum[k] / double(cfg.trials);
  }
  return rep;
}

std::vector<double> model_layer_variance(const Model& model, const DiffusionSchedule& schedule,
                                         int t, int layer, int height, int width, int batch,
                                         uint64_t seed) {
  schedule.validate();
  if (t < 0 || t >= schedule.T) throw InputError("model_layer_variance: t out of range");
  if (batch < 1) throw InputError("model_layer_variance: batch must be >= 1");
  std::vector<BlockMode> modes = make_schedule(model.cfg, 0).modes;
  if (layer < 0 || layer >= model.cfg.depth)
    throw InputError("model_layer_variance: layer " + std::to_string(layer) + " out of range");
  if (modes[static_cast<size_t>(layer)] != BlockMode::CA)
    throw InputError("model_layer_variance: layer " + std::to_string(layer) +
                     " is a self-attention block; pick a causal one");

  int64_t tokens = (int64_t(height) / model.cfg.patch) * (width / model.cfg.patch);
  LogitScalePolicy policy{model.cfg.train_tokens(), LogitScaleMode::LOG_RATIO};
  ForwardOptions opt;
  opt.conv_spec = standard_conv_spec();
  opt.logit_scale = attention_logit_scale(policy, tokens);
  opt.capture_block = layer;

  std::vector<double> profile(static_cast<size_t>(tokens), 0.0);
  RngStream rng(seed, 0x76617270);  // probe stream
  for (int b = 0; b < batch; ++b) {
    int cls = b % model.cfg.num_classes;
    Tensor x0 = render_class_image(cls, model.cfg.num_classes, height, width, rng);
    Tensor noise = Tensor::randn(x0.shape, rng);
    Tensor x_t = q_sample(schedule, x0, t, noise);
    Tensor captured;
    model_forward(model, x_t, t, cls, opt, &captured);
    // per-token variance across the feature dimension
    int64_t d = captured.shape[1];
    for (int64_t i = 0; i < tokens; ++i) {
      double mean = 0.0;
      for (int64_t j = 0; j < d; ++j) mean += captured.at2(i, j);
      mean /= double(d);
      double var = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        double delta = captured.at2(i, j) - mean;
        var += delta * delta;
      }
      profile[static_cast<size_t>(i)] += var / double(d);
    }
  }
  for (double& v : profile) v /= double(batch);
  return profile;
}

// Average ranks with ties sharing the mean of their rank range.
static std::vector<double> ranks_of(const std::vector<double>& xs) {
  size_t n = xs.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    double avg = (double(i) + double(j)) / 2.0 + 1.0;  // 1-based average rank
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw InputError("spearman: length mismatch");
  if (xs.size() < 2) throw InputError("spearman: need at least 2 points");
  std::vector<double> rx = ranks_of(xs), ry = ranks_of(ys);
  double n = double(xs.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    double dx = rx[i] - mx, dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ledit
