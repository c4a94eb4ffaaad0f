#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rlpp/sac/mlp.hpp"

namespace rlpp::sac {

struct SacConfig {
  double lr = 3e-4;
  double gamma = 0.99;
  double tau = 0.005;
  int batch_size = 256;
  double target_entropy = -2.0;
  long learning_starts = 100;
  int train_freq = 1;
  int gradient_steps = 1;
  long total_steps = 200000;
  long buffer_capacity = 1000000;
  std::vector<int> hidden{256, 256};
  double initial_alpha = 1.0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
  double last_layer_scale = 1e-2;
  bool normalize_observations = true;
  std::string precision = "float64";  // or "float32"
  void validate() const;
};

template <typename Scalar>
struct Batch {
  Matrix<Scalar> obs;       // obs_dim x B
  Matrix<Scalar> actions;   // act_dim x B
  Vector<Scalar> rewards;   // B
  Matrix<Scalar> next_obs;  // obs_dim x B
  Vector<Scalar> dones;     // B, 1 for terminal transitions
  Eigen::Index size() const { return rewards.size(); }
};

inline constexpr double kLogTwoPi = 1.8378770664093454836;
inline constexpr double kLogTwo = 0.69314718055994530942;

/// log(1 - tanh(u)^2) without cancellation.
template <typename Scalar>
Scalar log_one_minus_tanh_sq(Scalar u) {
  using std::abs;
  using std::exp;
  using std::log1p;
  const Scalar x = Scalar(-2) * u;
  const Scalar softplus = (x > Scalar(0) ? x : Scalar(0)) + log1p(exp(-abs(x)));
  return Scalar(2) * (Scalar(kLogTwo) - u - softplus);
}

/// Reparameterized draw from the tanh-Gaussian policy for a batch.
template <typename Scalar>
struct PolicySample {
  typename Mlp<Scalar>::Cache cache;
  Matrix<Scalar> mean;     // act_dim x B
  Matrix<Scalar> log_std;  // clamped
  Matrix<Scalar> noise;    // xi
  Matrix<Scalar> pre_tanh;
  Matrix<Scalar> action;
  Vector<Scalar> log_prob;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> clamped;
};

template <typename Scalar>
PolicySample<Scalar> policy_sample(const Mlp<Scalar>& actor, const Matrix<Scalar>& obs,
                                   const Matrix<Scalar>& noise, double log_std_min,
                                   double log_std_max) {
  const Eigen::Index act_dim = actor.output_dim() / 2;
  if (noise.rows() != act_dim || noise.cols() != obs.cols()) {
    throw ValidationError("policy noise has the wrong shape");
  }
  PolicySample<Scalar> out;
  const Matrix<Scalar> head = actor.forward(obs, out.cache);
  out.mean = head.topRows(act_dim);
  const Matrix<Scalar> raw = head.bottomRows(act_dim);
  out.clamped = (raw.array() < Scalar(log_std_min)) || (raw.array() > Scalar(log_std_max));
  out.log_std = raw.cwiseMax(Scalar(log_std_min)).cwiseMin(Scalar(log_std_max));
  out.noise = noise;
  out.pre_tanh = out.mean + (out.log_std.array().exp() * noise.array()).matrix();
  out.action = out.pre_tanh.array().tanh().matrix();
  out.log_prob.resize(obs.cols());
  for (Eigen::Index b = 0; b < obs.cols(); ++b) {
    Scalar lp = 0;
    for (Eigen::Index j = 0; j < act_dim; ++j) {
      lp += Scalar(-0.5) * noise(j, b) * noise(j, b) - out.log_std(j, b) - Scalar(0.5 * kLogTwoPi) -
            log_one_minus_tanh_sq(out.pre_tanh(j, b));
    }
    out.log_prob[b] = lp;
  }
  return out;
}

/// tanh(mean): the deterministic action.
template <typename Scalar>
Matrix<Scalar> policy_deterministic(const Mlp<Scalar>& actor, const Matrix<Scalar>& obs) {
  const Eigen::Index act_dim = actor.output_dim() / 2;
  return actor.forward(obs).topRows(act_dim).array().tanh().matrix();
}

template <typename Scalar>
Matrix<Scalar> critic_input(const Matrix<Scalar>& obs, const Matrix<Scalar>& actions) {
  if (obs.cols() != actions.cols()) throw ValidationError("observation/action batch sizes differ");
  Matrix<Scalar> x(obs.rows() + actions.rows(), obs.cols());
  x.topRows(obs.rows()) = obs;
  x.bottomRows(actions.rows()) = actions;
  return x;
}

/// y = r + gamma (1 - done) (min(Q1', Q2')(s', a') - alpha log pi(a'|s')).
template <typename Scalar>
Vector<Scalar> critic_target(const Mlp<Scalar>& q1_target, const Mlp<Scalar>& q2_target,
                             const Mlp<Scalar>& actor, const Batch<Scalar>& batch,
                             const Matrix<Scalar>& next_noise, Scalar alpha, double gamma,
                             double log_std_min, double log_std_max) {
  const auto next = policy_sample(actor, batch.next_obs, next_noise, log_std_min, log_std_max);
  const Matrix<Scalar> x = critic_input(batch.next_obs, next.action);
  const Vector<Scalar> q1 = q1_target.forward(x).row(0).transpose();
  const Vector<Scalar> q2 = q2_target.forward(x).row(0).transpose();
  const Vector<Scalar> soft = q1.cwiseMin(q2) - alpha * next.log_prob;
  return batch.rewards.array() +
         Scalar(gamma) * (Scalar(1) - batch.dones.array()) * soft.array();
}

/// 0.5 * (MSE(Q1, y) + MSE(Q2, y)); gradients are added into grad1, grad2.
template <typename Scalar>
Scalar critic_loss_grad(const Mlp<Scalar>& q1, const Mlp<Scalar>& q2, const Batch<Scalar>& batch,
                        const Vector<Scalar>& y, Vector<Scalar>& grad1, Vector<Scalar>& grad2) {
  const Matrix<Scalar> x = critic_input(batch.obs, batch.actions);
  const Scalar n = Scalar(batch.size());
  Scalar loss = 0;
  auto one = [&](const Mlp<Scalar>& q, Vector<Scalar>& grad) {
    typename Mlp<Scalar>::Cache cache;
    const Matrix<Scalar> out = q.forward(x, cache);
    const Matrix<Scalar> err = out - y.transpose();
    loss += Scalar(0.5) * err.squaredNorm() / n;
    q.backward(cache, err / n, &grad);
  };
  one(q1, grad1);
  one(q2, grad2);
  return loss;
}

template <typename Scalar>
struct ActorLoss {
  Scalar loss = 0;
  Scalar mean_log_prob = 0;
};

/// mean(alpha log pi(a|s) - min(Q1, Q2)(s, a)) with a reparameterized through
/// `sample`; the actor gradient is added into `grad`. Critics are read only.
template <typename Scalar>
ActorLoss<Scalar> actor_loss_grad(const Mlp<Scalar>& actor, const Mlp<Scalar>& q1,
                                  const Mlp<Scalar>& q2, const Matrix<Scalar>& obs,
                                  const PolicySample<Scalar>& sample, Scalar alpha,
                                  Vector<Scalar>& grad) {
  const Eigen::Index act_dim = sample.action.rows();
  const Eigen::Index n = obs.cols();
  const Matrix<Scalar> x = critic_input(obs, sample.action);
  typename Mlp<Scalar>::Cache c1, c2;
  const Matrix<Scalar> v1 = q1.forward(x, c1);
  const Matrix<Scalar> v2 = q2.forward(x, c2);

  // dQmin/da: route each sample through the critic that attains the minimum.
  const Matrix<Scalar> ones = Matrix<Scalar>::Ones(1, n);
  Matrix<Scalar> g1 = (v1.array() <= v2.array()).select(ones, Scalar(0));
  Matrix<Scalar> g2 = ones - g1;
  Matrix<Scalar> dx1, dx2;
  q1.backward(c1, g1, nullptr, &dx1);
  q2.backward(c2, g2, nullptr, &dx2);
  const Matrix<Scalar> dq_da = (dx1 + dx2).bottomRows(act_dim);

  ActorLoss<Scalar> out;
  const Matrix<Scalar> qmin = v1.cwiseMin(v2);
  out.mean_log_prob = sample.log_prob.mean();
  out.loss = alpha * out.mean_log_prob - qmin.mean();

  const auto a = sample.action.array();
  const Matrix<Scalar> g_u =
      (alpha * Scalar(2) * a - dq_da.array() * (Scalar(1) - a.square())).matrix();
  const auto sigma_xi = sample.log_std.array().exp() * sample.noise.array();
  Matrix<Scalar> g_log_std = (g_u.array() * sigma_xi - alpha).matrix();
  g_log_std = sample.clamped.select(Scalar(0), g_log_std);

  Matrix<Scalar> g_head(2 * act_dim, n);
  g_head.topRows(act_dim) = g_u / Scalar(n);
  g_head.bottomRows(act_dim) = g_log_std / Scalar(n);
  actor.backward(sample.cache, g_head, &grad);
  return out;
}

/// d/dlog_alpha of -mean(log_alpha * (log_pi + target_entropy)).
template <typename Scalar>
Scalar temperature_grad(const Vector<Scalar>& log_prob, double target_entropy) {
  return -(log_prob.array() + Scalar(target_entropy)).mean();
}

template <typename Scalar>
Scalar temperature_loss(Scalar log_alpha, const Vector<Scalar>& log_prob, double target_entropy) {
  return -log_alpha * (log_prob.array() + Scalar(target_entropy)).mean();
}

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double temperature_loss = 0.0;
  double alpha = 0.0;
};

/// Twin-critic SAC learner with automatic entropy tuning.
template <typename Scalar>
class SacAgent {
 public:
  SacAgent(int obs_dim, int act_dim, SacConfig cfg, std::uint64_t seed)
      : cfg_((cfg.validate(), std::move(cfg))), obs_dim_(obs_dim), act_dim_(act_dim), rng_(seed) {
    std::vector<int> a{obs_dim};
    a.insert(a.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    a.push_back(2 * act_dim);
    std::vector<int> q{obs_dim + act_dim};
    q.insert(q.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    q.push_back(1);
    actor_ = Mlp<Scalar>(a);
    q1_ = Mlp<Scalar>(q);
    q2_ = Mlp<Scalar>(q);
    actor_.initialize(rng_, Scalar(cfg_.last_layer_scale));
    q1_.initialize(rng_);
    q2_.initialize(rng_);
    q1_target_ = q1_;
    q2_target_ = q2_;
    log_alpha_ = Vector<Scalar>::Constant(1, Scalar(std::log(cfg_.initial_alpha)));
    actor_opt_ = Adam<Scalar>(actor_.parameter_count());
    q1_opt_ = Adam<Scalar>(q1_.parameter_count());
    q2_opt_ = Adam<Scalar>(q2_.parameter_count());
    alpha_opt_ = Adam<Scalar>(1);
  }

  const SacConfig& config() const { return cfg_; }
  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  Scalar alpha() const { return std::exp(log_alpha_[0]); }

  Mlp<Scalar>& actor() { return actor_; }
  Mlp<Scalar>& q1() { return q1_; }
  Mlp<Scalar>& q2() { return q2_; }
  Mlp<Scalar>& q1_target() { return q1_target_; }
  Mlp<Scalar>& q2_target() { return q2_target_; }
  Vector<Scalar>& log_alpha() { return log_alpha_; }
  const Mlp<Scalar>& actor() const { return actor_; }
  const Mlp<Scalar>& q1() const { return q1_; }
  const Mlp<Scalar>& q2() const { return q2_; }
  const Mlp<Scalar>& q1_target() const { return q1_target_; }
  const Mlp<Scalar>& q2_target() const { return q2_target_; }
  const Vector<Scalar>& log_alpha() const { return log_alpha_; }
  std::mt19937_64& rng() { return rng_; }

  Matrix<Scalar> draw_noise(Eigen::Index cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix<Scalar> xi(act_dim_, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < act_dim_; ++i) xi(i, j) = Scalar(normal(rng_));
    return xi;
  }

  /// Stochastic action for exploration (one observation, already normalized).
  Vector<Scalar> sample_action(const Vector<Scalar>& obs) {
    const Matrix<Scalar> o = obs;
    return policy_sample(actor_, o, draw_noise(1), cfg_.log_std_min, cfg_.log_std_max).action.col(0);
  }

  Vector<Scalar> deterministic_action(const Vector<Scalar>& obs) const {
    const Matrix<Scalar> o = obs;
    return policy_deterministic(actor_, o).col(0);
  }

  UpdateStats update(const Batch<Scalar>& batch) {
    if (batch.obs.rows() != obs_dim_ || batch.actions.rows() != act_dim_) {
      throw ValidationError("batch dimensions do not match the agent");
    }
    UpdateStats stats;
    const auto pi = policy_sample(actor_, batch.obs, draw_noise(batch.size()), cfg_.log_std_min,
                                  cfg_.log_std_max);
    const Scalar alpha_now = alpha();

    Vector<Scalar> g_alpha(1);
    g_alpha[0] = temperature_grad(pi.log_prob, cfg_.target_entropy);
    stats.temperature_loss =
        static_cast<double>(temperature_loss(log_alpha_[0], pi.log_prob, cfg_.target_entropy));
    alpha_opt_.step(log_alpha_, g_alpha, cfg_.lr);

    const Vector<Scalar> y =
        critic_target(q1_target_, q2_target_, actor_, batch, draw_noise(batch.size()), alpha_now,
                      cfg_.gamma, cfg_.log_std_min, cfg_.log_std_max);
    Vector<Scalar> gq1 = Vector<Scalar>::Zero(q1_.parameter_count());
    Vector<Scalar> gq2 = Vector<Scalar>::Zero(q2_.parameter_count());
    stats.critic_loss = static_cast<double>(critic_loss_grad(q1_, q2_, batch, y, gq1, gq2));
    q1_opt_.step(q1_.params(), gq1, cfg_.lr);
    q2_opt_.step(q2_.params(), gq2, cfg_.lr);

    Vector<Scalar> ga = Vector<Scalar>::Zero(actor_.parameter_count());
    stats.actor_loss =
        static_cast<double>(actor_loss_grad(actor_, q1_, q2_, batch.obs, pi, alpha_now, ga).loss);
    actor_opt_.step(actor_.params(), ga, cfg_.lr);

    soft_update(q1_target_.params(), q1_.params(), cfg_.tau);
    soft_update(q2_target_.params(), q2_.params(), cfg_.tau);
    stats.alpha = static_cast<double>(alpha());
    if (!std::isfinite(stats.critic_loss) || !std::isfinite(stats.actor_loss) ||
        !std::isfinite(stats.alpha)) {
      throw SimulationError("SAC update produced a non-finite loss");
    }
    return stats;
  }

 private:
  SacConfig cfg_;
  int obs_dim_;
  int act_dim_;
  std::mt19937_64 rng_;
  Mlp<Scalar> actor_, q1_, q2_, q1_target_, q2_target_;
  Vector<Scalar> log_alpha_;
  Adam<Scalar> actor_opt_, q1_opt_, q2_opt_, alpha_opt_;
};

}  // namespace rlpp::sac
