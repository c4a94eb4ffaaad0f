#include <cmath>
#include <cstring>
#include <functional>
#include <random>

#include "doctest.h"
#include "rlpp/sac/replay_buffer.hpp"
#include "rlpp/sac/sac.hpp"

using namespace rlpp;
using namespace rlpp::sac;

using Mat = Matrix<double>;
using Vec = Vector<double>;

namespace {

Mat random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

Mlp<double> make_net(std::vector<int> sizes, std::mt19937_64& rng, double last = 1.0) {
  Mlp<double> net(std::move(sizes));
  net.initialize(rng, last);
  return net;
}

Batch<double> toy_batch(int obs_dim, int n, std::mt19937_64& rng) {
  Batch<double> b;
  b.obs = random_matrix(obs_dim, n, rng);
  b.next_obs = random_matrix(obs_dim, n, rng);
  b.actions = random_matrix(2, n, rng).array().tanh().matrix();
  b.rewards = random_matrix(n, 1, rng);
  b.dones = Vec::Zero(n);
  b.dones[1] = 1.0;
  return b;
}

// Central differences of `loss` with respect to `params`.
Vec finite_difference(Vec& params, const std::function<double()>& loss, double h = 1e-6) {
  Vec g(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss();
    params[i] = keep - h;
    const double down = loss();
    params[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double max_relative_error(const Vec& analytic, const Vec& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    const double diff = std::abs(analytic[i] - numeric[i]);
    if (scale > 1e-6) {
      worst = std::max(worst, diff / scale);
    } else {
      CHECK(diff < 1e-8);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("MLP layout and forward pass") {
  Mlp<double> net({3, 4, 2});
  CHECK(net.parameter_count() == 4 * 3 + 4 + 2 * 4 + 2);
  std::mt19937_64 rng(1);
  net.initialize(rng);
  for (int l = 0; l < 2; ++l) {
    const double bound = 1.0 / std::sqrt(l == 0 ? 3.0 : 4.0);
    CHECK(net.weight(l).cwiseAbs().maxCoeff() <= bound);
    CHECK(net.bias(l).cwiseAbs().maxCoeff() <= bound);
  }
  const Mat x = random_matrix(3, 5, rng);
  Mat hidden = net.weight(0) * x;
  hidden.colwise() += net.bias(0);
  hidden = hidden.cwiseMax(0.0);
  Mat expect = net.weight(1) * hidden;
  expect.colwise() += net.bias(1);
  CHECK((net.forward(x) - expect).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS_AS(net.forward(random_matrix(2, 1, rng)), ValidationError);
}

TEST_CASE("policy density at the origin") {
  Mlp<double> actor({4, 8, 4});  // all parameters zero: mean 0, log_std 0
  const Mat obs = Mat::Ones(4, 1);
  const auto s = policy_sample<double>(actor, obs, Mat::Zero(2, 1), -20, 2);
  CHECK(s.action.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.log_prob[0] == doctest::Approx(-std::log(2 * kPi)).epsilon(1e-14));
  CHECK(s.log_prob[0] == doctest::Approx(-1.8379).epsilon(1e-4));
}

TEST_CASE("stable tanh correction") {
  for (double u : {-30.0, -3.0, -0.2, 0.0, 0.7, 5.0}) {
    const double direct = std::log(1.0 - std::tanh(u) * std::tanh(u));
    if (std::abs(u) < 6) {
      CHECK(log_one_minus_tanh_sq(u) == doctest::Approx(direct).epsilon(1e-10));
    }
    CHECK(std::isfinite(log_one_minus_tanh_sq(u)));
  }
  CHECK(log_one_minus_tanh_sq(-30.0) == doctest::Approx(2 * (std::log(2.0) - 30.0)).epsilon(1e-12));
}

TEST_CASE("deterministic actions are pure") {
  std::mt19937_64 rng(2);
  const auto actor = make_net({6, 16, 16, 4}, rng);
  const Mat obs = random_matrix(6, 3, rng);
  const Mat a = policy_deterministic(actor, obs);
  const Mat b = policy_deterministic(actor, obs);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
  CHECK(a.cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("pre-tanh samples are centred on the mean") {
  Mlp<double> actor({1, 4});
  actor.bias(0) << 0.3, -0.2, std::log(0.5), std::log(0.8);
  const int n = 100000;
  std::mt19937_64 rng(3);
  const Mat obs = Mat::Zero(1, n);
  const auto s = policy_sample(actor, obs, random_matrix(2, n, rng), -20, 2);
  const Eigen::Vector2d mean = s.pre_tanh.rowwise().mean();
  CHECK(std::abs(mean[0] - 0.3) < 3 * 0.5 / std::sqrt(n));
  CHECK(std::abs(mean[1] + 0.2) < 3 * 0.8 / std::sqrt(n));
  CHECK(s.action.cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("squashed density integrates to one over the action interval") {
  Mlp<double> actor({1, 2});  // one action dimension
  const double mu = 0.3, sigma = 0.5;
  actor.bias(0) << mu, std::log(sigma);
  const int n = 20000;
  const double lo = -1.0 + 1e-9, hi = 1.0 - 1e-9;
  Mat noise(1, n + 1);
  for (int k = 0; k <= n; ++k) {
    const double a = lo + (hi - lo) * k / n;
    noise(0, k) = (std::atanh(a) - mu) / sigma;
  }
  const auto s = policy_sample<double>(actor, Mat::Zero(1, n + 1), noise, -20, 2);
  double integral = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double w = (k == 0 || k == n) ? 0.5 : 1.0;
    integral += w * std::exp(s.log_prob[k]);
  }
  integral *= (hi - lo) / n;
  CHECK(std::abs(integral - 1.0) < 0.01);
}

TEST_CASE("critic target") {
  std::mt19937_64 rng(4);
  const auto actor = make_net({4, 8, 4}, rng);
  const auto q1 = make_net({6, 8, 1}, rng);
  const auto q2 = make_net({6, 8, 1}, rng);
  auto b = toy_batch(4, 1, rng);
  b.dones[0] = 0.0;
  const Mat xi = random_matrix(2, 1, rng);

  const auto next = policy_sample(actor, b.next_obs, xi, -20, 2);
  const Mat x = critic_input(b.next_obs, next.action);
  const double v1 = q1.forward(x)(0, 0), v2 = q2.forward(x)(0, 0);
  const double alpha = 0.7, gamma = 0.9;
  const double expect = b.rewards[0] + gamma * (std::min(v1, v2) - alpha * next.log_prob[0]);
  CHECK(critic_target(q1, q2, actor, b, xi, alpha, gamma, -20, 2)[0] ==
        doctest::Approx(expect).epsilon(1e-14));
  CHECK(critic_target(q1, q2, actor, b, xi, alpha, 0.0, -20, 2)[0] == b.rewards[0]);
  b.dones[0] = 1.0;
  CHECK(critic_target(q1, q2, actor, b, xi, alpha, gamma, -20, 2)[0] == b.rewards[0]);
}

TEST_CASE("critic loss vanishes at its fixed point") {
  std::mt19937_64 rng(5);
  const auto q = make_net({6, 8, 1}, rng);
  auto b = toy_batch(4, 8, rng);
  for (int k = 1; k < 8; ++k) {
    b.obs.col(k) = b.obs.col(0);
    b.actions.col(k) = b.actions.col(0);
  }
  const double value = q.forward(critic_input(b.obs, b.actions))(0, 0);
  const Vec y = Vec::Constant(8, value);
  Vec g1 = Vec::Zero(q.parameter_count()), g2 = g1;
  CHECK(critic_loss_grad(q, q, b, y, g1, g2) == doctest::Approx(0.0));
  CHECK(g1.cwiseAbs().maxCoeff() < 1e-15);
  CHECK(g2.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("critic gradients match finite differences") {
  std::mt19937_64 rng(6);
  auto q1 = make_net({6, 16, 16, 1}, rng);
  auto q2 = make_net({6, 16, 16, 1}, rng);
  const auto b = toy_batch(4, 8, rng);
  const Vec y = random_matrix(8, 1, rng);
  Vec g1 = Vec::Zero(q1.parameter_count()), g2 = Vec::Zero(q2.parameter_count());
  critic_loss_grad(q1, q2, b, y, g1, g2);
  auto loss = [&] {
    Vec s1 = Vec::Zero(q1.parameter_count()), s2 = Vec::Zero(q2.parameter_count());
    return critic_loss_grad(q1, q2, b, y, s1, s2);
  };
  const double e1 = max_relative_error(g1, finite_difference(q1.params(), loss));
  const double e2 = max_relative_error(g2, finite_difference(q2.params(), loss));
  MESSAGE("critic FD relative error " << e1 << ", " << e2);
  CHECK(e1 < 1e-4);
  CHECK(e2 < 1e-4);
}

TEST_CASE("actor gradients match finite differences") {
  std::mt19937_64 rng(7);
  auto actor = make_net({4, 16, 16, 4}, rng);
  const auto q1 = make_net({6, 16, 16, 1}, rng);
  const auto q2 = make_net({6, 16, 16, 1}, rng);
  const Mat obs = random_matrix(4, 8, rng);
  const Mat xi = random_matrix(2, 8, rng);
  const double alpha = 0.3;

  Vec g = Vec::Zero(actor.parameter_count());
  actor_loss_grad(actor, q1, q2, obs, policy_sample(actor, obs, xi, -20, 2), alpha, g);
  auto loss = [&] {
    Vec scratch = Vec::Zero(actor.parameter_count());
    return actor_loss_grad(actor, q1, q2, obs, policy_sample(actor, obs, xi, -20, 2), alpha,
                           scratch)
        .loss;
  };
  const double e = max_relative_error(g, finite_difference(actor.params(), loss));
  MESSAGE("actor FD relative error " << e);
  CHECK(e < 1e-4);
}

TEST_CASE("clamped log-std carries no gradient") {
  std::mt19937_64 rng(8);
  Mlp<double> actor({2, 4});
  actor.bias(0) << 0.1, -0.1, 5.0, -30.0;  // both log_std outside [-20, 2]
  const auto q1 = make_net({4, 8, 1}, rng);
  const auto q2 = make_net({4, 8, 1}, rng);
  const Mat obs = random_matrix(2, 4, rng);
  const Mat xi = random_matrix(2, 4, rng);
  Vec g = Vec::Zero(actor.parameter_count());
  actor_loss_grad(actor, q1, q2, obs, policy_sample(actor, obs, xi, -20, 2), 0.5, g);
  // Rows 2 and 3 of the single layer produce log_std.
  CHECK(actor.weight(0).rows() == 4);
  Vec gw = g.head(8);
  Eigen::Map<Mat> gwm(gw.data(), 4, 2);
  CHECK(gwm.bottomRows(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.tail(4).tail(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(gwm.topRows(2).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("temperature gradient") {
  std::mt19937_64 rng(9);
  const Vec logp = random_matrix(16, 1, rng);
  double la = 0.2;
  const double h = 1e-6;
  const double fd = (temperature_loss(la + h, logp, -2.0) - temperature_loss(la - h, logp, -2.0)) / (2 * h);
  CHECK(temperature_grad(logp, -2.0) == doctest::Approx(fd).epsilon(1e-6));

  // Mean log-prob above -target_entropy (= 2): alpha grows.
  const Vec high = Vec::Constant(16, 3.0);
  Vec log_alpha = Vec::Zero(1);
  Adam<double> opt(1);
  Vec g(1);
  g[0] = temperature_grad(high, -2.0);
  opt.step(log_alpha, g, 3e-4);
  CHECK(log_alpha[0] > 0.0);
  const Vec low = Vec::Constant(16, 1.0);
  g[0] = temperature_grad(low, -2.0);
  CHECK(g[0] > 0.0);
}

TEST_CASE("clipped double-Q is below both critics") {
  std::mt19937_64 rng(10);
  const auto q1 = make_net({6, 8, 1}, rng);
  const auto q2 = make_net({6, 8, 1}, rng);
  const Mat x = random_matrix(6, 64, rng);
  const Mat a = q1.forward(x), b = q2.forward(x);
  const Mat m = a.cwiseMin(b);
  CHECK((m.array() <= a.array()).all());
  CHECK((m.array() <= b.array()).all());
}

TEST_CASE("soft update") {
  Vec target = Vec::Zero(3), online = Vec::Constant(3, 2.0);
  Vec t = target;
  soft_update(t, online, 1.0);
  CHECK(t == online);
  t = target;
  soft_update(t, online, 0.0);
  CHECK(t == target);
  soft_update(t, online, 0.5);
  CHECK(t == Vec::Constant(3, 1.0));
  Vec wrong = Vec::Zero(2);
  CHECK_THROWS_AS(soft_update(wrong, online, 0.5), ValidationError);

  std::mt19937_64 rng(11);
  Vec tp = random_matrix(50, 1, rng);
  const Vec on = random_matrix(50, 1, rng);
  const double d0 = (tp - on).norm();
  for (int k = 1; k <= 200; ++k) {
    soft_update(tp, on, 0.005);
    CHECK((tp - on).norm() <= std::pow(0.995, k) * d0 * (1 + 1e-12));
  }
}

TEST_CASE("Adam closed forms") {
  Adam<double> opt(1);
  Vec w = Vec::Zero(1), g = Vec::Ones(1);
  opt.step(w, g, 1e-3);
  CHECK(w[0] == doctest::Approx(-1e-3 / (1 + 1e-8)).epsilon(1e-12));

  // Two-step recurrence with the same gradient.
  const double b1 = 0.9, b2 = 0.999, lr = 1e-3, eps = 1e-8, gg = 0.5;
  Adam<double> two(1);
  Vec p = Vec::Constant(1, 1.0), gv = Vec::Constant(1, gg);
  double m = 0, v = 0, ref = 1.0;
  for (int t = 1; t <= 2; ++t) {
    two.step(p, gv, lr);
    m = b1 * m + (1 - b1) * gg;
    v = b2 * v + (1 - b2) * gg * gg;
    ref -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    CHECK(p[0] == doctest::Approx(ref).epsilon(1e-14));
  }

  // Zero gradient: parameters stay, moments decay.
  const Vec before = p;
  const double m_before = two.m[0], v_before = two.v[0];
  const double shift = lr * (b1 * m_before / (1 - std::pow(b1, 3))) /
                       (std::sqrt(b2 * v_before / (1 - std::pow(b2, 3))) + eps);
  two.step(p, Vec::Zero(1), lr);
  CHECK(two.m[0] == doctest::Approx(b1 * m_before));
  CHECK(two.v[0] == doctest::Approx(b2 * v_before));
  CHECK(p[0] == doctest::Approx(before[0] - shift));

  Adam<double> fresh(2);
  Vec z = Vec::Constant(2, 0.25);
  fresh.step(z, Vec::Zero(2), 1e-3);
  CHECK(z == Vec::Constant(2, 0.25));
  CHECK_THROWS_AS(fresh.step(z, Vec::Zero(3), 1e-3), ValidationError);
  Vec bad = Vec::Zero(2);
  bad[0] = std::nan("");
  CHECK_THROWS_AS(fresh.step(z, bad, 1e-3), SimulationError);
}

TEST_CASE("replay buffer FIFO and sampling") {
  ReplayBuffer buf(2, 1, 1);
  std::mt19937_64 rng(12);
  CHECK_THROWS_AS(buf.sample_indices(1, rng), ValidationError);
  for (int i = 0; i < 3; ++i) {
    buf.push(VecX::Constant(1, i), VecX::Zero(1), i, VecX::Constant(1, i + 1), false);
  }
  CHECK(buf.size() == 2);
  CHECK(buf.reward_at(buf.slot(0)) == 1.0);
  CHECK(buf.reward_at(buf.slot(1)) == 2.0);

  ReplayBuffer ten(10, 1, 1);
  for (int i = 0; i < 10; ++i) ten.push(VecX::Zero(1), VecX::Zero(1), i, VecX::Zero(1), false);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (long i : ten.sample_indices(n, rng)) ++counts[i];
  double chi2 = 0.0;
  for (int c : counts) {
    CHECK(std::abs(c / double(n) - 0.1) < 0.005);
    chi2 += (c - n / 10.0) * (c - n / 10.0) / (n / 10.0);
  }
  CHECK(chi2 < 27.88);  // chi-square, 9 dof, p = 0.001
}

TEST_CASE("normalizer statistics") {
  RunningNormalizer norm(2);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> a(3.0, 2.0), b(-1.0, 0.5);
  for (int i = 0; i < 20000; ++i) norm.update(Eigen::Vector2d(a(rng), b(rng)));
  CHECK(norm.mean()[0] == doctest::Approx(3.0).epsilon(0.02));
  CHECK(norm.mean()[1] == doctest::Approx(-1.0).epsilon(0.02));
  CHECK(std::sqrt(norm.var()[0]) == doctest::Approx(2.0).epsilon(0.02));
  CHECK(std::sqrt(norm.var()[1]) == doctest::Approx(0.5).epsilon(0.02));
  const VecX z = norm.normalize(Eigen::Vector2d(1e6, -1e6));
  CHECK(z[0] == 10.0);
  CHECK(z[1] == -10.0);
}

TEST_CASE("agent update is finite and seed-deterministic") {
  SacConfig cfg;
  cfg.hidden = {32, 32};
  cfg.batch_size = 16;
  auto run = [&] {
    SacAgent<double> agent(4, 2, cfg, 21);
    std::mt19937_64 rng(22);
    UpdateStats s;
    for (int k = 0; k < 20; ++k) s = agent.update(toy_batch(4, 16, rng));
    return std::make_pair(s, agent.actor().params());
  };
  const auto [s1, p1] = run();
  const auto [s2, p2] = run();
  CHECK(std::isfinite(s1.critic_loss));
  CHECK(s1.alpha > 0.0);
  CHECK(s1.critic_loss == s2.critic_loss);
  CHECK(std::memcmp(p1.data(), p2.data(), sizeof(double) * p1.size()) == 0);
}

TEST_CASE("single precision agent runs") {
  SacConfig cfg;
  cfg.hidden = {32, 32};
  cfg.batch_size = 16;
  cfg.precision = "float32";
  SacAgent<float> agent(4, 2, cfg, 1);
  std::mt19937_64 rng(2);
  const auto b = toy_batch(4, 16, rng);
  Batch<float> fb{b.obs.cast<float>(), b.actions.cast<float>(), b.rewards.cast<float>(),
                  b.next_obs.cast<float>(), b.dones.cast<float>()};
  const auto s = agent.update(fb);
  CHECK(std::isfinite(s.actor_loss));
}
