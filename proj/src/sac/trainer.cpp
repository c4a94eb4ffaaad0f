#include "rlpp/sac/trainer.hpp"

#include <cstdio>
#include <fstream>

#include <spdlog/spdlog.h>

namespace rlpp::sac {

const char* metrics_header() {
  return "step,episode,ep_reward,ep_len,lap_time,critic_loss,actor_loss,alpha";
}

std::string format_metrics(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%ld,%ld,%.17g,%ld,%.17g,%.17g,%.17g,%.17g", r.step, r.episode,
                r.ep_reward, r.ep_len, r.lap_time, r.critic_loss, r.actor_loss, r.alpha);
  return buf;
}

namespace {

template <typename Scalar>
TrainingResult run(env::RacingEnv& env, const SacConfig& cfg, const TrainerOptions& opts) {
  const int obs_dim = env.observation_dim();
  constexpr int act_dim = 2;
  SacAgent<Scalar> agent(obs_dim, act_dim, cfg, opts.seed);
  ReplayBuffer buffer(cfg.buffer_capacity, obs_dim, act_dim);
  RunningNormalizer norm(obs_dim);
  std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  const RunningNormalizer* batch_norm = cfg.normalize_observations ? &norm : nullptr;

  std::ofstream metrics_file;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    metrics_file.open(opts.out_dir / "metrics.csv");
    if (!metrics_file) throw std::runtime_error("cannot write metrics.csv in " + opts.out_dir.string());
    metrics_file << metrics_header() << '\n';
  }

  TrainingResult result;
  long step = 0;
  auto snapshot = [&] {
    PolicyCheckpoint c = make_checkpoint(agent, norm);
    c.seed = opts.seed;
    c.step = step;
    c.env_config = opts.env_config;
    c.config_digest = opts.config_digest;
    return c;
  };

  const auto& cur = env.config().curriculum;
  double v_prev = cur.v_warmstart;
  long episode = 0;
  double ep_reward = 0.0;
  long ep_len = 0;
  double lap_time = std::numeric_limits<double>::quiet_NaN();
  UpdateStats last;
  last.critic_loss = last.actor_loss = std::numeric_limits<double>::quiet_NaN();
  last.alpha = cfg.initial_alpha;

  try {
    VecX obs = env.reset(v_prev);
    if (cfg.normalize_observations) norm.update(obs);
    for (step = 1; step <= cfg.total_steps; ++step) {
      Vec2 action;
      if (step <= cfg.learning_starts) {
        action = Vec2(uniform(rng), uniform(rng));
      } else {
        const MatX col = obs;
        const Matrix<Scalar> x =
            batch_norm ? norm.normalize_columns<Scalar>(col) : col.cast<Scalar>();
        action = agent.sample_action(x.col(0)).template cast<double>();
      }
      const auto r = env.step(action);
      buffer.push(obs, action, r.reward.r_tot, r.observation, r.terminated);
      ep_reward += r.reward.r_tot;
      ++ep_len;
      if (r.info.lap_completed) lap_time = r.info.lap_time;
      if (cfg.normalize_observations) norm.update(r.observation);
      obs = r.observation;

      if (step > cfg.learning_starts && step % cfg.train_freq == 0) {
        for (int g = 0; g < cfg.gradient_steps; ++g) {
          const auto idx = buffer.sample_indices(cfg.batch_size, rng);
          last = agent.update(buffer.gather<Scalar>(idx, batch_norm));
        }
      }

      if (r.terminated || r.truncated) {
        MetricsRow row{step, episode, ep_reward, ep_len, lap_time,
                       last.critic_loss, last.actor_loss, last.alpha};
        result.metrics.push_back(row);
        if (metrics_file.is_open()) metrics_file << format_metrics(row) << std::endl;
        if (opts.on_episode) opts.on_episode(row);
        if (episode % 50 == 0) {
          spdlog::info("step {} episode {} reward {:.2f} len {} lap {:.3f} alpha {:.4f}", step,
                       episode, ep_reward, ep_len, lap_time, last.alpha);
        }
        if (cur.enabled) v_prev = env.episode_mean_vx();
        ++episode;
        ep_reward = 0.0;
        ep_len = 0;
        lap_time = std::numeric_limits<double>::quiet_NaN();
        obs = env.reset(v_prev);
        if (cfg.normalize_observations) norm.update(obs);
      }

      if (opts.checkpoint_every > 0 && step % opts.checkpoint_every == 0 && !opts.out_dir.empty()) {
        save_checkpoint(opts.out_dir / ("checkpoint_" + std::to_string(step) + ".json"), snapshot());
      }
    }
    step = cfg.total_steps;
  } catch (...) {
    if (!opts.out_dir.empty()) {
      try {
        save_checkpoint(opts.out_dir / "checkpoint_failure.json", snapshot());
        spdlog::error("training failed at step {}; checkpoint flushed", step);
      } catch (...) {
        spdlog::error("training failed at step {}; checkpoint flush failed too", step);
      }
    }
    throw;
  }

  result.checkpoint = snapshot();
  if (!opts.out_dir.empty()) save_checkpoint(opts.out_dir / "policy.json", result.checkpoint);
  return result;
}

}  // namespace

TrainingResult train(env::RacingEnv& env, const SacConfig& cfg, const TrainerOptions& opts) {
  cfg.validate();
  if (cfg.precision == "float32") return run<float>(env, cfg, opts);
  return run<double>(env, cfg, opts);
}

}  // namespace rlpp::sac
