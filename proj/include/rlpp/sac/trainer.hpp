#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rlpp/env.hpp"
#include "rlpp/sac/checkpoint.hpp"

namespace rlpp::sac {

struct MetricsRow {
  long step = 0;
  long episode = 0;
  double ep_reward = 0.0;
  long ep_len = 0;
  double lap_time = std::numeric_limits<double>::quiet_NaN();  // last lap of the episode
  double critic_loss = std::numeric_limits<double>::quiet_NaN();
  double actor_loss = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
};

const char* metrics_header();
std::string format_metrics(const MetricsRow& row);

struct TrainerOptions {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  // empty: keep everything in memory
  long checkpoint_every = 0;      // steps; 0 disables periodic checkpoints
  nlohmann::json env_config = nlohmann::json::object();
  std::string config_digest;
  // Called after every finished episode.
  std::function<void(const MetricsRow&)> on_episode;
};

struct TrainingResult {
  PolicyCheckpoint checkpoint;
  std::vector<MetricsRow> metrics;
};

/// Runs SAC on `env` for cfg.total_steps environment steps. Random actions
/// are used until learning_starts; the curriculum mean is refreshed after
/// each episode. On failure a checkpoint is flushed to out_dir before the
/// exception propagates.
TrainingResult train(env::RacingEnv& env, const SacConfig& cfg, const TrainerOptions& opts);

}  // namespace rlpp::sac
