#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "rlpp/core.hpp"
#include "rlpp/sac/replay_buffer.hpp"
#include "rlpp/sac/sac.hpp"

namespace rlpp::sac {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  enum class Kind { Io, Checksum, Version, Dimension };
  CheckpointError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
  Kind kind;
};

/// Everything needed to rebuild the trained policy. Parameters are stored as
/// doubles; single-precision runs convert exactly in both directions.
struct PolicyCheckpoint {
  int version = kCheckpointVersion;
  int obs_dim = 0;
  int act_dim = 2;
  SacConfig sac;
  nlohmann::json env_config = nlohmann::json::object();
  std::string config_digest;
  std::uint64_t seed = 0;
  long step = 0;
  bool normalize = true;
  VecX norm_mean;
  VecX norm_var;
  double norm_count = 0.0;
  double norm_epsilon = 1e-8;
  double norm_clip = 10.0;
  VecX actor;
  VecX q1;
  VecX q2;
  VecX q1_target;
  VecX q2_target;
  double log_alpha = 0.0;
};

template <typename Scalar>
PolicyCheckpoint make_checkpoint(const SacAgent<Scalar>& agent, const RunningNormalizer& norm) {
  PolicyCheckpoint c;
  c.obs_dim = agent.obs_dim();
  c.act_dim = agent.act_dim();
  c.sac = agent.config();
  c.normalize = agent.config().normalize_observations;
  c.norm_mean = norm.mean();
  c.norm_var = norm.var();
  c.norm_count = norm.count();
  c.norm_epsilon = norm.epsilon();
  c.norm_clip = norm.clip();
  c.actor = agent.actor().params().template cast<double>();
  c.q1 = agent.q1().params().template cast<double>();
  c.q2 = agent.q2().params().template cast<double>();
  c.q1_target = agent.q1_target().params().template cast<double>();
  c.q2_target = agent.q2_target().params().template cast<double>();
  c.log_alpha = static_cast<double>(agent.log_alpha()[0]);
  return c;
}

nlohmann::json sac_config_to_json(const SacConfig& cfg);
SacConfig sac_config_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const PolicyCheckpoint& c);
void save_checkpoint(const std::filesystem::path& path, const PolicyCheckpoint& c);
/// Verifies the checksum, version and (when given) the observation dimension.
PolicyCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 std::optional<int> expected_obs_dim = std::nullopt);

/// Deterministic policy rebuilt from a checkpoint, in the precision it was
/// trained with.
class DeterministicPolicy {
 public:
  explicit DeterministicPolicy(const PolicyCheckpoint& c);
  Vec2 act(const VecX& raw_obs) const;
  int obs_dim() const { return obs_dim_; }

 private:
  int obs_dim_;
  bool use_float_;
  bool normalize_;
  RunningNormalizer norm_;
  Mlp<double> actor_d_;
  Mlp<float> actor_f_;
};

}  // namespace rlpp::sac
