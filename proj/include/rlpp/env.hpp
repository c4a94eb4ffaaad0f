#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "rlpp/control.hpp"
#include "rlpp/core.hpp"
#include "rlpp/dynamics.hpp"
#include "rlpp/track.hpp"

namespace rlpp::env {

struct ObservationConfig {
  int waypoints = 20;
  double spacing = 0.5;  // [m] along the raceline
  int dimension() const { return 5 + 6 * waypoints; }
  void validate() const;
};

enum class PenaltyGating {
  kMagnitude,  // x * [x > tau]
  kIndicator,  // [x > tau]
};

enum class SpeedMeasure { kMagnitude, kLongitudinal };

struct RewardConfig {
  double alpha_dev = 1.0;
  double tau_dev = 0.1;
  double alpha_heading = 0.25;
  double tau_psi = 0.0;
  double psi_max = kPi;
  double v_max = 8.0;
  double t_sim = 0.025;
  PenaltyGating gating = PenaltyGating::kMagnitude;
  SpeedMeasure speed = SpeedMeasure::kMagnitude;
  void validate() const;
};

struct RewardBreakdown {
  double r_adv = 0.0;
  double r_speed = 0.0;
  double r_dev = 0.0;
  double r_heading = 0.0;
  double r_coll = 0.0;
  double r_pos = 0.0;
  double r_tot = 0.0;
};

struct CurriculumConfig {
  bool enabled = true;
  double v_warmstart = 1.5;  // [m/s] mean before any episode has finished
  double v_std = 0.5;        // [m/s]
};

struct EnvConfig {
  ObservationConfig observation;
  RewardConfig reward;
  control::PPConfig pp{1.2, 0.75};
  control::ResidualConfig residual;
  dynamics::VehicleModel vehicle;
  dynamics::FrictionModel friction;
  bool randomize_friction = true;
  CurriculumConfig curriculum;
  double dt_ctrl = 0.025;
  double dt_phys = 0.005;
  int max_steps = 5000;
  double car_radius = 0.15;
  void validate() const;
};

using Observation = VecX;

/// d, Δψ, vx, vy, r followed by the forward waypoints expressed in the body
/// frame (reference block, left block, right block).
Observation build_observation(const dynamics::VehicleState& state, const track::Circuit& circuit,
                              const ObservationConfig& cfg);

/// Arc advancement with wraparound: jumps larger than half a lap are wraps.
double unwrap_delta_s(double prev_s, double new_s, double total_length);

double gate(double x, double tau, PenaltyGating mode);

/// Reward from already-projected quantities.
RewardBreakdown reward_terms(double delta_s, double speed, double d, double delta_psi,
                             double track_width, bool collision, const RewardConfig& cfg);

RewardBreakdown compute_reward(double prev_s, double new_s, const dynamics::VehicleState& state,
                               bool collision, const track::Circuit& circuit,
                               const RewardConfig& cfg);

/// Corridor test for a disc-shaped car at the CoG.
bool in_collision(const dynamics::VehicleState& state, const track::Circuit& circuit,
                  double car_radius);

/// Mean longitudinal speed of a finished episode.
double update_curriculum(std::span<const double> vx_trace);

/// Raw Gaussian draw for the initial speed (before clamping).
double draw_initial_speed(double v_mean, double v_std, std::mt19937_64& rng);

struct TelemetryRow {
  long step = 0;
  double t = 0.0;
  double s = 0.0;
  double d = 0.0;
  double delta_psi = 0.0;
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double r = 0.0;
  double delta_cmd = 0.0;
  double v_cmd = 0.0;
  RewardBreakdown reward;
};

struct StepInfo {
  bool collision = false;
  bool sim_error = false;
  bool lap_completed = false;
  double lap_time = 0.0;     // valid when lap_completed
  double lap_cross_time = 0.0;
  int laps = 0;
  double progress = 0.0;     // unwrapped raceline advancement since reset
  double controller_seconds = 0.0;  // wall time spent in Pure Pursuit + composition
  TelemetryRow telemetry;
};

struct StepResult {
  Observation observation;
  RewardBreakdown reward;
  bool terminated = false;
  bool truncated = false;
  StepInfo info;
};

/// RLPP training/evaluation environment. One instance per worker; the
/// circuit is shared read-only.
class RacingEnv {
 public:
  RacingEnv(std::shared_ptr<const track::Circuit> circuit, EnvConfig cfg, std::uint64_t seed);

  /// Random start: uniform arc position on the raceline, aligned heading,
  /// vx ~ N(v_mean, v_std) clamped to [0, v_max], friction re-drawn.
  Observation reset(double v_mean);
  /// Deterministic start used by evaluation.
  Observation reset_at(double s, double vx, double mu);

  StepResult step(const Vec2& action);

  const EnvConfig& config() const { return cfg_; }
  const track::Circuit& circuit() const { return *circuit_; }
  const dynamics::Simulator& simulator() const { return sim_; }
  int observation_dim() const { return cfg_.observation.dimension(); }
  long steps() const { return steps_; }
  double episode_mean_vx() const;
  std::mt19937_64& rng() { return rng_; }

 private:
  Observation start(double s, double vx, double mu);

  std::shared_ptr<const track::Circuit> circuit_;
  EnvConfig cfg_;
  dynamics::Simulator sim_;
  std::mt19937_64 rng_;
  Observation last_obs_;
  double s_ = 0.0;
  double progress_ = 0.0;
  long steps_ = 0;
  int laps_ = 0;
  double last_cross_time_ = 0.0;
  double vx_sum_ = 0.0;
};

/// Streams telemetry rows as CSV.
class TelemetryWriter {
 public:
  explicit TelemetryWriter(const std::filesystem::path& path);
  void write(const TelemetryRow& row);

  static const char* header();
  static std::string format(const TelemetryRow& row);

 private:
  std::ofstream out_;
};

}  // namespace rlpp::env
