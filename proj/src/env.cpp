#include "rlpp/env.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

namespace rlpp::env {

using dynamics::kPhi;
using dynamics::kVx;
using dynamics::kVy;
using dynamics::kX;
using dynamics::kY;
using dynamics::kYawRate;

void ObservationConfig::validate() const {
  if (waypoints < 1) throw ValidationError("observation waypoints must be >= 1");
  if (!(spacing > 0.0)) throw ValidationError("observation spacing must be positive");
}

void RewardConfig::validate() const {
  if (alpha_dev < 0 || tau_dev < 0 || alpha_heading < 0 || tau_psi < 0) {
    throw ValidationError("reward gains and thresholds must be non-negative");
  }
  if (!(psi_max > 0) || !(v_max > 0) || !(t_sim > 0)) {
    throw ValidationError("psi_max, v_max and t_sim must be positive");
  }
}

void EnvConfig::validate() const {
  observation.validate();
  reward.validate();
  pp.validate();
  residual.validate();
  vehicle.params.validate();
  vehicle.tires.validate();
  vehicle.limits.validate();
  friction.validate();
  if (!(dt_phys > 0) || !(dt_ctrl > 0)) throw ValidationError("time steps must be positive");
  if (max_steps < 1) throw ValidationError("max_steps must be >= 1");
  if (car_radius < 0) throw ValidationError("car_radius must be non-negative");
  if (curriculum.v_std < 0) throw ValidationError("curriculum v_std must be non-negative");
}

Observation build_observation(const dynamics::VehicleState& state, const track::Circuit& circuit,
                              const ObservationConfig& cfg) {
  const auto pose = circuit.raceline().cartesian_to_frenet(state[kX], state[kY]);
  const double psi_ref = circuit.raceline().query(pose.s).psi_ref;

  Observation obs(cfg.dimension());
  obs[0] = pose.d;
  obs[1] = wrap_angle(state[kPhi] - psi_ref);
  obs[2] = state[kVx];
  obs[3] = state[kVy];
  obs[4] = state[kYawRate];

  const Eigen::Matrix2Xd world = circuit.sample_forward_waypoints(pose.s, cfg.spacing, cfg.waypoints);
  Eigen::Matrix2d to_body;
  const double c = std::cos(state[kPhi]);
  const double s = std::sin(state[kPhi]);
  to_body << c, s, -s, c;
  const Eigen::Matrix2Xd body = to_body * (world.colwise() - Vec2(state[kX], state[kY]));
  obs.tail(6 * cfg.waypoints) = Eigen::Map<const VecX>(body.data(), body.size());
  return obs;
}

double unwrap_delta_s(double prev_s, double new_s, double total_length) {
  double ds = new_s - prev_s;
  if (ds > 0.5 * total_length) ds -= total_length;
  if (ds < -0.5 * total_length) ds += total_length;
  return ds;
}

double gate(double x, double tau, PenaltyGating mode) {
  if (!(x > tau)) return 0.0;
  return mode == PenaltyGating::kMagnitude ? x : 1.0;
}

RewardBreakdown reward_terms(double delta_s, double speed, double d, double delta_psi,
                             double track_width, bool collision, const RewardConfig& cfg) {
  RewardBreakdown r;
  r.r_adv = delta_s / (cfg.v_max * cfg.t_sim);
  r.r_speed = speed / cfg.v_max;
  r.r_dev = -cfg.alpha_dev * gate(std::abs(d), cfg.tau_dev, cfg.gating) / track_width;
  r.r_heading = -cfg.alpha_heading * gate(std::abs(delta_psi), cfg.tau_psi, cfg.gating) / cfg.psi_max;
  r.r_coll = collision ? -1.0 : 0.0;
  r.r_pos = r.r_adv + r.r_speed;
  r.r_tot = r.r_pos + r.r_pos * (r.r_dev + r.r_heading) + r.r_coll;
  return r;
}

namespace {

double speed_of(const dynamics::VehicleState& state, SpeedMeasure m) {
  return m == SpeedMeasure::kMagnitude ? std::hypot(state[kVx], state[kVy]) : state[kVx];
}

}  // namespace

RewardBreakdown compute_reward(double prev_s, double new_s, const dynamics::VehicleState& state,
                               bool collision, const track::Circuit& circuit,
                               const RewardConfig& cfg) {
  const auto pose = circuit.raceline().cartesian_to_frenet(state[kX], state[kY]);
  const double delta_psi = wrap_angle(state[kPhi] - circuit.raceline().query(pose.s).psi_ref);
  const double ds = unwrap_delta_s(prev_s, new_s, circuit.length());
  return reward_terms(ds, speed_of(state, cfg.speed), pose.d, delta_psi,
                      circuit.query(new_s).width(), collision, cfg);
}

bool in_collision(const dynamics::VehicleState& state, const track::Circuit& circuit,
                  double car_radius) {
  const auto& track = circuit.track();
  const auto pose = track.cartesian_to_frenet(state[kX], state[kY]);
  const auto w = track.query(pose.s);
  return pose.d + car_radius > w.w_left || -pose.d + car_radius > w.w_right;
}

double update_curriculum(std::span<const double> vx_trace) {
  if (vx_trace.empty()) throw ValidationError("cannot update curriculum from an empty episode");
  double sum = 0.0;
  for (double v : vx_trace) sum += v;
  return sum / static_cast<double>(vx_trace.size());
}

double draw_initial_speed(double v_mean, double v_std, std::mt19937_64& rng) {
  if (v_std <= 0.0) return v_mean;
  std::normal_distribution<double> dist(v_mean, v_std);
  return dist(rng);
}

// ---------------------------------------------------------------------------

RacingEnv::RacingEnv(std::shared_ptr<const track::Circuit> circuit, EnvConfig cfg,
                     std::uint64_t seed)
    : circuit_(std::move(circuit)),
      cfg_((cfg.validate(), std::move(cfg))),
      sim_(cfg_.vehicle, cfg_.dt_ctrl, cfg_.dt_phys),
      rng_(seed) {}

Observation RacingEnv::reset(double v_mean) {
  std::uniform_real_distribution<double> uniform_s(0.0, circuit_->length());
  const double s = uniform_s(rng_);
  const double mean = cfg_.curriculum.enabled ? v_mean : cfg_.curriculum.v_warmstart;
  const double vx = clamp(draw_initial_speed(mean, cfg_.curriculum.v_std, rng_), 0.0,
                          cfg_.vehicle.limits.v_max);
  const double mu = cfg_.randomize_friction ? dynamics::randomize_friction(cfg_.friction, rng_)
                                            : cfg_.friction.mu_nominal;
  return start(s, vx, mu);
}

Observation RacingEnv::reset_at(double s, double vx, double mu) { return start(s, vx, mu); }

Observation RacingEnv::start(double s, double vx, double mu) {
  const auto pose = circuit_->raceline().frenet_to_cartesian({s, 0.0});
  dynamics::VehicleState x = dynamics::VehicleState::Zero();
  x[kX] = pose.x;
  x[kY] = pose.y;
  x[kPhi] = pose.psi;
  x[kVx] = vx;
  sim_.reset(x, mu, 0.0);
  s_ = circuit_->raceline().path().wrap_s(s);
  progress_ = 0.0;
  steps_ = 0;
  laps_ = 0;
  last_cross_time_ = 0.0;
  vx_sum_ = 0.0;
  last_obs_ = build_observation(x, *circuit_, cfg_.observation);
  return last_obs_;
}

double RacingEnv::episode_mean_vx() const {
  return steps_ > 0 ? vx_sum_ / static_cast<double>(steps_) : sim_.state()[kVx];
}

StepResult RacingEnv::step(const Vec2& action) {
  StepResult out;
  const auto t0 = std::chrono::steady_clock::now();
  const auto& params = cfg_.vehicle.params;
  const auto u_pp = control::pp_command(sim_.state(), *circuit_, cfg_.pp, params);
  const Vec2 u_rl = control::residual_scale(action, cfg_.residual);
  const auto u = control::compose_command(u_pp, u_rl, cfg_.vehicle.limits);
  out.info.controller_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const double prev_s = s_;
  const double t_prev = static_cast<double>(steps_) * cfg_.dt_ctrl;
  ++steps_;
  const double t_now = static_cast<double>(steps_) * cfg_.dt_ctrl;

  try {
    sim_.step(u);
  } catch (const SimulationError&) {
    out.observation = last_obs_;
    out.reward.r_coll = -1.0;
    out.reward.r_tot = -1.0;
    out.terminated = true;
    out.info.sim_error = true;
    out.info.laps = laps_;
    out.info.progress = progress_;
    return out;
  }
  const auto& x = sim_.state();
  vx_sum_ += x[kVx];

  const auto pose = circuit_->raceline().cartesian_to_frenet(x[kX], x[kY]);
  const double delta_psi = wrap_angle(x[kPhi] - circuit_->raceline().query(pose.s).psi_ref);
  const bool collision = in_collision(x, *circuit_, cfg_.car_radius);
  const double ds = unwrap_delta_s(prev_s, pose.s, circuit_->length());
  out.reward = reward_terms(ds, speed_of(x, cfg_.reward.speed), pose.d, delta_psi,
                            circuit_->query(pose.s).width(), collision, cfg_.reward);

  const double progress_prev = progress_;
  progress_ += ds;
  s_ = pose.s;
  const double lap_length = circuit_->length();
  if (ds > 0.0 && progress_ >= (laps_ + 1) * lap_length) {
    const double target = (laps_ + 1) * lap_length;
    const double cross = t_prev + cfg_.dt_ctrl * (target - progress_prev) / ds;
    out.info.lap_completed = true;
    out.info.lap_time = cross - last_cross_time_;
    out.info.lap_cross_time = cross;
    last_cross_time_ = cross;
    ++laps_;
  }

  out.terminated = collision;
  out.truncated = !collision && steps_ >= cfg_.max_steps;
  out.info.collision = collision;
  out.info.laps = laps_;
  out.info.progress = progress_;

  auto& row = out.info.telemetry;
  row.step = steps_;
  row.t = t_now;
  row.s = pose.s;
  row.d = pose.d;
  row.delta_psi = delta_psi;
  row.x = x[kX];
  row.y = x[kY];
  row.phi = x[kPhi];
  row.vx = x[kVx];
  row.vy = x[kVy];
  row.r = x[kYawRate];
  row.delta_cmd = u.delta;
  row.v_cmd = u.v;
  row.reward = out.reward;

  out.observation = build_observation(x, *circuit_, cfg_.observation);
  last_obs_ = out.observation;
  return out;
}

// ---------------------------------------------------------------------------

TelemetryWriter::TelemetryWriter(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw std::runtime_error("cannot write telemetry: " + path.string());
  out_ << header() << '\n';
}

const char* TelemetryWriter::header() {
  return "step,t,s,d,delta_psi,x,y,phi,vx,vy,r,delta_cmd,v_cmd,r_adv,r_speed,r_dev,r_heading,r_coll,"
         "r_tot";
}

std::string TelemetryWriter::format(const TelemetryRow& row) {
  char buf[768];
  std::snprintf(buf, sizeof(buf),
                "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                "%.17g,%.17g,%.17g,%.17g,%.17g",
                row.step, row.t, row.s, row.d, row.delta_psi, row.x, row.y, row.phi, row.vx, row.vy,
                row.r, row.delta_cmd, row.v_cmd, row.reward.r_adv, row.reward.r_speed,
                row.reward.r_dev, row.reward.r_heading, row.reward.r_coll, row.reward.r_tot);
  return buf;
}

void TelemetryWriter::write(const TelemetryRow& row) { out_ << format(row) << '\n'; }

}  // namespace rlpp::env
