#pragma once

#include "rlpp/core.hpp"
#include "rlpp/dynamics.hpp"
#include "rlpp/track.hpp"

namespace rlpp::control {

struct PPConfig {
  double d_la = 1.2;     // lookahead distance [m]
  double alpha_v = 0.8;  // velocity gain
  void validate() const;
};

struct ResidualConfig {
  double alpha_rl = 0.55;
  double c_delta = 0.4;  // [rad] per unit policy output
  double c_v = 1.0;      // [m/s] per unit policy output
  void validate() const;
};

/// Pure Pursuit steering law for a lookahead point with lateral body-frame
/// coordinate `lateral`.
inline double pp_steering(double lateral, double d_la, double wheelbase) {
  return std::atan(2.0 * wheelbase * lateral / (d_la * d_la));
}

struct PurePursuitDetail {
  dynamics::ControlInput command;
  double s_closest = 0.0;    // raceline s of the car
  double s_lookahead = 0.0;  // raceline s of the lookahead point
  Vec2 lookahead_body = Vec2::Zero();  // (forward, left) in the rear-axle frame
};

/// Pure Pursuit command: steering from the lookahead point found d_la
/// further along the raceline than the rear-axle projection; speed is
/// alpha_v times the reference speed at the closest point.
PurePursuitDetail pp_detail(const dynamics::VehicleState& state, const track::Circuit& circuit,
                            const PPConfig& cfg, const dynamics::VehicleParams& params);

inline dynamics::ControlInput pp_command(const dynamics::VehicleState& state,
                                         const track::Circuit& circuit, const PPConfig& cfg,
                                         const dynamics::VehicleParams& params) {
  return pp_detail(state, circuit, cfg, params).command;
}

/// u_RL = alpha_rl * diag(c_delta, c_v) * u_NN. Rejects components outside [-1, 1].
Vec2 residual_scale(const Vec2& u_nn, const ResidualConfig& cfg);

/// clamp(u_PP + u_RL) to the actuator box.
dynamics::ControlInput compose_command(const dynamics::ControlInput& u_pp, const Vec2& u_rl,
                                       const dynamics::ActuatorLimits& limits);

}  // namespace rlpp::control
