#pragma once

#include <cmath>
#include <random>
#include <utility>

#include <Eigen/Core>

#include "rlpp/core.hpp"

namespace rlpp::dynamics {

// (X, Y, phi, vx, vy, r)
template <typename Scalar>
using StateVector = Eigen::Matrix<Scalar, 6, 1>;
using VehicleState = StateVector<double>;

enum StateIndex : Eigen::Index { kX = 0, kY = 1, kPhi = 2, kVx = 3, kVy = 4, kYawRate = 5 };

struct VehicleParams {
  double m = 3.56;
  double Iz = 0.0627;
  double lf = 0.174;
  double lr = 0.151;
  double g = 9.81;

  double wheelbase() const { return lf + lr; }
  void validate() const;
};

// Pacejka constants for one axle.
struct TireAxle {
  double B = 0.0;
  double C = 0.0;
  double D = 0.0;
  double E = 0.0;
};

struct TireParams {
  TireAxle front{7.67, 0.48, 2.00, 1.10};
  TireAxle rear{20.00, 1.50, 0.65, 0.00};
  void validate() const;
};

struct FrictionModel {
  double mu_nominal = 0.5;
  double sigma = 0.15;
  double mu_min = 0.2;
  double mu_max = 0.8;
  void validate() const;
};

struct ActuatorLimits {
  double delta_max = 0.4;
  double delta_rate_max = 3.2;
  double a_max = 6.0;
  double a_brake_max = 6.0;
  double v_max = 8.0;
  double kp_speed = 2.0;
  double v_blend_lo = 0.5;
  double v_blend_hi = 1.0;
  void validate() const;
};

struct ControlInput {
  double delta = 0.0;  // steering angle [rad]
  double v = 0.0;      // speed command [m/s]
};

struct VehicleModel {
  VehicleParams params;
  TireParams tires;
  ActuatorLimits limits;
};

// Relaxation time pulling (vy, r) onto the kinematic single-track manifold at
// low speed.
inline constexpr double kKinematicRelaxTime = 0.05;

/// Static axle loads (F_zf, F_zr); no load transfer.
template <typename Scalar = double>
std::pair<Scalar, Scalar> axle_loads(const VehicleParams& p) {
  const Scalar weight = Scalar(p.m) * Scalar(p.g);
  const Scalar lwb = Scalar(p.lf) + Scalar(p.lr);
  return {weight * Scalar(p.lr) / lwb, weight * Scalar(p.lf) / lwb};
}

/// Front and rear slip angles. `vx_floor` guards the atan against vx -> 0.
template <typename Scalar>
std::pair<Scalar, Scalar> slip_angles(const StateVector<Scalar>& x, Scalar delta,
                                      const VehicleParams& p, Scalar vx_floor) {
  using std::atan;
  using std::max;
  const Scalar vx = max(x[kVx], vx_floor);
  const Scalar alpha_f = atan((x[kVy] + x[kYawRate] * Scalar(p.lf)) / vx) - delta;
  const Scalar alpha_r = atan((x[kVy] - x[kYawRate] * Scalar(p.lr)) / vx);
  return {alpha_f, alpha_r};
}

template <typename Scalar>
std::pair<Scalar, Scalar> slip_angles(const StateVector<Scalar>& x, Scalar delta,
                                      const VehicleParams& p, const ActuatorLimits& limits) {
  return slip_angles<Scalar>(x, delta, p, Scalar(limits.v_blend_lo));
}

/// Pacejka lateral force. The tire model acts along the slip direction so a
/// positive slip angle yields a negative (restoring) force.
template <typename Scalar>
Scalar lateral_tire_force(Scalar alpha, Scalar fz, Scalar mu, const TireAxle& tire) {
  using std::atan;
  using std::sin;
  const Scalar b_alpha = Scalar(tire.B) * alpha;
  const Scalar shaped = b_alpha - Scalar(tire.E) * (b_alpha - atan(b_alpha));
  return mu * fz * Scalar(tire.D) * sin(Scalar(tire.C) * atan(shaped));
}

/// Dynamic single-track derivatives with Pacejka lateral forces.
template <typename Scalar>
StateVector<Scalar> derivatives(const StateVector<Scalar>& x, Scalar delta, Scalar accel,
                                const VehicleParams& p, const TireParams& tires, Scalar mu,
                                Scalar vx_floor = Scalar(0.5)) {
  using std::cos;
  using std::sin;
  const auto [fzf, fzr] = axle_loads<Scalar>(p);
  const auto [alpha_f, alpha_r] = slip_angles<Scalar>(x, delta, p, vx_floor);
  // Sign convention of the lateral force: positive along +y of the body frame.
  const Scalar fyf = -lateral_tire_force<Scalar>(alpha_f, fzf, mu, tires.front);
  const Scalar fyr = -lateral_tire_force<Scalar>(alpha_r, fzr, mu, tires.rear);
  const Scalar m = Scalar(p.m);
  const Scalar phi = x[kPhi];
  const Scalar vx = x[kVx];
  const Scalar vy = x[kVy];
  const Scalar r = x[kYawRate];

  StateVector<Scalar> dx;
  dx[kX] = vx * cos(phi) - vy * sin(phi);
  dx[kY] = vx * sin(phi) + vy * cos(phi);
  dx[kPhi] = r;
  dx[kVx] = accel + (-fyf * sin(delta) + m * vy * r) / m;
  dx[kVy] = (fyr + fyf * cos(delta) - m * vx * r) / m;
  dx[kYawRate] = (fyf * Scalar(p.lf) * cos(delta) - fyr * Scalar(p.lr)) / Scalar(p.Iz);
  return dx;
}

/// Kinematic single-track derivatives: (vy, r) relax towards the no-slip
/// values implied by (vx, delta).
template <typename Scalar>
StateVector<Scalar> kinematic_derivatives(const StateVector<Scalar>& x, Scalar delta, Scalar accel,
                                          const VehicleParams& p) {
  using std::cos;
  using std::sin;
  using std::tan;
  const Scalar lwb = Scalar(p.wheelbase());
  const Scalar tan_delta = tan(delta);
  const Scalar r_kin = x[kVx] * tan_delta / lwb;
  const Scalar vy_kin = r_kin * Scalar(p.lr);
  const Scalar relax = Scalar(1) / Scalar(kKinematicRelaxTime);

  StateVector<Scalar> dx;
  dx[kX] = x[kVx] * cos(x[kPhi]) - x[kVy] * sin(x[kPhi]);
  dx[kY] = x[kVx] * sin(x[kPhi]) + x[kVy] * cos(x[kPhi]);
  dx[kPhi] = x[kYawRate];
  dx[kVx] = accel;
  dx[kVy] = Scalar(p.lr) * accel * tan_delta / lwb + relax * (vy_kin - x[kVy]);
  dx[kYawRate] = accel * tan_delta / lwb + relax * (r_kin - x[kYawRate]);
  return dx;
}

/// Weight of the dynamic model: 0 below v_blend_lo, 1 above v_blend_hi.
template <typename Scalar>
Scalar dynamic_weight(Scalar vx, const ActuatorLimits& limits) {
  return clamp<Scalar>((vx - Scalar(limits.v_blend_lo)) /
                           Scalar(limits.v_blend_hi - limits.v_blend_lo),
                       Scalar(0), Scalar(1));
}

template <typename Scalar>
StateVector<Scalar> blended_derivatives(const StateVector<Scalar>& x, Scalar delta, Scalar accel,
                                        const VehicleModel& model, Scalar mu) {
  const Scalar w = dynamic_weight<Scalar>(x[kVx], model.limits);
  if (w >= Scalar(1)) {
    return derivatives<Scalar>(x, delta, accel, model.params, model.tires, mu,
                               Scalar(model.limits.v_blend_lo));
  }
  const StateVector<Scalar> kin = kinematic_derivatives<Scalar>(x, delta, accel, model.params);
  if (w <= Scalar(0)) return kin;
  const StateVector<Scalar> dyn = derivatives<Scalar>(x, delta, accel, model.params, model.tires,
                                                      mu, Scalar(model.limits.v_blend_lo));
  return w * dyn + (Scalar(1) - w) * kin;
}

/// Internal P speed controller producing the longitudinal acceleration.
template <typename Scalar>
Scalar speed_controller(Scalar v_cmd, Scalar vx, const ActuatorLimits& limits) {
  return clamp<Scalar>(Scalar(limits.kp_speed) * (v_cmd - vx), -Scalar(limits.a_brake_max),
                       Scalar(limits.a_max));
}

/// Steering angle `elapsed` seconds into a control period that started at
/// `delta0` while tracking `delta_cmd` at bounded rate.
template <typename Scalar>
Scalar rate_limited_steering(Scalar delta0, Scalar delta_cmd, Scalar elapsed, Scalar rate_max) {
  const Scalar reach = rate_max * elapsed;
  return delta0 + clamp<Scalar>(delta_cmd - delta0, -reach, reach);
}

template <typename Scalar>
struct IntegrationResult {
  StateVector<Scalar> state;
  Scalar delta;  // applied steering at the end of the period
};

/// Advances the model by `dt_ctrl` with RK4 substeps of `dt_phys`, holding
/// the command for the whole period. Throws SimulationError on a non-finite
/// state and ValidationError when dt_ctrl is not a multiple of dt_phys.
template <typename Scalar>
IntegrationResult<Scalar> step_integrate(const StateVector<Scalar>& x0, Scalar delta0,
                                         const ControlInput& cmd, double dt_ctrl, double dt_phys,
                                         const VehicleModel& model, Scalar mu) {
  const double ratio = dt_ctrl / dt_phys;
  const long substeps = std::lround(ratio);
  if (substeps < 1 || std::abs(ratio - static_cast<double>(substeps)) > 1e-9 * ratio) {
    throw ValidationError("dt_ctrl must be an integer multiple of dt_phys");
  }
  const Scalar h = Scalar(dt_phys);
  const Scalar v_cmd = Scalar(cmd.v);
  const Scalar delta_cmd = Scalar(cmd.delta);
  const Scalar rate = Scalar(model.limits.delta_rate_max);

  auto f = [&](const StateVector<Scalar>& x, Scalar elapsed) {
    const Scalar delta = rate_limited_steering<Scalar>(delta0, delta_cmd, elapsed, rate);
    const Scalar accel = speed_controller<Scalar>(v_cmd, x[kVx], model.limits);
    return blended_derivatives<Scalar>(x, delta, accel, model, mu);
  };

  auto rk4 = [&](StateVector<Scalar>& x, Scalar t, Scalar dt) {
    const StateVector<Scalar> k1 = f(x, t);
    const StateVector<Scalar> k2 = f(x + (dt / 2) * k1, t + dt / 2);
    const StateVector<Scalar> k3 = f(x + (dt / 2) * k2, t + dt / 2);
    const StateVector<Scalar> k4 = f(x + dt * k3, t + dt);
    x += (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
  };

  // The steering trajectory has a kink where it reaches the command; the
  // substep containing it is split there.
  using std::abs;
  const Scalar t_reach = rate > Scalar(0) ? abs(delta_cmd - delta0) / rate : Scalar(0);
  StateVector<Scalar> x = x0;
  for (long k = 0; k < substeps; ++k) {
    const Scalar t = Scalar(k) * h;
    const Scalar first = t_reach - t;
    if (first > Scalar(1e-12) && first < h - Scalar(1e-12)) {
      rk4(x, t, first);
      rk4(x, t_reach, h - first);
    } else {
      rk4(x, t, h);
    }
  }
  if (!x.allFinite()) throw SimulationError("non-finite vehicle state after integration");
  return {x, rate_limited_steering<Scalar>(delta0, delta_cmd, Scalar(dt_ctrl), rate)};
}

/// Per-episode friction draw: clamp(mu_nominal + N(0, sigma)).
double randomize_friction(const FrictionModel& model, std::mt19937_64& rng);

/// Stateful single-track simulator with its own friction coefficient.
class Simulator {
 public:
  Simulator(VehicleModel model, double dt_ctrl = 0.025, double dt_phys = 0.005);

  void reset(const VehicleState& state, double mu, double delta = 0.0);
  // Clamps the command to the actuator limits before integrating.
  const VehicleState& step(const ControlInput& cmd);

  const VehicleState& state() const { return state_; }
  double steering() const { return delta_; }
  double mu() const { return mu_; }
  double dt_ctrl() const { return dt_ctrl_; }
  double dt_phys() const { return dt_phys_; }
  const VehicleModel& model() const { return model_; }

 private:
  VehicleModel model_;
  double dt_ctrl_;
  double dt_phys_;
  VehicleState state_ = VehicleState::Zero();
  double delta_ = 0.0;
  double mu_ = 0.5;
};

}  // namespace rlpp::dynamics
