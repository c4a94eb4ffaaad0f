#include "rlpp/dynamics.hpp"

#include <string>

namespace rlpp::dynamics {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace

void VehicleParams::validate() const {
  require(m > 0 && Iz > 0 && lf > 0 && lr > 0 && g > 0, "vehicle parameters must be positive");
}

void TireParams::validate() const {
  for (const auto* axle : {&front, &rear}) {
    require(axle->B > 0 && axle->D > 0, "tire B and D must be positive");
  }
}

void FrictionModel::validate() const {
  require(mu_nominal > 0, "mu_nominal must be positive");
  require(sigma >= 0, "friction sigma must be non-negative");
  require(0 < mu_min && mu_min <= mu_nominal && mu_nominal <= mu_max,
          "friction clamps must satisfy 0 < mu_min <= mu_nominal <= mu_max");
}

void ActuatorLimits::validate() const {
  require(delta_max > 0 && delta_rate_max > 0 && a_max > 0 && a_brake_max > 0 && v_max > 0 &&
              kp_speed > 0 && v_blend_lo > 0 && v_blend_hi > 0,
          "actuator limits must be positive");
  require(v_blend_lo < v_blend_hi, "v_blend_lo must be below v_blend_hi");
}

double randomize_friction(const FrictionModel& model, std::mt19937_64& rng) {
  if (model.sigma <= 0.0) return clamp(model.mu_nominal, model.mu_min, model.mu_max);
  std::normal_distribution<double> noise(0.0, model.sigma);
  return clamp(model.mu_nominal + noise(rng), model.mu_min, model.mu_max);
}

Simulator::Simulator(VehicleModel model, double dt_ctrl, double dt_phys)
    : model_(std::move(model)), dt_ctrl_(dt_ctrl), dt_phys_(dt_phys) {
  model_.params.validate();
  model_.tires.validate();
  model_.limits.validate();
  const double ratio = dt_ctrl_ / dt_phys_;
  require(dt_phys_ > 0 && std::abs(ratio - std::round(ratio)) <= 1e-9 * ratio,
          "dt_ctrl must be an integer multiple of dt_phys");
}

void Simulator::reset(const VehicleState& state, double mu, double delta) {
  state_ = state;
  mu_ = mu;
  delta_ = delta;
}

const VehicleState& Simulator::step(const ControlInput& cmd) {
  const ControlInput clamped{clamp(cmd.delta, -model_.limits.delta_max, model_.limits.delta_max),
                             clamp(cmd.v, 0.0, model_.limits.v_max)};
  const auto result = step_integrate<double>(state_, delta_, clamped, dt_ctrl_, dt_phys_, model_, mu_);
  state_ = result.state;
  delta_ = result.delta;
  return state_;
}

}  // namespace rlpp::dynamics
