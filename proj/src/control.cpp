#include "rlpp/control.hpp"

#include <cmath>

namespace rlpp::control {

void PPConfig::validate() const {
  if (!(d_la > 0.0)) throw ValidationError("d_la must be positive");
  if (!(alpha_v > 0.0 && alpha_v <= 1.5)) throw ValidationError("alpha_v must lie in (0, 1.5]");
}

void ResidualConfig::validate() const {
  if (!(alpha_rl >= 0.0)) throw ValidationError("alpha_rl must be non-negative");
  if (!(c_delta >= 0.0) || !(c_v >= 0.0)) throw ValidationError("residual scales must be non-negative");
}

PurePursuitDetail pp_detail(const dynamics::VehicleState& state, const track::Circuit& circuit,
                            const PPConfig& cfg, const dynamics::VehicleParams& params) {
  using dynamics::kPhi;
  using dynamics::kX;
  using dynamics::kY;
  const auto& raceline = circuit.raceline();
  if (raceline.points().size() < 2) throw ValidationError("raceline needs at least 2 points");

  const double c = std::cos(state[kPhi]);
  const double s = std::sin(state[kPhi]);
  const Vec2 rear(state[kX] - params.lr * c, state[kY] - params.lr * s);

  PurePursuitDetail out;
  const double s_rear = raceline.cartesian_to_frenet(rear.x(), rear.y()).s;
  out.s_lookahead = raceline.path().wrap_s(s_rear + cfg.d_la);
  const Vec2 target = raceline.path().to_cartesian({out.s_lookahead, 0.0});
  const Vec2 rel = target - rear;
  out.lookahead_body = Vec2(c * rel.x() + s * rel.y(), -s * rel.x() + c * rel.y());

  out.s_closest = raceline.cartesian_to_frenet(state[kX], state[kY]).s;
  out.command.delta = pp_steering(out.lookahead_body.y(), cfg.d_la, params.wheelbase());
  out.command.v = cfg.alpha_v * raceline.query(out.s_closest).v_ref;
  return out;
}

Vec2 residual_scale(const Vec2& u_nn, const ResidualConfig& cfg) {
  if (!u_nn.allFinite() || u_nn.cwiseAbs().maxCoeff() > 1.0) {
    throw ValidationError("policy output outside [-1, 1]");
  }
  return {cfg.alpha_rl * cfg.c_delta * u_nn[0], cfg.alpha_rl * cfg.c_v * u_nn[1]};
}

dynamics::ControlInput compose_command(const dynamics::ControlInput& u_pp, const Vec2& u_rl,
                                       const dynamics::ActuatorLimits& limits) {
  return {clamp(u_pp.delta + u_rl[0], -limits.delta_max, limits.delta_max),
          clamp(u_pp.v + u_rl[1], 0.0, limits.v_max)};
}

}  // namespace rlpp::control
