#include <cmath>
#include <limits>
#include <cstring>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "rlpp/dynamics.hpp"

using namespace rlpp;
using namespace rlpp::dynamics;

namespace {

// Independent long-double transcription of the Pacejka formula.
long double pacejka_oracle(long double alpha, long double fz, long double mu, long double B,
                           long double C, long double D, long double E) {
  const long double ba = B * alpha;
  return mu * fz * D * std::sin(C * std::atan(ba - E * (ba - std::atan(ba))));
}

// Second transcription of the six ODEs, written without the library helpers.
VehicleState ode_oracle(const VehicleState& s, double delta, double a, double mu) {
  const double m = 3.56, iz = 0.0627, lf = 0.174, lr = 0.151, g = 9.81;
  const double fzf = m * g * lr / (lf + lr);
  const double fzr = m * g * lf / (lf + lr);
  const double X = s[0], Y = s[1], phi = s[2], vx = s[3], vy = s[4], r = s[5];
  (void)X;
  (void)Y;
  const double af = std::atan((vy + r * lf) / vx) - delta;
  const double ar = std::atan((vy - r * lr) / vx);
  const double fyf = -static_cast<double>(pacejka_oracle(af, fzf, mu, 7.67, 0.48, 2.00, 1.10));
  const double fyr = -static_cast<double>(pacejka_oracle(ar, fzr, mu, 20.0, 1.50, 0.65, 0.00));
  VehicleState d;
  d << vx * std::cos(phi) - vy * std::sin(phi), vx * std::sin(phi) + vy * std::cos(phi), r,
      a + (-fyf * std::sin(delta) + m * vy * r) / m, (fyr + fyf * std::cos(delta) - m * vx * r) / m,
      (fyf * lf * std::cos(delta) - fyr * lr) / iz;
  return d;
}

VehicleState make_state(double vx, double vy = 0.0, double r = 0.0, double phi = 0.0) {
  VehicleState s = VehicleState::Zero();
  s[kVx] = vx;
  s[kVy] = vy;
  s[kYawRate] = r;
  s[kPhi] = phi;
  return s;
}

// Kasa algebraic circle fit; returns the radius.
double fit_circle_radius(const std::vector<Vec2>& pts) {
  Eigen::MatrixXd A(pts.size(), 3);
  Eigen::VectorXd b(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    A(i, 0) = pts[i].x();
    A(i, 1) = pts[i].y();
    A(i, 2) = 1.0;
    b[i] = pts[i].squaredNorm();
  }
  const Eigen::Vector3d c = A.colPivHouseholderQr().solve(b);
  const double cx = c[0] / 2, cy = c[1] / 2;
  return std::sqrt(c[2] + cx * cx + cy * cy);
}

}  // namespace

TEST_CASE("static axle loads") {
  VehicleParams p;
  const auto [fzf, fzr] = axle_loads(p);
  CHECK(fzf == doctest::Approx(3.56 * 9.81 * 0.151 / 0.325).epsilon(1e-14));
  CHECK(fzf == doctest::Approx(16.23).epsilon(1e-3));
  CHECK(fzr == doctest::Approx(18.70).epsilon(1e-3));
  CHECK(std::abs(fzf + fzr - p.m * p.g) < 1e-12);

  p.lf = p.lr = 0.16;
  const auto [f1, f2] = axle_loads(p);
  CHECK(f1 == doctest::Approx(p.m * p.g / 2));
  CHECK(f2 == doctest::Approx(p.m * p.g / 2));
}

TEST_CASE("slip angles") {
  const VehicleParams p;
  const ActuatorLimits lim;
  auto [af0, ar0] = slip_angles<double>(make_state(2.0), 0.0, p, lim);
  CHECK(af0 == 0.0);
  CHECK(ar0 == 0.0);

  auto [af1, ar1] = slip_angles<double>(make_state(2.0, 0.2), 0.0, p, lim);
  CHECK(af1 == doctest::Approx(std::atan(0.1)));
  CHECK(ar1 == doctest::Approx(std::atan(0.1)));
  CHECK(af1 == doctest::Approx(0.0997).epsilon(1e-3));

  auto [af2, ar2] = slip_angles<double>(make_state(2.0, 0.0, 1.0), 0.0, p, lim);
  CHECK(af2 == doctest::Approx(std::atan(0.087)));
  CHECK(ar2 == doctest::Approx(std::atan(-0.0755)));
  CHECK(af2 == doctest::Approx(0.0868).epsilon(1e-3));
  CHECK(ar2 == doctest::Approx(-0.0754).epsilon(1e-3));

  // Low-speed guard keeps the ratio finite.
  auto [af3, ar3] = slip_angles<double>(make_state(0.0, 0.1), 0.0, p, lim);
  CHECK(af3 == doctest::Approx(std::atan(0.1 / lim.v_blend_lo)));
  CHECK(std::isfinite(ar3));
}

TEST_CASE("Pacejka lateral force") {
  const TireParams tires;
  const auto [fzf, fzr] = axle_loads(VehicleParams{});
  CHECK(lateral_tire_force(0.0, fzf, 0.5, tires.front) == 0.0);

  const double f = lateral_tire_force(0.05, fzf, 0.5, tires.front);
  const auto oracle = pacejka_oracle(0.05L, static_cast<long double>(fzf), 0.5L, 7.67L, 0.48L, 2.0L, 1.1L);
  CHECK(std::abs(f - static_cast<double>(oracle)) < 1e-12);
  CHECK(f == doctest::Approx(2.71).epsilon(2e-3));

  for (double alpha : {0.01, 0.1, 0.4, 1.3}) {
    CHECK(lateral_tire_force(-alpha, fzr, 0.5, tires.rear) ==
          -lateral_tire_force(alpha, fzr, 0.5, tires.rear));
  }
}

TEST_CASE("lateral force saturation bound over a dense slip grid") {
  const TireParams tires;
  const auto [fzf, fzr] = axle_loads(VehicleParams{});
  for (double mu : {0.2, 0.5, 0.8}) {
    for (int k = -5000; k <= 5000; ++k) {
      const double alpha = k * 1e-3 * kPi / 5;  // +-pi/5... up to +-0.63 rad
      CHECK(std::abs(lateral_tire_force(alpha, fzf, mu, tires.front)) <= mu * fzf * tires.front.D);
      CHECK(std::abs(lateral_tire_force(alpha, fzr, mu, tires.rear)) <= mu * fzr * tires.rear.D);
    }
  }
}

TEST_CASE("single-track derivatives") {
  const VehicleParams p;
  const TireParams t;
  const VehicleState launch = derivatives<double>(VehicleState::Zero(), 0.0, 1.0, p, t, 0.5);
  VehicleState expect;
  expect << 0, 0, 0, 1, 0, 0;
  CHECK((launch - expect).cwiseAbs().maxCoeff() == 0.0);

  const VehicleState coast = derivatives<double>(make_state(3.0), 0.0, 0.0, p, t, 0.5);
  expect << 3, 0, 0, 0, 0, 0;
  CHECK((coast - expect).cwiseAbs().maxCoeff() == 0.0);

  const VehicleState s = make_state(3.0, 0.1, 0.2, 0.3);
  const VehicleState got = derivatives<double>(s, 0.05, 0.0, p, t, 0.5);
  CHECK((got - ode_oracle(s, 0.05, 0.0, 0.5)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mirroring the state mirrors the lateral channels") {
  const VehicleParams p;
  const TireParams t;
  VehicleState s = make_state(2.5, 0.12, 0.4, 0.3);
  s[kY] = 0.7;
  VehicleState m = s;
  m[kY] = -s[kY];
  m[kPhi] = -s[kPhi];
  m[kVy] = -s[kVy];
  m[kYawRate] = -s[kYawRate];
  const VehicleState a = derivatives<double>(s, 0.1, 0.5, p, t, 0.5);
  const VehicleState b = derivatives<double>(m, -0.1, 0.5, p, t, 0.5);
  CHECK(b[kX] == doctest::Approx(a[kX]));
  CHECK(b[kY] == doctest::Approx(-a[kY]));
  CHECK(b[kPhi] == doctest::Approx(-a[kPhi]));
  CHECK(b[kVx] == doctest::Approx(a[kVx]));
  CHECK(b[kVy] == doctest::Approx(-a[kVy]));
  CHECK(b[kYawRate] == doctest::Approx(-a[kYawRate]));
}

TEST_CASE("speed controller") {
  ActuatorLimits lim;
  CHECK(speed_controller(2.0, 2.0, lim) == 0.0);
  lim.kp_speed = 2.0;
  lim.a_max = 6.0;
  CHECK(speed_controller(12.0, 2.0, lim) == 6.0);
  CHECK(speed_controller(3.0, 2.0, lim) == 2.0);
  CHECK(speed_controller(-10.0, 2.0, lim) == -lim.a_brake_max);
}

TEST_CASE("straight-line motion keeps lateral states at zero") {
  Simulator sim(VehicleModel{});
  sim.reset(make_state(2.0), 0.5);
  for (int k = 0; k < 10000; ++k) sim.step({0.0, 2.0});
  const auto& x = sim.state();
  CHECK(std::abs(x[kY]) < 1e-10);
  CHECK(std::abs(x[kVy]) < 1e-10);
  CHECK(std::abs(x[kYawRate]) < 1e-10);
  CHECK(x[kX] == doctest::Approx(2.0 * 10000 * 0.025).epsilon(1e-9));
}

TEST_CASE("halving the physics step barely moves a 1 s endpoint") {
  const VehicleModel model;
  const VehicleState x0 = make_state(2.5);
  auto run = [&](double dt_phys) {
    Simulator sim(model, 0.025, dt_phys);
    sim.reset(x0, 0.5, 0.0);
    for (int k = 0; k < 40; ++k) sim.step({0.1 * std::sin(0.2 * k), 2.5});
    return sim.state();
  };
  const auto a = run(0.005);
  const auto b = run(0.0025);
  CHECK(std::hypot(a[kX] - b[kX], a[kY] - b[kY]) < 1e-6);
}

TEST_CASE("RK4 convergence order on a smooth maneuver") {
  const VehicleModel model;
  const VehicleState x0 = make_state(3.0);
  const ControlInput cmd{0.08, 3.0};
  auto endpoint = [&](double dt) {
    return step_integrate<double>(x0, 0.08, cmd, 1.0, dt, model, 0.5).state;
  };
  const auto x4 = endpoint(4e-3);
  const auto x2 = endpoint(2e-3);
  const auto x1 = endpoint(1e-3);
  const double order = std::log2((x4 - x2).norm() / (x2 - x1).norm());
  MESSAGE("measured RK4 order " << order);
  CHECK(order >= 3.5);
}

TEST_CASE("kinematic regime follows the no-slip turn radius") {
  const VehicleModel model;
  Simulator sim(model, 0.025, 0.005);
  const double v = 0.4;  // below v_blend_lo
  sim.reset(make_state(v), 0.5, 0.1);
  std::vector<Vec2> path;
  for (int k = 0; k < 2400; ++k) {
    sim.step({0.1, v});
    if (k >= 400) path.emplace_back(sim.state()[kX], sim.state()[kY]);
  }
  const double lwb = model.params.wheelbase();
  const double expected = lwb / std::tan(0.1);
  const double radius = fit_circle_radius(path);
  MESSAGE("fitted radius " << radius << " vs " << expected);
  CHECK(std::abs(radius - expected) / expected < 0.02);
}

TEST_CASE("steering follows the rate limit") {
  Simulator sim(VehicleModel{}, 0.025, 0.005);
  sim.reset(make_state(2.0), 0.5, 0.0);
  sim.step({0.4, 2.0});
  CHECK(sim.steering() == doctest::Approx(3.2 * 0.025));
  for (int k = 0; k < 10; ++k) sim.step({0.4, 2.0});
  CHECK(sim.steering() == doctest::Approx(0.4));
}

TEST_CASE("integration errors") {
  const VehicleModel model;
  CHECK_THROWS_AS(step_integrate<double>(make_state(1.0), 0.0, {0.0, 1.0}, 0.025, 0.01, model, 0.5),
                  ValidationError);
  VehicleState bad = make_state(1.0);
  bad[kVy] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(step_integrate<double>(bad, 0.0, {0.0, 1.0}, 0.025, 0.005, model, 0.5),
                  SimulationError);
  CHECK_THROWS_AS(Simulator(model, 0.025, 0.01), ValidationError);
}

TEST_CASE("identical inputs give bitwise-identical trajectories") {
  auto run = [] {
    Simulator sim(VehicleModel{});
    std::mt19937_64 rng(11);
    sim.reset(make_state(1.0), randomize_friction(FrictionModel{}, rng));
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    for (int k = 0; k < 500; ++k) sim.step({u(rng), 3.0});
    return sim.state();
  };
  const auto a = run();
  const auto b = run();
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * 6) == 0);
}

TEST_CASE("friction randomization") {
  std::mt19937_64 rng(3);
  FrictionModel off{0.5, 0.0, 0.2, 0.8};
  for (int i = 0; i < 10; ++i) CHECK(randomize_friction(off, rng) == 0.5);

  FrictionModel wide{0.5, 0.15, 1e-6, 10.0};
  const int n = 100000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double mu = randomize_friction(wide, rng);
    sum += mu;
    sq += mu * mu;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean - 0.5) < 0.005);
  CHECK(std::abs(sd - 0.15) < 0.005);

  FrictionModel floor{0.5, 0.15, 0.5, 0.8};
  int clamped = 0;
  for (int i = 0; i < 1000; ++i) {
    const double mu = randomize_friction(floor, rng);
    CHECK(mu >= 0.5);
    clamped += (mu == 0.5);
  }
  CHECK(clamped > 400);
}
