// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "rlpp/config.hpp"
#include "rlpp/harness.hpp"
#include "rlpp/sac/trainer.hpp"

using namespace rlpp;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = RLPP_SOURCE_DIR;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

config::RunConfig oval_config() { return config::load_config(kRoot / "configs/oval.toml"); }

// 1
Verdict metric_formulas() {
  const double g1 = harness::sim_gap(14.95, 14.3464);
  const double g2 = harness::sim_gap(13.890, 13.6023);
  const double gc = harness::gap_closure(14.2831, 13.3665, 12.5587);
  const bool ok = std::abs(g1 - 4.207) <= 0.01 && std::abs(g2 - 2.115) <= 0.01 &&
                  std::abs(gc - 52.9) <= 1.0;
  return {ok, "sim_gap " + fmt("%.4f", g1) + "% / " + fmt("%.4f", g2) + "%, gap closure " +
                  fmt("%.3f", gc) + "%"};
}

// 2
Verdict observation_shape() {
  const auto c = oval_config();
  const auto circuit = config::build_circuit(c);
  env::RacingEnv env(circuit, c.env, 0);
  const auto obs = env.reset_at(5.0, 2.0, 0.5);
  const int n = c.env.observation.waypoints;
  const bool ok = n == 20 && obs.size() == 125 && env.observation_dim() == 125 &&
                  obs.size() == 5 + 6 * n && obs.allFinite();
  return {ok, "N=" + std::to_string(n) + " gives " + std::to_string(obs.size()) + " entries"};
}

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

dynamics::VehicleState straight_state(double vx) {
  dynamics::VehicleState s = dynamics::VehicleState::Zero();
  s[dynamics::kVx] = vx;
  return s;
}

// 3
Verdict dynamics_suite() {
  using namespace dynamics;
  const VehicleModel model;
  const auto [fzf, fzr] = axle_loads(model.params);
  std::ostringstream msg;
  bool ok = true;

  const VehicleState d0 = derivatives<double>(straight_state(3.0), 0.0, 0.0, model.params,
                                              model.tires, 0.5);
  const bool zero_slip = lateral_tire_force(0.0, fzf, 0.5, model.tires.front) == 0.0 &&
                         lateral_tire_force(0.0, fzr, 0.5, model.tires.rear) == 0.0 &&
                         d0[kVy] == 0.0 && d0[kYawRate] == 0.0;
  ok = ok && zero_slip;
  msg << "zero-slip " << (zero_slip ? "ok" : "FAILED");

  Simulator sim(model);
  sim.reset(straight_state(2.0), 0.5);
  for (int k = 0; k < 10000; ++k) sim.step({0.0, 2.0});
  const double lat = std::max(std::abs(sim.state()[kVy]), std::abs(sim.state()[kYawRate]));
  ok = ok && lat < 1e-10;
  msg << ", straight max(|vy|,|r|) " << fmt("%.1e", lat);

  double worst_ratio = 0.0;
  for (double mu : {0.2, 0.5, 0.8}) {
    for (int k = -20000; k <= 20000; ++k) {
      const double alpha = k * (kPi / 2) / 20000;
      worst_ratio = std::max(worst_ratio, std::abs(lateral_tire_force(alpha, fzf, mu, model.tires.front)) /
                                              (mu * fzf * model.tires.front.D));
      worst_ratio = std::max(worst_ratio, std::abs(lateral_tire_force(alpha, fzr, mu, model.tires.rear)) /
                                              (mu * fzr * model.tires.rear.D));
    }
  }
  ok = ok && worst_ratio <= 1.0;
  msg << ", |F|/(mu Fz D) max " << fmt("%.6f", worst_ratio);

  const VehicleState x0 = straight_state(3.0);
  const ControlInput cmd{0.08, 3.0};
  auto endpoint = [&](double dt) { return step_integrate<double>(x0, 0.08, cmd, 1.0, dt, model, 0.5).state; };
  const auto x4 = endpoint(4e-3), x2 = endpoint(2e-3), x1 = endpoint(1e-3);
  const double order = std::log2((x4 - x2).norm() / (x2 - x1).norm());
  ok = ok && order >= 3.5;
  msg << ", RK4 order " << fmt("%.2f", order);

  Simulator slow(model, 0.025, 0.005);
  const double v = 0.4;
  slow.reset(straight_state(v), 0.5, 0.1);
  std::vector<Vec2> path;
  for (int k = 0; k < 2400; ++k) {
    slow.step({0.1, v});
    if (k >= 400) path.emplace_back(slow.state()[kX], slow.state()[kY]);
  }
  const double expected = model.params.wheelbase() / std::tan(0.1);
  const double rel = std::abs(fit_circle_radius(path) - expected) / expected;
  ok = ok && rel < 0.02;
  msg << ", kinematic radius error " << fmt("%.3f", rel * 100) << "%";
  return {ok, msg.str()};
}

// 4
Verdict frenet_suite() {
  const auto c = oval_config();
  const auto circuit = config::build_circuit(c);
  const auto& t = circuit->track();
  const double L = t.total_length();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> us(0.0, L), ud(-0.74, 0.74), uk(-3.0, 3.0);
  double worst = 0.0, periodic = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const track::FrenetPose pose{us(rng), ud(rng)};
    const auto xy = t.frenet_to_cartesian(pose);
    const auto back = t.cartesian_to_frenet(xy.x, xy.y);
    double ds = std::abs(back.s - pose.s);
    ds = std::min(ds, L - ds);
    worst = std::max({worst, ds, std::abs(back.d - pose.d)});

    const double s = pose.s;
    const double shifted = s + std::round(uk(rng)) * L;
    const auto a = t.query(s), b = t.query(shifted);
    const auto ra = circuit->query(s), rb = circuit->query(shifted);
    const auto pa = t.frenet_to_cartesian(pose);
    const auto pb = t.frenet_to_cartesian({shifted, pose.d});
    periodic = std::max({periodic, std::abs(a.w_left - b.w_left), std::abs(a.kappa - b.kappa),
                         std::abs(wrap_angle(a.psi_ref - b.psi_ref)), std::abs(ra.v_ref - rb.v_ref),
                         std::abs(ra.kappa - rb.kappa), std::abs(pa.x - pb.x),
                         std::abs(pa.y - pb.y)});
  }
  const bool ok = worst < 1e-6 && periodic < 1e-9;
  return {ok, "round-trip max error " + fmt("%.2e", worst) + " m, periodicity max deviation " +
                  fmt("%.2e", periodic)};
}

// 5
using Mat = sac::Matrix<double>;
using Vec = sac::Vector<double>;

Mat random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

sac::Mlp<double> make_net(std::vector<int> sizes, std::mt19937_64& rng) {
  sac::Mlp<double> net(std::move(sizes));
  net.initialize(rng, 1.0);
  return net;
}

Vec finite_difference(Vec& params, const std::function<double()>& loss, double h = 1e-6) {
  Vec g(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss();
    params[i] = keep - h;
    const double down = loss();
    params[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// Relative error with an absolute floor for entries that are numerically zero.
double relative_error(const Vec& a, const Vec& n) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max(std::abs(a[i]), std::abs(n[i]));
    const double diff = std::abs(a[i] - n[i]);
    worst = std::max(worst, scale > 1e-6 ? diff / scale : (diff < 1e-8 ? 0.0 : 1.0));
  }
  return worst;
}

Verdict gradient_suite() {
  std::mt19937_64 rng(31);
  auto q1 = make_net({6, 16, 16, 1}, rng);
  auto q2 = make_net({6, 16, 16, 1}, rng);
  sac::Batch<double> b;
  b.obs = random_matrix(4, 8, rng);
  b.next_obs = random_matrix(4, 8, rng);
  b.actions = random_matrix(2, 8, rng).array().tanh().matrix();
  b.rewards = random_matrix(8, 1, rng);
  b.dones = Vec::Zero(8);
  const Vec y = random_matrix(8, 1, rng);
  Vec g1 = Vec::Zero(q1.parameter_count()), g2 = Vec::Zero(q2.parameter_count());
  sac::critic_loss_grad(q1, q2, b, y, g1, g2);
  auto critic = [&] {
    Vec s1 = Vec::Zero(q1.parameter_count()), s2 = Vec::Zero(q2.parameter_count());
    return sac::critic_loss_grad(q1, q2, b, y, s1, s2);
  };
  const double e_critic = std::max(relative_error(g1, finite_difference(q1.params(), critic)),
                                   relative_error(g2, finite_difference(q2.params(), critic)));

  auto actor = make_net({4, 16, 16, 4}, rng);
  const Mat xi = random_matrix(2, 8, rng);
  Vec ga = Vec::Zero(actor.parameter_count());
  sac::actor_loss_grad(actor, q1, q2, b.obs, sac::policy_sample(actor, b.obs, xi, -20, 2), 0.3, ga);
  auto actor_loss = [&] {
    Vec s = Vec::Zero(actor.parameter_count());
    return sac::actor_loss_grad(actor, q1, q2, b.obs, sac::policy_sample(actor, b.obs, xi, -20, 2),
                                0.3, s)
        .loss;
  };
  const double e_actor = relative_error(ga, finite_difference(actor.params(), actor_loss));

  const Vec logp = random_matrix(16, 1, rng);
  const double la = 0.2, h = 1e-6;
  const double fd = (sac::temperature_loss(la + h, logp, -2.0) -
                     sac::temperature_loss(la - h, logp, -2.0)) /
                    (2 * h);
  const double an = sac::temperature_grad(logp, -2.0);
  const double e_temp = std::abs(an - fd) / std::max(std::abs(an), std::abs(fd));

  const bool ok = e_critic < 1e-4 && e_actor < 1e-4 && e_temp < 1e-4;
  return {ok, "max relative error actor " + fmt("%.2e", e_actor) + ", critic " +
                  fmt("%.2e", e_critic) + ", temperature " + fmt("%.2e", e_temp)};
}

// 6
Verdict reward_suite() {
  auto c = oval_config();
  const auto circuit = config::build_circuit(c);
  const auto run = harness::run_laps(circuit, c.env, {}, 10, c.seed);
  if (!run.completed) return {false, "baseline did not finish 10 laps"};
  const double L = circuit->length();
  const double expected = L / (c.env.reward.v_max * c.env.reward.t_sim);

  double identity = 0.0;
  std::vector<double> per_lap(10, 0.0);
  double prev_s = 0.0, progress = 0.0;
  long rows = 0;
  for (const auto& lap : run.laps) {
    for (const auto& row : lap.telemetry) {
      const auto& r = row.reward;
      identity = std::max({identity, std::abs(r.r_pos - (r.r_adv + r.r_speed)),
                           std::abs(r.r_tot - (r.r_pos + r.r_pos * (r.r_dev + r.r_heading) + r.r_coll))});
      const double ds = env::unwrap_delta_s(prev_s, row.s, L);
      prev_s = row.s;
      // Split the step's advancement reward across a lap boundary.
      double lo = progress;
      const double hi = progress + ds;
      while (lo < hi) {
        const int k = static_cast<int>(std::floor(lo / L + 1e-12));
        const double edge = std::min(hi, (k + 1) * L);
        if (k < 10) per_lap[k] += r.r_adv * (edge - lo) / ds;
        lo = edge;
      }
      progress = hi;
      ++rows;
    }
  }
  double worst = 0.0;
  for (double v : per_lap) worst = std::max(worst, std::abs(v - expected) / expected);
  const bool ok = identity < 1e-12 && worst < 1e-4;
  return {ok, std::to_string(rows) + " steps, identity residual " + fmt("%.1e", identity) +
                  ", per-lap advancement sum rel. error " + fmt("%.2e", worst) + " (target " +
                  fmt("%.4f", expected) + ")"};
}

// 7
Verdict residual_off() {
  auto c = oval_config();
  const auto circuit = config::build_circuit(c);
  sac::SacConfig scfg = c.sac;
  scfg.precision = "float64";
  scfg.last_layer_scale = 1.0;  // large residual outputs, so the gain is what silences them
  sac::SacAgent<double> agent(c.env.observation.dimension(), 2, scfg, 5);
  sac::RunningNormalizer norm(c.env.observation.dimension());
  auto policy = std::make_shared<const sac::DeterministicPolicy>(sac::make_checkpoint(agent, norm));
  c.env.residual.alpha_rl = 0.0;
  const auto pp = harness::run_laps(circuit, c.env, {}, 10, c.seed);
  const auto rl = harness::run_laps(
      circuit, c.env, {harness::ControllerKind::kResidual, policy}, 10, c.seed);
  bool same = pp.completed && rl.completed && pp.steps == rl.steps && pp.laps.size() == rl.laps.size();
  double max_residual = 0.0;
  for (std::size_t i = 0; same && i < pp.laps.size(); ++i) {
    const auto& a = pp.laps[i].telemetry;
    const auto& b = rl.laps[i].telemetry;
    same = a.size() == b.size() && pp.laps[i].lap_time == rl.laps[i].lap_time;
    for (std::size_t k = 0; same && k < a.size(); ++k) {
      same = std::memcmp(&a[k], &b[k], sizeof(env::TelemetryRow)) == 0;
    }
  }
  const auto obs = env::RacingEnv(circuit, c.env, 0).reset_at(3.0, 2.0, 0.5);
  max_residual = policy->act(obs).cwiseAbs().maxCoeff();
  return {same && max_residual > 0.05,
          std::to_string(pp.steps) + " steps over 10 laps " + (same ? "bitwise identical" : "DIFFER") +
              " (policy output magnitude " + fmt("%.2f", max_residual) + ")"};
}

// 8
struct Tuned {
  double d_la = 0.0;
  double alpha_v = 0.0;
  harness::LapStats stats;
};

Tuned tune_pure_pursuit(const std::shared_ptr<const track::Circuit>& circuit, env::EnvConfig cfg,
                        std::uint64_t seed) {
  Tuned best;
  best.stats.t_mean = 1e300;
  for (int i = 0; i <= 10; ++i) {
    for (int j = 0; j <= 80; ++j) {
      cfg.pp.d_la = 1.0 + 0.2 * i;
      cfg.pp.alpha_v = 0.70 + 0.01 * j;
      const auto run = harness::run_laps(circuit, cfg, {}, 10, seed);
      if (!run.completed) continue;
      const auto s = harness::lap_statistics(run.laps);
      if (s.t_mean < best.stats.t_mean) best = {cfg.pp.d_la, cfg.pp.alpha_v, s};
    }
  }
  return best;
}

Verdict end_to_end(const fs::path& out) {
  auto c = oval_config();
  const auto circuit = config::build_circuit(c);
  const auto t0 = std::chrono::steady_clock::now();
  const Tuned pp = tune_pure_pursuit(circuit, c.env, c.seed);
  if (pp.alpha_v == 0.0) return {false, "no PP setting completes 10 laps"};
  spdlog::info("tuned PP: d_la {:.2f} alpha_v {:.2f} lap {:.4f} s (config has {:.2f}/{:.2f})",
               pp.d_la, pp.alpha_v, pp.stats.t_mean, c.env.pp.d_la, c.env.pp.alpha_v);
  c.env.pp.d_la = pp.d_la;
  c.env.pp.alpha_v = pp.alpha_v;

  const fs::path dir = out / "learning";
  config::write_effective_config(c, dir);
  env::RacingEnv env(circuit, c.env, c.seed);
  sac::TrainerOptions opts;
  opts.seed = c.seed;
  opts.out_dir = dir;
  opts.checkpoint_every = c.checkpoint_every;
  opts.env_config = config::to_json(c);
  opts.config_digest = config::digest(c);
  const auto trained = sac::train(env, c.sac, opts);
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  auto policy = std::make_shared<const sac::DeterministicPolicy>(trained.checkpoint);

  std::vector<std::pair<std::string, harness::LapStats>> rows{{"pp", pp.stats}};
  std::ostringstream per_alpha;
  double best_t = 1e300, best_alpha = 0.0;
  for (double a : {0.25, 0.55, 1.0}) {
    auto e = c.env;
    e.residual.alpha_rl = a;
    const auto run = harness::run_laps(circuit, e, {harness::ControllerKind::kResidual, policy}, 10,
                                       c.seed);
    per_alpha << " a_rl=" << a << ":";
    if (!run.completed) {
      per_alpha << "incomplete(" << run.laps.size() << ")";
      continue;
    }
    const auto s = harness::lap_statistics(run.laps);
    per_alpha << fmt("%.4f", s.t_mean);
    rows.emplace_back("rlpp_" + fmt("%.2f", a), s);
    if (s.t_mean < best_t) {
      best_t = s.t_mean;
      best_alpha = a;
      harness::export_artifacts(run, *circuit, dir / "eval_rlpp");
    }
  }
  harness::write_results(dir / "results.csv", rows);
  if (best_alpha == 0.0) {
    return {false, "no alpha_rl completed 10 clean laps;" + per_alpha.str()};
  }
  const double gain = harness::improvement(pp.stats.t_mean, best_t);
  return {gain > 0.0, "PP " + fmt("%.4f", pp.stats.t_mean) + " s (d_la " + fmt("%.1f", pp.d_la) +
                          ", alpha_v " + fmt("%.2f", pp.alpha_v) + "), RLPP " + fmt("%.4f", best_t) +
                          " s at alpha_rl " + fmt("%.2f", best_alpha) + ", improvement " +
                          fmt("%.2f", gain) + "% (" + (gain >= 3.0 ? "meets" : "below") +
                          " the 3% target);" + per_alpha.str() + "; " + fmt("%.1f", minutes) + " min"};
}

// 9
Verdict determinism(const fs::path& out) {
  auto c = oval_config();
  c.sac.total_steps = 10000;
  const auto circuit = config::build_circuit(c);
  auto once = [&](const std::string& name) {
    const fs::path dir = out / "determinism" / name;
    fs::remove_all(dir);
    env::RacingEnv env(circuit, c.env, c.seed);
    sac::TrainerOptions opts;
    opts.seed = c.seed;
    opts.out_dir = dir;
    const auto res = sac::train(env, c.sac, opts);
    std::ifstream in(dir / "metrics.csv", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return std::make_pair(ss.str(), res.checkpoint.actor);
  };
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = once("a");
  const auto b = once("b");
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool logs = a.first == b.first;
  const bool params = a.second.size() == b.second.size() &&
                      std::memcmp(a.second.data(), b.second.data(), sizeof(double) * a.second.size()) == 0;
  const long lines = std::count(a.first.begin(), a.first.end(), '\n');
  return {logs && params && lines > 1,
          std::to_string(lines - 1) + " episode rows, logs " + (logs ? "identical" : "DIFFER") +
              ", actor weights " + (params ? "identical" : "DIFFER") + ", " + fmt("%.0f", seconds) +
              " s for both runs"};
}

// 10
Verdict curriculum_stats() {
  auto c = oval_config();
  const auto circuit = config::build_circuit(c);
  env::RacingEnv env(circuit, c.env, 99);
  const double v_prev = 3.0;
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    env.reset(v_prev);
    const double v = env.simulator().state()[dynamics::kVx];
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  const double sigma = c.env.curriculum.v_std;
  // Four standard errors.
  const double tol_mean = 4.0 * sigma / std::sqrt(n);
  const double tol_sd = 4.0 * sigma / std::sqrt(2.0 * n);
  const bool ok = sigma == 0.5 && std::abs(mean - v_prev) < tol_mean && std::abs(sd - sigma) < tol_sd;
  return {ok, "mean " + fmt("%.4f", mean) + " (want 3 +- " + fmt("%.4f", tol_mean) + "), std " +
                  fmt("%.4f", sd) + " (want 0.5 +- " + fmt("%.4f", tol_sd) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only, skip;
  std::string out = (fs::temp_directory_path() / "rlpp_acceptance").string();
  app.add_option("--only", only, "Run just these criteria")->delimiter(',');
  app.add_option("--skip", skip, "Skip these criteria")->delimiter(',');
  app.add_option("--out", out, "Directory for training outputs");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
      {1, metric_formulas},
      {2, observation_shape},
      {3, dynamics_suite},
      {4, frenet_suite},
      {5, gradient_suite},
      {6, reward_suite},
      {7, residual_off},
      {8, [&] { return end_to_end(out); }},
      {9, [&] { return determinism(out); }},
      {10, curriculum_stats},
  };
  const std::set<int> keep(only.begin(), only.end()), drop(skip.begin(), skip.end());
  int failures = 0;
  for (const auto& [id, check] : criteria) {
    if ((!keep.empty() && !keep.count(id)) || drop.count(id)) continue;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::printf("criterion %2d %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  }
  return failures == 0 ? 0 : 1;
}
