#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rlpp/sac/trainer.hpp"

using namespace rlpp;
using namespace rlpp::sac;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<const track::Circuit> oval() {
  auto layout = track::make_oval(10.0, 3.0, 0.75);
  auto raceline = track::centerline_raceline(layout, {});
  return std::make_shared<const track::Circuit>(std::move(layout), std::move(raceline));
}

std::shared_ptr<const track::Circuit> corridor() {
  auto layout = track::make_straight(40.0, 0.75);
  auto raceline = track::centerline_raceline(layout, {});
  return std::make_shared<const track::Circuit>(std::move(layout), std::move(raceline));
}

SacConfig small_sac(long steps) {
  SacConfig cfg;
  cfg.hidden = {64, 64};
  cfg.batch_size = 64;
  cfg.total_steps = steps;
  return cfg;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("rlpp_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("metrics row format") {
  MetricsRow r{10, 2, 1.5, 7, 12.25, 0.5, -0.25, 0.9};
  CHECK(format_metrics(r) == "10,2,1.5,7,12.25,0.5,-0.25,0.90000000000000002");
  CHECK(std::string(metrics_header()) ==
        "step,episode,ep_reward,ep_len,lap_time,critic_loss,actor_loss,alpha");
}

TEST_CASE("checkpoint round trip and integrity errors") {
  env::EnvConfig ecfg;
  ecfg.observation.waypoints = 2;
  env::RacingEnv env(oval(), ecfg, 3);
  const auto res = train(env, small_sac(300), {.seed = 3});
  const auto dir = scratch("ckpt");
  const auto path = dir / "policy.json";
  save_checkpoint(path, res.checkpoint);

  const auto loaded = load_checkpoint(path, env.observation_dim());
  CHECK(loaded.step == 300);
  CHECK(loaded.obs_dim == 17);
  CHECK(std::memcmp(loaded.actor.data(), res.checkpoint.actor.data(),
                    sizeof(double) * loaded.actor.size()) == 0);
  CHECK(std::memcmp(loaded.q2_target.data(), res.checkpoint.q2_target.data(),
                    sizeof(double) * loaded.q2_target.size()) == 0);
  CHECK(std::memcmp(loaded.norm_var.data(), res.checkpoint.norm_var.data(),
                    sizeof(double) * loaded.norm_var.size()) == 0);
  CHECK(loaded.log_alpha == res.checkpoint.log_alpha);

  const DeterministicPolicy a(res.checkpoint), b(loaded);
  const VecX obs = env.reset_at(3.0, 2.0, 0.5);
  const Vec2 ua = a.act(obs), ub = b.act(obs);
  CHECK(std::memcmp(ua.data(), ub.data(), sizeof(double) * 2) == 0);
  CHECK(ua.cwiseAbs().maxCoeff() < 1.0);

  const std::string text = slurp(path);
  {
    std::ofstream out(dir / "truncated.json", std::ios::binary);
    out << text.substr(0, text.size() / 2);
  }
  try {
    load_checkpoint(dir / "truncated.json");
    FAIL("truncated checkpoint accepted");
  } catch (const CheckpointError& e) {
    CHECK(e.kind == CheckpointError::Kind::Checksum);
  }

  auto tampered = nlohmann::json::parse(text);
  tampered["step"] = 301;
  {
    std::ofstream out(dir / "tampered.json", std::ios::binary);
    out << tampered.dump();
  }
  try {
    load_checkpoint(dir / "tampered.json");
    FAIL("tampered checkpoint accepted");
  } catch (const CheckpointError& e) {
    CHECK(e.kind == CheckpointError::Kind::Checksum);
  }

  PolicyCheckpoint future = loaded;
  future.version = 99;
  save_checkpoint(dir / "future.json", future);
  try {
    load_checkpoint(dir / "future.json");
    FAIL("future version accepted");
  } catch (const CheckpointError& e) {
    CHECK(e.kind == CheckpointError::Kind::Version);
  }

  try {
    load_checkpoint(path, 125);
    FAIL("dimension mismatch accepted");
  } catch (const CheckpointError& e) {
    CHECK(e.kind == CheckpointError::Kind::Dimension);
  }
  fs::remove_all(dir);
}

TEST_CASE("seeded training runs produce identical metrics logs") {
  auto run = [](const fs::path& dir) {
    env::EnvConfig ecfg;
    ecfg.max_steps = 150;
    env::RacingEnv env(oval(), ecfg, 7);
    TrainerOptions opts;
    opts.seed = 7;
    opts.out_dir = dir;
    auto cfg = small_sac(1000);
    train(env, cfg, opts);
    return slurp(dir / "metrics.csv");
  };
  const auto a = run(scratch("det_a"));
  const auto b = run(scratch("det_b"));
  CHECK(a.size() > std::string(metrics_header()).size() + 1);
  CHECK(a == b);
  fs::remove_all(fs::temp_directory_path() / "rlpp_test_det_a");
  fs::remove_all(fs::temp_directory_path() / "rlpp_test_det_b");
}

TEST_CASE("learning smoke test on a straight corridor") {
  env::EnvConfig ecfg;
  ecfg.residual.alpha_rl = 1.0;
  ecfg.max_steps = 200;
  env::RacingEnv env(corridor(), ecfg, 5);
  const auto res = train(env, small_sac(20000), {.seed = 5});
  double early = 0.0, late = 0.0;
  int n_early = 0, n_late = 0;
  for (const auto& m : res.metrics) {
    CHECK(std::isfinite(m.alpha));
    CHECK(m.alpha > 0.0);
    const double per_step = m.ep_reward / static_cast<double>(m.ep_len);
    if (m.step <= 1000) {
      early += per_step;
      ++n_early;
    } else if (m.step > 15000) {
      late += per_step;
      ++n_late;
    }
  }
  REQUIRE(n_early > 0);
  REQUIRE(n_late > 0);
  MESSAGE("mean reward per step: first 1k " << early / n_early << ", last 5k " << late / n_late);
  CHECK(late / n_late > early / n_early);
}

TEST_CASE("failures flush a checkpoint") {
  env::EnvConfig ecfg;
  ecfg.observation.waypoints = 2;
  ecfg.max_steps = 5;
  const auto dir = scratch("fail");
  TrainerOptions opts;
  opts.seed = 1;
  opts.out_dir = dir;
  opts.on_episode = [](const MetricsRow&) { throw std::runtime_error("stop"); };
  env::RacingEnv short_env(oval(), ecfg, 1);
  CHECK_THROWS_AS(train(short_env, small_sac(100), opts), std::runtime_error);
  CHECK(fs::exists(dir / "checkpoint_failure.json"));
  CHECK_NOTHROW(load_checkpoint(dir / "checkpoint_failure.json"));
  fs::remove_all(dir);
}
