#include "rlpp/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <optional>
#include <thread>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "rlpp/config.hpp"
#include "rlpp/harness.hpp"
#include "rlpp/sac/trainer.hpp"

namespace rlpp::cli {

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> track;
  std::optional<std::string> raceline;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> d_la;
  std::optional<double> alpha_v;
  std::optional<double> alpha_rl;
  std::optional<long> steps;
};

void add_common(CLI::App* sub, Overrides& o, bool controller) {
  sub->add_option("--config", o.config, "Run configuration file");
  sub->add_option("--track", o.track, "Track CSV (overrides the config)");
  sub->add_option("--raceline", o.raceline, "Raceline CSV or 'generate'");
  sub->add_option("--seed", o.seed, "Random seed");
  sub->add_option("--out", o.out, "Output directory");
  if (controller) {
    sub->add_option("--d-la", o.d_la, "Pure Pursuit lookahead [m]");
    sub->add_option("--alpha-v", o.alpha_v, "Pure Pursuit velocity gain");
    sub->add_option("--alpha-rl", o.alpha_rl, "Residual scaling");
  }
}

config::RunConfig resolve(const Overrides& o) {
  config::RunConfig c = o.config.empty() ? config::RunConfig{} : config::load_config(o.config);
  if (o.track) c.track = *o.track;
  if (o.raceline) c.raceline = *o.raceline;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.d_la) c.env.pp.d_la = *o.d_la;
  if (o.alpha_v) c.env.pp.alpha_v = *o.alpha_v;
  if (o.alpha_rl) c.env.residual.alpha_rl = *o.alpha_rl;
  if (o.steps) c.sac.total_steps = *o.steps;
  c.validate();
  return c;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

int track_check(const config::RunConfig& c, std::ostream& out) {
  const auto circuit = config::build_circuit(c);
  const auto& t = circuit->track();
  const auto& r = circuit->raceline();
  double vmin = 1e300, vmax = 0.0;
  for (const auto& p : r.points()) {
    vmin = std::min(vmin, p.v_ref);
    vmax = std::max(vmax, p.v_ref);
  }
  out << "track " << c.track << ": " << t.points().size() << " points, length "
      << fmt("%.4f", t.total_length()) << " m, " << (t.closed() ? "closed" : "open")
      << ", min half-width " << fmt("%.4f", t.min_half_width()) << " m\n";
  out << "raceline " << c.raceline << ": " << r.points().size() << " points, length "
      << fmt("%.4f", r.total_length()) << " m, v_ref " << fmt("%.3f", vmin) << ".."
      << fmt("%.3f", vmax) << " m/s\n";
  out << "ok\n";
  return kOk;
}

int track_profile(const config::RunConfig& c, std::ostream& out) {
  const auto layout = track::load_track(c.track);
  const auto line = track::centerline_raceline(layout, c.limits);
  const fs::path dir = c.out;
  fs::create_directories(dir);
  track::write_raceline(dir / "raceline.csv", line);
  config::write_effective_config(c, dir);
  const auto& pts = line.points();
  double t = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double s_next = i + 1 < pts.size() ? pts[i + 1].s : line.total_length();
    const double v_next = i + 1 < pts.size() ? pts[i + 1].v_ref : pts.front().v_ref;
    t += 2.0 * (s_next - pts[i].s) / (pts[i].v_ref + v_next);
  }
  out << "profile written to " << (dir / "raceline.csv").string() << "; ideal lap time "
      << fmt("%.4f", t) << " s\n";
  return kOk;
}

int train(const config::RunConfig& c, std::ostream& out) {
  const auto circuit = config::build_circuit(c);
  env::RacingEnv env(circuit, c.env, c.seed);
  const fs::path dir = c.out;
  config::write_effective_config(c, dir);
  sac::TrainerOptions opts;
  opts.seed = c.seed;
  opts.out_dir = dir;
  opts.checkpoint_every = c.checkpoint_every;
  opts.env_config = config::to_json(c);
  opts.config_digest = config::digest(c);
  const auto res = sac::train(env, c.sac, opts);
  out << "trained " << res.checkpoint.step << " steps over " << res.metrics.size()
      << " episodes; policy written to " << (dir / "policy.json").string() << '\n';
  return kOk;
}

harness::ControllerSpec controller_spec(const std::string& name, const std::string& checkpoint,
                                        const config::RunConfig& c) {
  harness::ControllerSpec spec;
  spec.kind = harness::parse_controller(name);
  if (spec.kind == harness::ControllerKind::kResidual) {
    if (checkpoint.empty()) throw ValidationError("controller rlpp needs --checkpoint");
    const auto ckpt = sac::load_checkpoint(checkpoint, c.env.observation.dimension());
    if (!ckpt.config_digest.empty() && ckpt.config_digest != config::digest(c)) {
      spdlog::debug("checkpoint was trained under config digest {}", ckpt.config_digest);
    }
    spec.policy = std::make_shared<const sac::DeterministicPolicy>(ckpt);
  }
  return spec;
}

harness::EvalOptions eval_options(const config::RunConfig& c, bool randomize) {
  harness::EvalOptions o;
  o.start_s = c.eval.start_s;
  o.start_vx = c.eval.start_vx;
  o.max_steps_per_lap = c.eval.max_steps_per_lap;
  o.randomize_friction = randomize;
  return o;
}

void report(const std::string& name, const harness::RunResult& run, const fs::path& dir,
            std::ostream& out) {
  if (!run.completed) {
    out << name << ": partial run, " << run.laps.size() << " lap(s) recorded of " << run.requested
        << (run.laps.empty() || !run.laps.back().violation ? "" : ", ended by a violation")
        << '\n';
  }
  const auto s = harness::lap_statistics(run.laps);
  harness::write_results(dir / "results.csv", {{name, s}});
  out << name << ": " << s.laps << " laps, mean " << fmt("%.4f", s.t_mean) << " s, std "
      << fmt("%.4f", s.t_std) << " s, mean |d| " << fmt("%.4f", s.d_mean) << " m, violations "
      << s.violations << "; results in " << (dir / "results.csv").string() << '\n';
}

int eval(const config::RunConfig& c, const std::string& controller, const std::string& checkpoint,
         std::optional<int> laps, int parallel, bool randomize, std::ostream& out) {
  if (parallel < 1) throw ValidationError("--parallel must be >= 1");
  const int n_laps = laps.value_or(c.eval.laps);
  const auto circuit = config::build_circuit(c);
  const auto spec = controller_spec(controller, checkpoint, c);
  const auto opts = eval_options(c, randomize);

  std::vector<harness::RunResult> runs(parallel);
  std::vector<std::exception_ptr> errors(parallel);
  auto work = [&](int k) {
    try {
      runs[k] = harness::run_laps(circuit, c.env, spec, n_laps, c.seed + k, opts);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  if (parallel == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < parallel; ++k) pool.emplace_back(work, k);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  bool all_complete = true;
  for (int k = 0; k < parallel; ++k) {
    auto rc = c;
    rc.seed = c.seed + k;
    const fs::path dir = parallel == 1 ? fs::path(c.out) : fs::path(c.out) / ("seed_" + std::to_string(rc.seed));
    config::write_effective_config(rc, dir);
    report(spec.name(), runs[k], dir, out);
    all_complete = all_complete && runs[k].completed;
  }
  return all_complete ? kOk : kRuntimeFailure;
}

int export_run(const config::RunConfig& c, const std::string& controller,
               const std::string& checkpoint, std::optional<int> laps, std::ostream& out) {
  const auto circuit = config::build_circuit(c);
  const auto spec = controller_spec(controller, checkpoint, c);
  const auto run = harness::run_laps(circuit, c.env, spec, laps.value_or(c.eval.laps), c.seed,
                                     eval_options(c, false));
  const fs::path dir = c.out;
  harness::export_artifacts(run, *circuit, dir);
  config::write_effective_config(c, dir);
  out << "exported " << run.laps.size() << " lap(s) to " << dir.string() << '\n';
  if (!run.laps.empty() && run.laps.front().lap_time > 0.0) report(spec.name(), run, dir, out);
  return run.completed ? kOk : kRuntimeFailure;
}

int compare(const std::string& a, const std::string& b, const std::string& ref,
            std::ostream& out) {
  const auto ra = harness::read_results(a).front();
  const auto rb = harness::read_results(b).front();
  std::optional<harness::LapStats> rr;
  if (!ref.empty()) rr = harness::read_results(ref).front().second;
  const auto cmp = harness::compare_metrics(ra.second, rb.second, rr);
  out << ra.first << " " << fmt("%.4f", ra.second.t_mean) << " s -> " << rb.first << " "
      << fmt("%.4f", rb.second.t_mean) << " s: improvement " << fmt("%.2f", cmp.improvement)
      << "%\n";
  if (cmp.gap_closure) {
    out << "gap closure to reference " << fmt("%.4f", rr->t_mean) << " s: "
        << fmt("%.2f", *cmp.gap_closure) << "%\n";
  }
  return kOk;
}

void configure_logging() {
  const char* level = std::getenv("RLPP_LOG");
  if (!level) return;
  const auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && std::string(level) != "off") {
    throw ValidationError(std::string("RLPP_LOG has unknown level '") + level + "'");
  }
  spdlog::set_level(lvl);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Residual reinforcement learning racing lab", "rlpp"};
  app.require_subcommand(1);

  Overrides check_o, profile_o, train_o, eval_o, export_o;
  auto* track = app.add_subcommand("track", "Inspect track and raceline files");
  track->require_subcommand(1);
  auto* check = track->add_subcommand("check", "Validate files and print a geometry summary");
  add_common(check, check_o, false);
  auto* profile = track->add_subcommand("profile", "Generate a centerline velocity profile");
  add_common(profile, profile_o, false);

  auto* train_cmd = app.add_subcommand("train", "Train the residual policy with SAC");
  add_common(train_cmd, train_o, true);
  train_cmd->add_option("--steps", train_o.steps, "Environment steps");

  std::string controller = "pp", checkpoint;
  std::optional<int> laps;
  int parallel = 1;
  bool randomize = false;
  auto* eval_cmd = app.add_subcommand("eval", "Run laps and write lap statistics");
  add_common(eval_cmd, eval_o, true);
  eval_cmd->add_option("--controller", controller, "pp or rlpp");
  eval_cmd->add_option("--checkpoint", checkpoint, "Policy checkpoint for rlpp");
  eval_cmd->add_option("--laps", laps, "Number of laps");
  eval_cmd->add_option("--parallel", parallel, "Independent seeds evaluated concurrently");
  eval_cmd->add_flag("--randomize-friction", randomize, "Draw the friction coefficient per run");

  auto* export_cmd = app.add_subcommand("export", "Run laps and render telemetry artifacts");
  add_common(export_cmd, export_o, true);
  export_cmd->add_option("--controller", controller, "pp or rlpp");
  export_cmd->add_option("--checkpoint", checkpoint, "Policy checkpoint for rlpp");
  export_cmd->add_option("--laps", laps, "Number of laps");

  std::string cmp_a, cmp_b, cmp_ref;
  auto* compare_cmd = app.add_subcommand("compare", "Compare two results tables");
  compare_cmd->add_option("--a", cmp_a, "Baseline results CSV")->required();
  compare_cmd->add_option("--b", cmp_b, "Candidate results CSV")->required();
  compare_cmd->add_option("--ref", cmp_ref, "Reference results CSV for gap closure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kParseFailure;
  }

  try {
    configure_logging();
    if (check->parsed()) return track_check(resolve(check_o), out);
    if (profile->parsed()) return track_profile(resolve(profile_o), out);
    if (train_cmd->parsed()) return train(resolve(train_o), out);
    if (eval_cmd->parsed()) {
      return eval(resolve(eval_o), controller, checkpoint, laps, parallel, randomize, out);
    }
    if (export_cmd->parsed()) return export_run(resolve(export_o), controller, checkpoint, laps, out);
    if (compare_cmd->parsed()) return compare(cmp_a, cmp_b, cmp_ref, out);
  } catch (const rlpp::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kParseFailure;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const sac::CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kParseFailure;
}

}  // namespace rlpp::cli
