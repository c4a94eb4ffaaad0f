#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rlpp/env.hpp"
#include "rlpp/sac/checkpoint.hpp"

namespace rlpp::harness {

struct LapRecord {
  int index = 0;
  double lap_time = 0.0;
  std::vector<env::TelemetryRow> telemetry;
  bool violation = false;  // collision or simulator failure during the lap
  double mean_abs_d = 0.0;
  std::vector<double> cpu_seconds;  // one entry per control invocation
};

struct LapStats {
  double t_mean = 0.0;
  double t_std = 0.0;
  double t_min = 0.0;
  double t_max = 0.0;
  double d_mean = 0.0;
  double d_std = 0.0;
  double cpu_mean = 0.0;  // [s]
  double cpu_std = 0.0;   // [s]
  int laps = 0;
  int violations = 0;
};

enum class ControllerKind { kPurePursuit, kResidual };

struct ControllerSpec {
  ControllerKind kind = ControllerKind::kPurePursuit;
  std::shared_ptr<const sac::DeterministicPolicy> policy;  // required for kResidual

  std::string name() const { return kind == ControllerKind::kPurePursuit ? "pp" : "rlpp"; }
};

ControllerKind parse_controller(const std::string& name);

struct EvalOptions {
  double start_s = 0.0;
  // Initial longitudinal speed; negative selects alpha_v * v_ref(start_s).
  double start_vx = -1.0;
  bool randomize_friction = false;
  int max_steps_per_lap = 4000;
};

struct RunResult {
  std::vector<LapRecord> laps;  // complete laps, then the partial lap if any
  bool completed = false;       // all requested laps finished without violation
  int requested = 0;
  long steps = 0;
  double total_time = 0.0;  // simulated seconds until the last step
};

/// Rolls the controller out from a fixed start until `n_laps` laps are
/// complete or the car leaves the track. Lap boundaries are the crossings of
/// multiples of the raceline length by the unwrapped arc position, with time
/// interpolated linearly inside the crossing step.
RunResult run_laps(std::shared_ptr<const track::Circuit> circuit, env::EnvConfig cfg,
                   const ControllerSpec& controller, int n_laps, std::uint64_t seed,
                   const EvalOptions& opts = {});

/// Statistics over the complete laps. Throws ValidationError on empty input.
LapStats lap_statistics(const std::vector<LapRecord>& records, bool sample_std = false);

double improvement(double t_a, double t_b);
double sim_gap(double t_sim, double t_real);
double gap_closure(double base, double next, double ref);

struct Comparison {
  double improvement = 0.0;
  std::optional<double> gap_closure;
};
Comparison compare_metrics(const LapStats& a, const LapStats& b,
                           const std::optional<LapStats>& ref = std::nullopt);

const char* results_header();
std::string format_results_row(const std::string& controller, const LapStats& s);
void write_results(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, LapStats>>& rows);
std::vector<std::pair<std::string, LapStats>> read_results(const std::filesystem::path& path);

/// lap_XX.csv telemetry per lap, laps.csv summary, controller_cpu.csv,
/// trajectory.svg and velocity.svg.
void export_artifacts(const RunResult& run, const track::Circuit& circuit,
                      const std::filesystem::path& out_dir);

}  // namespace rlpp::harness
