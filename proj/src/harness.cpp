#include "rlpp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace rlpp::harness {

ControllerKind parse_controller(const std::string& name) {
  if (name == "pp") return ControllerKind::kPurePursuit;
  if (name == "rlpp") return ControllerKind::kResidual;
  throw ValidationError("unknown controller '" + name + "' (expected pp or rlpp)");
}

RunResult run_laps(std::shared_ptr<const track::Circuit> circuit, env::EnvConfig cfg,
                   const ControllerSpec& controller, int n_laps, std::uint64_t seed,
                   const EvalOptions& opts) {
  if (n_laps < 1) throw ValidationError("number of laps must be >= 1");
  const bool residual = controller.kind == ControllerKind::kResidual;
  if (residual && !controller.policy) throw ValidationError("rlpp evaluation needs a checkpoint");
  if (!residual) cfg.residual.alpha_rl = 0.0;
  cfg.randomize_friction = false;
  cfg.max_steps = n_laps * opts.max_steps_per_lap;

  env::RacingEnv env(circuit, cfg, seed);
  if (residual && controller.policy->obs_dim() != env.observation_dim()) {
    throw ValidationError("checkpoint observation dimension does not match the environment");
  }
  const double mu = opts.randomize_friction
                        ? dynamics::randomize_friction(cfg.friction, env.rng())
                        : cfg.friction.mu_nominal;
  const double vx0 = opts.start_vx >= 0.0
                         ? opts.start_vx
                         : cfg.pp.alpha_v * circuit->raceline().query(opts.start_s).v_ref;
  VecX obs = env.reset_at(opts.start_s, vx0, mu);

  RunResult out;
  out.requested = n_laps;
  LapRecord lap;
  auto close_lap = [&](LapRecord& rec) {
    double sum = 0.0;
    for (const auto& row : rec.telemetry) sum += std::abs(row.d);
    rec.mean_abs_d = rec.telemetry.empty() ? 0.0 : sum / static_cast<double>(rec.telemetry.size());
    out.laps.push_back(std::move(rec));
  };

  while (true) {
    const auto t0 = std::chrono::steady_clock::now();
    const Vec2 action = residual ? controller.policy->act(obs) : Vec2::Zero();
    const double policy_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto r = env.step(action);
    ++out.steps;
    out.total_time = static_cast<double>(out.steps) * cfg.dt_ctrl;
    lap.cpu_seconds.push_back(policy_seconds + r.info.controller_seconds);
    if (!r.info.sim_error) lap.telemetry.push_back(r.info.telemetry);

    if (r.terminated) {
      lap.violation = true;
      lap.lap_time = 0.0;
      close_lap(lap);
      break;
    }
    if (r.info.lap_completed) {
      lap.lap_time = r.info.lap_time;
      const int next = lap.index + 1;
      close_lap(lap);
      lap = LapRecord{};
      lap.index = next;
      if (next == n_laps) {
        out.completed = true;
        break;
      }
    }
    if (r.truncated) {
      close_lap(lap);
      break;
    }
    obs = r.observation;
  }
  return out;
}

namespace {

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

Moments moments(const std::vector<double>& xs, bool sample) {
  Moments m;
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  const double denom = sample && xs.size() > 1 ? static_cast<double>(xs.size() - 1)
                                               : static_cast<double>(xs.size());
  m.std = std::sqrt(ss / denom);
  return m;
}

}  // namespace

LapStats lap_statistics(const std::vector<LapRecord>& records, bool sample_std) {
  std::vector<double> times, devs, cpu;
  LapStats s;
  for (const auto& r : records) {
    if (r.violation) {
      ++s.violations;
      continue;
    }
    if (!(r.lap_time > 0.0)) continue;  // partial lap without a crossing
    times.push_back(r.lap_time);
    for (const auto& row : r.telemetry) devs.push_back(std::abs(row.d));
    cpu.insert(cpu.end(), r.cpu_seconds.begin(), r.cpu_seconds.end());
  }
  if (times.empty()) throw ValidationError("lap statistics need at least one complete lap");
  const auto t = moments(times, sample_std);
  const auto d = moments(devs, sample_std);
  const auto c = moments(cpu, sample_std);
  s.t_mean = t.mean;
  s.t_std = t.std;
  s.t_min = *std::min_element(times.begin(), times.end());
  s.t_max = *std::max_element(times.begin(), times.end());
  s.d_mean = d.mean;
  s.d_std = d.std;
  s.cpu_mean = c.mean;
  s.cpu_std = c.std;
  s.laps = static_cast<int>(times.size());
  return s;
}

double improvement(double t_a, double t_b) {
  if (!(t_a > 0.0) || !(t_b > 0.0)) throw ValidationError("lap times must be positive");
  return (t_a - t_b) / t_a * 100.0;
}

double sim_gap(double t_sim, double t_real) {
  if (!(t_sim > 0.0) || !(t_real > 0.0)) throw ValidationError("lap times must be positive");
  return std::abs(t_sim - t_real) / t_real * 100.0;
}

double gap_closure(double base, double next, double ref) {
  if (!(base > 0.0) || !(next > 0.0) || !(ref > 0.0)) {
    throw ValidationError("lap times must be positive");
  }
  if (base <= ref) throw ValidationError("gap closure needs base slower than the reference");
  return ((base - ref) - (next - ref)) / (base - ref) * 100.0;
}

Comparison compare_metrics(const LapStats& a, const LapStats& b, const std::optional<LapStats>& ref) {
  Comparison c;
  c.improvement = improvement(a.t_mean, b.t_mean);
  if (ref) c.gap_closure = gap_closure(a.t_mean, b.t_mean, ref->t_mean);
  return c;
}

const char* results_header() {
  return "controller,t_mean,t_std,t_min,t_max,d_mean,d_std,cpu_mean_ms,cpu_std_ms,laps,violations";
}

std::string format_results_row(const std::string& controller, const LapStats& s) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d",
                controller.c_str(), s.t_mean, s.t_std, s.t_min, s.t_max, s.d_mean, s.d_std,
                s.cpu_mean * 1e3, s.cpu_std * 1e3, s.laps, s.violations);
  return buf;
}

void write_results(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, LapStats>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << results_header() << '\n';
  for (const auto& [name, s] : rows) out << format_results_row(name, s) << '\n';
}

std::vector<std::pair<std::string, LapStats>> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read results file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != results_header()) {
    throw ParseError("results file " + path.string() + " has an unexpected header");
  }
  std::vector<std::pair<std::string, LapStats>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 11) throw ParseError("malformed results row in " + path.string() + ": " + line);
    LapStats s;
    try {
      s.t_mean = std::stod(f[1]);
      s.t_std = std::stod(f[2]);
      s.t_min = std::stod(f[3]);
      s.t_max = std::stod(f[4]);
      s.d_mean = std::stod(f[5]);
      s.d_std = std::stod(f[6]);
      s.cpu_mean = std::stod(f[7]) / 1e3;
      s.cpu_std = std::stod(f[8]) / 1e3;
      s.laps = std::stoi(f[9]);
      s.violations = std::stoi(f[10]);
    } catch (const std::exception&) {
      throw ParseError("malformed number in results row: " + line);
    }
    rows.emplace_back(f[0], s);
  }
  if (rows.empty()) throw ValidationError("results file " + path.string() + " has no rows");
  return rows;
}

namespace {

struct Frame {
  double min_x, min_y, scale, height;
  std::string pt(double x, double y) const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f", (x - min_x) * scale + 20.0,
                  height - ((y - min_y) * scale + 20.0));
    return buf;
  }
};

std::string polyline(const std::vector<std::string>& pts, const char* cls, const char* style) {
  std::string s = std::string("<polyline class=\"") + cls + "\" style=\"" + style + "\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) s += ' ';
    s += pts[i];
  }
  return s + "\"/>\n";
}

void write_trajectory_svg(const RunResult& run, const track::Circuit& circuit,
                          const std::filesystem::path& path) {
  const auto& track = circuit.track();
  std::vector<Vec2> left, right;
  for (const auto& p : track.points()) {
    const Vec2 n(-std::sin(p.psi), std::cos(p.psi));
    left.push_back(Vec2(p.x, p.y) + p.w_left * n);
    right.push_back(Vec2(p.x, p.y) - p.w_right * n);
  }
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (const auto* side : {&left, &right}) {
    for (const auto& q : *side) {
      min_x = std::min(min_x, q.x());
      max_x = std::max(max_x, q.x());
      min_y = std::min(min_y, q.y());
      max_y = std::max(max_y, q.y());
    }
  }
  const double scale = 800.0 / std::max(max_x - min_x, max_y - min_y);
  const double width = (max_x - min_x) * scale + 40.0;
  const double height = (max_y - min_y) * scale + 40.0;
  const Frame f{min_x, min_y, scale, height};

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char head[256];
  std::snprintf(head, sizeof(head),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n",
                width, height);
  out << head;
  for (const auto* side : {&left, &right}) {
    std::vector<std::string> pts;
    for (const auto& q : *side) pts.push_back(f.pt(q.x(), q.y()));
    if (track.closed()) pts.push_back(pts.front());
    out << polyline(pts, "bound", "fill:none;stroke:#000;stroke-width:1.5");
  }
  std::vector<std::string> ref;
  for (const auto& p : circuit.raceline().points()) ref.push_back(f.pt(p.x, p.y));
  if (circuit.raceline().closed()) ref.push_back(ref.front());
  out << polyline(ref, "raceline", "fill:none;stroke:#777;stroke-width:1;stroke-dasharray:6,4");
  for (const auto& lap : run.laps) {
    std::vector<std::string> pts;
    for (const auto& row : lap.telemetry) pts.push_back(f.pt(row.x, row.y));
    out << polyline(pts, "driven", lap.violation ? "fill:none;stroke:#d00;stroke-width:1"
                                                 : "fill:none;stroke:#06c;stroke-width:1");
  }
  out << "</svg>\n";
}

void write_velocity_svg(const RunResult& run, const track::Circuit& circuit,
                        const std::filesystem::path& path) {
  const double L = circuit.length();
  double v_max = 0.0;
  for (const auto& p : circuit.raceline().points()) v_max = std::max(v_max, p.v_ref);
  for (const auto& lap : run.laps)
    for (const auto& row : lap.telemetry) v_max = std::max(v_max, row.vx);
  v_max = std::max(v_max, 1e-3) * 1.1;
  const double w = 900.0, h = 400.0, pad = 40.0;
  auto pt = [&](double s, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f", pad + s / L * (w - 2 * pad),
                  h - pad - v / v_max * (h - 2 * pad));
    return std::string(buf);
  };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"400\">\n";
  out << polyline({pt(0, 0), pt(L, 0)}, "axis", "stroke:#000");
  out << polyline({pt(0, 0), pt(0, v_max)}, "axis", "stroke:#000");
  std::vector<std::string> ref;
  for (const auto& p : circuit.raceline().points()) ref.push_back(pt(p.s, p.v_ref));
  out << polyline(ref, "v_ref", "fill:none;stroke:#777;stroke-dasharray:6,4");
  for (const auto& lap : run.laps) {
    std::vector<std::string> pts;
    double prev = -1.0, offset = 0.0;
    for (const auto& row : lap.telemetry) {
      if (prev >= 0.0 && row.s + offset < prev - 0.5 * L) offset += L;
      const double s = row.s + offset;
      prev = s;
      pts.push_back(pt(std::min(s, L), row.vx));
    }
    out << polyline(pts, "driven", "fill:none;stroke:#06c;stroke-width:1");
  }
  out << "</svg>\n";
}

}  // namespace

void export_artifacts(const RunResult& run, const track::Circuit& circuit,
                      const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream summary(out_dir / "laps.csv");
  std::ofstream cpu(out_dir / "controller_cpu.csv");
  if (!summary || !cpu) throw std::runtime_error("cannot write into " + out_dir.string());
  summary << "lap,lap_time,violation,steps,mean_abs_d\n";
  cpu << "lap,step,cpu_s\n";
  for (const auto& lap : run.laps) {
    char name[32];
    std::snprintf(name, sizeof(name), "lap_%02d.csv", lap.index);
    env::TelemetryWriter writer(out_dir / name);
    for (const auto& row : lap.telemetry) writer.write(row);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%d,%zu,%.17g\n", lap.index, lap.lap_time,
                  lap.violation ? 1 : 0, lap.telemetry.size(), lap.mean_abs_d);
    summary << buf;
    for (std::size_t k = 0; k < lap.cpu_seconds.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%d,%zu,%.17g\n", lap.index, k, lap.cpu_seconds[k]);
      cpu << buf;
    }
  }
  write_trajectory_svg(run, circuit, out_dir / "trajectory.svg");
  write_velocity_svg(run, circuit, out_dir / "velocity.svg");
}

}  // namespace rlpp::harness
