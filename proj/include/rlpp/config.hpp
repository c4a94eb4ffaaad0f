#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "json.hpp"
#include "rlpp/env.hpp"
#include "rlpp/sac/sac.hpp"

namespace rlpp::config {

struct EvalSettings {
  int laps = 10;
  double start_s = 0.0;
  double start_vx = -1.0;  // negative: alpha_v * v_ref at the start
  int max_steps_per_lap = 4000;
};

struct RunConfig {
  std::string track;                // corridor CSV
  std::string raceline = "generate";  // raceline CSV, or generated on the centerline
  track::VelocityLimits limits;
  env::EnvConfig env;
  sac::SacConfig sac;
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  long checkpoint_every = 0;
  EvalSettings eval;

  /// Range checks plus existence of the referenced files.
  void validate() const;
};

/// Sections become nested objects; `[a.b]` nests twice. Supports strings,
/// integers, floats, booleans and flat arrays. Throws ParseError with a line
/// number.
nlohmann::json parse_toml(const std::string& text);

/// Unknown keys and type mismatches throw ParseError. Missing keys keep
/// their defaults.
RunConfig from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

/// Reads a config file; relative file references resolve against its folder.
RunConfig load_config(const std::filesystem::path& path);

std::string digest(const RunConfig& c);
void write_effective_config(const RunConfig& c, const std::filesystem::path& dir);

std::shared_ptr<const track::Circuit> build_circuit(const RunConfig& c);

}  // namespace rlpp::config
