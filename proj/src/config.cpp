#include "rlpp/config.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>
#include <vector>

namespace rlpp::config {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename E>
struct EnumRef {
  E* value;
  std::vector<std::pair<E, const char*>> names;
};

using Ref = std::variant<double*, int*, long*, bool*, std::string*, std::vector<int>*,
                         std::uint64_t*, EnumRef<env::PenaltyGating>, EnumRef<env::SpeedMeasure>>;

struct Field {
  std::string section;  // dotted, empty for top level
  std::string key;
  Ref ref;
  std::string path() const { return section.empty() ? key : section + "." + key; }
};

std::vector<Field> fields(RunConfig& c) {
  auto& e = c.env;
  auto& v = e.vehicle;
  auto& s = c.sac;
  return {
      {"", "track", &c.track},
      {"", "raceline", &c.raceline},
      {"", "seed", &c.seed},
      {"", "out", &c.out},
      {"velocity_profile", "a_lat_max", &c.limits.a_lat_max},
      {"velocity_profile", "a_lon_max", &c.limits.a_lon_max},
      {"velocity_profile", "a_brake_max", &c.limits.a_brake_max},
      {"velocity_profile", "v_cap", &c.limits.v_cap},
      {"vehicle", "m", &v.params.m},
      {"vehicle", "Iz", &v.params.Iz},
      {"vehicle", "lf", &v.params.lf},
      {"vehicle", "lr", &v.params.lr},
      {"vehicle", "g", &v.params.g},
      {"tire.front", "B", &v.tires.front.B},
      {"tire.front", "C", &v.tires.front.C},
      {"tire.front", "D", &v.tires.front.D},
      {"tire.front", "E", &v.tires.front.E},
      {"tire.rear", "B", &v.tires.rear.B},
      {"tire.rear", "C", &v.tires.rear.C},
      {"tire.rear", "D", &v.tires.rear.D},
      {"tire.rear", "E", &v.tires.rear.E},
      {"actuator", "delta_max", &v.limits.delta_max},
      {"actuator", "delta_rate_max", &v.limits.delta_rate_max},
      {"actuator", "a_max", &v.limits.a_max},
      {"actuator", "a_brake_max", &v.limits.a_brake_max},
      {"actuator", "v_max", &v.limits.v_max},
      {"actuator", "kp_speed", &v.limits.kp_speed},
      {"actuator", "v_blend_lo", &v.limits.v_blend_lo},
      {"actuator", "v_blend_hi", &v.limits.v_blend_hi},
      {"friction", "mu_nominal", &e.friction.mu_nominal},
      {"friction", "sigma", &e.friction.sigma},
      {"friction", "mu_min", &e.friction.mu_min},
      {"friction", "mu_max", &e.friction.mu_max},
      {"friction", "randomize", &e.randomize_friction},
      {"pp", "d_la", &e.pp.d_la},
      {"pp", "alpha_v", &e.pp.alpha_v},
      {"residual", "alpha_rl", &e.residual.alpha_rl},
      {"residual", "c_delta", &e.residual.c_delta},
      {"residual", "c_v", &e.residual.c_v},
      {"observation", "waypoints", &e.observation.waypoints},
      {"observation", "spacing", &e.observation.spacing},
      {"reward", "alpha_dev", &e.reward.alpha_dev},
      {"reward", "tau_dev", &e.reward.tau_dev},
      {"reward", "alpha_heading", &e.reward.alpha_heading},
      {"reward", "tau_psi", &e.reward.tau_psi},
      {"reward", "psi_max", &e.reward.psi_max},
      {"reward", "v_max", &e.reward.v_max},
      {"reward", "t_sim", &e.reward.t_sim},
      {"reward", "gating",
       EnumRef<env::PenaltyGating>{&e.reward.gating,
                                   {{env::PenaltyGating::kMagnitude, "magnitude"},
                                    {env::PenaltyGating::kIndicator, "indicator"}}}},
      {"reward", "speed",
       EnumRef<env::SpeedMeasure>{&e.reward.speed,
                                  {{env::SpeedMeasure::kMagnitude, "magnitude"},
                                   {env::SpeedMeasure::kLongitudinal, "longitudinal"}}}},
      {"curriculum", "enabled", &e.curriculum.enabled},
      {"curriculum", "v_warmstart", &e.curriculum.v_warmstart},
      {"curriculum", "v_std", &e.curriculum.v_std},
      {"env", "dt_ctrl", &e.dt_ctrl},
      {"env", "dt_phys", &e.dt_phys},
      {"env", "max_steps", &e.max_steps},
      {"env", "car_radius", &e.car_radius},
      {"sac", "lr", &s.lr},
      {"sac", "gamma", &s.gamma},
      {"sac", "tau", &s.tau},
      {"sac", "batch_size", &s.batch_size},
      {"sac", "target_entropy", &s.target_entropy},
      {"sac", "learning_starts", &s.learning_starts},
      {"sac", "train_freq", &s.train_freq},
      {"sac", "gradient_steps", &s.gradient_steps},
      {"sac", "total_steps", &s.total_steps},
      {"sac", "buffer_capacity", &s.buffer_capacity},
      {"sac", "hidden", &s.hidden},
      {"sac", "initial_alpha", &s.initial_alpha},
      {"sac", "log_std_min", &s.log_std_min},
      {"sac", "log_std_max", &s.log_std_max},
      {"sac", "last_layer_scale", &s.last_layer_scale},
      {"sac", "normalize_observations", &s.normalize_observations},
      {"sac", "precision", &s.precision},
      {"train", "checkpoint_every", &c.checkpoint_every},
      {"eval", "laps", &c.eval.laps},
      {"eval", "start_s", &c.eval.start_s},
      {"eval", "start_vx", &c.eval.start_vx},
      {"eval", "max_steps_per_lap", &c.eval.max_steps_per_lap},
  };
}

json::json_pointer pointer(const Field& f) {
  std::string p;
  std::stringstream ss(f.section);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!part.empty()) p += "/" + part;
  }
  return json::json_pointer(p + "/" + f.key);
}

[[noreturn]] void type_error(const Field& f, const char* expected) {
  throw ParseError("config key '" + f.path() + "' expects " + expected);
}

template <typename Int>
Int as_integer(const json& v, const Field& f) {
  if (!v.is_number_integer()) type_error(f, "an integer");
  return v.get<Int>();
}

void assign(const Field& f, const json& v) {
  std::visit(
      [&](auto ref) {
        using T = decltype(ref);
        if constexpr (std::is_same_v<T, double*>) {
          if (!v.is_number()) type_error(f, "a number");
          *ref = v.get<double>();
        } else if constexpr (std::is_same_v<T, int*>) {
          *ref = as_integer<int>(v, f);
        } else if constexpr (std::is_same_v<T, long*>) {
          *ref = as_integer<long>(v, f);
        } else if constexpr (std::is_same_v<T, std::uint64_t*>) {
          if (!v.is_number_unsigned()) type_error(f, "a non-negative integer");
          *ref = v.get<std::uint64_t>();
        } else if constexpr (std::is_same_v<T, bool*>) {
          if (!v.is_boolean()) type_error(f, "true or false");
          *ref = v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string*>) {
          if (!v.is_string()) type_error(f, "a string");
          *ref = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::vector<int>*>) {
          if (!v.is_array()) type_error(f, "an array of integers");
          ref->clear();
          for (const auto& x : v) ref->push_back(as_integer<int>(x, f));
        } else {
          if (!v.is_string()) type_error(f, "a string");
          const auto name = v.get<std::string>();
          for (const auto& [value, n] : ref.names) {
            if (name == n) {
              *ref.value = value;
              return;
            }
          }
          throw ParseError("config key '" + f.path() + "' has unknown value '" + name + "'");
        }
      },
      f.ref);
}

json extract(const Field& f) {
  return std::visit(
      [](auto ref) -> json {
        using T = decltype(ref);
        if constexpr (std::is_pointer_v<T>) {
          return json(*ref);
        } else {
          for (const auto& [value, n] : ref.names) {
            if (*ref.value == value) return n;
          }
          return nullptr;
        }
      },
      f.ref);
}

void collect_leaves(const json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string p = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object() && !it->empty()) {
      collect_leaves(*it, p, out);
    } else {
      out.push_back(p);
    }
  }
}

// ---- TOML subset ----

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Strips a trailing comment outside quotes.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char ch : k) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-')) return false;
  }
  return true;
}

json parse_scalar(const std::string& raw, int line) {
  const std::string s = trim(raw);
  auto fail = [&](const std::string& why) -> json {
    throw ParseError("config line " + std::to_string(line) + ": " + why);
  };
  if (s.empty()) return fail("missing value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') return fail("unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '\\' && i + 2 < s.size()) {
        const char n = s[++i];
        out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else {
        out += s[i];
      }
    }
    return out;
  }
  if (s == "true") return true;
  if (s == "false") return false;
  std::string num;
  for (char ch : s) {
    if (ch != '_') num += ch;
  }
  const bool integral = num.find_first_of(".eE") == std::string::npos &&
                        num.find("inf") == std::string::npos &&
                        num.find("nan") == std::string::npos;
  std::size_t used = 0;
  try {
    if (integral) {
      if (num.front() == '-') {
        const long long v = std::stoll(num, &used);
        if (used == num.size()) return v;
      } else {
        const unsigned long long v = std::stoull(num, &used);
        if (used == num.size()) return v;
      }
    } else {
      const double v = std::stod(num, &used);
      if (used == num.size()) return v;
    }
  } catch (const std::exception&) {
  }
  return fail("cannot parse value '" + s + "'");
}

json parse_value(const std::string& raw, int line) {
  const std::string s = trim(raw);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ParseError("config line " + std::to_string(line) + ": unterminated array");
    json arr = json::array();
    const std::string body = trim(s.substr(1, s.size() - 2));
    if (body.empty()) return arr;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (trim(item).empty()) continue;  // trailing comma
      arr.push_back(parse_scalar(item, line));
    }
    return arr;
  }
  return parse_scalar(s, line);
}

}  // namespace

json parse_toml(const std::string& text) {
  json root = json::object();
  json* table = &root;
  std::set<std::string> seen_tables;
  std::stringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw ParseError("config line " + std::to_string(line) + ": " + why);
    };
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) fail("malformed section header");
      const std::string name = trim(s.substr(1, s.size() - 2));
      if (!seen_tables.insert(name).second) fail("duplicate section [" + name + "]");
      table = &root;
      std::stringstream parts(name);
      std::string part;
      while (std::getline(parts, part, '.')) {
        part = trim(part);
        if (!valid_key(part)) fail("bad section name [" + name + "]");
        json& next = (*table)[part];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) fail("section [" + name + "] clashes with a key");
        table = &next;
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (!valid_key(key)) fail("bad key '" + key + "'");
    if (table->contains(key)) fail("duplicate key '" + key + "'");
    (*table)[key] = parse_value(s.substr(eq + 1), line);
  }
  return root;
}

RunConfig from_json(const json& j) {
  if (!j.is_object()) throw ParseError("config root must be a table");
  RunConfig c;
  std::set<std::string> known;
  for (const auto& f : fields(c)) {
    known.insert(f.path());
    const auto ptr = pointer(f);
    if (j.contains(ptr)) assign(f, j.at(ptr));
  }
  std::vector<std::string> leaves;
  collect_leaves(j, "", leaves);
  for (const auto& p : leaves) {
    if (!known.count(p)) throw ParseError("unknown config key '" + p + "'");
  }
  return c;
}

json to_json(const RunConfig& c) {
  RunConfig copy = c;
  json j = json::object();
  for (const auto& f : fields(copy)) j[pointer(f)] = extract(f);
  return j;
}

void RunConfig::validate() const {
  if (track.empty()) throw ValidationError("config needs a track file");
  if (!fs::exists(track)) throw ValidationError("track file not found: " + track);
  if (raceline != "generate" && !fs::exists(raceline)) {
    throw ValidationError("raceline file not found: " + raceline);
  }
  if (!(limits.a_lat_max > 0 && limits.a_lon_max > 0 && limits.a_brake_max > 0 &&
        limits.v_cap > 0)) {
    throw ValidationError("velocity_profile limits must be positive");
  }
  env.validate();
  sac.validate();
  if (checkpoint_every < 0) throw ValidationError("train.checkpoint_every must be >= 0");
  if (eval.laps < 1) throw ValidationError("eval.laps must be >= 1");
  if (eval.max_steps_per_lap < 1) throw ValidationError("eval.max_steps_per_lap must be >= 1");
  if (out.empty()) throw ValidationError("config needs an output directory");
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = from_json(parse_toml(ss.str()));
  const fs::path base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(c.track);
  if (c.raceline != "generate") resolve(c.raceline);
  return c;
}

std::string digest(const RunConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

void write_effective_config(const RunConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  json j = to_json(c);
  j["digest"] = digest(c);
  std::ofstream out(dir / "effective_config.json");
  if (!out) throw std::runtime_error("cannot write effective_config.json in " + dir.string());
  out << j.dump(2) << '\n';
}

std::shared_ptr<const track::Circuit> build_circuit(const RunConfig& c) {
  auto layout = track::load_track(c.track);
  auto line = c.raceline == "generate" ? track::centerline_raceline(layout, c.limits)
                                       : track::load_raceline(c.raceline);
  return std::make_shared<const track::Circuit>(std::move(layout), std::move(line));
}

}  // namespace rlpp::config
