#include "rlpp/sac/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace rlpp::sac {

using nlohmann::json;

namespace {

std::vector<int> actor_sizes(const PolicyCheckpoint& c) {
  std::vector<int> s{c.obs_dim};
  s.insert(s.end(), c.sac.hidden.begin(), c.sac.hidden.end());
  s.push_back(2 * c.act_dim);
  return s;
}

std::vector<int> critic_sizes(const PolicyCheckpoint& c) {
  std::vector<int> s{c.obs_dim + c.act_dim};
  s.insert(s.end(), c.sac.hidden.begin(), c.sac.hidden.end());
  s.push_back(1);
  return s;
}

json vec_to_json(const VecX& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VecX vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Per layer: {"weight": rows of W, "bias": b}.
json network_to_json(const VecX& flat, const std::vector<int>& sizes) {
  Mlp<double> net(sizes);
  if (net.parameter_count() != flat.size()) {
    throw CheckpointError(CheckpointError::Kind::Dimension, "network parameter count mismatch");
  }
  net.params() = flat;
  json layers = json::array();
  for (int l = 0; l < net.layers(); ++l) {
    json rows = json::array();
    const auto w = net.weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      std::vector<double> row(w.cols());
      for (Eigen::Index k = 0; k < w.cols(); ++k) row[k] = w(i, k);
      rows.push_back(row);
    }
    layers.push_back({{"weight", rows}, {"bias", vec_to_json(net.bias(l))}});
  }
  return {{"sizes", sizes}, {"layers", layers}};
}

VecX network_from_json(const json& j, const std::vector<int>& sizes, const char* name) {
  if (j.at("sizes").get<std::vector<int>>() != sizes) {
    throw CheckpointError(CheckpointError::Kind::Dimension,
                          std::string("checkpoint network '") + name + "' has mismatched layer sizes");
  }
  Mlp<double> net(sizes);
  const auto& layers = j.at("layers");
  if (static_cast<int>(layers.size()) != net.layers()) {
    throw CheckpointError(CheckpointError::Kind::Dimension, "checkpoint layer count mismatch");
  }
  for (int l = 0; l < net.layers(); ++l) {
    auto w = net.weight(l);
    const auto& rows = layers[l].at("weight");
    if (static_cast<Eigen::Index>(rows.size()) != w.rows()) {
      throw CheckpointError(CheckpointError::Kind::Dimension, "checkpoint weight shape mismatch");
    }
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      const auto row = rows[i].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != w.cols()) {
        throw CheckpointError(CheckpointError::Kind::Dimension, "checkpoint weight shape mismatch");
      }
      for (Eigen::Index k = 0; k < w.cols(); ++k) w(i, k) = row[k];
    }
    const VecX b = vec_from_json(layers[l].at("bias"));
    if (b.size() != net.bias(l).size()) {
      throw CheckpointError(CheckpointError::Kind::Dimension, "checkpoint bias shape mismatch");
    }
    net.bias(l) = b;
  }
  return net.params();
}

std::string checksum_of(json j) {
  j.erase("checksum");
  return hex64(fnv1a64(j.dump()));
}

}  // namespace

json sac_config_to_json(const SacConfig& c) {
  return {{"lr", c.lr},
          {"gamma", c.gamma},
          {"tau", c.tau},
          {"batch_size", c.batch_size},
          {"target_entropy", c.target_entropy},
          {"learning_starts", c.learning_starts},
          {"train_freq", c.train_freq},
          {"gradient_steps", c.gradient_steps},
          {"total_steps", c.total_steps},
          {"buffer_capacity", c.buffer_capacity},
          {"hidden", c.hidden},
          {"initial_alpha", c.initial_alpha},
          {"log_std_min", c.log_std_min},
          {"log_std_max", c.log_std_max},
          {"last_layer_scale", c.last_layer_scale},
          {"normalize_observations", c.normalize_observations},
          {"precision", c.precision}};
}

SacConfig sac_config_from_json(const json& j) {
  SacConfig c;
  c.lr = j.at("lr");
  c.gamma = j.at("gamma");
  c.tau = j.at("tau");
  c.batch_size = j.at("batch_size");
  c.target_entropy = j.at("target_entropy");
  c.learning_starts = j.at("learning_starts");
  c.train_freq = j.at("train_freq");
  c.gradient_steps = j.at("gradient_steps");
  c.total_steps = j.at("total_steps");
  c.buffer_capacity = j.at("buffer_capacity");
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.initial_alpha = j.at("initial_alpha");
  c.log_std_min = j.at("log_std_min");
  c.log_std_max = j.at("log_std_max");
  c.last_layer_scale = j.at("last_layer_scale");
  c.normalize_observations = j.at("normalize_observations");
  c.precision = j.at("precision");
  return c;
}

json checkpoint_to_json(const PolicyCheckpoint& c) {
  json j;
  j["format"] = "rlpp-policy";
  j["version"] = c.version;
  j["obs_dim"] = c.obs_dim;
  j["act_dim"] = c.act_dim;
  j["sac"] = sac_config_to_json(c.sac);
  j["env_config"] = c.env_config;
  j["config_digest"] = c.config_digest;
  j["seed"] = c.seed;
  j["step"] = c.step;
  j["normalizer"] = {{"enabled", c.normalize},
                     {"mean", vec_to_json(c.norm_mean)},
                     {"var", vec_to_json(c.norm_var)},
                     {"count", c.norm_count},
                     {"epsilon", c.norm_epsilon},
                     {"clip", c.norm_clip}};
  const auto as = actor_sizes(c);
  const auto cs = critic_sizes(c);
  j["tensors"] = {{"actor", network_to_json(c.actor, as)},
                  {"q1", network_to_json(c.q1, cs)},
                  {"q2", network_to_json(c.q2, cs)},
                  {"q1_target", network_to_json(c.q1_target, cs)},
                  {"q2_target", network_to_json(c.q2_target, cs)},
                  {"log_alpha", c.log_alpha}};
  j["checksum"] = checksum_of(j);
  return j;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyCheckpoint& c) {
  const std::string text = checkpoint_to_json(c).dump();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot write " + tmp.string());
    out << text;
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

PolicyCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 std::optional<int> expected_obs_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();

  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception&) {
    throw CheckpointError(CheckpointError::Kind::Checksum,
                          "checkpoint is truncated or corrupt: " + path.string());
  }
  if (!j.is_object() || !j.contains("checksum") || !j["checksum"].is_string() ||
      j["checksum"].get<std::string>() != checksum_of(j)) {
    throw CheckpointError(CheckpointError::Kind::Checksum,
                          "checkpoint checksum mismatch: " + path.string());
  }
  if (j.value("format", "") != "rlpp-policy" || j.value("version", -1) != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::Version,
                          "unsupported checkpoint version in " + path.string());
  }

  PolicyCheckpoint c;
  try {
    c.version = j.at("version");
    c.obs_dim = j.at("obs_dim");
    c.act_dim = j.at("act_dim");
    if (expected_obs_dim && *expected_obs_dim != c.obs_dim) {
      throw CheckpointError(CheckpointError::Kind::Dimension,
                            "checkpoint observation dimension " + std::to_string(c.obs_dim) +
                                " does not match the environment (" +
                                std::to_string(*expected_obs_dim) + ")");
    }
    c.sac = sac_config_from_json(j.at("sac"));
    c.env_config = j.at("env_config");
    c.config_digest = j.at("config_digest");
    c.seed = j.at("seed");
    c.step = j.at("step");
    const auto& n = j.at("normalizer");
    c.normalize = n.at("enabled");
    c.norm_mean = vec_from_json(n.at("mean"));
    c.norm_var = vec_from_json(n.at("var"));
    c.norm_count = n.at("count");
    c.norm_epsilon = n.at("epsilon");
    c.norm_clip = n.at("clip");
    if (c.norm_mean.size() != c.obs_dim || c.norm_var.size() != c.obs_dim) {
      throw CheckpointError(CheckpointError::Kind::Dimension, "normalizer dimension mismatch");
    }
    const auto& t = j.at("tensors");
    const auto as = actor_sizes(c);
    const auto cs = critic_sizes(c);
    c.actor = network_from_json(t.at("actor"), as, "actor");
    c.q1 = network_from_json(t.at("q1"), cs, "q1");
    c.q2 = network_from_json(t.at("q2"), cs, "q2");
    c.q1_target = network_from_json(t.at("q1_target"), cs, "q1_target");
    c.q2_target = network_from_json(t.at("q2_target"), cs, "q2_target");
    c.log_alpha = t.at("log_alpha");
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Version,
                          std::string("checkpoint is missing fields: ") + e.what());
  }
  return c;
}

DeterministicPolicy::DeterministicPolicy(const PolicyCheckpoint& c)
    : obs_dim_(c.obs_dim),
      use_float_(c.sac.precision == "float32"),
      normalize_(c.normalize),
      norm_(c.obs_dim, c.norm_epsilon, c.norm_clip) {
  norm_.set_state(c.norm_mean, c.norm_var, c.norm_count);
  std::vector<int> sizes{c.obs_dim};
  sizes.insert(sizes.end(), c.sac.hidden.begin(), c.sac.hidden.end());
  sizes.push_back(2 * c.act_dim);
  if (use_float_) {
    actor_f_ = Mlp<float>(sizes);
    actor_f_.params() = c.actor.cast<float>();
  } else {
    actor_d_ = Mlp<double>(sizes);
    actor_d_.params() = c.actor;
  }
}

Vec2 DeterministicPolicy::act(const VecX& raw_obs) const {
  if (raw_obs.size() != obs_dim_) throw ValidationError("observation dimension mismatch");
  const MatX col = raw_obs;
  if (use_float_) {
    const Matrix<float> x = normalize_ ? norm_.normalize_columns<float>(col) : col.cast<float>();
    return policy_deterministic(actor_f_, x).col(0).cast<double>();
  }
  const Matrix<double> x = normalize_ ? norm_.normalize_columns<double>(col) : col;
  return policy_deterministic(actor_d_, x).col(0);
}

}  // namespace rlpp::sac
