#include "rlpp/sac/replay_buffer.hpp"

#include <algorithm>

namespace rlpp::sac {

void SacConfig::validate() const {
  if (!(lr > 0)) throw ValidationError("sac.lr must be positive");
  if (!(gamma > 0 && gamma < 1)) throw ValidationError("sac.gamma must lie in (0, 1)");
  if (!(tau > 0 && tau <= 1)) throw ValidationError("sac.tau must lie in (0, 1]");
  if (batch_size < 1) throw ValidationError("sac.batch_size must be >= 1");
  if (learning_starts < 0) throw ValidationError("sac.learning_starts must be >= 0");
  if (train_freq < 1 || gradient_steps < 1) {
    throw ValidationError("sac.train_freq and sac.gradient_steps must be >= 1");
  }
  if (total_steps < 0) throw ValidationError("sac.total_steps must be >= 0");
  if (buffer_capacity < 1) throw ValidationError("sac.buffer_capacity must be >= 1");
  if (hidden.empty()) throw ValidationError("sac.hidden needs at least one layer");
  for (int h : hidden) {
    if (h < 1) throw ValidationError("sac.hidden widths must be >= 1");
  }
  if (!(initial_alpha > 0)) throw ValidationError("sac.initial_alpha must be positive");
  if (!(log_std_min < log_std_max)) throw ValidationError("sac log_std bounds are inverted");
  if (precision != "float64" && precision != "float32") {
    throw ValidationError("sac.precision must be float64 or float32");
  }
}

RunningNormalizer::RunningNormalizer(int dim, double epsilon, double clip)
    : mean_(VecX::Zero(dim)), var_(VecX::Ones(dim)), epsilon_(epsilon), clip_(clip) {}

void RunningNormalizer::update(const VecX& x) {
  if (x.size() != mean_.size()) throw ValidationError("normalizer dimension mismatch");
  const VecX delta = x - mean_;
  const double total = count_ + 1.0;
  mean_ += delta / total;
  var_ = (var_ * count_ + delta.cwiseAbs2() * (count_ / total)) / total;
  count_ = total;
}

VecX RunningNormalizer::normalize(const VecX& x) const {
  if (x.size() != mean_.size()) throw ValidationError("normalizer dimension mismatch");
  const VecX z = (x - mean_).array() / (var_.array() + epsilon_).sqrt();
  return z.cwiseMax(-clip_).cwiseMin(clip_);
}

void RunningNormalizer::set_state(VecX mean, VecX var, double count) {
  if (mean.size() != var.size()) throw ValidationError("normalizer state sizes differ");
  mean_ = std::move(mean);
  var_ = std::move(var);
  count_ = count;
}

ReplayBuffer::ReplayBuffer(long capacity, int obs_dim, int act_dim)
    : capacity_(capacity), obs_dim_(obs_dim), act_dim_(act_dim) {
  if (capacity < 1) throw ValidationError("replay capacity must be >= 1");
  if (obs_dim < 1 || act_dim < 1) throw ValidationError("replay dimensions must be >= 1");
}

void ReplayBuffer::reserve_for(long n) {
  if (n <= obs_.cols()) return;
  const long grown = std::min(capacity_, std::max<long>(n, 2 * obs_.cols() + 1024));
  obs_.conservativeResize(obs_dim_, grown);
  next_obs_.conservativeResize(obs_dim_, grown);
  actions_.conservativeResize(act_dim_, grown);
  rewards_.resize(grown);
  dones_.resize(grown);
}

void ReplayBuffer::push(const VecX& obs, const VecX& action, double reward, const VecX& next_obs,
                        bool done) {
  if (obs.size() != obs_dim_ || next_obs.size() != obs_dim_ || action.size() != act_dim_) {
    throw ValidationError("transition dimensions do not match the replay buffer");
  }
  reserve_for(next_ + 1);
  obs_.col(next_) = obs;
  next_obs_.col(next_) = next_obs;
  actions_.col(next_) = action;
  rewards_[next_] = reward;
  dones_[next_] = done ? 1 : 0;
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::vector<long> ReplayBuffer::sample_indices(int n, std::mt19937_64& rng) const {
  if (size_ == 0) throw ValidationError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<long> pick(0, size_ - 1);
  std::vector<long> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

long ReplayBuffer::slot(long i) const {
  if (i < 0 || i >= size_) throw ValidationError("replay index out of range");
  const long oldest = size_ < capacity_ ? 0 : next_;
  return (oldest + i) % capacity_;
}

}  // namespace rlpp::sac
