#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "rlpp/core.hpp"
#include "rlpp/sac/sac.hpp"

namespace rlpp::sac {

/// Running mean and variance of observations (parallel-update form), used
/// to standardize network inputs. Starts at mean 0, variance 1.
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(int dim, double epsilon = 1e-8, double clip = 10.0);

  void update(const VecX& x);
  VecX normalize(const VecX& x) const;

  template <typename Scalar>
  Matrix<Scalar> normalize_columns(const MatX& x) const {
    MatX z = (x.colwise() - mean_).array().colwise() / (var_.array() + epsilon_).sqrt();
    return z.cwiseMax(-clip_).cwiseMin(clip_).template cast<Scalar>();
  }

  int dim() const { return static_cast<int>(mean_.size()); }
  const VecX& mean() const { return mean_; }
  const VecX& var() const { return var_; }
  double count() const { return count_; }
  double epsilon() const { return epsilon_; }
  double clip() const { return clip_; }
  void set_state(VecX mean, VecX var, double count);

 private:
  VecX mean_;
  VecX var_;
  double count_ = 1e-4;
  double epsilon_ = 1e-8;
  double clip_ = 10.0;
};

/// Fixed-capacity FIFO of transitions. Observations are stored raw; storage
/// grows on demand up to the capacity.
class ReplayBuffer {
 public:
  ReplayBuffer(long capacity, int obs_dim, int act_dim);

  void push(const VecX& obs, const VecX& action, double reward, const VecX& next_obs, bool done);

  long size() const { return size_; }
  long capacity() const { return capacity_; }
  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }

  /// Uniform indices with replacement; throws on an empty buffer.
  std::vector<long> sample_indices(int n, std::mt19937_64& rng) const;

  /// Slot `i` counted from the oldest stored transition.
  long slot(long i) const;
  double reward_at(long slot) const { return rewards_[slot]; }
  Eigen::Ref<const VecX> obs_at(long slot) const { return obs_.col(slot); }

  template <typename Scalar>
  Batch<Scalar> gather(const std::vector<long>& idx, const RunningNormalizer* norm) const {
    const auto n = static_cast<Eigen::Index>(idx.size());
    MatX o(obs_dim_, n), o2(obs_dim_, n);
    Batch<Scalar> b;
    b.actions.resize(act_dim_, n);
    b.rewards.resize(n);
    b.dones.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const long i = idx[k];
      o.col(k) = obs_.col(i);
      o2.col(k) = next_obs_.col(i);
      b.actions.col(k) = actions_.col(i).template cast<Scalar>();
      b.rewards[k] = Scalar(rewards_[i]);
      b.dones[k] = dones_[i] ? Scalar(1) : Scalar(0);
    }
    if (norm) {
      b.obs = norm->normalize_columns<Scalar>(o);
      b.next_obs = norm->normalize_columns<Scalar>(o2);
    } else {
      b.obs = o.cast<Scalar>();
      b.next_obs = o2.cast<Scalar>();
    }
    return b;
  }

 private:
  void reserve_for(long n);

  long capacity_;
  int obs_dim_;
  int act_dim_;
  long size_ = 0;
  long next_ = 0;
  MatX obs_;
  MatX next_obs_;
  MatX actions_;
  std::vector<double> rewards_;
  std::vector<char> dones_;
};

}  // namespace rlpp::sac
