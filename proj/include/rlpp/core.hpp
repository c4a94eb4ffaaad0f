#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace rlpp {

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vec2 = Vector2<double>;
using VecX = VectorX<double>;
using MatX = MatrixX<double>;

inline constexpr double kPi = std::numbers::pi;

// Wraps an angle to (-pi, pi].
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  const Scalar two_pi = Scalar(2) * Scalar(std::numbers::pi);
  a = std::fmod(a, two_pi);
  if (a <= -Scalar(std::numbers::pi)) a += two_pi;
  if (a > Scalar(std::numbers::pi)) a -= two_pi;
  return a;
}

template <typename Scalar>
Scalar clamp(Scalar x, Scalar lo, Scalar hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

// Error categories. The CLI maps each to a distinct exit status.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SimulationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace rlpp
