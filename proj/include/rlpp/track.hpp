#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rlpp/core.hpp"

namespace rlpp::track {

struct FrenetPose {
  double s = 0.0;
  double d = 0.0;  // positive to the left of the tangent
};

struct CartesianPose {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
};

/// Arc-length parameterized polyline with a continuous normal field.
///
/// Normals are defined at the vertices (unit bisector of the adjacent
/// segments) and interpolated linearly along each segment, so the map
/// (s, d) -> p is smooth inside the corridor and its inverse on a segment
/// reduces to a quadratic in the segment fraction.
///
/// Closed paths wrap s modulo length(); open paths extrapolate the first and
/// last segments.
class ReferencePath {
 public:
  ReferencePath() = default;
  ReferencePath(std::vector<double> s, std::vector<Vec2> xy, double total_length, bool closed,
                double corridor_half_width);

  double length() const { return length_; }
  bool closed() const { return closed_; }
  std::size_t size() const { return xy_.size(); }
  std::size_t segment_count() const { return closed_ ? xy_.size() : xy_.size() - 1; }

  double wrap_s(double s) const;

  // Segment index and fraction in [0, 1] (may leave [0, 1] on open paths).
  std::pair<std::size_t, double> locate(double s) const;

  FrenetPose to_frenet(const Vec2& p) const;
  Vec2 to_cartesian(const FrenetPose& pose) const;

  const Vec2& vertex(std::size_t i) const { return xy_[i]; }
  const Vec2& vertex_normal(std::size_t i) const { return normal_[i]; }
  double vertex_s(std::size_t i) const { return s_[i]; }
  double segment_end_s(std::size_t seg) const;

 private:
  struct Candidate {
    bool valid = false;
    double s = 0.0;
    double d = 0.0;
  };
  Candidate project_on_segment(std::size_t seg, const Vec2& p) const;
  FrenetPose brute_force(const Vec2& p) const;
  void build_grid(double corridor_half_width);
  std::size_t next_index(std::size_t i) const { return (i + 1 == xy_.size()) ? 0 : i + 1; }

  std::vector<double> s_;
  std::vector<Vec2> xy_;
  std::vector<Vec2> normal_;
  double length_ = 0.0;
  bool closed_ = true;
  double reach_ = 0.0;

  // Uniform grid of candidate segments.
  Vec2 grid_origin_ = Vec2::Zero();
  double cell_ = 1.0;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<std::vector<std::size_t>> cells_;
};

struct TrackPoint {
  double s = 0.0;
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double kappa = 0.0;
  double w_left = 0.0;
  double w_right = 0.0;
};

struct TrackSample {
  double w_left = 0.0;
  double w_right = 0.0;
  double psi_ref = 0.0;
  double kappa = 0.0;
  double width() const { return w_left + w_right; }
};

/// Track centerline with corridor half-widths. Immutable once built.
class TrackLayout {
 public:
  TrackLayout() = default;
  // Validates every invariant; throws TrackFileError.
  TrackLayout(std::vector<TrackPoint> points, bool closed = true);

  const std::vector<TrackPoint>& points() const { return points_; }
  double total_length() const { return path_.length(); }
  bool closed() const { return path_.closed(); }
  const ReferencePath& path() const { return path_; }

  FrenetPose cartesian_to_frenet(double x, double y) const;
  CartesianPose frenet_to_cartesian(const FrenetPose& pose) const;
  TrackSample query(double s) const;
  double min_half_width() const;

 private:
  std::vector<TrackPoint> points_;
  ReferencePath path_;
};

struct RacelinePoint {
  double s = 0.0;
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double kappa = 0.0;
  double v_ref = 0.0;
};

struct RacelineSample {
  double psi_ref = 0.0;
  double kappa = 0.0;
  double v_ref = 0.0;
};

class Raceline {
 public:
  Raceline() = default;
  Raceline(std::vector<RacelinePoint> points, bool closed = true);

  const std::vector<RacelinePoint>& points() const { return points_; }
  double total_length() const { return path_.length(); }
  bool closed() const { return path_.closed(); }
  const ReferencePath& path() const { return path_; }

  FrenetPose cartesian_to_frenet(double x, double y) const;
  CartesianPose frenet_to_cartesian(const FrenetPose& pose) const;
  RacelineSample query(double s) const;

 private:
  std::vector<RacelinePoint> points_;
  ReferencePath path_;
};

struct TrackFileError : ValidationError {
  enum class Kind {
    Io,
    MalformedHeader,
    MalformedRow,
    TooFewPoints,
    NonMonotoneS,
    NonPositiveWidth,
    NonPositiveSpeed,
    OpenLoop,
    DuplicateClosingPoint,
    OutsideCorridor,
  };
  TrackFileError(Kind k, const std::string& what) : ValidationError(what), kind(k) {}
  Kind kind;
};

TrackLayout load_track(const std::filesystem::path& path, bool closed = true);
Raceline load_raceline(const std::filesystem::path& path, bool closed = true);
void write_track(const std::filesystem::path& path, const TrackLayout& track);
void write_raceline(const std::filesystem::path& path, const Raceline& raceline);

struct VelocityLimits {
  double a_lat_max = 3.0;
  double a_lon_max = 3.0;
  double a_brake_max = 4.0;
  double v_cap = 5.0;
};

/// Curvature-limited speed profile with forward (acceleration) and backward
/// (braking) passes. `s` holds the vertex arc positions; for closed paths the
/// closing segment has length `total_length - s.back()`.
std::vector<double> generate_velocity_profile(const std::vector<double>& s,
                                              const std::vector<double>& kappa,
                                              double total_length, bool closed,
                                              const VelocityLimits& limits);

/// Raceline that follows the track centerline with a generated speed profile.
Raceline centerline_raceline(const TrackLayout& track, const VelocityLimits& limits);

/// Oval made of two straights joined by two semicircles, driven
/// counter-clockwise, starting at the beginning of the lower straight.
TrackLayout make_oval(double straight_length, double radius, double half_width,
                      double spacing = 0.1);

/// Straight open track along +x starting at the origin.
TrackLayout make_straight(double length, double half_width, double spacing = 0.5);

struct CircuitSample {
  double w_left = 0.0;
  double w_right = 0.0;
  double psi_ref = 0.0;
  double kappa = 0.0;
  double v_ref = 0.0;
  double width() const { return w_left + w_right; }
};

/// Track corridor paired with its raceline. Frenet quantities used by the
/// controller and the reward are relative to the raceline; corridor bounds
/// come from the track at the matching track arc position.
class Circuit {
 public:
  Circuit(TrackLayout track, Raceline raceline);

  const TrackLayout& track() const { return track_; }
  const Raceline& raceline() const { return raceline_; }
  double length() const { return raceline_.total_length(); }

  // Track arc position corresponding to a raceline arc position.
  double track_s(double raceline_s) const;
  CircuitSample query(double raceline_s) const;

  /// 2 x 3N matrix: N raceline points, then N left-bound points, then N
  /// right-bound points, sampled at s0 + k * spacing.
  Eigen::Matrix2Xd sample_forward_waypoints(double s0, double spacing, int count) const;

 private:
  TrackLayout track_;
  Raceline raceline_;
  std::vector<double> track_s_at_vertex_;
};

}  // namespace rlpp::track
