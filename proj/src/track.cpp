#include "rlpp/track.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace rlpp::track {

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

Vec2 left_normal(const Vec2& tangent) { return {-tangent.y(), tangent.x()}; }

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& field, std::size_t row, const std::string& column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size() || !std::isfinite(v)) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw TrackFileError(TrackFileError::Kind::MalformedRow,
                         "row " + std::to_string(row) + ": cannot parse '" + field +
                             "' in column " + column);
  }
}

// Reads a CSV table whose header must match `columns`, optionally without the
// leading s_m column. Missing s is recomputed from chord lengths.
std::vector<std::vector<double>> read_table(const std::filesystem::path& path,
                                            const std::vector<std::string>& columns,
                                            bool& has_s) {
  std::ifstream in(path);
  if (!in) {
    throw TrackFileError(TrackFileError::Kind::Io, "cannot open file: " + path.string());
  }
  std::vector<std::string> without_s(columns.begin() + 1, columns.end());
  std::vector<std::vector<double>> rows;
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto fields = split_csv(t);
    if (!header_seen) {
      if (fields == columns) {
        has_s = true;
      } else if (fields == without_s) {
        has_s = false;
      } else {
        throw TrackFileError(TrackFileError::Kind::MalformedHeader,
                             "malformed header in " + path.string() + ": '" + t + "'");
      }
      header_seen = true;
      continue;
    }
    const auto& names = has_s ? columns : without_s;
    if (fields.size() != names.size()) {
      throw TrackFileError(TrackFileError::Kind::MalformedRow,
                           "line " + std::to_string(line_no) + ": expected " +
                               std::to_string(names.size()) + " fields, got " +
                               std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(columns.size());
    if (!has_s) row.push_back(0.0);
    for (std::size_t k = 0; k < fields.size(); ++k) {
      row.push_back(parse_number(fields[k], line_no, names[k]));
    }
    rows.push_back(std::move(row));
  }
  if (!header_seen) {
    throw TrackFileError(TrackFileError::Kind::MalformedHeader,
                         "missing header in " + path.string());
  }
  if (!has_s) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
      rows[i][0] = rows[i - 1][0] + std::hypot(rows[i][1] - rows[i - 1][1], rows[i][2] - rows[i - 1][2]);
    }
  }
  return rows;
}

// Checks s ordering and loop closure; returns the total length.
double validate_geometry(const std::vector<double>& s, const std::vector<Vec2>& xy, bool closed) {
  const std::size_t n = s.size();
  if (n < (closed ? 3u : 2u)) {
    throw TrackFileError(TrackFileError::Kind::TooFewPoints,
                         "need at least " + std::to_string(closed ? 3 : 2) + " points, got " +
                             std::to_string(n));
  }
  if (std::abs(s[0]) > 1e-9) {
    throw TrackFileError(TrackFileError::Kind::NonMonotoneS, "s must start at 0");
  }
  double max_step = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    if (!(s[i] > s[i - 1])) {
      throw TrackFileError(TrackFileError::Kind::NonMonotoneS,
                           "non-monotone s at point " + std::to_string(i));
    }
    max_step = std::max(max_step, (xy[i] - xy[i - 1]).norm());
  }
  if (!closed) return s.back();
  const double gap = (xy.front() - xy.back()).norm();
  if (gap < 1e-9) {
    throw TrackFileError(TrackFileError::Kind::DuplicateClosingPoint,
                         "closed track repeats its first point at the end");
  }
  if (gap > 2.0 * max_step + 1e-9) {
    throw TrackFileError(TrackFileError::Kind::OpenLoop,
                         "open loop: closing gap " + std::to_string(gap) +
                             " m exceeds twice the largest point spacing");
  }
  return s.back() + gap;
}

}  // namespace

// ---------------------------------------------------------------------------
// ReferencePath

ReferencePath::ReferencePath(std::vector<double> s, std::vector<Vec2> xy, double total_length,
                             bool closed, double corridor_half_width)
    : s_(std::move(s)), xy_(std::move(xy)), length_(total_length), closed_(closed) {
  const std::size_t n = xy_.size();
  const std::size_t segs = segment_count();
  std::vector<Vec2> dir(segs);
  for (std::size_t i = 0; i < segs; ++i) {
    dir[i] = (xy_[next_index(i)] - xy_[i]).normalized();
  }
  normal_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 tangent;
    if (!closed_ && i == 0) {
      tangent = dir.front();
    } else if (!closed_ && i + 1 == n) {
      tangent = dir.back();
    } else {
      const Vec2& in = dir[(i + segs - 1) % segs];
      const Vec2& out = dir[i % segs];
      const Vec2 sum = in + out;
      tangent = sum.norm() > 1e-9 ? Vec2(sum.normalized()) : out;
    }
    normal_[i] = left_normal(tangent);
  }
  build_grid(corridor_half_width);
}

double ReferencePath::segment_end_s(std::size_t seg) const {
  return seg + 1 < s_.size() ? s_[seg + 1] : length_;
}

double ReferencePath::wrap_s(double s) const {
  if (!closed_) return s;
  double w = std::fmod(s, length_);
  if (w < 0.0) w += length_;
  if (w >= length_) w = 0.0;
  return w;
}

std::pair<std::size_t, double> ReferencePath::locate(double s) const {
  s = wrap_s(s);
  const std::size_t segs = segment_count();
  std::size_t i;
  if (s <= s_.front()) {
    i = 0;
  } else {
    i = static_cast<std::size_t>(std::upper_bound(s_.begin(), s_.end(), s) - s_.begin()) - 1;
    i = std::min(i, segs - 1);
  }
  const double s0 = s_[i];
  const double s1 = segment_end_s(i);
  return {i, (s - s0) / (s1 - s0)};
}

Vec2 ReferencePath::to_cartesian(const FrenetPose& pose) const {
  const auto [i, t] = locate(pose.s);
  const std::size_t j = next_index(i);
  const Vec2 base = xy_[i] + t * (xy_[j] - xy_[i]);
  const Vec2 n = normal_[i] + t * (normal_[j] - normal_[i]);
  return base + pose.d * n;
}

ReferencePath::Candidate ReferencePath::project_on_segment(std::size_t seg, const Vec2& p) const {
  const std::size_t j = next_index(seg);
  const Vec2& a = xy_[seg];
  const Vec2 e = xy_[j] - a;
  const Vec2& na = normal_[seg];
  const Vec2 f = normal_[j] - na;
  const Vec2 q = p - a;

  // cross(q - t e, na + t f) = 0 is quadratic in t.
  const double qa = -cross(e, f);
  const double qb = cross(q, f) - cross(e, na);
  const double qc = cross(q, na);
  double disc = qb * qb - 4.0 * qa * qc;
  const double scale = qb * qb + std::abs(4.0 * qa * qc);
  if (disc < 0.0) {
    if (disc < -1e-12 * scale) return {};
    disc = 0.0;
  }
  const double root = std::sqrt(disc);
  const double qq = -0.5 * (qb + (qb >= 0.0 ? root : -root));
  double roots[2];
  int nroots = 0;
  if (qq != 0.0) {
    roots[nroots++] = qc / qq;
    if (qa != 0.0) roots[nroots++] = qq / qa;
  } else if (qa != 0.0) {
    roots[nroots++] = 0.0;
  }

  const double lo = (!closed_ && seg == 0) ? -std::numeric_limits<double>::infinity() : -1e-9;
  const double hi =
      (!closed_ && seg + 1 == segment_count()) ? std::numeric_limits<double>::infinity() : 1.0 + 1e-9;
  Candidate best;
  for (int k = 0; k < nroots; ++k) {
    const double t = roots[k];
    if (!std::isfinite(t) || t < lo || t > hi) continue;
    const Vec2 g = na + t * f;
    const double g2 = g.squaredNorm();
    if (g2 < 1e-12) continue;
    const double d = (q - t * e).dot(g) / g2;
    if (!best.valid || std::abs(d) < std::abs(best.d)) {
      const double tc = closed_ ? clamp(t, 0.0, 1.0) : t;
      best = {true, s_[seg] + tc * (segment_end_s(seg) - s_[seg]), d};
    }
  }
  return best;
}

FrenetPose ReferencePath::brute_force(const Vec2& p) const {
  Candidate best;
  for (std::size_t seg = 0; seg < segment_count(); ++seg) {
    const Candidate c = project_on_segment(seg, p);
    if (c.valid && (!best.valid || std::abs(c.d) < std::abs(best.d) - 1e-12)) best = c;
  }
  if (best.valid) return {wrap_s(best.s), best.d};

  // Outside every segment's normal fan: fall back to the nearest point.
  double best_dist = std::numeric_limits<double>::infinity();
  FrenetPose out;
  for (std::size_t seg = 0; seg < segment_count(); ++seg) {
    const Vec2& a = xy_[seg];
    const Vec2 e = xy_[next_index(seg)] - a;
    const double t = clamp((p - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
    const Vec2 foot = a + t * e;
    const double dist = (p - foot).norm();
    if (dist < best_dist - 1e-12) {
      best_dist = dist;
      const double sign = cross(e, p - foot) >= 0.0 ? 1.0 : -1.0;
      out = {wrap_s(s_[seg] + t * (segment_end_s(seg) - s_[seg])), sign * dist};
    }
  }
  return out;
}

void ReferencePath::build_grid(double corridor_half_width) {
  reach_ = corridor_half_width + 0.5;
  Vec2 lo = xy_.front();
  Vec2 hi = xy_.front();
  for (const auto& p : xy_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  cell_ = std::max(1.0, reach_);
  grid_origin_ = lo - Vec2::Constant(2.0 * reach_);
  const Vec2 extent = hi - lo + Vec2::Constant(4.0 * reach_);
  nx_ = static_cast<int>(std::ceil(extent.x() / cell_)) + 1;
  ny_ = static_cast<int>(std::ceil(extent.y() / cell_)) + 1;
  cells_.assign(static_cast<std::size_t>(nx_) * ny_, {});
  for (std::size_t seg = 0; seg < segment_count(); ++seg) {
    const std::size_t j = next_index(seg);
    Vec2 blo = xy_[seg].cwiseMin(xy_[j]);
    Vec2 bhi = xy_[seg].cwiseMax(xy_[j]);
    for (const Vec2& c : {Vec2(xy_[seg] + reach_ * normal_[seg]), Vec2(xy_[seg] - reach_ * normal_[seg]),
                          Vec2(xy_[j] + reach_ * normal_[j]), Vec2(xy_[j] - reach_ * normal_[j])}) {
      blo = blo.cwiseMin(c);
      bhi = bhi.cwiseMax(c);
    }
    const int ix0 = std::max(0, static_cast<int>(std::floor((blo.x() - grid_origin_.x()) / cell_)));
    const int iy0 = std::max(0, static_cast<int>(std::floor((blo.y() - grid_origin_.y()) / cell_)));
    const int ix1 = std::min(nx_ - 1, static_cast<int>(std::floor((bhi.x() - grid_origin_.x()) / cell_)));
    const int iy1 = std::min(ny_ - 1, static_cast<int>(std::floor((bhi.y() - grid_origin_.y()) / cell_)));
    for (int iy = iy0; iy <= iy1; ++iy) {
      for (int ix = ix0; ix <= ix1; ++ix) {
        cells_[static_cast<std::size_t>(iy) * nx_ + ix].push_back(seg);
      }
    }
  }
}

FrenetPose ReferencePath::to_frenet(const Vec2& p) const {
  const double fx = std::floor((p.x() - grid_origin_.x()) / cell_);
  const double fy = std::floor((p.y() - grid_origin_.y()) / cell_);
  if (closed_ && fx >= 0 && fy >= 0 && fx < nx_ && fy < ny_) {
    const auto& cands = cells_[static_cast<std::size_t>(fy) * nx_ + static_cast<std::size_t>(fx)];
    Candidate best;
    for (std::size_t seg : cands) {
      const Candidate c = project_on_segment(seg, p);
      if (c.valid && (!best.valid || std::abs(c.d) < std::abs(best.d) - 1e-12)) best = c;
    }
    if (best.valid && std::abs(best.d) <= reach_) return {wrap_s(best.s), best.d};
  }
  return brute_force(p);
}

// ---------------------------------------------------------------------------
// TrackLayout

namespace {

double max_half_width(const std::vector<TrackPoint>& pts) {
  double w = 0.0;
  for (const auto& p : pts) w = std::max({w, p.w_left, p.w_right});
  return w;
}

}  // namespace

TrackLayout::TrackLayout(std::vector<TrackPoint> points, bool closed) : points_(std::move(points)) {
  std::vector<double> s;
  std::vector<Vec2> xy;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    auto& p = points_[i];
    if (!(p.w_left > 0.0) || !(p.w_right > 0.0)) {
      throw TrackFileError(TrackFileError::Kind::NonPositiveWidth,
                           "non-positive width at point " + std::to_string(i));
    }
    p.psi = wrap_angle(p.psi);
    s.push_back(p.s);
    xy.emplace_back(p.x, p.y);
  }
  const double length = validate_geometry(s, xy, closed);
  path_ = ReferencePath(std::move(s), std::move(xy), length, closed, max_half_width(points_));
}

FrenetPose TrackLayout::cartesian_to_frenet(double x, double y) const {
  return path_.to_frenet(Vec2(x, y));
}

CartesianPose TrackLayout::frenet_to_cartesian(const FrenetPose& pose) const {
  const Vec2 p = path_.to_cartesian(pose);
  return {p.x(), p.y(), query(pose.s).psi_ref};
}

TrackSample TrackLayout::query(double s) const {
  const auto [i, t] = path_.locate(s);
  const std::size_t j = (i + 1 == points_.size()) ? 0 : i + 1;
  const auto& a = points_[i];
  const auto& b = points_[j];
  const double tt = closed() ? t : clamp(t, 0.0, 1.0);
  TrackSample out;
  out.w_left = a.w_left + tt * (b.w_left - a.w_left);
  out.w_right = a.w_right + tt * (b.w_right - a.w_right);
  out.kappa = a.kappa + tt * (b.kappa - a.kappa);
  out.psi_ref = wrap_angle(a.psi + tt * wrap_angle(b.psi - a.psi));
  return out;
}

double TrackLayout::min_half_width() const {
  double w = std::numeric_limits<double>::infinity();
  for (const auto& p : points_) w = std::min({w, p.w_left, p.w_right});
  return w;
}

// ---------------------------------------------------------------------------
// Raceline

Raceline::Raceline(std::vector<RacelinePoint> points, bool closed) : points_(std::move(points)) {
  std::vector<double> s;
  std::vector<Vec2> xy;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    auto& p = points_[i];
    if (!(p.v_ref > 0.0)) {
      throw TrackFileError(TrackFileError::Kind::NonPositiveSpeed,
                           "non-positive reference speed at point " + std::to_string(i));
    }
    p.psi = wrap_angle(p.psi);
    s.push_back(p.s);
    xy.emplace_back(p.x, p.y);
  }
  const double length = validate_geometry(s, xy, closed);
  path_ = ReferencePath(std::move(s), std::move(xy), length, closed, 1.5);
}

FrenetPose Raceline::cartesian_to_frenet(double x, double y) const {
  return path_.to_frenet(Vec2(x, y));
}

CartesianPose Raceline::frenet_to_cartesian(const FrenetPose& pose) const {
  const Vec2 p = path_.to_cartesian(pose);
  return {p.x(), p.y(), query(pose.s).psi_ref};
}

RacelineSample Raceline::query(double s) const {
  const auto [i, t] = path_.locate(s);
  const std::size_t j = (i + 1 == points_.size()) ? 0 : i + 1;
  const auto& a = points_[i];
  const auto& b = points_[j];
  const double tt = closed() ? t : clamp(t, 0.0, 1.0);
  RacelineSample out;
  out.kappa = a.kappa + tt * (b.kappa - a.kappa);
  out.v_ref = a.v_ref + tt * (b.v_ref - a.v_ref);
  out.psi_ref = wrap_angle(a.psi + tt * wrap_angle(b.psi - a.psi));
  return out;
}

// ---------------------------------------------------------------------------
// File I/O

TrackLayout load_track(const std::filesystem::path& path, bool closed) {
  bool has_s = true;
  const auto rows = read_table(
      path, {"s_m", "x_m", "y_m", "psi_rad", "kappa_radpm", "w_tr_left_m", "w_tr_right_m"}, has_s);
  std::vector<TrackPoint> pts;
  pts.reserve(rows.size());
  for (const auto& r : rows) pts.push_back({r[0], r[1], r[2], r[3], r[4], r[5], r[6]});
  return TrackLayout(std::move(pts), closed);
}

Raceline load_raceline(const std::filesystem::path& path, bool closed) {
  bool has_s = true;
  const auto rows =
      read_table(path, {"s_m", "x_m", "y_m", "psi_rad", "kappa_radpm", "vx_mps"}, has_s);
  std::vector<RacelinePoint> pts;
  pts.reserve(rows.size());
  for (const auto& r : rows) pts.push_back({r[0], r[1], r[2], r[3], r[4], r[5]});
  return Raceline(std::move(pts), closed);
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_track(const std::filesystem::path& path, const TrackLayout& track) {
  auto out = open_for_write(path);
  out << "s_m,x_m,y_m,psi_rad,kappa_radpm,w_tr_left_m,w_tr_right_m\n";
  for (const auto& p : track.points()) {
    out << fmt_double(p.s) << ',' << fmt_double(p.x) << ',' << fmt_double(p.y) << ','
        << fmt_double(p.psi) << ',' << fmt_double(p.kappa) << ',' << fmt_double(p.w_left) << ','
        << fmt_double(p.w_right) << '\n';
  }
}

void write_raceline(const std::filesystem::path& path, const Raceline& raceline) {
  auto out = open_for_write(path);
  out << "s_m,x_m,y_m,psi_rad,kappa_radpm,vx_mps\n";
  for (const auto& p : raceline.points()) {
    out << fmt_double(p.s) << ',' << fmt_double(p.x) << ',' << fmt_double(p.y) << ','
        << fmt_double(p.psi) << ',' << fmt_double(p.kappa) << ',' << fmt_double(p.v_ref) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Velocity profile

std::vector<double> generate_velocity_profile(const std::vector<double>& s,
                                              const std::vector<double>& kappa,
                                              double total_length, bool closed,
                                              const VelocityLimits& limits) {
  if (!(limits.a_lat_max > 0.0) || !(limits.a_lon_max > 0.0) || !(limits.a_brake_max > 0.0) ||
      !(limits.v_cap > 0.0)) {
    throw ValidationError("velocity profile limits must be positive");
  }
  if (s.size() != kappa.size() || s.size() < 2) {
    throw ValidationError("velocity profile needs matching s/kappa with at least 2 points");
  }
  const std::size_t n = s.size();
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double k = std::abs(kappa[i]);
    v[i] = k > 0.0 ? std::min(limits.v_cap, std::sqrt(limits.a_lat_max / k)) : limits.v_cap;
  }
  const std::size_t segs = closed ? n : n - 1;
  auto ds = [&](std::size_t i) { return (i + 1 < n ? s[i + 1] : total_length) - s[i]; };

  // Both passes only ever lower speeds, so repeating them reaches the
  // periodic fixed point after a few sweeps.
  for (std::size_t sweep = 0; sweep < n + 2; ++sweep) {
    bool changed = false;
    for (std::size_t i = 0; i < segs; ++i) {
      const std::size_t j = (i + 1) % n;
      const double lim = std::sqrt(v[i] * v[i] + 2.0 * limits.a_lon_max * ds(i));
      if (v[j] > lim) {
        v[j] = lim;
        changed = true;
      }
    }
    for (std::size_t k = segs; k-- > 0;) {
      const std::size_t j = (k + 1) % n;
      const double lim = std::sqrt(v[j] * v[j] + 2.0 * limits.a_brake_max * ds(k));
      if (v[k] > lim) {
        v[k] = lim;
        changed = true;
      }
    }
    if (!changed || !closed) break;
  }
  return v;
}

Raceline centerline_raceline(const TrackLayout& track, const VelocityLimits& limits) {
  std::vector<double> s;
  std::vector<double> kappa;
  for (const auto& p : track.points()) {
    s.push_back(p.s);
    kappa.push_back(p.kappa);
  }
  const auto v = generate_velocity_profile(s, kappa, track.total_length(), track.closed(), limits);
  std::vector<RacelinePoint> pts;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& p = track.points()[i];
    pts.push_back({p.s, p.x, p.y, p.psi, p.kappa, v[i]});
  }
  return Raceline(std::move(pts), track.closed());
}

// ---------------------------------------------------------------------------
// Synthetic layouts

TrackLayout make_oval(double straight_length, double radius, double half_width, double spacing) {
  std::vector<TrackPoint> pts;
  const auto n_straight = static_cast<int>(std::ceil(straight_length / spacing));
  auto n_arc = static_cast<int>(std::ceil(kPi * radius / spacing));
  if (n_arc % 2) ++n_arc;  // keeps the apex on a vertex
  const double arc = kPi * radius;
  const double ds_straight = straight_length / n_straight;
  const double dtheta = kPi / n_arc;

  double s0 = 0.0;
  for (int k = 0; k < n_straight; ++k) {
    pts.push_back({s0 + k * ds_straight, k * ds_straight, -radius, 0.0, 0.0, half_width, half_width});
  }
  s0 += straight_length;
  for (int k = 0; k < n_arc; ++k) {
    const double th = -kPi / 2 + k * dtheta;
    pts.push_back({s0 + k * radius * dtheta, straight_length + radius * std::cos(th),
                   radius * std::sin(th), wrap_angle(th + kPi / 2), 1.0 / radius, half_width,
                   half_width});
  }
  s0 += arc;
  for (int k = 0; k < n_straight; ++k) {
    pts.push_back({s0 + k * ds_straight, straight_length - k * ds_straight, radius, kPi, 0.0,
                   half_width, half_width});
  }
  s0 += straight_length;
  for (int k = 0; k < n_arc; ++k) {
    const double th = kPi / 2 + k * dtheta;
    pts.push_back({s0 + k * radius * dtheta, radius * std::cos(th), radius * std::sin(th),
                   wrap_angle(th + kPi / 2), 1.0 / radius, half_width, half_width});
  }
  return TrackLayout(std::move(pts), true);
}

TrackLayout make_straight(double length, double half_width, double spacing) {
  std::vector<TrackPoint> pts;
  const auto n = static_cast<int>(std::ceil(length / spacing));
  for (int k = 0; k <= n; ++k) {
    const double x = length * k / n;
    pts.push_back({x, x, 0.0, 0.0, 0.0, half_width, half_width});
  }
  return TrackLayout(std::move(pts), false);
}

// ---------------------------------------------------------------------------
// Circuit

Circuit::Circuit(TrackLayout track, Raceline raceline)
    : track_(std::move(track)), raceline_(std::move(raceline)) {
  const auto& pts = raceline_.points();
  track_s_at_vertex_.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto pose = track_.cartesian_to_frenet(pts[i].x, pts[i].y);
    const auto w = track_.query(pose.s);
    if ((pose.d >= 0.0 && pose.d >= w.w_left) || (pose.d < 0.0 && -pose.d >= w.w_right)) {
      throw TrackFileError(TrackFileError::Kind::OutsideCorridor,
                           "raceline point " + std::to_string(i) + " lies outside the track corridor");
    }
    track_s_at_vertex_.push_back(pose.s);
  }
}

double Circuit::track_s(double raceline_s) const {
  const auto [i, t] = raceline_.path().locate(raceline_s);
  const std::size_t j = (i + 1 == track_s_at_vertex_.size()) ? 0 : i + 1;
  const double a = track_s_at_vertex_[i];
  double b = track_s_at_vertex_[j];
  const double lt = track_.total_length();
  if (track_.closed() && b < a - 0.5 * lt) b += lt;
  return track_.path().wrap_s(a + t * (b - a));
}

CircuitSample Circuit::query(double raceline_s) const {
  const auto r = raceline_.query(raceline_s);
  const auto w = track_.query(track_s(raceline_s));
  return {w.w_left, w.w_right, r.psi_ref, r.kappa, r.v_ref};
}

Eigen::Matrix2Xd Circuit::sample_forward_waypoints(double s0, double spacing, int count) const {
  if (count < 1 || !(spacing > 0.0)) {
    throw ValidationError("waypoint sampling needs count >= 1 and spacing > 0");
  }
  Eigen::Matrix2Xd out(2, 3 * count);
  for (int k = 0; k < count; ++k) {
    const double s = s0 + k * spacing;
    out.col(k) = raceline_.path().to_cartesian({s, 0.0});
    const double st = track_s(s);
    const auto w = track_.query(st);
    out.col(count + k) = track_.path().to_cartesian({st, w.w_left});
    out.col(2 * count + k) = track_.path().to_cartesian({st, -w.w_right});
  }
  return out;
}

}  // namespace rlpp::track
