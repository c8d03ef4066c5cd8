#include "metaview/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "metaview/error.hpp"

namespace metaview {

namespace {

constexpr double kPi = std::numbers::pi;

double clamp_unit(double c) { return std::clamp(c, -1.0, 1.0); }

}  // namespace

double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

Direction Direction::from(const Vec3& v) {
  const double n = norm(v);
  if (!(n > kZeroVectorTolerance)) throw ZeroVector();
  return Direction(Vec3{v.x / n, v.y / n, v.z / n});
}

Direction Direction::from_unit(const Vec3& v) {
  if (!(std::abs(dot(v, v) - 1.0) <= 1e-9)) {
    throw std::invalid_argument("vector is not unit length");
  }
  return Direction(v);
}

Direction normalize(const Vec3& v) { return Direction::from(v); }

double angular_distance(const Direction& u, const Direction& v) {
  return std::acos(clamp_unit(dot(u.vec(), v.vec())));
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (!(n > kZeroVectorTolerance)) throw ZeroVector();
  return {w / n, x / n, y / n, z / n};
}

Quaternion operator*(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Direction quat_to_direction(const Quaternion& q, const Direction& forward) {
  const Quaternion n = q.normalized();
  const Quaternion p{0.0, forward.x(), forward.y(), forward.z()};
  const Quaternion r = n * p * n.conjugate();
  return Direction::from(r.x, r.y, r.z);
}

Direction quat_to_direction(const Quaternion& q) {
  return quat_to_direction(q, Direction::from(kDefaultForward));
}

SphericalCap::SphericalCap(const Direction& center, double half_angle)
    : center_(center), half_angle_(half_angle) {
  if (!(half_angle >= 0.0 && half_angle <= kMaxHalfAngle)) {
    throw std::invalid_argument("cap half-angle out of [0, pi/2]: " + std::to_string(half_angle));
  }
}

double cap_area(double half_angle) {
  // 1 - cos(a) = 2 sin^2(a/2), accurate for small angles.
  const double s = std::sin(0.5 * half_angle);
  return 4.0 * kPi * s * s;
}

double cap_area(const SphericalCap& cap) { return cap_area(cap.half_angle()); }

double cap_intersection_area(double half_angle_a, double half_angle_b, double separation) {
  const double d = std::clamp(separation, 0.0, kPi);
  // Canonical argument order keeps the result bitwise symmetric.
  const double small = std::min(half_angle_a, half_angle_b);
  const double large = std::max(half_angle_a, half_angle_b);
  const double a = small;
  const double b = large;
  const double small_area = cap_area(small);

  if (d >= a + b) return 0.0;
  if (d + small <= large) return small_area;

  // Partial overlap: area of the lens bounded by two small circles.
  const double ca = std::cos(a), sa = std::sin(a);
  const double cb = std::cos(b), sb = std::sin(b);
  const double cd = std::cos(d), sd = std::sin(d);

  const double apex = std::acos(clamp_unit((cd - ca * cb) / (sa * sb)));
  const double wedge_a = std::acos(clamp_unit((cb - cd * ca) / (sd * sa)));
  const double wedge_b = std::acos(clamp_unit((ca - cd * cb) / (sd * sb)));
  const double area = 2.0 * (kPi - apex - wedge_a * ca - wedge_b * cb);
  return std::clamp(area, 0.0, small_area);
}

double cap_intersection_area(const SphericalCap& a, const SphericalCap& b) {
  return cap_intersection_area(a.half_angle(), b.half_angle(),
                               angular_distance(a.center(), b.center()));
}

Direction slerp(const Direction& from, const Direction& to, double t) {
  const double omega = angular_distance(from, to);
  if (omega < 1e-12) return to;
  if (kPi - omega < 1e-9) {
    // Antipodal: any great circle works; pick one through a perpendicular axis.
    Vec3 axis = cross(from.vec(), Vec3{0.0, 1.0, 0.0});
    if (norm(axis) < 1e-6) axis = cross(from.vec(), Vec3{1.0, 0.0, 0.0});
    return Direction::from(rotate(from.vec(), Direction::from(axis).vec(), t * omega));
  }
  const double s = std::sin(omega);
  const double wa = std::sin((1.0 - t) * omega) / s;
  const double wb = std::sin(t * omega) / s;
  return Direction::from(wa * from.vec() + wb * to.vec());
}

Vec3 rotate(const Vec3& v, const Vec3& axis, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return c * v + s * cross(axis, v) + ((1.0 - c) * dot(axis, v)) * axis;
}

LonLat to_lonlat(const Direction& d) {
  return {std::atan2(d.x(), -d.z()), std::asin(clamp_unit(d.y()))};
}

Direction from_lonlat(const LonLat& ll) {
  const double cl = std::cos(ll.lat);
  return Direction::from(cl * std::sin(ll.lon), std::sin(ll.lat), -cl * std::cos(ll.lon));
}

}  // namespace metaview
