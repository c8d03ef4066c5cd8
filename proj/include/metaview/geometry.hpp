#pragma once

#include <array>
#include <numbers>

namespace metaview {

/// Raw, unconstrained 3-vector.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, const Vec3& a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

double dot(const Vec3& a, const Vec3& b);
Vec3 cross(const Vec3& a, const Vec3& b);
double norm(const Vec3& v);

/// A point on the unit sphere; every instance has unit norm up to rounding.
class Direction {
 public:
  /// Throws ZeroVector when |v| <= 1e-12.
  static Direction from(const Vec3& v);
  static Direction from(double x, double y, double z) { return from(Vec3{x, y, z}); }
  /// Keeps the components bit-for-bit; throws std::invalid_argument unless
  /// |v|^2 is within 1e-9 of 1.
  static Direction from_unit(const Vec3& v);

  double x() const { return v_.x; }
  double y() const { return v_.y; }
  double z() const { return v_.z; }
  const Vec3& vec() const { return v_; }
  std::array<double, 3> array() const { return {v_.x, v_.y, v_.z}; }

  friend bool operator==(const Direction&, const Direction&) = default;

 private:
  explicit Direction(const Vec3& v) : v_(v) {}
  Vec3 v_{0.0, 0.0, -1.0};
};

inline constexpr double kZeroVectorTolerance = 1e-12;
inline constexpr double kMaxHalfAngle = std::numbers::pi / 2.0;

Direction normalize(const Vec3& v);

/// Great-circle angle in [0, pi]; the dot product is clamped before acos.
double angular_distance(const Direction& u, const Direction& v);

struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const;
  /// Throws ZeroVector for a (near) zero quaternion.
  Quaternion normalized() const;
  Quaternion conjugate() const { return {w, -x, -y, -z}; }
  friend Quaternion operator*(const Quaternion& a, const Quaternion& b);
};

/// Canonical camera forward axis used when converting orientations.
inline const Vec3 kDefaultForward{0.0, 0.0, -1.0};

/// Rotates `forward` by q (q * forward * q^-1). q is normalized first.
Direction quat_to_direction(const Quaternion& q, const Direction& forward);
Direction quat_to_direction(const Quaternion& q);

/// Spherical cap (a "circle of the sphere") with half-angle in [0, pi/2].
class SphericalCap {
 public:
  /// Throws std::invalid_argument when half_angle is outside [0, pi/2].
  SphericalCap(const Direction& center, double half_angle);

  const Direction& center() const { return center_; }
  double half_angle() const { return half_angle_; }

 private:
  Direction center_;
  double half_angle_;
};

/// Area of a cap of the given half-angle: 2 pi (1 - cos a).
double cap_area(double half_angle);
double cap_area(const SphericalCap& cap);

/// Exact intersection area of two caps on the unit sphere.
double cap_intersection_area(const SphericalCap& a, const SphericalCap& b);

/// Same as above, parameterized by the angular separation of the centers.
double cap_intersection_area(double half_angle_a, double half_angle_b, double separation);

/// Spherical linear interpolation between two directions; t in [0, 1].
Direction slerp(const Direction& from, const Direction& to, double t);

/// Rotates v about the unit axis by angle (Rodrigues).
Vec3 rotate(const Vec3& v, const Vec3& axis, double angle);

/// Longitude in (-pi, pi] and latitude in [-pi/2, pi/2], with the default
/// forward axis at longitude 0 and +y as the pole.
struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
};
LonLat to_lonlat(const Direction& d);
Direction from_lonlat(const LonLat& ll);

}  // namespace metaview
