#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace toolwear {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  bool operator==(const Vec3&) const = default;
};

// Microphone positions in meters. Positions are finite and pairwise distinct.
class ArrayGeometry {
 public:
  explicit ArrayGeometry(std::vector<Vec3> positions);

  std::size_t size() const { return positions_.size(); }
  std::span<const Vec3> positions() const { return positions_; }
  const Vec3& operator[](std::size_t m) const { return positions_[m]; }

  // Plain text: one "x y z" line per microphone, '#' starts a comment.
  static ArrayGeometry parse(std::istream& in);
  void write(std::ostream& out) const;

  bool operator==(const ArrayGeometry&) const = default;

 private:
  std::vector<Vec3> positions_;
};

// Far-field look direction: unit vector from the array towards the source.
class SteeringDirection {
 public:
  // Throws ErrorKind::invalid_direction unless |v| = 1 within 1e-9.
  explicit SteeringDirection(const Vec3& v);

  static SteeringDirection normalized(const Vec3& v);
  // Azimuth in the array (x-y) plane and elevation above it, radians.
  static SteeringDirection from_angles(double azimuth, double elevation);

  const Vec3& vector() const { return psi_; }
  SteeringDirection reversed() const { return SteeringDirection(-psi_); }

 private:
  Vec3 psi_;
};

// Per-microphone steering delays in samples, normalized so the smallest is 0.
struct DelaySet {
  std::vector<double> delays;
  double sample_rate = 0.0;

  std::size_t size() const { return delays.size(); }
  double max() const;
};

constexpr double kSpeedOfSound = 343.0;

// delay_m = (p_m . psi - min_k p_k . psi) / c * fs
DelaySet steering_delays(const ArrayGeometry& geom, const SteeringDirection& psi,
                         double speed_of_sound, double sample_rate);

// Seeded pseudorandom planar layout (z = 0) inside a disc of diameter `aperture`.
// A single microphone sits at the origin.
ArrayGeometry random_geometry(std::uint64_t seed, std::size_t mics, double aperture);

}  // namespace toolwear
