#include "toolwear/array_model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "toolwear/error.hpp"
#include "toolwear/parallel.hpp"

namespace toolwear {

double Vec3::norm() const { return std::sqrt(dot(*this)); }

ArrayGeometry::ArrayGeometry(std::vector<Vec3> positions) : positions_(std::move(positions)) {
  if (positions_.empty()) throw Error(ErrorKind::empty_geometry, "array geometry has no microphones");
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    const Vec3& p = positions_[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw Error(ErrorKind::invalid_argument,
                  "microphone " + std::to_string(i) + " has a non-finite coordinate");
    for (std::size_t j = 0; j < i; ++j) {
      if (positions_[j] == p)
        throw Error(ErrorKind::invalid_argument, "microphones " + std::to_string(j) + " and " +
                                                     std::to_string(i) + " coincide");
    }
  }
}

ArrayGeometry ArrayGeometry::parse(std::istream& in) {
  std::vector<Vec3> positions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    Vec3 p;
    if (!(fields >> p.x)) continue;  // blank or comment-only
    std::string extra;
    if (!(fields >> p.y >> p.z) || (fields >> extra))
      throw Error(ErrorKind::data_format,
                  "geometry line " + std::to_string(line_no) + ": expected three numbers");
    positions.push_back(p);
  }
  return ArrayGeometry(std::move(positions));
}

void ArrayGeometry::write(std::ostream& out) const {
  out << "# x y z (m)\n";
  out << std::setprecision(17);
  for (const Vec3& p : positions_) out << p.x << ' ' << p.y << ' ' << p.z << '\n';
}

SteeringDirection::SteeringDirection(const Vec3& v) : psi_(v) {
  const double n = v.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-9)
    throw Error(ErrorKind::invalid_direction, "steering direction must be a unit vector");
}

SteeringDirection SteeringDirection::normalized(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n))
    throw Error(ErrorKind::invalid_direction, "cannot normalize a zero or non-finite direction");
  return SteeringDirection(v * (1.0 / n));
}

SteeringDirection SteeringDirection::from_angles(double azimuth, double elevation) {
  return normalized({std::cos(elevation) * std::cos(azimuth),
                     std::cos(elevation) * std::sin(azimuth), std::sin(elevation)});
}

double DelaySet::max() const {
  return delays.empty() ? 0.0 : *std::max_element(delays.begin(), delays.end());
}

DelaySet steering_delays(const ArrayGeometry& geom, const SteeringDirection& psi,
                         double speed_of_sound, double sample_rate) {
  if (geom.size() == 0) throw Error(ErrorKind::empty_geometry, "array geometry has no microphones");
  if (!(speed_of_sound > 0.0) || !(sample_rate > 0.0))
    throw Error(ErrorKind::invalid_argument, "speed of sound and sample rate must be positive");

  std::vector<double> proj(geom.size());
  for (std::size_t m = 0; m < geom.size(); ++m) proj[m] = geom[m].dot(psi.vector());
  const double lo = *std::min_element(proj.begin(), proj.end());

  DelaySet out;
  out.sample_rate = sample_rate;
  out.delays.resize(geom.size());
  for (std::size_t m = 0; m < geom.size(); ++m)
    out.delays[m] = (proj[m] - lo) / speed_of_sound * sample_rate;
  return out;
}

ArrayGeometry random_geometry(std::uint64_t seed, std::size_t mics, double aperture) {
  if (mics == 0) throw Error(ErrorKind::empty_geometry, "array geometry has no microphones");
  if (!(aperture > 0.0)) throw Error(ErrorKind::invalid_argument, "aperture must be positive");
  if (mics == 1) return ArrayGeometry({Vec3{}});

  const double radius = 0.5 * aperture;
  // Keep the layout from collapsing two capsules onto each other.
  const double min_spacing = 0.25 * aperture / std::sqrt(static_cast<double>(mics));
  auto rng = make_rng(seed, 0x67656f6d);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  std::vector<Vec3> positions;
  positions.reserve(mics);
  std::size_t attempts = 0;
  while (positions.size() < mics) {
    const Vec3 p{radius * unit(rng), radius * unit(rng), 0.0};
    ++attempts;
    if (p.x * p.x + p.y * p.y > radius * radius) continue;
    const bool crowded = attempts < 100000 &&
                         std::any_of(positions.begin(), positions.end(), [&](const Vec3& q) {
                           return (p - q).norm() < min_spacing;
                         });
    if (crowded) continue;
    if (std::find(positions.begin(), positions.end(), p) != positions.end()) continue;
    positions.push_back(p);
  }
  return ArrayGeometry(std::move(positions));
}

}  // namespace toolwear
