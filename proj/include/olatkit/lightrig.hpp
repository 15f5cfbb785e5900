#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "olatkit/geometry.hpp"
#include "olatkit/image.hpp"

namespace olat {

struct LightRig {
  std::vector<Vec3> directions;
  std::vector<std::string> labels;

  std::size_t size() const { return directions.size(); }
  friend bool operator==(const LightRig&, const LightRig&) = default;
};

// Throws ValidationError on an empty rig, a label/direction count mismatch,
// a non-unit direction (|norm - 1| > 1e-9) or two identical directions.
void validate(const LightRig& rig);

// Labels "L000", "L001", ... for rigs built in code.
std::vector<std::string> default_labels(std::size_t count);

/// Pinhole camera. `rotation` and `translation` map world to camera
/// coordinates (x right, y down, z forward).
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation{};
  Vec3 translation{};
  std::size_t width = 0;
  std::size_t height = 0;

  Vec3 center() const { return -rotation.transpose_mul(translation); }
  // Unit world-space direction through the centre of pixel (x, y).
  Vec3 ray_direction(double px, double py) const;

  static CameraModel look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double vertical_fov_rad,
                             std::size_t width, std::size_t height);
};

void validate(const CameraModel& cam);

struct EnvMap {
  HdrImage image;  // equirectangular, row 0 at +Y
};

void validate(const EnvMap& env);

struct WeightVector {
  std::vector<std::array<double, 3>> weights;

  std::size_t size() const { return weights.size(); }
  std::array<double, 3> total() const;
  friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

void validate(const WeightVector& w, const LightRig& rig);

// Solid angle of any texel in `row` of an H x W lat-long map:
// (2 pi / W) * (cos(pi row / H) - cos(pi (row + 1) / H)).
double texel_solid_angle(std::size_t row, std::size_t height, std::size_t width);

// theta = pi (row + 0.5) / H, phi = 2 pi (col + 0.5) / W,
// d = (sin theta cos phi, cos theta, sin theta sin phi).
Vec3 texel_direction(std::size_t row, std::size_t col, std::size_t height, std::size_t width);

// Reduces an azimuth to [0, 2 pi); values within 1e-9 rad of a multiple of
// 2 pi collapse to exactly 0.
double normalize_azimuth(double radians);

// Nearest-light binning of the environment map: every texel direction is
// rotated, assigned to the rig light with the largest dot product (ties go
// to the lowest index), and its radiance times solid angle is added to that
// light. Per-row partial sums are combined in row order, so the result is
// independent of the thread count.
WeightVector env_to_weights(const EnvMap& env, const LightRig& rig, double azimuth = 0.0);
WeightVector env_to_weights(const EnvMap& env, const LightRig& rig, const Mat3& rotation);

// Texel -> light index table for a given map size and rotation.
std::vector<std::size_t> assign_texels(std::size_t height, std::size_t width, const LightRig& rig,
                                       const Mat3& rotation);

// Keeps the `k` lights with the largest channel-sum weight (ties to the lower
// index) and rescales each channel so its total is unchanged.
WeightVector truncate_top_k(const WeightVector& w, std::size_t k);

// Zeroes every light whose largest channel is <= threshold.
WeightVector cull_weights(const WeightVector& w, double threshold);

}  // namespace olat
