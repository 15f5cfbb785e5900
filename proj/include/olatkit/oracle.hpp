#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include <json.hpp>

#include "olatkit/align.hpp"
#include "olatkit/image.hpp"
#include "olatkit/lightrig.hpp"

namespace olat::oracle {

// Lambertian + Blinn-Phong sphere on black. With texture_amplitude > 0 the
// albedo is modulated by a smooth pattern over the surface normal,
// rho(n) = rho * (1 + a * pattern(n)), |pattern| <= 1.
struct SphereScene {
  Vec3 center{0.0, 0.0, 0.0};
  double radius = 0.8;
  std::array<double, 3> albedo{kPi * 0.6, kPi * 0.45, kPi * 0.35};
  double specular = 0.3;
  double shininess = 20.0;
  double texture_amplitude = 0.0;
  std::uint64_t texture_seed = 7;
  double texture_frequency = 1.0;  // scales the pattern's angular frequencies (4..14 rad at 1)
};

void validate(const SphereScene& scene);

// Outgoing radiance at one shaded point for a unit directional light.
// Zero when n.omega <= 0.
std::array<double, 3> shade(const SphereScene& scene, const Vec3& normal, const Vec3& omega, const Vec3& to_eye);

HdrImageD render_olat_sphere_d(const SphereScene& scene, const Vec3& omega, const std::array<double, 3>& intensity,
                               const CameraModel& camera);
HdrImage render_olat_sphere(const SphereScene& scene, const Vec3& omega, const std::array<double, 3>& intensity,
                            const CameraModel& camera);

// Direct environment integration with the lat-long texel solid angles.
HdrImageD render_env_sphere_d(const SphereScene& scene, const EnvMap& env, const CameraModel& camera);
HdrImage render_env_sphere(const SphereScene& scene, const EnvMap& env, const CameraModel& camera);

// 1 if pixel (x, y) sees the sphere.
std::vector<std::uint8_t> coverage_mask(const SphereScene& scene, const CameraModel& camera);

// Deterministic Fibonacci-sphere rig; L = 1 gives (0, 1, 0).
LightRig generate_rig(std::size_t count);

// Rig whose lights are the texel directions of an H x W lat-long map, and
// the matching weights radiance * solid angle.
LightRig texel_rig(std::size_t height, std::size_t width);
WeightVector texel_weights(const EnvMap& env);

// OLAT stack (unit intensity) for every light of `rig`.
std::vector<HdrImage> render_stack(const SphereScene& scene, const LightRig& rig, const CameraModel& camera);
std::vector<HdrImageD> render_stack_d(const SphereScene& scene, const LightRig& rig, const CameraModel& camera);

// Smooth procedural environment maps (variant 0, 1, 2), non-negative.
EnvMap smooth_env(std::size_t height, std::size_t width, int variant);

// Camera at distance 3 on +Z looking at the origin, 35 degree vertical fov.
CameraModel default_camera(std::size_t width, std::size_t height);

// Frames of a capture take: tracking frames are lit from a fixed set of
// frontal lights, frame i otherwise uses rig light (i mod L).
std::vector<HdrImage> take_frames(const SphereScene& scene, const LightRig& rig, const TakeLayout& layout,
                                  const CameraModel& camera);

struct DriftingTake {
  std::vector<HdrImage> misaligned;
  std::vector<HdrImage> ground_truth;
  std::vector<std::array<double, 2>> displacement;  // content shift of each frame, pixels
};

// Frame i is translated by i * drift (bilinear resampling). Requires
// |drift| * block_size <= 5.
DriftingTake generate_drifting_take(std::span<const HdrImage> base, const std::array<double, 2>& drift,
                                    const TakeLayout& layout);

// Radially symmetric smooth noise in [0.1, 1], for flow tests.
HdrImage smooth_noise(std::size_t width, std::size_t height, std::uint64_t seed);

// scene.json: {center, radius, albedo, specular, shininess, texture_amplitude,
// texture_seed, texture_frequency, camera: <camera object> | {width, height[, fov_deg, distance]}}
SphereScene scene_from_json(const nlohmann::json& j);
CameraModel scene_camera_from_json(const nlohmann::json& j);

}  // namespace olat::oracle
