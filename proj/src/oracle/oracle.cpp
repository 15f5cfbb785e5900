#include "olatkit/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "olatkit/error.hpp"
#include "olatkit/json_io.hpp"
#include "olatkit/random.hpp"

namespace olat::oracle {
namespace {

struct Hit {
  bool hit = false;
  Vec3 normal;
  Vec3 to_eye;
};

Hit intersect(const SphereScene& scene, const Vec3& origin, const Vec3& dir) {
  const Vec3 oc = origin - scene.center;
  const double b = dot(oc, dir);
  const double c = dot(oc, oc) - scene.radius * scene.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return {};
  const double s = std::sqrt(disc);
  double t = -b - s;
  if (t <= 0.0) t = -b + s;
  if (t <= 0.0) return {};
  const Vec3 p = origin + dir * t;
  return {true, normalize(p - scene.center), -dir};
}

// Sum of six oriented sinusoids over the normal, normalized to [-1, 1].
struct Pattern {
  std::array<Vec3, 6> freq;
  std::array<double, 6> phase;

  Pattern(std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    const auto unit = [&]() { return uniform(rng, -1.0, 1.0); };
    for (std::size_t k = 0; k < 6; ++k) {
      const double fx = unit(), fy = unit(), fz = unit();
      freq[k] = normalize(Vec3{fx, fy, fz}) * (scale * (4.0 + 2.0 * static_cast<double>(k)));
      phase[k] = kPi * unit();
    }
  }

  double operator()(const Vec3& n) const {
    double sum = 0.0;
    for (std::size_t k = 0; k < 6; ++k) sum += std::sin(dot(freq[k], n) + phase[k]);
    return sum / 6.0;
  }
};

double modulation_at(const SphereScene& scene, const Vec3& n) {
  if (scene.texture_amplitude <= 0.0) return 1.0;
  return 1.0 + scene.texture_amplitude * Pattern(scene.texture_seed, scene.texture_frequency)(n);
}

std::array<double, 3> shade_with(const SphereScene& scene, double modulation, const Vec3& normal, const Vec3& omega,
                                 const Vec3& to_eye) {
  const double n_dot_l = dot(normal, omega);
  if (n_dot_l <= 0.0) return {0.0, 0.0, 0.0};
  const Vec3 half = normalize(omega + to_eye);
  const double n_dot_h = std::max(0.0, dot(normal, half));
  const double spec = scene.specular * std::pow(n_dot_h, scene.shininess);
  std::array<double, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) out[c] = scene.albedo[c] * modulation / kPi * n_dot_l + spec;
  return out;
}

template <typename Fn>
HdrImageD per_pixel(const CameraModel& camera, const SphereScene& scene, Fn&& fn) {
  validate(camera);
  HdrImageD out(camera.width, camera.height);
  const Vec3 origin = camera.center();
  const auto rows = static_cast<std::ptrdiff_t>(camera.height);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t yi = 0; yi < rows; ++yi) {
    const auto y = static_cast<std::size_t>(yi);
    for (std::size_t x = 0; x < camera.width; ++x) {
      const Vec3 dir = camera.ray_direction(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
      const Hit hit = intersect(scene, origin, dir);
      if (!hit.hit) continue;
      const std::array<double, 3> v = fn(hit);
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = v[c];
    }
  }
  return out;
}

double value_noise(double x, double y, std::size_t grid, const std::vector<double>& lattice) {
  const double gx = x * static_cast<double>(grid);
  const double gy = y * static_cast<double>(grid);
  const auto x0 = static_cast<std::size_t>(std::floor(gx));
  const auto y0 = static_cast<std::size_t>(std::floor(gy));
  const double tx = gx - std::floor(gx);
  const double ty = gy - std::floor(gy);
  const double sx = tx * tx * (3.0 - 2.0 * tx);
  const double sy = ty * ty * (3.0 - 2.0 * ty);
  const std::size_t n = grid + 1;
  const auto at = [&](std::size_t i, std::size_t j) { return lattice[std::min(j, grid) * n + std::min(i, grid)]; };
  const double top = at(x0, y0) + sx * (at(x0 + 1, y0) - at(x0, y0));
  const double bottom = at(x0, y0 + 1) + sx * (at(x0 + 1, y0 + 1) - at(x0, y0 + 1));
  return top + sy * (bottom - top);
}

}  // namespace

void validate(const SphereScene& scene) {
  if (!(scene.radius > 0.0)) throw ValidationError("sphere radius must be positive");
  for (double a : scene.albedo) {
    if (!(a >= 0.0)) throw ValidationError("albedo must be non-negative");
  }
  if (!(scene.specular >= 0.0)) throw ValidationError("specular coefficient must be non-negative");
  if (!(scene.shininess >= 0.0)) throw ValidationError("shininess must be non-negative");
  if (!(scene.texture_frequency > 0.0) || !std::isfinite(scene.texture_frequency)) {
    throw ValidationError("texture frequency must be positive");
  }
}

std::array<double, 3> shade(const SphereScene& scene, const Vec3& normal, const Vec3& omega, const Vec3& to_eye) {
  return shade_with(scene, modulation_at(scene, normal), normal, omega, to_eye);
}

HdrImageD render_olat_sphere_d(const SphereScene& scene, const Vec3& omega, const std::array<double, 3>& intensity,
                               const CameraModel& camera) {
  validate(scene);
  return per_pixel(camera, scene, [&](const Hit& hit) {
    const auto s = shade_with(scene, modulation_at(scene, hit.normal), hit.normal, omega, hit.to_eye);
    return std::array<double, 3>{intensity[0] * s[0], intensity[1] * s[1], intensity[2] * s[2]};
  });
}

HdrImage render_olat_sphere(const SphereScene& scene, const Vec3& omega, const std::array<double, 3>& intensity,
                            const CameraModel& camera) {
  return convert<float>(render_olat_sphere_d(scene, omega, intensity, camera));
}

HdrImageD render_env_sphere_d(const SphereScene& scene, const EnvMap& env, const CameraModel& camera) {
  validate(scene);
  validate(env);
  const std::size_t h = env.image.height;
  const std::size_t w = env.image.width;
  std::vector<Vec3> dirs(h * w);
  std::vector<std::array<double, 3>> power(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    const double solid_angle = texel_solid_angle(r, h, w);
    for (std::size_t c = 0; c < w; ++c) {
      dirs[r * w + c] = texel_direction(r, c, h, w);
      for (std::size_t k = 0; k < 3; ++k) power[r * w + c][k] = static_cast<double>(env.image.at(c, r, k)) * solid_angle;
    }
  }
  return per_pixel(camera, scene, [&](const Hit& hit) {
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    const double modulation = modulation_at(scene, hit.normal);
    for (std::size_t t = 0; t < dirs.size(); ++t) {
      const auto s = shade_with(scene, modulation, hit.normal, dirs[t], hit.to_eye);
      for (std::size_t k = 0; k < 3; ++k) acc[k] += power[t][k] * s[k];
    }
    return acc;
  });
}

HdrImage render_env_sphere(const SphereScene& scene, const EnvMap& env, const CameraModel& camera) {
  return convert<float>(render_env_sphere_d(scene, env, camera));
}

std::vector<std::uint8_t> coverage_mask(const SphereScene& scene, const CameraModel& camera) {
  std::vector<std::uint8_t> mask(camera.width * camera.height, 0);
  const Vec3 origin = camera.center();
  for (std::size_t y = 0; y < camera.height; ++y) {
    for (std::size_t x = 0; x < camera.width; ++x) {
      const Vec3 dir = camera.ray_direction(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
      mask[y * camera.width + x] = intersect(scene, origin, dir).hit ? 1 : 0;
    }
  }
  return mask;
}

LightRig generate_rig(std::size_t count) {
  if (count == 0) throw DomainError("rig size must be >= 1");
  LightRig rig;
  rig.labels = default_labels(count);
  if (count == 1) {
    rig.directions.push_back({0.0, 1.0, 0.0});
    return rig;
  }
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < count; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(count);
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * static_cast<double>(i);
    rig.directions.push_back(normalize(Vec3{r * std::cos(phi), y, r * std::sin(phi)}));
  }
  return rig;
}

LightRig texel_rig(std::size_t height, std::size_t width) {
  LightRig rig;
  rig.labels = default_labels(height * width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) rig.directions.push_back(texel_direction(r, c, height, width));
  }
  return rig;
}

WeightVector texel_weights(const EnvMap& env) {
  const std::size_t h = env.image.height;
  const std::size_t w = env.image.width;
  WeightVector out;
  out.weights.resize(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    const double solid_angle = texel_solid_angle(r, h, w);
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t k = 0; k < 3; ++k) out.weights[r * w + c][k] = static_cast<double>(env.image.at(c, r, k)) * solid_angle;
    }
  }
  return out;
}

std::vector<HdrImageD> render_stack_d(const SphereScene& scene, const LightRig& rig, const CameraModel& camera) {
  std::vector<HdrImageD> out;
  out.reserve(rig.size());
  for (const Vec3& d : rig.directions) out.push_back(render_olat_sphere_d(scene, d, {1.0, 1.0, 1.0}, camera));
  return out;
}

std::vector<HdrImage> render_stack(const SphereScene& scene, const LightRig& rig, const CameraModel& camera) {
  std::vector<HdrImage> out;
  out.reserve(rig.size());
  for (const Vec3& d : rig.directions) out.push_back(render_olat_sphere(scene, d, {1.0, 1.0, 1.0}, camera));
  return out;
}

EnvMap smooth_env(std::size_t height, std::size_t width, int variant) {
  EnvMap env{HdrImage(width, height)};
  // Sky gradient plus broad lobes; each variant moves and tints the lobes.
  struct Lobe {
    Vec3 dir;
    std::array<double, 3> color;
    double sharpness;
  };
  std::vector<Lobe> lobes;
  std::array<double, 3> sky{0.25, 0.3, 0.4};
  switch (variant % 3) {
    case 0:
      lobes = {{normalize({0.3, 0.8, 0.5}), {2.0, 1.8, 1.5}, 6.0}, {normalize({-0.7, 0.1, 0.7}), {0.3, 0.4, 0.8}, 3.0}};
      break;
    case 1:
      lobes = {{normalize({-0.5, 0.5, 0.7}), {2.2, 1.2, 0.6}, 5.0}, {normalize({0.8, -0.2, 0.4}), {0.4, 0.8, 0.5}, 4.0}};
      sky = {0.35, 0.3, 0.25};
      break;
    default:
      lobes = {{normalize({0.0, 0.3, 1.0}), {1.5, 1.5, 1.6}, 4.0}, {normalize({0.9, 0.4, -0.2}), {1.0, 0.5, 0.3}, 8.0}};
      sky = {0.2, 0.22, 0.3};
      break;
  }
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const Vec3 d = texel_direction(r, c, height, width);
      const double up = 0.5 * (1.0 + d.y);
      for (std::size_t k = 0; k < 3; ++k) {
        double v = sky[k] * (0.3 + 0.7 * up);
        for (const auto& lobe : lobes) v += lobe.color[k] * std::exp(lobe.sharpness * (dot(d, lobe.dir) - 1.0));
        env.image.at(c, r, k) = static_cast<float>(v);
      }
    }
  }
  return env;
}

CameraModel default_camera(std::size_t width, std::size_t height) {
  return CameraModel::look_at({0.0, 0.0, 3.0}, {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, 35.0 * kPi / 180.0, width, height);
}

std::vector<HdrImage> take_frames(const SphereScene& scene, const LightRig& rig, const TakeLayout& layout,
                                  const CameraModel& camera) {
  validate(layout);
  const std::vector<Vec3> frontal{normalize({0.0, 0.0, 1.0}), normalize({0.6, 0.4, 0.7}), normalize({-0.6, 0.4, 0.7}),
                                  normalize({0.0, -0.5, 0.8})};
  std::vector<HdrImage> frames(layout.frame_count);
  std::size_t olat = 0;
  for (std::size_t i = 0; i < layout.frame_count; ++i) {
    const bool tracking = std::binary_search(layout.tracking.begin(), layout.tracking.end(), i);
    if (tracking) {
      HdrImageD sum(camera.width, camera.height);
      for (const Vec3& d : frontal) {
        const HdrImageD one = render_olat_sphere_d(scene, d, {0.35, 0.35, 0.35}, camera);
        for (std::size_t k = 0; k < sum.data.size(); ++k) sum.data[k] += one.data[k];
      }
      frames[i] = convert<float>(sum);
    } else {
      frames[i] = render_olat_sphere(scene, rig.directions[olat % rig.size()], {1.0, 1.0, 1.0}, camera);
      ++olat;
    }
  }
  return frames;
}

DriftingTake generate_drifting_take(std::span<const HdrImage> base, const std::array<double, 2>& drift,
                                    const TakeLayout& layout) {
  validate(layout);
  if (base.size() != layout.frame_count) throw ValidationError("base frame count does not match the layout");
  const double per_block = std::hypot(drift[0], drift[1]) * static_cast<double>(layout.block_size);
  if (per_block > 5.0 + 1e-12) throw DomainError("drift exceeds 5 px per block");
  DriftingTake take;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double sx = drift[0] * static_cast<double>(i);
    const double sy = drift[1] * static_cast<double>(i);
    take.displacement.push_back({sx, sy});
    take.ground_truth.push_back(base[i]);
    if (sx == 0.0 && sy == 0.0) {
      take.misaligned.push_back(base[i]);
    } else {
      take.misaligned.push_back(
          warp(base[i], constant_flow(base[i].width, base[i].height, static_cast<float>(-sx), static_cast<float>(-sy))));
    }
  }
  return take;
}

HdrImage smooth_noise(std::size_t width, std::size_t height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t grids[3] = {4, 9, 17};
  std::vector<std::vector<double>> lattices;
  for (std::size_t g : grids) {
    std::vector<double> lattice((g + 1) * (g + 1));
    for (double& v : lattice) v = uniform01(rng);
    lattices.push_back(std::move(lattice));
  }
  HdrImage img(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(width);
      const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(height);
      const double n = 0.5 * value_noise(u, v, grids[0], lattices[0]) + 0.3 * value_noise(u, v, grids[1], lattices[1]) +
                       0.2 * value_noise(u, v, grids[2], lattices[2]);
      const float value = static_cast<float>(0.1 + 0.9 * n);
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = value;
    }
  }
  return img;
}

SphereScene scene_from_json(const nlohmann::json& j) {
  try {
    SphereScene s;
    if (j.contains("center")) {
      const auto c = j["center"].get<std::vector<double>>();
      if (c.size() != 3) throw ValidationError("scene center must have 3 entries");
      s.center = {c[0], c[1], c[2]};
    }
    s.radius = j.value("radius", s.radius);
    if (j.contains("albedo")) {
      const auto a = j["albedo"].get<std::vector<double>>();
      if (a.size() != 3) throw ValidationError("scene albedo must have 3 entries");
      s.albedo = {a[0], a[1], a[2]};
    }
    s.specular = j.value("specular", s.specular);
    s.shininess = j.value("shininess", s.shininess);
    s.texture_amplitude = j.value("texture_amplitude", s.texture_amplitude);
    s.texture_seed = j.value("texture_seed", s.texture_seed);
    s.texture_frequency = j.value("texture_frequency", s.texture_frequency);
    validate(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid scene: ") + e.what());
  }
}

CameraModel scene_camera_from_json(const nlohmann::json& j) {
  try {
    if (!j.contains("camera")) return default_camera(64, 64);
    const auto& cam = j["camera"];
    if (cam.contains("fx")) return camera_from_json(cam);
    const std::size_t w = cam.at("width").get<std::size_t>();
    const std::size_t h = cam.at("height").get<std::size_t>();
    const double fov = cam.value("fov_deg", 35.0) * kPi / 180.0;
    const double dist = cam.value("distance", 3.0);
    return CameraModel::look_at({0.0, 0.0, dist}, {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, fov, w, h);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid scene camera: ") + e.what());
  }
}

}  // namespace olat::oracle
