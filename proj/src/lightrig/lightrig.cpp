#include "olatkit/lightrig.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "olatkit/error.hpp"

namespace olat {

void validate(const LightRig& rig) {
  if (rig.directions.empty()) throw ValidationError("light rig has no lights");
  if (rig.labels.size() != rig.directions.size()) {
    throw ValidationError("light rig has " + std::to_string(rig.directions.size()) + " directions but " +
                          std::to_string(rig.labels.size()) + " labels");
  }
  for (std::size_t l = 0; l < rig.size(); ++l) {
    const double n = norm(rig.directions[l]);
    if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-9) {
      throw ValidationError("direction of light '" + rig.labels[l] + "' is not unit length (norm " +
                            std::to_string(n) + ")");
    }
  }
  std::vector<std::size_t> order(rig.size());
  std::iota(order.begin(), order.end(), 0);
  const auto key = [&](std::size_t i) {
    const Vec3& d = rig.directions[i];
    return std::array<double, 3>{d.x, d.y, d.z};
  };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (key(order[i]) == key(order[i - 1])) {
      throw ValidationError("lights '" + rig.labels[order[i - 1]] + "' and '" + rig.labels[order[i]] +
                            "' share the same direction");
    }
  }
}

std::vector<std::string> default_labels(std::size_t count) {
  std::vector<std::string> labels(count);
  char buf[32];
  for (std::size_t i = 0; i < count; ++i) {
    std::snprintf(buf, sizeof buf, "L%03zu", i);
    labels[i] = buf;
  }
  return labels;
}

Vec3 CameraModel::ray_direction(double px, double py) const {
  const Vec3 cam{(px - cx) / fx, (py - cy) / fy, 1.0};
  return normalize(rotation.transpose_mul(cam));
}

CameraModel CameraModel::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double vertical_fov_rad,
                                 std::size_t width, std::size_t height) {
  const Vec3 forward = normalize(target - eye);
  const Vec3 right = normalize(cross(forward, up));
  const Vec3 down = cross(forward, right);
  CameraModel cam;
  cam.rotation = Mat3{{right.x, right.y, right.z, down.x, down.y, down.z, forward.x, forward.y, forward.z}};
  cam.translation = -(cam.rotation * eye);
  cam.fy = 0.5 * static_cast<double>(height) / std::tan(0.5 * vertical_fov_rad);
  cam.fx = cam.fy;
  cam.cx = 0.5 * static_cast<double>(width);
  cam.cy = 0.5 * static_cast<double>(height);
  cam.width = width;
  cam.height = height;
  return cam;
}

void validate(const CameraModel& cam) {
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) throw ValidationError("camera focal lengths must be positive");
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const double expected = r == c ? 1.0 : 0.0;
      if (std::abs(dot(cam.rotation.row(r), cam.rotation.row(c)) - expected) > 1e-9) {
        throw ValidationError("camera rotation is not orthonormal");
      }
    }
  }
}

void validate(const EnvMap& env) {
  if (env.image.width < 1 || env.image.height < 1) throw ValidationError("environment map is empty");
  validate(env.image);
}

std::array<double, 3> WeightVector::total() const {
  std::array<double, 3> t{0.0, 0.0, 0.0};
  for (const auto& w : weights) {
    for (int c = 0; c < 3; ++c) t[c] += w[c];
  }
  return t;
}

void validate(const WeightVector& w, const LightRig& rig) {
  if (w.size() != rig.size()) {
    throw ContractError("weight vector has " + std::to_string(w.size()) + " entries but the rig has " +
                        std::to_string(rig.size()) + " lights");
  }
  for (std::size_t l = 0; l < w.size(); ++l) {
    for (double v : w.weights[l]) {
      if (!std::isfinite(v) || v < 0.0) throw ValidationError("weight for light " + std::to_string(l) + " is negative or non-finite");
    }
  }
}

double texel_solid_angle(std::size_t row, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DomainError("environment map dimensions must be non-zero");
  if (row >= height) throw DomainError("texel row out of range");
  const double h = static_cast<double>(height);
  const double r = static_cast<double>(row);
  return (kTwoPi / static_cast<double>(width)) * (std::cos(kPi * r / h) - std::cos(kPi * (r + 1.0) / h));
}

Vec3 texel_direction(std::size_t row, std::size_t col, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DomainError("environment map dimensions must be non-zero");
  if (row >= height || col >= width) throw DomainError("texel index out of range");
  const double theta = kPi * (static_cast<double>(row) + 0.5) / static_cast<double>(height);
  const double phi = kTwoPi * (static_cast<double>(col) + 0.5) / static_cast<double>(width);
  const double st = std::sin(theta);
  return {st * std::cos(phi), std::cos(theta), st * std::sin(phi)};
}

double normalize_azimuth(double radians) {
  if (!std::isfinite(radians)) throw DomainError("rotation must be finite");
  double r = std::fmod(radians, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r < 1e-9 || kTwoPi - r < 1e-9) return 0.0;
  return r;
}

std::vector<std::size_t> assign_texels(std::size_t height, std::size_t width, const LightRig& rig,
                                       const Mat3& rotation) {
  std::vector<std::size_t> owner(height * width);
  const std::size_t count = rig.size();
  const auto rows = static_cast<std::ptrdiff_t>(height);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t row = 0; row < rows; ++row) {
    for (std::size_t col = 0; col < width; ++col) {
      const Vec3 d = rotation * texel_direction(static_cast<std::size_t>(row), col, height, width);
      std::size_t best = 0;
      double best_dot = dot(d, rig.directions[0]);
      for (std::size_t l = 1; l < count; ++l) {
        const double v = dot(d, rig.directions[l]);
        if (v > best_dot) {
          best_dot = v;
          best = l;
        }
      }
      owner[static_cast<std::size_t>(row) * width + col] = best;
    }
  }
  return owner;
}

WeightVector env_to_weights(const EnvMap& env, const LightRig& rig, const Mat3& rotation) {
  validate(env);
  validate(rig);
  const std::size_t h = env.image.height;
  const std::size_t w = env.image.width;
  const std::size_t count = rig.size();
  const std::vector<std::size_t> owner = assign_texels(h, w, rig, rotation);

  // Canonical order: per-row partial sums (columns ascending), then rows ascending.
  std::vector<double> partial(h * count * 3, 0.0);
  const auto rows = static_cast<std::ptrdiff_t>(h);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t row = 0; row < rows; ++row) {
    const auto r = static_cast<std::size_t>(row);
    const double solid_angle = texel_solid_angle(r, h, w);
    double* acc = &partial[r * count * 3];
    const float* src = env.image.row(r).data();
    for (std::size_t col = 0; col < w; ++col) {
      const std::size_t l = owner[r * w + col];
      for (std::size_t c = 0; c < 3; ++c) acc[l * 3 + c] += static_cast<double>(src[col * 3 + c]) * solid_angle;
    }
  }
  WeightVector out;
  out.weights.assign(count, {0.0, 0.0, 0.0});
  for (std::size_t r = 0; r < h; ++r) {
    const double* acc = &partial[r * count * 3];
    for (std::size_t l = 0; l < count; ++l) {
      for (std::size_t c = 0; c < 3; ++c) out.weights[l][c] += acc[l * 3 + c];
    }
  }
  return out;
}

WeightVector env_to_weights(const EnvMap& env, const LightRig& rig, double azimuth) {
  const double a = normalize_azimuth(azimuth);
  return env_to_weights(env, rig, a == 0.0 ? Mat3{} : Mat3::rotation_y(a));
}

WeightVector truncate_top_k(const WeightVector& w, std::size_t k) {
  std::vector<std::size_t> order;
  for (std::size_t l = 0; l < w.size(); ++l) {
    const auto& v = w.weights[l];
    if (v[0] != 0.0 || v[1] != 0.0 || v[2] != 0.0) order.push_back(l);
  }
  if (order.size() <= k) return w;
  const auto score = [&](std::size_t l) { return w.weights[l][0] + w.weights[l][1] + w.weights[l][2]; };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score(a) > score(b); });
  order.resize(k);
  std::sort(order.begin(), order.end());

  const std::array<double, 3> total = w.total();
  WeightVector out;
  out.weights.assign(w.size(), {0.0, 0.0, 0.0});
  std::array<double, 3> kept{0.0, 0.0, 0.0};
  for (std::size_t l : order) {
    out.weights[l] = w.weights[l];
    for (int c = 0; c < 3; ++c) kept[c] += w.weights[l][c];
  }
  for (int c = 0; c < 3; ++c) {
    if (kept[c] <= 0.0) continue;
    const double scale = total[c] / kept[c];
    for (std::size_t l : order) out.weights[l][c] *= scale;
  }
  return out;
}

WeightVector cull_weights(const WeightVector& w, double threshold) {
  WeightVector out = w;
  for (auto& v : out.weights) {
    if (std::max({v[0], v[1], v[2]}) <= threshold) v = {0.0, 0.0, 0.0};
  }
  return out;
}

}  // namespace olat
