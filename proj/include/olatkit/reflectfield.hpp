#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "olatkit/codec.hpp"
#include "olatkit/geometry.hpp"
#include "olatkit/image.hpp"
#include "olatkit/lightrig.hpp"
#include "olatkit/quality.hpp"

namespace olat::field {

inline constexpr std::size_t kEncodingFrequencies = 4;
// d, then sin(2^k d) and cos(2^k d) for k < 4. Higher frequencies alias
// between neighbouring rig lights and hurt held-out lights.
inline constexpr std::size_t kDirectionEncoding = 3 + 3 * 2 * kEncodingFrequencies;

// Triplane features enter the decoder multiplied by this constant. With Adam
// this acts as a learning-rate multiplier on the planes relative to the MLP.
inline constexpr double kFeatureScale = 10.0;

struct FieldDims {
  std::size_t channels = 16;    // C
  std::size_t resolution = 64;  // N
  std::size_t hidden = 64;      // H

  std::size_t decoder_inputs() const { return channels + 2 * kDirectionEncoding; }
  friend bool operator==(const FieldDims&, const FieldDims&) = default;
};

// Offsets of every parameter block inside the flat parameter vector.
// Planes are stored channels-last: ((plane * N + row) * N + col) * C + ch,
// with plane 0 = XY (col x, row y), 1 = XZ (col x, row z), 2 = YZ (col y, row z).
// w1 is hidden x inputs row-major, inputs ordered (feature, enc(light), enc(view)).
struct ParamLayout {
  std::size_t planes = 0;
  std::size_t w1 = 0;
  std::size_t b1 = 0;
  std::size_t w_sigma = 0;
  std::size_t b_sigma = 0;
  std::size_t w_rgb = 0;
  std::size_t b_rgb = 0;
  std::size_t total = 0;

  explicit ParamLayout(const FieldDims& dims);
  ParamLayout() = default;
};

template <typename T>
struct TriplaneField {
  FieldDims dims;
  std::vector<T> params;

  TriplaneField() = default;
  explicit TriplaneField(const FieldDims& d) : dims(d), params(ParamLayout(d).total, T{0}) {}

  ParamLayout layout() const { return ParamLayout(dims); }
  T plane(std::size_t p, std::size_t row, std::size_t col, std::size_t ch) const {
    return params[((p * dims.resolution + row) * dims.resolution + col) * dims.channels + ch];
  }
  T& plane(std::size_t p, std::size_t row, std::size_t col, std::size_t ch) {
    return params[((p * dims.resolution + row) * dims.resolution + col) * dims.channels + ch];
  }
};

void validate(const FieldDims& dims);

// Small uniform plane values, Glorot-uniform decoder weights, density bias
// `density_bias`.
TriplaneField<float> init_field(const FieldDims& dims, std::uint64_t seed, double density_bias = -1.0);

template <typename To, typename From>
TriplaneField<To> cast_field(const TriplaneField<From>& f) {
  TriplaneField<To> out;
  out.dims = f.dims;
  out.params.assign(f.params.begin(), f.params.end());
  return out;
}

// Sum of the bilinear samples of the three planes at p (clamped to [-1, 1]^3).
template <typename T>
std::vector<T> sample_triplane(const TriplaneField<T>& field, const Vec3& p);

// d, sin(2^k d), cos(2^k d).
template <typename T>
std::array<T, kDirectionEncoding> encode_direction(const Vec3& d);

template <typename T>
struct Decoded {
  T sigma = 0;
  std::array<T, 3> rgb{};
  bool renormalized = false;  // a direction was not unit length on input
};

template <typename T>
Decoded<T> decode(const TriplaneField<T>& field, std::span<const T> feature, const Vec3& light, const Vec3& view);

struct RaySampleConfig {
  std::size_t samples = 32;
  double near = 2.0;
  double far = 4.0;
  bool stratified = false;
  std::uint64_t seed = 0;
};

void validate(const RaySampleConfig& cfg);

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit
  Vec3 light;      // unit light direction conditioning the decoder
  std::uint64_t id = 0;  // keys the stratified jitter
};

template <typename T>
struct Composite {
  std::array<T, 3> rgb{};
  T transmittance = 1;
  std::vector<T> weights;  // T_i * alpha_i
};

// alpha_i = 1 - exp(-sigma_i delta_i), T_i = prod_{j<i} (1 - alpha_j),
// rgb = sum T_i alpha_i c_i over a black background.
template <typename T>
Composite<T> composite(std::span<const T> sigma, std::span<const T> delta, std::span<const std::array<T, 3>> colors);

template <typename T>
struct RayResult {
  std::array<T, 3> rgb{};
  T transmittance = 1;
  std::vector<T> t;      // sample depths
  std::vector<T> sigma;  // per-sample density
  std::vector<std::array<T, 3>> color;
  std::vector<T> weight;
};

// Samples are placed on [near, far] clipped to the field's cube; a ray that
// misses the cube returns black with transmittance 1 and no samples.
template <typename T>
RayResult<T> render_ray(const TriplaneField<T>& field, const Ray& ray, const RaySampleConfig& cfg);

// Ray through every pixel centre, conditioned on `light`.
std::vector<Ray> camera_rays(const CameraModel& camera, const Vec3& light);

template <typename T>
HdrImage render_olat(const TriplaneField<T>& field, const CameraModel& camera, const Vec3& light,
                     const RaySampleConfig& cfg);

// Forward pass over a batch of rays with everything backward() needs.
template <typename T>
class RenderBatch {
 public:
  std::size_t size() const { return rays_.size(); }
  const std::array<T, 3>& rgb(std::size_t i) const { return rgb_[i]; }
  T transmittance(std::size_t i) const { return transmittance_[i]; }

 private:
  template <typename U>
  friend RenderBatch<U> forward(const TriplaneField<U>&, std::span<const Ray>, const RaySampleConfig&);
  template <typename U>
  friend std::vector<U> backward(const TriplaneField<U>&, const RenderBatch<U>&, std::span<const std::array<U, 3>>);

  std::vector<Ray> rays_;
  std::vector<std::array<T, 3>> rgb_;
  std::vector<T> transmittance_;
  std::vector<std::size_t> sample_count_;  // 0 or S per ray
  std::size_t samples_ = 0;
  std::size_t hidden_ = 0;
  std::size_t channels_ = 0;
  T delta_ = 0;
  // Per ray: direction encodings (2 * kDirectionEncoding).
  std::vector<T> encoding_;
  std::vector<T> delta_per_ray_;
  // Per sample (ray * S + i): bilinear taps, features, activations.
  std::vector<std::uint32_t> tap_index_;  // 12 texel base offsets
  std::vector<T> tap_weight_;             // 12 weights
  std::vector<T> feature_;                // C
  std::vector<T> pre_;                    // H
  std::vector<T> sigma_raw_;
  std::vector<T> sigma_;
  std::vector<std::array<T, 3>> color_;
};

template <typename T>
RenderBatch<T> forward(const TriplaneField<T>& field, std::span<const Ray> rays, const RaySampleConfig& cfg);

// Gradient of a scalar loss with respect to every parameter, given dL/drgb
// per ray. Rays are processed in fixed chunks whose partial gradients are
// summed in chunk order, so the result is independent of the thread count.
template <typename T>
std::vector<T> backward(const TriplaneField<T>& field, const RenderBatch<T>& batch,
                        std::span<const std::array<T, 3>> loss_grads);

// One training view: the camera, the light direction and the target OLAT.
struct TrainView {
  CameraModel camera;
  Vec3 light;
  HdrImage target;
};

// How the L1 term reduces over the sampled rays. `sum` is the l1 norm of the
// residual; `mean` divides it by 3 * batch_rays.
enum class L1Reduction { sum, mean };

struct TrainConfig {
  double learning_rate = 0.00015;
  std::size_t iterations = 20000;
  std::size_t batch_rays = 4096;
  double lambda_mrf = 0.3;
  L1Reduction l1_reduction = L1Reduction::sum;
  std::size_t mrf_crop = 32;
  MrfConfig mrf{};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct LossRecord {
  std::size_t iteration = 0;
  double total = 0.0;
  double l1 = 0.0;
  double mrf = 0.0;
};

struct Adam {
  std::vector<float> m;
  std::vector<float> v;
  std::size_t step = 0;
};

using TrainCallback = std::function<void(const LossRecord&)>;

// Minimises L1 over random rays plus lambda_mrf * ID-MRF over one random
// crop per iteration with Adam. LossRecord::l1 is the L1 term as it enters
// the objective (see L1Reduction). Throws NumericError (message names the
// iteration, `snapshot` receives the parameters) when the loss is not finite.
std::vector<LossRecord> train(TriplaneField<float>& field, std::span<const TrainView> dataset, const TrainConfig& cfg,
                              const RaySampleConfig& rays, const TrainCallback& on_iteration = nullptr,
                              std::vector<float>* snapshot = nullptr);

// Checkpoint: "OLATTPF1" magic, u32 version, u32 C, N, H, then every
// parameter as little-endian float32 in layout order.
Bytes save_checkpoint(const TriplaneField<float>& field);
TriplaneField<float> load_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace olat::field
