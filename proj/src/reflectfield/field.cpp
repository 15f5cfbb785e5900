#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "olatkit/error.hpp"
#include "olatkit/random.hpp"
#include "olatkit/reflectfield.hpp"

namespace olat::field {
namespace {

constexpr std::size_t kTaps = 12;  // 3 planes x 4 bilinear corners
constexpr std::size_t kGradChunks = 8;
// Initial plane values are uniform in +-kPlaneInit, i.e. +-0.1 after scaling.
constexpr double kPlaneInit = 0.1 / kFeatureScale;

template <typename T>
T softplus(T x) {
  return x > T(20) ? x : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// Parametric interval of the ray inside [-1, 1]^3 intersected with [near, far].
bool clip_to_cube(const Ray& ray, const RaySampleConfig& cfg, double& t0, double& t1) {
  double lo = cfg.near;
  double hi = cfg.far;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (std::abs(d) < 1e-12) {
      if (o < -1.0 || o > 1.0) return false;
      continue;
    }
    double ta = (-1.0 - o) / d;
    double tb = (1.0 - o) / d;
    if (ta > tb) std::swap(ta, tb);
    lo = std::max(lo, ta);
    hi = std::min(hi, tb);
  }
  if (!(hi > lo)) return false;
  t0 = lo;
  t1 = hi;
  return true;
}

template <typename T>
void compute_taps(const FieldDims& dims, const Vec3& p, std::uint32_t* index, T* weight) {
  const std::size_t n = dims.resolution;
  const double scale = 0.5 * static_cast<double>(n - 1);
  const double coords[3] = {std::clamp(p.x, -1.0, 1.0), std::clamp(p.y, -1.0, 1.0), std::clamp(p.z, -1.0, 1.0)};
  // (column axis, row axis) per plane
  static constexpr int axes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (std::size_t plane = 0; plane < 3; ++plane) {
    const double gc = (coords[axes[plane][0]] + 1.0) * scale;
    const double gr = (coords[axes[plane][1]] + 1.0) * scale;
    const std::size_t c0 = std::min(static_cast<std::size_t>(gc), n - 2);
    const std::size_t r0 = std::min(static_cast<std::size_t>(gr), n - 2);
    const T tc = static_cast<T>(gc - static_cast<double>(c0));
    const T tr = static_cast<T>(gr - static_cast<double>(r0));
    const std::size_t base = ((plane * n + r0) * n + c0) * dims.channels;
    const std::size_t row_step = n * dims.channels;
    index[plane * 4 + 0] = static_cast<std::uint32_t>(base);
    index[plane * 4 + 1] = static_cast<std::uint32_t>(base + dims.channels);
    index[plane * 4 + 2] = static_cast<std::uint32_t>(base + row_step);
    index[plane * 4 + 3] = static_cast<std::uint32_t>(base + row_step + dims.channels);
    weight[plane * 4 + 0] = (T(1) - tc) * (T(1) - tr);
    weight[plane * 4 + 1] = tc * (T(1) - tr);
    weight[plane * 4 + 2] = (T(1) - tc) * tr;
    weight[plane * 4 + 3] = tc * tr;
  }
}

template <typename T>
void gather_feature(const TriplaneField<T>& field, const std::uint32_t* index, const T* weight, T* feature) {
  const std::size_t c = field.dims.channels;
  std::fill(feature, feature + c, T(0));
  for (std::size_t k = 0; k < kTaps; ++k) {
    const T* src = &field.params[index[k]];
    const T w = weight[k];
    for (std::size_t ch = 0; ch < c; ++ch) feature[ch] += w * src[ch];
  }
}

// b1 + W1[:, C:] . (enc(light), enc(view))
template <typename T>
void direction_term(const TriplaneField<T>& field, const ParamLayout& lay, const T* encoding, T* out) {
  const std::size_t c = field.dims.channels;
  const std::size_t in = field.dims.decoder_inputs();
  for (std::size_t h = 0; h < field.dims.hidden; ++h) {
    const T* row = &field.params[lay.w1 + h * in + c];
    T acc = field.params[lay.b1 + h];
    for (std::size_t k = 0; k < 2 * kDirectionEncoding; ++k) acc += row[k] * encoding[k];
    out[h] = acc;
  }
}

constexpr std::size_t kLanes = 16;

// Dot product with kLanes fixed partial sums: vectorizes without reordering
// anything at run time, so results are reproducible.
template <typename T>
T lane_dot(const T* a, const T* b, std::size_t n) {
  T part[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) part[l] += a[i + l] * b[i + l];
  }
  for (std::size_t l = 0; i < n; ++i, ++l) part[l] += a[i] * b[i];
  T acc = T(0);
  for (std::size_t l = 0; l < kLanes; ++l) acc += part[l];
  return acc;
}

// Decoder weights rearranged so the inner loops run over hidden units:
// w1t is C x H (feature part of w1, transposed), heads is 4 x H (sigma, r, g, b).
template <typename T>
struct Decoder {
  static constexpr T kScale = static_cast<T>(kFeatureScale);
  std::size_t channels = 0;
  std::size_t hidden = 0;
  std::vector<T> w1t;
  std::vector<T> heads;
  std::array<T, 4> bias{};

  Decoder(const TriplaneField<T>& field, const ParamLayout& lay)
      : channels(field.dims.channels), hidden(field.dims.hidden) {
    const std::size_t in = field.dims.decoder_inputs();
    const T* p = field.params.data();
    w1t.resize(channels * hidden);
    for (std::size_t h = 0; h < hidden; ++h) {
      for (std::size_t c = 0; c < channels; ++c) w1t[c * hidden + h] = kScale * p[lay.w1 + h * in + c];
    }
    heads.resize(4 * hidden);
    std::copy(p + lay.w_sigma, p + lay.w_sigma + hidden, heads.begin());
    std::copy(p + lay.w_rgb, p + lay.w_rgb + 3 * hidden, heads.begin() + static_cast<std::ptrdiff_t>(hidden));
    bias = {p[lay.b_sigma], p[lay.b_rgb], p[lay.b_rgb + 1], p[lay.b_rgb + 2]};
  }

  // pre = dir_term + W1f f; returns raw (sigma, r, g, b) head outputs. Sums
  // over hidden units use kLanes fixed partial accumulators.
  std::array<T, 4> run(const T* feature, const T* dir_term, T* pre) const {
    std::copy(dir_term, dir_term + hidden, pre);
    for (std::size_t c = 0; c < channels; ++c) {
      const T fc = feature[c];
      const T* w = &w1t[c * hidden];
      for (std::size_t h = 0; h < hidden; ++h) pre[h] += w[h] * fc;
    }
    std::array<T, 4> out = bias;
    for (std::size_t k = 0; k < 4; ++k) {
      const T* w = &heads[k * hidden];
      T part[kLanes] = {};
      std::size_t h = 0;
      for (; h + kLanes <= hidden; h += kLanes) {
        for (std::size_t l = 0; l < kLanes; ++l) {
          const T a = pre[h + l] > T(0) ? pre[h + l] : T(0);
          part[l] += w[h + l] * a;
        }
      }
      for (std::size_t l = 0; h < hidden; ++h, ++l) part[l] += w[h] * (pre[h] > T(0) ? pre[h] : T(0));
      T acc = T(0);
      for (std::size_t l = 0; l < kLanes; ++l) acc += part[l];
      out[k] += acc;
    }
    return out;
  }
};

template <typename T>
void encode_pair(const Vec3& light, const Vec3& view, T* out) {
  const auto el = encode_direction<T>(light);
  const auto ev = encode_direction<T>(view);
  std::copy(el.begin(), el.end(), out);
  std::copy(ev.begin(), ev.end(), out + kDirectionEncoding);
}

// Sample depths for one ray; returns false when the ray misses the cube.
bool sample_depths(const Ray& ray, const RaySampleConfig& cfg, std::vector<double>& t, double& delta) {
  double t0 = 0.0, t1 = 0.0;
  if (!clip_to_cube(ray, cfg, t0, t1)) return false;
  const std::size_t s = cfg.samples;
  delta = (t1 - t0) / static_cast<double>(s);
  t.resize(s);
  std::uint64_t state = cfg.seed ^ (ray.id * 0xd1342543de82ef95ull + 0x632be59bd9b4e019ull);
  for (std::size_t i = 0; i < s; ++i) {
    const double u = cfg.stratified ? splitmix_uniform01(state) : 0.5;
    t[i] = t0 + (static_cast<double>(i) + u) * delta;
  }
  return true;
}

}  // namespace

ParamLayout::ParamLayout(const FieldDims& dims) {
  const std::size_t in = dims.decoder_inputs();
  planes = 0;
  w1 = 3 * dims.resolution * dims.resolution * dims.channels;
  b1 = w1 + dims.hidden * in;
  w_sigma = b1 + dims.hidden;
  b_sigma = w_sigma + dims.hidden;
  w_rgb = b_sigma + 1;
  b_rgb = w_rgb + 3 * dims.hidden;
  total = b_rgb + 3;
}

void validate(const FieldDims& dims) {
  if (dims.channels < 1 || dims.resolution < 2 || dims.hidden < 1) {
    throw ValidationError("field needs C >= 1, N >= 2 and H >= 1");
  }
  if (3 * dims.resolution * dims.resolution * dims.channels >= std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError("triplane too large");
  }
}

void validate(const RaySampleConfig& cfg) {
  if (cfg.samples < 2) throw ValidationError("ray sampling needs at least 2 samples");
  if (!(cfg.near < cfg.far)) throw ValidationError("ray sampling needs near < far");
}

TriplaneField<float> init_field(const FieldDims& dims, std::uint64_t seed, double density_bias) {
  validate(dims);
  TriplaneField<float> field(dims);
  const ParamLayout lay(dims);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < lay.w1; ++i) field.params[i] = static_cast<float>(uniform(rng, -kPlaneInit, kPlaneInit));
  const double in = static_cast<double>(dims.decoder_inputs());
  const double hidden = static_cast<double>(dims.hidden);
  const double a1 = std::sqrt(6.0 / (in + hidden));
  for (std::size_t i = lay.w1; i < lay.b1; ++i) field.params[i] = static_cast<float>(uniform(rng, -a1, a1));
  const double a2 = std::sqrt(6.0 / (hidden + 1.0));
  for (std::size_t i = lay.w_sigma; i < lay.b_sigma; ++i) field.params[i] = static_cast<float>(uniform(rng, -a2, a2));
  field.params[lay.b_sigma] = static_cast<float>(density_bias);
  const double a3 = std::sqrt(6.0 / (hidden + 3.0));
  for (std::size_t i = lay.w_rgb; i < lay.b_rgb; ++i) field.params[i] = static_cast<float>(uniform(rng, -a3, a3));
  return field;
}

template <typename T>
std::vector<T> sample_triplane(const TriplaneField<T>& field, const Vec3& p) {
  std::uint32_t index[kTaps];
  T weight[kTaps];
  compute_taps(field.dims, p, index, weight);
  std::vector<T> feature(field.dims.channels);
  gather_feature(field, index, weight, feature.data());
  return feature;
}

template <typename T>
std::array<T, kDirectionEncoding> encode_direction(const Vec3& d) {
  std::array<T, kDirectionEncoding> out{};
  const double v[3] = {d.x, d.y, d.z};
  for (int i = 0; i < 3; ++i) out[i] = static_cast<T>(v[i]);
  std::size_t k = 3;
  for (std::size_t f = 0; f < kEncodingFrequencies; ++f) {
    const double scale = std::ldexp(1.0, static_cast<int>(f));
    for (int i = 0; i < 3; ++i) out[k++] = static_cast<T>(std::sin(scale * v[i]));
    for (int i = 0; i < 3; ++i) out[k++] = static_cast<T>(std::cos(scale * v[i]));
  }
  return out;
}

template <typename T>
Decoded<T> decode(const TriplaneField<T>& field, std::span<const T> feature, const Vec3& light, const Vec3& view) {
  if (feature.size() != field.dims.channels) throw ContractError("feature length does not match the field");
  Decoded<T> out;
  Vec3 l = light;
  Vec3 v = view;
  if (std::abs(norm(l) - 1.0) > 1e-6) {
    l = normalize(l);
    out.renormalized = true;
  }
  if (std::abs(norm(v) - 1.0) > 1e-6) {
    v = normalize(v);
    out.renormalized = true;
  }
  const ParamLayout lay(field.dims);
  std::vector<T> enc(2 * kDirectionEncoding);
  encode_pair<T>(l, v, enc.data());
  std::vector<T> dir(field.dims.hidden);
  std::vector<T> pre(field.dims.hidden);
  direction_term(field, lay, enc.data(), dir.data());
  const Decoder<T> dec(field, lay);
  const auto raw = dec.run(feature.data(), dir.data(), pre.data());
  out.sigma = softplus(raw[0]);
  for (int c = 0; c < 3; ++c) out.rgb[c] = sigmoid(raw[c + 1]);
  return out;
}

template <typename T>
Composite<T> composite(std::span<const T> sigma, std::span<const T> delta, std::span<const std::array<T, 3>> colors) {
  if (sigma.size() != delta.size() || sigma.size() != colors.size()) throw ContractError("composite inputs differ in length");
  Composite<T> out;
  out.weights.resize(sigma.size());
  T trans = T(1);
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    const T keep = std::exp(-sigma[i] * delta[i]);
    const T w = trans * (T(1) - keep);
    out.weights[i] = w;
    for (int c = 0; c < 3; ++c) out.rgb[c] += w * colors[i][c];
    trans *= keep;
  }
  out.transmittance = trans;
  return out;
}

template <typename T>
RayResult<T> render_ray(const TriplaneField<T>& field, const Ray& ray, const RaySampleConfig& cfg) {
  validate(cfg);
  RayResult<T> out;
  std::vector<double> depth;
  double delta = 0.0;
  if (!sample_depths(ray, cfg, depth, delta)) return out;
  const ParamLayout lay(field.dims);
  const std::size_t s = depth.size();
  std::vector<T> enc(2 * kDirectionEncoding);
  encode_pair<T>(ray.light, ray.direction, enc.data());
  std::vector<T> dir(field.dims.hidden), pre(field.dims.hidden), feature(field.dims.channels);
  out.t.resize(s);
  out.sigma.resize(s);
  out.color.resize(s);
  direction_term(field, lay, enc.data(), dir.data());
  const Decoder<T> dec(field, lay);
  std::uint32_t index[kTaps];
  T weight[kTaps];
  for (std::size_t i = 0; i < s; ++i) {
    const Vec3 p = ray.origin + ray.direction * depth[i];
    compute_taps(field.dims, p, index, weight);
    gather_feature(field, index, weight, feature.data());
    const auto raw = dec.run(feature.data(), dir.data(), pre.data());
    out.t[i] = static_cast<T>(depth[i]);
    out.sigma[i] = softplus(raw[0]);
    for (int c = 0; c < 3; ++c) out.color[i][c] = sigmoid(raw[c + 1]);
  }
  const std::vector<T> deltas(s, static_cast<T>(delta));
  const Composite<T> comp = composite<T>(out.sigma, deltas, out.color);
  out.rgb = comp.rgb;
  out.transmittance = comp.transmittance;
  out.weight = comp.weights;
  return out;
}

std::vector<Ray> camera_rays(const CameraModel& camera, const Vec3& light) {
  std::vector<Ray> rays(camera.width * camera.height);
  const Vec3 origin = camera.center();
  for (std::size_t y = 0; y < camera.height; ++y) {
    for (std::size_t x = 0; x < camera.width; ++x) {
      const std::size_t i = y * camera.width + x;
      rays[i] = Ray{origin, camera.ray_direction(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5), light, i};
    }
  }
  return rays;
}

template <typename T>
RenderBatch<T> forward(const TriplaneField<T>& field, std::span<const Ray> rays, const RaySampleConfig& cfg) {
  validate(cfg);
  RenderBatch<T> b;
  const std::size_t n = rays.size();
  const std::size_t s = cfg.samples;
  const std::size_t hidden = field.dims.hidden;
  const std::size_t c = field.dims.channels;
  const std::size_t enc = 2 * kDirectionEncoding;
  b.rays_.assign(rays.begin(), rays.end());
  b.samples_ = s;
  b.hidden_ = hidden;
  b.channels_ = c;
  b.rgb_.assign(n, {T(0), T(0), T(0)});
  b.transmittance_.assign(n, T(1));
  b.sample_count_.assign(n, 0);
  b.encoding_.resize(n * enc);
  b.delta_per_ray_.assign(n, T(0));
  b.tap_index_.resize(n * s * kTaps);
  b.tap_weight_.resize(n * s * kTaps);
  b.feature_.resize(n * s * c);
  b.pre_.resize(n * s * hidden);
  b.sigma_raw_.resize(n * s);
  b.sigma_.resize(n * s);
  b.color_.resize(n * s);
  const ParamLayout lay(field.dims);
  const Decoder<T> dec(field, lay);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel
  {
    std::vector<double> depth;
    std::vector<T> dir(hidden);
#pragma omp for schedule(dynamic, 16)
    for (std::ptrdiff_t ri = 0; ri < count; ++ri) {
      const auto r = static_cast<std::size_t>(ri);
      const Ray& ray = b.rays_[r];
      double delta = 0.0;
      if (!sample_depths(ray, cfg, depth, delta)) continue;
      b.sample_count_[r] = s;
      b.delta_per_ray_[r] = static_cast<T>(delta);
      T* e = &b.encoding_[r * enc];
      encode_pair<T>(ray.light, ray.direction, e);
      direction_term(field, lay, e, dir.data());
      const T dt = static_cast<T>(delta);
      T trans = T(1);
      std::array<T, 3> rgb{T(0), T(0), T(0)};
      for (std::size_t i = 0; i < s; ++i) {
        const std::size_t k = r * s + i;
        const Vec3 p = ray.origin + ray.direction * depth[i];
        std::uint32_t* idx = &b.tap_index_[k * kTaps];
        T* wt = &b.tap_weight_[k * kTaps];
        T* f = &b.feature_[k * c];
        T* pre = &b.pre_[k * hidden];
        compute_taps(field.dims, p, idx, wt);
        gather_feature(field, idx, wt, f);
        const auto raw = dec.run(f, dir.data(), pre);
        const T sigma = softplus(raw[0]);
        const std::array<T, 3> col{sigmoid(raw[1]), sigmoid(raw[2]), sigmoid(raw[3])};
        b.sigma_raw_[k] = raw[0];
        b.sigma_[k] = sigma;
        b.color_[k] = col;
        const T keep = std::exp(-sigma * dt);
        const T w = trans * (T(1) - keep);
        for (int ch = 0; ch < 3; ++ch) rgb[ch] += w * col[ch];
        trans *= keep;
      }
      b.rgb_[r] = rgb;
      b.transmittance_[r] = trans;
    }
  }
  return b;
}

template <typename T>
std::vector<T> backward(const TriplaneField<T>& field, const RenderBatch<T>& b,
                        std::span<const std::array<T, 3>> loss_grads) {
  if (loss_grads.size() != b.size()) throw ContractError("loss gradient count does not match the batch");
  const ParamLayout lay(field.dims);
  const std::size_t n = b.size();
  const std::size_t s = b.samples_;
  const std::size_t hidden = field.dims.hidden;
  const std::size_t c = field.dims.channels;
  const std::size_t in = field.dims.decoder_inputs();
  const std::size_t enc = 2 * kDirectionEncoding;
  const T* p = field.params.data();
  const Decoder<T> dec(field, lay);

  std::vector<std::vector<T>> partial(kGradChunks);
  const auto chunks = static_cast<std::ptrdiff_t>(kGradChunks);
#pragma omp parallel
  {
    std::vector<T> trans(s + 1), q(s), suffix(s + 1), dpre(hidden), dz(hidden), df(c), gw1t(c * hidden);
#pragma omp for schedule(dynamic, 1)
    for (std::ptrdiff_t ci = 0; ci < chunks; ++ci) {
      const auto chunk = static_cast<std::size_t>(ci);
      const std::size_t r0 = n * chunk / kGradChunks;
      const std::size_t r1 = n * (chunk + 1) / kGradChunks;
      std::vector<T>& g = partial[chunk];
      if (r0 == r1) continue;
      g.assign(lay.total, T(0));
      std::fill(gw1t.begin(), gw1t.end(), T(0));
      for (std::size_t r = r0; r < r1; ++r) {
        if (b.sample_count_[r] == 0) continue;
        const auto& lg = loss_grads[r];
        if (lg[0] == T(0) && lg[1] == T(0) && lg[2] == T(0)) continue;
        const T dt = b.delta_per_ray_[r];
        trans[0] = T(1);
        for (std::size_t i = 0; i < s; ++i) trans[i + 1] = trans[i] * std::exp(-b.sigma_[r * s + i] * dt);
        for (std::size_t i = 0; i < s; ++i) {
          const auto& col = b.color_[r * s + i];
          q[i] = lg[0] * col[0] + lg[1] * col[1] + lg[2] * col[2];
        }
        suffix[s] = T(0);
        for (std::size_t i = s; i-- > 0;) suffix[i] = suffix[i + 1] + (trans[i] - trans[i + 1]) * q[i];
        std::fill(dz.begin(), dz.end(), T(0));
        for (std::size_t i = 0; i < s; ++i) {
          const std::size_t k = r * s + i;
          const T w = trans[i] - trans[i + 1];
          const T d_sigma = dt * (trans[i + 1] * q[i] - suffix[i + 1]);
          const T ds = d_sigma * sigmoid(b.sigma_raw_[k]);
          const auto& col = b.color_[k];
          const T dr[3] = {w * lg[0] * col[0] * (T(1) - col[0]), w * lg[1] * col[1] * (T(1) - col[1]),
                           w * lg[2] * col[2] * (T(1) - col[2])};
          if (ds == T(0) && dr[0] == T(0) && dr[1] == T(0) && dr[2] == T(0)) continue;
          const T* pre = &b.pre_[k * hidden];
          const T* f = &b.feature_[k * c];
          T* gws = &g[lay.w_sigma];
          T* gwr = &g[lay.w_rgb];
          const T* ws = p + lay.w_sigma;
          const T* wr = p + lay.w_rgb;
          for (std::size_t h = 0; h < hidden; ++h) {
            const T a = pre[h] > T(0) ? pre[h] : T(0);
            gws[h] += ds * a;
            gwr[h] += dr[0] * a;
            gwr[hidden + h] += dr[1] * a;
            gwr[2 * hidden + h] += dr[2] * a;
            dpre[h] = pre[h] > T(0) ? ds * ws[h] + dr[0] * wr[h] + dr[1] * wr[hidden + h] + dr[2] * wr[2 * hidden + h]
                                    : T(0);
            dz[h] += dpre[h];
          }
          g[lay.b_sigma] += ds;
          for (int ch = 0; ch < 3; ++ch) g[lay.b_rgb + ch] += dr[ch];
          for (std::size_t ch = 0; ch < c; ++ch) {
            const T fc = Decoder<T>::kScale * f[ch];
            T* gw = &gw1t[ch * hidden];
            for (std::size_t h = 0; h < hidden; ++h) gw[h] += dpre[h] * fc;
            df[ch] = lane_dot(&dec.w1t[ch * hidden], dpre.data(), hidden);
          }
          const std::uint32_t* idx = &b.tap_index_[k * kTaps];
          const T* wt = &b.tap_weight_[k * kTaps];
          for (std::size_t t = 0; t < kTaps; ++t) {
            T* dst = &g[idx[t]];
            const T tw = wt[t];
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += tw * df[ch];
          }
        }
        const T* e = &b.encoding_[r * enc];
        for (std::size_t h = 0; h < hidden; ++h) {
          const T dh = dz[h];
          if (dh == T(0)) continue;
          T* gw = &g[lay.w1 + h * in + c];
          for (std::size_t k = 0; k < enc; ++k) gw[k] += dh * e[k];
          g[lay.b1 + h] += dh;
        }
      }
      for (std::size_t h = 0; h < hidden; ++h) {
        for (std::size_t ch = 0; ch < c; ++ch) g[lay.w1 + h * in + ch] += gw1t[ch * hidden + h];
      }
    }
  }
  std::vector<T> grad(lay.total, T(0));
  for (const auto& part : partial) {
    if (part.empty()) continue;
    for (std::size_t i = 0; i < lay.total; ++i) grad[i] += part[i];
  }
  return grad;
}

template <typename T>
HdrImage render_olat(const TriplaneField<T>& field, const CameraModel& camera, const Vec3& light,
                     const RaySampleConfig& cfg) {
  validate(camera);
  const std::vector<Ray> rays = camera_rays(camera, normalize(light));
  const RenderBatch<T> batch = forward(field, std::span<const Ray>(rays), cfg);
  HdrImage out(camera.width, camera.height);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    for (int ch = 0; ch < 3; ++ch) out.data[i * 3 + ch] = static_cast<float>(batch.rgb(i)[ch]);
  }
  return out;
}

#define OLAT_FIELD_INSTANTIATE(T)                                                                                \
  template std::vector<T> sample_triplane<T>(const TriplaneField<T>&, const Vec3&);                             \
  template std::array<T, kDirectionEncoding> encode_direction<T>(const Vec3&);                                  \
  template Decoded<T> decode<T>(const TriplaneField<T>&, std::span<const T>, const Vec3&, const Vec3&);         \
  template Composite<T> composite<T>(std::span<const T>, std::span<const T>, std::span<const std::array<T, 3>>); \
  template RayResult<T> render_ray<T>(const TriplaneField<T>&, const Ray&, const RaySampleConfig&);             \
  template RenderBatch<T> forward<T>(const TriplaneField<T>&, std::span<const Ray>, const RaySampleConfig&);    \
  template std::vector<T> backward<T>(const TriplaneField<T>&, const RenderBatch<T>&,                           \
                                      std::span<const std::array<T, 3>>);                                       \
  template HdrImage render_olat<T>(const TriplaneField<T>&, const CameraModel&, const Vec3&, const RaySampleConfig&);

OLAT_FIELD_INSTANTIATE(float)
OLAT_FIELD_INSTANTIATE(double)

#undef OLAT_FIELD_INSTANTIATE

}  // namespace olat::field
