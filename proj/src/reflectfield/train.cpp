#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "olatkit/error.hpp"
#include "olatkit/random.hpp"
#include "olatkit/reflectfield.hpp"

namespace olat::field {
namespace {

struct CropPlan {
  std::size_t view = 0;
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t size = 0;
};

void adam_step(std::vector<float>& params, const std::vector<float>& grad, Adam& state, const TrainConfig& cfg) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0f);
    state.v.assign(params.size(), 0.0f);
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    const double update = cfg.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.adam_epsilon);
    params[i] = static_cast<float>(params[i] - update);
  }
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(cfg.lambda_mrf >= 0.0)) throw ValidationError("lambda_mrf must be non-negative");
  if (cfg.batch_rays == 0 && cfg.lambda_mrf == 0.0) throw ValidationError("training needs rays or an MRF crop");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw ValidationError("Adam moment parameters must lie in [0, 1)");
  }
  if (!(cfg.adam_epsilon > 0.0)) throw ValidationError("Adam epsilon must be positive");
  if (cfg.lambda_mrf > 0.0) {
    validate(cfg.mrf);
    if (cfg.mrf_crop < cfg.mrf.patch_full || cfg.mrf_crop / 2 < cfg.mrf.patch_half) {
      throw ValidationError("MRF crop is smaller than its patches");
    }
  }
}

std::vector<LossRecord> train(TriplaneField<float>& field, std::span<const TrainView> dataset, const TrainConfig& cfg,
                              const RaySampleConfig& rays, const TrainCallback& on_iteration,
                              std::vector<float>* snapshot) {
  validate(cfg);
  validate(rays);
  validate(field.dims);
  if (dataset.empty()) throw ValidationError("training dataset is empty");
  if (field.params.size() != ParamLayout(field.dims).total) throw ContractError("field parameter count mismatch");
  std::size_t min_side = static_cast<std::size_t>(-1);
  for (const auto& view : dataset) {
    validate(view.camera);
    if (view.target.width != view.camera.width || view.target.height != view.camera.height) {
      throw ValidationError("training target does not match its camera size");
    }
    min_side = std::min({min_side, view.target.width, view.target.height});
  }
  const bool use_mrf = cfg.lambda_mrf > 0.0;
  const std::size_t crop = std::min(cfg.mrf_crop, min_side);
  if (use_mrf && (crop < cfg.mrf.patch_full || crop / 2 < cfg.mrf.patch_half)) {
    throw ValidationError("training images are too small for the MRF crop");
  }

  std::mt19937_64 rng(cfg.seed);
  Adam adam;
  std::vector<LossRecord> history;
  history.reserve(cfg.iterations);
  std::vector<Ray> batch_rays;
  std::vector<std::array<float, 3>> targets;
  std::vector<std::array<float, 3>> grads;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    batch_rays.clear();
    targets.clear();
    for (std::size_t r = 0; r < cfg.batch_rays; ++r) {
      const std::size_t v = uniform_index(rng, dataset.size());
      const auto& view = dataset[v];
      const std::size_t px = uniform_index(rng, view.camera.width * view.camera.height);
      const std::size_t x = px % view.camera.width;
      const std::size_t y = px / view.camera.width;
      batch_rays.push_back(Ray{view.camera.center(),
                               view.camera.ray_direction(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5),
                               normalize(view.light), r});
      targets.push_back({view.target.at(x, y, 0), view.target.at(x, y, 1), view.target.at(x, y, 2)});
    }
    CropPlan plan;
    if (use_mrf) {
      plan.view = uniform_index(rng, dataset.size());
      const auto& view = dataset[plan.view];
      plan.size = crop;
      plan.x0 = uniform_index(rng, view.camera.width - crop + 1);
      plan.y0 = uniform_index(rng, view.camera.height - crop + 1);
      for (std::size_t y = 0; y < crop; ++y) {
        for (std::size_t x = 0; x < crop; ++x) {
          batch_rays.push_back(Ray{view.camera.center(),
                                   view.camera.ray_direction(static_cast<double>(plan.x0 + x) + 0.5,
                                                             static_cast<double>(plan.y0 + y) + 0.5),
                                   normalize(view.light), cfg.batch_rays + y * crop + x});
        }
      }
    }

    RaySampleConfig iter_rays = rays;
    std::uint64_t mix = rays.seed ^ (cfg.seed * 0x9e3779b97f4a7c15ull) ^ (static_cast<std::uint64_t>(it) + 1);
    iter_rays.seed = splitmix64(mix);
    const RenderBatch<float> batch = forward(field, std::span<const Ray>(batch_rays), iter_rays);

    grads.assign(batch.size(), {0.0f, 0.0f, 0.0f});
    double l1 = 0.0;
    if (cfg.batch_rays > 0) {
      const double scale =
          cfg.l1_reduction == L1Reduction::sum ? 1.0 : 1.0 / (3.0 * static_cast<double>(cfg.batch_rays));
      for (std::size_t r = 0; r < cfg.batch_rays; ++r) {
        for (int c = 0; c < 3; ++c) {
          const double d = static_cast<double>(batch.rgb(r)[c]) - targets[r][c];
          l1 += std::abs(d);
          grads[r][c] = static_cast<float>(d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0));
        }
      }
      l1 *= scale;
    }
    double mrf = 0.0;
    if (use_mrf) {
      const auto& target = dataset[plan.view].target;
      HdrImageD rendered(crop, crop), reference(crop, crop), grad_img;
      for (std::size_t y = 0; y < crop; ++y) {
        for (std::size_t x = 0; x < crop; ++x) {
          const auto& rgb = batch.rgb(cfg.batch_rays + y * crop + x);
          for (int c = 0; c < 3; ++c) {
            rendered.at(x, y, c) = rgb[c];
            reference.at(x, y, c) = target.at(plan.x0 + x, plan.y0 + y, c);
          }
        }
      }
      mrf = idmrf_loss(rendered, reference, cfg.mrf, &grad_img);
      for (std::size_t y = 0; y < crop; ++y) {
        for (std::size_t x = 0; x < crop; ++x) {
          for (int c = 0; c < 3; ++c) {
            grads[cfg.batch_rays + y * crop + x][c] = static_cast<float>(cfg.lambda_mrf * grad_img.at(x, y, c));
          }
        }
      }
    }

    const LossRecord record{it, l1 + cfg.lambda_mrf * mrf, l1, mrf};
    if (!std::isfinite(record.total)) {
      if (snapshot) *snapshot = field.params;
      throw NumericError("training loss is not finite at iteration " + std::to_string(it));
    }
    const std::vector<float> grad = backward(field, batch, std::span<const std::array<float, 3>>(grads));
    adam_step(field.params, grad, adam, cfg);
    history.push_back(record);
    if (on_iteration) on_iteration(record);
  }
  return history;
}

}  // namespace olat::field
