#include <algorithm>
#include <cmath>
#include <vector>

#include "olatkit/error.hpp"
#include "olatkit/quality.hpp"

namespace olat {
namespace {

struct PatchSet {
  std::size_t dim = 0;                // values per patch
  std::vector<std::size_t> origin_x;  // top-left corners
  std::vector<std::size_t> origin_y;
  std::vector<double> unit;           // normalized patches, count x dim
  std::vector<double> centred;        // mean-centred patches
  std::vector<double> scale;          // sqrt(|centred|^2 + eps^2)

  std::size_t count() const { return origin_x.size(); }
};

PatchSet extract(const HdrImageD& img, std::size_t patch, std::size_t stride, double eps) {
  PatchSet set;
  set.dim = patch * patch * 3;
  for (std::size_t y = 0; y + patch <= img.height; y += stride) {
    for (std::size_t x = 0; x + patch <= img.width; x += stride) {
      set.origin_x.push_back(x);
      set.origin_y.push_back(y);
    }
  }
  const std::size_t n = set.count();
  set.unit.resize(n * set.dim);
  set.centred.resize(n * set.dim);
  set.scale.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double* c = &set.centred[i * set.dim];
    std::size_t k = 0;
    for (std::size_t dy = 0; dy < patch; ++dy) {
      for (std::size_t dx = 0; dx < patch; ++dx) {
        for (std::size_t ch = 0; ch < 3; ++ch) c[k++] = img.at(set.origin_x[i] + dx, set.origin_y[i] + dy, ch);
      }
    }
    double mean = 0.0;
    for (std::size_t j = 0; j < set.dim; ++j) mean += c[j];
    mean /= static_cast<double>(set.dim);
    double sq = 0.0;
    for (std::size_t j = 0; j < set.dim; ++j) {
      c[j] -= mean;
      sq += c[j] * c[j];
    }
    const double s = std::sqrt(sq + eps * eps);
    set.scale[i] = s;
    for (std::size_t j = 0; j < set.dim; ++j) set.unit[i * set.dim + j] = c[j] / s;
  }
  return set;
}

}  // namespace

void validate(const MrfConfig& cfg) {
  if (cfg.patch_full < 2 || cfg.patch_half < 2) throw ContractError("MRF patch size must be >= 2");
  if (cfg.stride < 1) throw ContractError("MRF stride must be >= 1");
  if (!(cfg.bandwidth > 0.0)) throw ContractError("MRF bandwidth must be positive");
  if (!(cfg.epsilon > 0.0)) throw ContractError("MRF epsilon must be positive");
}

HdrImageD box_downsample(const HdrImageD& img) {
  HdrImageD out(img.width / 2, img.height / 2);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(x, y, c) = 0.25 * (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) + img.at(2 * x, 2 * y + 1, c) +
                                  img.at(2 * x + 1, 2 * y + 1, c));
      }
    }
  }
  return out;
}

double idmrf_scale_term(const HdrImageD& x, const HdrImageD& y, std::size_t patch, std::size_t stride,
                        const MrfConfig& cfg, HdrImageD* grad_x) {
  if (x.width != y.width || x.height != y.height) throw ContractError("ID-MRF inputs differ in size");
  if (x.width < patch || x.height < patch) {
    throw ContractError("ID-MRF input " + std::to_string(x.width) + "x" + std::to_string(x.height) +
                        " is smaller than the " + std::to_string(patch) + "x" + std::to_string(patch) + " patch");
  }
  const PatchSet gen = extract(x, patch, stride, cfg.epsilon);
  const PatchSet tgt = extract(y, patch, stride, cfg.epsilon);
  const std::size_t nu = gen.count();
  const std::size_t nv = tgt.count();
  const std::size_t dim = gen.dim;
  const double h = cfg.bandwidth;
  const double eps = cfg.epsilon;

  // Rows: target patches v; columns: generated patches u.
  std::vector<double> dist(nv * nu);
  std::vector<double> wbar(nv * nu);
  std::vector<double> wraw(nv * nu);
  std::vector<double> dmin(nv);
  std::vector<std::size_t> umin(nv);
  std::vector<double> zsum(nv);
  const auto vcount = static_cast<std::ptrdiff_t>(nv);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t vi = 0; vi < vcount; ++vi) {
    const auto v = static_cast<std::size_t>(vi);
    const double* pv = &tgt.unit[v * dim];
    double best = 0.0;
    std::size_t best_u = 0;
    for (std::size_t u = 0; u < nu; ++u) {
      const double* pu = &gen.unit[u * dim];
      double cosine = 0.0;
      for (std::size_t j = 0; j < dim; ++j) cosine += pv[j] * pu[j];
      const double d = 1.0 - cosine;
      dist[v * nu + u] = d;
      if (u == 0 || d < best) {
        best = d;
        best_u = u;
      }
    }
    dmin[v] = best;
    umin[v] = best_u;
    double z = 0.0;
    for (std::size_t u = 0; u < nu; ++u) {
      const double rel = dist[v * nu + u] / (best + eps);
      const double w = std::exp((1.0 - rel) / h);
      wraw[v * nu + u] = w;
      z += w;
    }
    zsum[v] = z;
    for (std::size_t u = 0; u < nu; ++u) wbar[v * nu + u] = wraw[v * nu + u] / z;
  }

  std::vector<std::size_t> vstar(nu);
  double mean = 0.0;
  for (std::size_t u = 0; u < nu; ++u) {
    double best = wbar[u];
    std::size_t best_v = 0;
    for (std::size_t v = 1; v < nv; ++v) {
      if (wbar[v * nu + u] > best) {
        best = wbar[v * nu + u];
        best_v = v;
      }
    }
    vstar[u] = best_v;
    mean += best;
  }
  mean /= static_cast<double>(nu);
  const double loss = -std::log(mean);
  if (grad_x == nullptr) return loss;

  // dL/dM_u, identical for every u.
  const double dm = -1.0 / (mean * static_cast<double>(nu));
  // g(v, u) = dL/dd(v, u)
  std::vector<double> g(nv * nu, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t vi = 0; vi < vcount; ++vi) {
    const auto v = static_cast<std::size_t>(vi);
    double s = 0.0;
    for (std::size_t u = 0; u < nu; ++u) {
      if (vstar[u] == v) s += dm * wbar[v * nu + u];
    }
    const double denom = dmin[v] + eps;
    double d_dmin = 0.0;
    for (std::size_t u = 0; u < nu; ++u) {
      const double a = vstar[u] == v ? dm : 0.0;
      const double d_w = (a - s) / zsum[v];
      const double d_rel = d_w * (-wraw[v * nu + u] / h);
      g[v * nu + u] = d_rel / denom;
      d_dmin += d_rel * (-dist[v * nu + u] / (denom * denom));
    }
    g[v * nu + umin[v]] += d_dmin;
  }

  HdrImageD grad(x.width, x.height);
  std::vector<double> d_unit(dim);
  std::vector<double> d_centred(dim);
  for (std::size_t u = 0; u < nu; ++u) {
    std::fill(d_unit.begin(), d_unit.end(), 0.0);
    for (std::size_t v = 0; v < nv; ++v) {
      const double gv = g[v * nu + u];
      if (gv == 0.0) continue;
      const double* pv = &tgt.unit[v * dim];
      for (std::size_t j = 0; j < dim; ++j) d_unit[j] -= gv * pv[j];
    }
    const double s = gen.scale[u];
    const double* c = &gen.centred[u * dim];
    double proj = 0.0;
    for (std::size_t j = 0; j < dim; ++j) proj += c[j] * d_unit[j];
    double mean_grad = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      d_centred[j] = d_unit[j] / s - c[j] * proj / (s * s * s);
      mean_grad += d_centred[j];
    }
    mean_grad /= static_cast<double>(dim);
    std::size_t k = 0;
    for (std::size_t dy = 0; dy < patch; ++dy) {
      for (std::size_t dx = 0; dx < patch; ++dx) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
          grad.at(gen.origin_x[u] + dx, gen.origin_y[u] + dy, ch) += d_centred[k++] - mean_grad;
        }
      }
    }
  }
  *grad_x = std::move(grad);
  return loss;
}

double idmrf_loss(const HdrImageD& x, const HdrImageD& y, const MrfConfig& cfg, HdrImageD* grad_x) {
  validate(cfg);
  if (x.width != y.width || x.height != y.height) throw ContractError("ID-MRF inputs differ in size");
  const HdrImageD x2 = box_downsample(x);
  const HdrImageD y2 = box_downsample(y);
  if (x2.width < cfg.patch_half || x2.height < cfg.patch_half) {
    throw ContractError("ID-MRF input is too small for the half-resolution patch size");
  }
  HdrImageD g1;
  HdrImageD g2;
  const double l1 = idmrf_scale_term(x, y, cfg.patch_full, cfg.stride, cfg, grad_x ? &g1 : nullptr);
  const double l2 = idmrf_scale_term(x2, y2, cfg.patch_half, cfg.stride, cfg, grad_x ? &g2 : nullptr);
  if (grad_x != nullptr) {
    for (std::size_t yy = 0; yy < g2.height; ++yy) {
      for (std::size_t xx = 0; xx < g2.width; ++xx) {
        for (std::size_t c = 0; c < 3; ++c) {
          const double q = 0.25 * g2.at(xx, yy, c);
          g1.at(2 * xx, 2 * yy, c) += q;
          g1.at(2 * xx + 1, 2 * yy, c) += q;
          g1.at(2 * xx, 2 * yy + 1, c) += q;
          g1.at(2 * xx + 1, 2 * yy + 1, c) += q;
        }
      }
    }
    *grad_x = std::move(g1);
  }
  return l1 + l2;
}

double idmrf_loss(const HdrImage& x, const HdrImage& y, const MrfConfig& cfg) {
  return idmrf_loss(convert<double>(x), convert<double>(y), cfg, nullptr);
}

}  // namespace olat
