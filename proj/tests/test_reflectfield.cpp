#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "olatkit/error.hpp"
#include "olatkit/oracle.hpp"
#include "olatkit/quality.hpp"
#include "olatkit/reflectfield.hpp"
#include "support.hpp"

using namespace olat;
using namespace olat::field;

namespace {

// Random rays from a sphere of radius 3 aimed at points inside the cube.
std::vector<Ray> random_rays(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Ray> rays;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 eye = normalize({uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)}) * 3.0;
    const Vec3 aim{uniform(rng, -0.6, 0.6), uniform(rng, -0.6, 0.6), uniform(rng, -0.6, 0.6)};
    const Vec3 light = normalize({uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)});
    rays.push_back(Ray{eye, normalize(aim - eye), light, i});
  }
  return rays;
}

TriplaneField<double> random_field(const FieldDims& dims, std::uint64_t seed) {
  TriplaneField<double> f = cast_field<double>(init_field(dims, seed, 0.0));
  // Planes well away from zero so the features actually drive the decoder.
  std::mt19937_64 rng(seed + 1000);
  for (std::size_t i = 0; i < ParamLayout(dims).w1; ++i) f.params[i] = uniform(rng, -0.1, 0.1);
  return f;
}

double weighted_sum(const TriplaneField<double>& f, std::span<const Ray> rays, const RaySampleConfig& cfg,
                    std::span<const std::array<double, 3>> g) {
  const RenderBatch<double> b = forward(f, rays, cfg);
  double s = 0;
  for (std::size_t r = 0; r < b.size(); ++r)
    for (int c = 0; c < 3; ++c) s += g[r][c] * b.rgb(r)[c];
  return s;
}

}  // namespace

TEST_CASE("sample_triplane") {
  const FieldDims dims{3, 5, 4};
  TriplaneField<double> f(dims);
  for (std::size_t i = 0; i < ParamLayout(dims).w1; ++i) f.params[i] = 0.25;
  for (double v : sample_triplane(f, {0.3, -0.7, 0.1})) CHECK(v == doctest::Approx(0.75).epsilon(1e-15));

  std::mt19937_64 rng(1);
  for (std::size_t i = 0; i < ParamLayout(dims).w1; ++i) f.params[i] = uniform(rng, -1, 1);
  // N = 5: nodes at -1, -0.5, 0, 0.5, 1
  const auto node = sample_triplane(f, {0.5, -0.5, 0.0});
  for (std::size_t c = 0; c < 3; ++c)
    CHECK(node[c] == doctest::Approx(f.plane(0, 1, 3, c) + f.plane(1, 2, 3, c) + f.plane(2, 2, 1, c)).epsilon(1e-12));

  // cell centre: mean of the four corners on each plane
  const auto mid = sample_triplane(f, {0.25, -0.75, 0.75});
  for (std::size_t c = 0; c < 3; ++c) {
    const double xy = (f.plane(0, 0, 2, c) + f.plane(0, 0, 3, c) + f.plane(0, 1, 2, c) + f.plane(0, 1, 3, c)) / 4;
    const double xz = (f.plane(1, 3, 2, c) + f.plane(1, 3, 3, c) + f.plane(1, 4, 2, c) + f.plane(1, 4, 3, c)) / 4;
    const double yz = (f.plane(2, 3, 0, c) + f.plane(2, 3, 1, c) + f.plane(2, 4, 0, c) + f.plane(2, 4, 1, c)) / 4;
    CHECK(mid[c] == doctest::Approx(xy + xz + yz).epsilon(1e-12));
  }

  // clamped outside the cube
  CHECK(sample_triplane(f, {3, -5, 0.2}) == sample_triplane(f, {1, -1, 0.2}));

  // Lipschitz in p with the plane slope bound
  double slope = 0;
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t col = 0; col + 1 < 5; ++col)
        for (std::size_t c = 0; c < 3; ++c) {
          slope = std::max(slope, std::abs(f.plane(p, r, col + 1, c) - f.plane(p, r, col, c)));
          slope = std::max(slope, std::abs(f.plane(p, col + 1, r, c) - f.plane(p, col, r, c)));
        }
  slope *= 2;  // per unit of p, cell width 0.5; 3 planes x 2 moving coordinates below
  for (int k = 0; k < 100; ++k) {
    const Vec3 p{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const Vec3 q = p + Vec3{1e-5, -1e-5, 1e-5};
    const auto a = sample_triplane(f, p), b = sample_triplane(f, q);
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(a[c] - b[c]) <= 6 * slope * 1e-5 * 1.0001);
  }
}

TEST_CASE("decode") {
  const FieldDims dims{4, 4, 8};
  const TriplaneField<double> zero(dims);
  const std::vector<double> feat(4, 0.3);
  const auto d = decode<double>(zero, feat, {0, 1, 0}, {0, 0, -1});
  CHECK(d.sigma == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  for (double c : d.rgb) CHECK(c == 0.5);
  CHECK_FALSE(d.renormalized);
  CHECK(decode<double>(zero, feat, {0, 2, 0}, {0, 0, -1}).renormalized);
  CHECK_THROWS_AS(decode<double>(zero, std::vector<double>(3), {0, 1, 0}, {0, 0, 1}), ContractError);

  std::mt19937_64 rng(2);
  for (int k = 0; k < 10000; ++k) {
    TriplaneField<float> f = init_field({2, 2, 4}, k, uniform(rng, -30, 30));
    for (float& p : f.params) p *= static_cast<float>(uniform(rng, 0, 20));
    const std::vector<float> fv{static_cast<float>(uniform(rng, -5, 5)), static_cast<float>(uniform(rng, -5, 5))};
    const auto out = decode<float>(f, fv, normalize({uniform(rng, -1, 1), 1, 0}), {0, 0, 1});
    CHECK(out.sigma >= 0.0f);
  }
  const TriplaneField<float> f = init_field(dims, 3);
  const std::vector<float> fv{0.1f, -0.2f, 0.3f, 0.0f};
  const auto a = decode<float>(f, fv, {1, 0, 0}, {0, 0, -1});
  const auto b = decode<float>(f, fv, {1, 0, 0}, {0, 0, -1});
  CHECK(a.sigma == b.sigma);
  CHECK(a.rgb == b.rgb);
}

TEST_CASE("direction encoding") {
  const auto e = encode_direction<double>({0.6, 0, 0.8});
  CHECK(e[0] == 0.6);
  CHECK(e[3] == doctest::Approx(std::sin(0.6)));
  CHECK(e[6] == doctest::Approx(std::cos(0.6)));
  CHECK(e[3 + 6 * 3 + 2] == doctest::Approx(std::sin(8 * 0.8)));
}

TEST_CASE("quadrature") {
  SUBCASE("empty space") {
    const std::vector<double> sigma(5, 0.0), delta(5, 0.1);
    const std::vector<std::array<double, 3>> col(5, {1, 1, 1});
    const auto c = composite<double>(sigma, delta, col);
    CHECK(c.rgb == std::array<double, 3>{0, 0, 0});
    CHECK(c.transmittance == 1.0);
  }
  SUBCASE("opaque sample") {
    const std::vector<double> sigma{1e6}, delta{1.0};
    const std::vector<std::array<double, 3>> col{{0.2, 0.4, 0.6}};
    const auto c = composite<double>(sigma, delta, col);
    CHECK(c.rgb[1] == doctest::Approx(0.4));
    CHECK(c.transmittance == doctest::Approx(0.0));
  }
  SUBCASE("half then opaque") {
    const std::vector<double> sigma{std::log(2.0), 1e6}, delta{1.0, 1.0};
    const std::vector<std::array<double, 3>> col{{1, 0, 0}, {0, 1, 0}};
    const auto c = composite<double>(sigma, delta, col);
    CHECK(c.rgb[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(c.rgb[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(c.rgb[2] == 0.0);
  }
  CHECK_THROWS_AS(composite<double>(std::vector<double>(2), std::vector<double>(3), std::vector<std::array<double, 3>>(2)),
                  ContractError);
}

TEST_CASE("render_ray invariants") {
  const TriplaneField<float> f = init_field({8, 16, 16}, 5, 1.0);
  RaySampleConfig cfg;
  cfg.samples = 16;
  cfg.stratified = true;
  for (const Ray& ray : random_rays(200, 6)) {
    const auto r = render_ray(f, ray, cfg);
    double wsum = r.transmittance;
    for (float w : r.weight) wsum += w;
    CHECK(std::abs(wsum - 1.0) <= 1e-6);
    for (float c : r.rgb) {
      CHECK(c >= 0.0f);
      CHECK(c <= 1.0f);
    }
    for (std::size_t i = 0; i < r.t.size(); ++i) {
      CHECK(r.t[i] >= cfg.near);
      CHECK(r.t[i] <= cfg.far);
    }
  }
  // a ray that misses the cube is black and transparent
  const auto miss = render_ray(f, Ray{{0, 3, 3}, {0, 0, -1}, {0, 1, 0}, 0}, cfg);
  CHECK(miss.rgb == std::array<float, 3>{0, 0, 0});
  CHECK(miss.transmittance == 1.0f);
  CHECK(miss.t.empty());

  // zero density everywhere
  TriplaneField<float> empty = init_field({8, 16, 16}, 5);
  const ParamLayout lay(empty.dims);
  std::fill(empty.params.begin() + lay.w_sigma, empty.params.begin() + lay.b_sigma + 1, 0.0f);
  empty.params[lay.b_sigma] = -200.0f;
  const HdrImage black = render_olat(empty, oracle::default_camera(8, 8), {0, 1, 0}, cfg);
  for (float v : black.data) CHECK(v == 0.0f);

  CHECK_THROWS_AS(render_ray(f, random_rays(1, 7)[0], RaySampleConfig{1}), ValidationError);
}

TEST_CASE("renders are reproducible") {
  const TriplaneField<float> f = init_field({8, 16, 16}, 8);
  RaySampleConfig cfg;
  cfg.stratified = true;
  cfg.seed = 3;
  const CameraModel cam = oracle::default_camera(16, 16);
  const HdrImage a = render_olat(f, cam, {0, 1, 0}, cfg);
  CHECK(a == render_olat(f, cam, {0, 1, 0}, cfg));
  omp_set_num_threads(3);
  CHECK(a == render_olat(f, cam, {0, 1, 0}, cfg));
  omp_set_num_threads(1);
  CHECK(a == render_olat(f, cam, {0, 1, 0}, cfg));
}

TEST_CASE("backward matches finite differences") {
  const FieldDims dims{4, 8, 16};
  const ParamLayout lay(dims);
  RaySampleConfig cfg;
  cfg.samples = 4;
  std::size_t good = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TriplaneField<double> f = random_field(dims, seed);
    const auto rays = random_rays(16, seed + 50);
    std::mt19937_64 rng(seed + 99);
    std::vector<std::array<double, 3>> g(rays.size());
    for (auto& v : g) v = {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const RenderBatch<double> batch = forward(f, std::span<const Ray>(rays), cfg);
    const std::vector<double> grad = backward(f, batch, std::span<const std::array<double, 3>>(g));
    REQUIRE(grad.size() == lay.total);

    // 5 touched plane texels + 5 decoder parameters (one per block) per configuration
    std::vector<std::size_t> touched;
    for (std::size_t i = 0; i < lay.w1; ++i)
      if (grad[i] != 0.0) touched.push_back(i);
    REQUIRE(touched.size() >= 5);
    std::vector<std::size_t> picks;
    for (int k = 0; k < 5; ++k) picks.push_back(touched[uniform_index(rng, touched.size())]);
    picks.push_back(lay.w1 + uniform_index(rng, lay.b1 - lay.w1));
    picks.push_back(lay.b1 + uniform_index(rng, dims.hidden));
    picks.push_back(lay.w_sigma + uniform_index(rng, dims.hidden + 1));  // includes the sigma bias
    picks.push_back(lay.w_rgb + uniform_index(rng, 3 * dims.hidden));
    picks.push_back(lay.b_rgb + uniform_index(rng, 3));
    for (std::size_t i : picks) {
      const double scale = std::max(std::abs(f.params[i]), 0.1);
      const double h = 1e-4 * scale;
      const double keep = f.params[i];
      f.params[i] = keep + h;
      const double up = weighted_sum(f, rays, cfg, g);
      f.params[i] = keep - h;
      const double down = weighted_sum(f, rays, cfg, g);
      f.params[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double err = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
      good += err <= 1e-3;
      ++total;
    }
    // untouched texels get exactly zero
    CHECK(touched.size() < lay.w1);
  }
  CHECK(total == 200);
  CHECK(good >= 198);
}

TEST_CASE("backward edge cases") {
  const FieldDims dims{4, 8, 16};
  const ParamLayout lay(dims);
  const TriplaneField<double> f = random_field(dims, 3);
  const auto rays = random_rays(16, 4);
  const RaySampleConfig cfg;
  const RenderBatch<double> batch = forward(f, std::span<const Ray>(rays), cfg);
  const std::vector<std::array<double, 3>> zero(rays.size(), {0, 0, 0});
  for (double v : backward(f, batch, std::span<const std::array<double, 3>>(zero))) CHECK(v == 0.0);
  const std::vector<std::array<double, 3>> ones(rays.size(), {1, 1, 1});
  CHECK(backward(f, batch, std::span<const std::array<double, 3>>(ones))[lay.b_sigma] != 0.0);
  CHECK_THROWS_AS(backward(f, batch, std::span<const std::array<double, 3>>(ones).first(3)), ContractError);
}

TEST_CASE("backward is independent of the thread count") {
  const TriplaneField<float> f = init_field({8, 16, 16}, 9, 0.0);
  const auto rays = random_rays(300, 10);
  RaySampleConfig cfg;
  cfg.stratified = true;
  const RenderBatch<float> batch = forward(f, std::span<const Ray>(rays), cfg);
  const std::vector<std::array<float, 3>> g(rays.size(), {0.5f, -1.0f, 0.25f});
  const auto a = backward(f, batch, std::span<const std::array<float, 3>>(g));
  omp_set_num_threads(4);
  const auto b = backward(f, batch, std::span<const std::array<float, 3>>(g));
  omp_set_num_threads(1);
  CHECK(a == b);
}

TEST_CASE("checkpoint round trip") {
  const TriplaneField<float> f = init_field({4, 8, 16}, 11);
  const Bytes bytes = save_checkpoint(f);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "OLATTPF1");
  const TriplaneField<float> back = load_checkpoint(bytes);
  CHECK(back.dims == f.dims);
  CHECK(std::memcmp(back.params.data(), f.params.data(), 4 * f.params.size()) == 0);
  CHECK_THROWS_AS(load_checkpoint(std::span(bytes).first(10)), TruncationError);
  CHECK_THROWS_AS(load_checkpoint(std::span(bytes).first(bytes.size() - 1)), TruncationError);
  Bytes bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  bad = bytes;
  bad[8] = 2;
  CHECK_THROWS_AS(load_checkpoint(bad), UnsupportedFormatError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  bad = bytes;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(&bad[24], &nan, 4);
  CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
}

namespace {

std::vector<TrainView> sphere_views(std::size_t size, std::size_t lights) {
  const oracle::SphereScene scene;
  const CameraModel cam = oracle::default_camera(size, size);
  std::vector<TrainView> views;
  for (const Vec3& d : oracle::generate_rig(lights).directions)
    views.push_back({cam, d, oracle::render_olat_sphere(scene, d, {1, 1, 1}, cam)});
  return views;
}

}  // namespace

TEST_CASE("training memorizes a single view") {
  const auto views = sphere_views(16, 1);
  TriplaneField<float> f = init_field({8, 16, 32}, 1);
  TrainConfig tc;
  tc.learning_rate = 5e-3;
  tc.iterations = 400;
  tc.batch_rays = 256;
  tc.lambda_mrf = 0;
  RaySampleConfig rc;
  rc.samples = 16;
  const auto history = train(f, views, tc, rc);
  REQUIRE(history.size() == 400);
  const double p = psnr(views[0].target, render_olat(f, views[0].camera, views[0].light, rc), 1.0);
  MESSAGE("memorization PSNR " << p);
  CHECK(p >= 35.0);
  // moving average of the loss goes down
  auto block = [&](std::size_t from) {
    double s = 0;
    for (std::size_t i = from; i < from + 100; ++i) s += history[i].total;
    return s / 100;
  };
  for (std::size_t b = 100; b < 400; b += 100) CHECK(block(b) < block(b - 100));
}

TEST_CASE("training is deterministic") {
  const auto views = sphere_views(32, 3);
  TrainConfig tc;
  tc.iterations = 6;
  tc.batch_rays = 128;
  tc.seed = 4;
  RaySampleConfig rc;
  rc.samples = 8;
  rc.stratified = true;
  TriplaneField<float> a = init_field({8, 16, 16}, 2), b = a, c = a;
  const auto ha = train(a, views, tc, rc);
  const auto hb = train(b, views, tc, rc);
  omp_set_num_threads(3);
  train(c, views, tc, rc);
  omp_set_num_threads(1);
  CHECK(save_checkpoint(a) == save_checkpoint(b));
  CHECK(save_checkpoint(a) == save_checkpoint(c));
  CHECK(ha.back().total == hb.back().total);
  CHECK(ha.back().mrf > 0.0);

  TriplaneField<float> d = init_field({8, 16, 16}, 2);
  tc.seed = 5;
  train(d, views, tc, rc);
  CHECK(save_checkpoint(a) != save_checkpoint(d));

  TriplaneField<float> e = init_field({8, 16, 16}, 2);
  tc.iterations = 0;
  CHECK(train(e, views, tc, rc).empty());
  CHECK(save_checkpoint(e) == save_checkpoint(init_field({8, 16, 16}, 2)));
}

TEST_CASE("training errors") {
  const auto views = sphere_views(16, 2);
  TriplaneField<float> f = init_field({4, 8, 8}, 1);
  TrainConfig tc;
  tc.iterations = 3;
  tc.batch_rays = 16;
  tc.lambda_mrf = 0;
  const RaySampleConfig rc;
  CHECK_THROWS_AS(train(f, std::span<const TrainView>(), tc, rc), ValidationError);
  TrainConfig bad = tc;
  bad.learning_rate = 0;
  CHECK_THROWS_AS(train(f, views, bad, rc), ValidationError);
  bad = tc;
  bad.lambda_mrf = -1;
  CHECK_THROWS_AS(train(f, views, bad, rc), ValidationError);
  bad = tc;
  bad.lambda_mrf = 0.3;
  bad.mrf_crop = 4;
  CHECK_THROWS_AS(train(f, views, bad, rc), ValidationError);

  f.params[ParamLayout(f.dims).b_rgb] = std::numeric_limits<float>::quiet_NaN();
  std::vector<float> snapshot;
  try {
    train(f, views, tc, rc, nullptr, &snapshot);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
    CHECK(snapshot.size() == f.params.size());
  }
}
