#include "olatkit/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "olatkit/align.hpp"
#include "olatkit/codec.hpp"
#include "olatkit/json_io.hpp"
#include "olatkit/olat_stack.hpp"
#include "olatkit/oracle.hpp"
#include "olatkit/quality.hpp"
#include "olatkit/reflectfield.hpp"
#include "olatkit/relight.hpp"
#include "olatkit/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace olat::cli {
namespace {

json read_json(const fs::path& path) {
  const Bytes bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

Vec3 parse_vec3(const std::string& text) {
  Vec3 v;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf%c", &v.x, &v.y, &v.z, &tail) != 3) {
    throw ValidationError("expected x,y,z but got '" + text + "'");
  }
  return v;
}

std::array<double, 2> parse_vec2(const std::string& text) {
  std::array<double, 2> v{};
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf,%lf%c", &v[0], &v[1], &tail) != 2) {
    throw ValidationError("expected dx,dy but got '" + text + "'");
  }
  return v;
}

EnvMap load_env(const fs::path& path) {
  EnvMap env{load_image(path)};
  validate(env);
  return env;
}

double peak_of(const HdrImage& img) {
  float peak = 0.0f;
  for (float v : img.data) peak = std::max(peak, v);
  return peak > 0.0f ? peak : 1.0;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---- weights ---------------------------------------------------------------

struct WeightsArgs {
  std::string manifest, env, out;
  double rotation = 0.0;
  std::size_t max_lights = 0;
};

int cmd_weights(const WeightsArgs& a, std::ostream& out) {
  const Manifest m = read_manifest(a.manifest);
  WeightVector w = env_to_weights(load_env(a.env), m.rig, a.rotation);
  if (a.max_lights > 0) w = truncate_top_k(w, a.max_lights);
  const std::string text = weights_to_json(w, m.rig).dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
  }
  return kExitOk;
}

// ---- relight ---------------------------------------------------------------

struct RelightArgs {
  std::string manifest, weights, env, out, png, reference;
  double rotation = 0.0;
  double exposure = 0.0;
  double gamma = 2.2;
  std::size_t max_lights = 0;
  std::size_t tile = 256;
  bool float32 = false;
};

int cmd_relight(const RelightArgs& a, std::ostream& out) {
  if (a.weights.empty() == a.env.empty()) throw ValidationError("relight needs exactly one of --weights or --env");
  const ToneMapParams tp{a.exposure, a.gamma};
  if (!(tp.gamma > 0.0)) throw ValidationError("--gamma must be positive");
  const OlatStack stack = load_manifest(a.manifest);
  WeightVector w = a.weights.empty() ? env_to_weights(load_env(a.env), stack.rig(), a.rotation)
                                     : weights_from_json(read_json(a.weights), stack.rig());
  if (a.max_lights > 0) w = truncate_top_k(w, a.max_lights);
  TilePlan plan{a.tile, a.tile, a.float32 ? AccumPrecision::float32 : AccumPrecision::float64};
  const HdrImage img = combine(stack, w, plan);
  save_image(a.out, img);
  if (!a.png.empty()) write_file(a.png, encode_png(img, tp));
  if (!a.reference.empty()) {
    const HdrImage ref = load_image(a.reference);
    if (!ref.same_size(img)) throw ValidationError("reference image size differs from the relit image");
    const double e = rmse(img, ref);
    out << "rmse " << fmt(e) << " psnr " << fmt(psnr_from_rmse(e, peak_of(ref))) << " peak " << fmt(peak_of(ref))
        << "\n";
  }
  return kExitOk;
}

// ---- align -----------------------------------------------------------------

struct AlignArgs {
  std::string take, layout, out, truth;
  std::size_t margin = 0;
  bool write_flows = false;
};

std::vector<std::string> frame_names(const fs::path& dir, const LayoutFile& lf) {
  if (!lf.frames.empty()) return lf.frames;
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    const std::string ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".hdr" || ext == ".pfm")) names.push_back(entry.path().filename().string());
  }
  if (ec) throw IoError("cannot list '" + dir.string() + "': " + ec.message());
  std::sort(names.begin(), names.end());
  if (names.size() != lf.layout.frame_count) {
    throw ValidationError("take directory holds " + std::to_string(names.size()) + " frames, layout expects " +
                          std::to_string(lf.layout.frame_count));
  }
  return names;
}

double interior_rmse(std::span<const HdrImage> a, std::span<const HdrImage> b, std::size_t margin) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const HdrImage& x = a[i];
    for (std::size_t y = margin; y + margin < x.height; ++y) {
      for (std::size_t px = margin; px + margin < x.width; ++px) {
        for (int c = 0; c < 3; ++c) {
          const double d = static_cast<double>(x.at(px, y, c)) - b[i].at(px, y, c);
          sum += d * d;
          ++count;
        }
      }
    }
  }
  return count ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
}

int cmd_align(const AlignArgs& a, std::ostream& out) {
  const LayoutFile lf = layout_from_json(read_json(a.layout));
  validate(lf.layout);
  const auto names = frame_names(a.take, lf);
  std::vector<HdrImage> frames;
  for (const auto& n : names) frames.push_back(load_image(fs::path(a.take) / n));
  const AlignResult res = align_take(frames, lf.layout, lf.reference);
  ensure_dir(a.out);
  for (std::size_t i = 0; i < names.size(); ++i) {
    save_image(fs::path(a.out) / names[i], res.frames[i]);
    if (a.write_flows) write_file(fs::path(a.out) / (fs::path(names[i]).stem().string() + ".flo2"), encode_flow(res.flows[i]));
  }
  if (!a.truth.empty()) {
    std::vector<HdrImage> truth;
    for (const auto& n : names) truth.push_back(load_image(fs::path(a.truth) / n));
    const double before = interior_rmse(frames, truth, a.margin);
    const double after = interior_rmse(res.frames, truth, a.margin);
    const double reduction = before > 0.0 ? 100.0 * (1.0 - after / before) : 0.0;
    out << "rmse unaligned " << fmt(before) << " aligned " << fmt(after) << " reduction " << fmt(reduction) << "%\n";
  }
  return kExitOk;
}

// ---- oracle ----------------------------------------------------------------

struct OracleArgs {
  std::string scene, out, env, format = "hdr", drift = "0.1428571428571428,0";
  std::size_t lights = 0;
  std::size_t take_frames = 0;
  std::size_t block = 21;
};

int cmd_oracle(const OracleArgs& a, std::ostream& out) {
  if (a.format != "hdr" && a.format != "pfm") throw ValidationError("--format must be hdr or pfm");
  if (a.lights == 0) throw ValidationError("rig size must be at least 1");
  const json sj = read_json(a.scene);
  const oracle::SphereScene scene = oracle::scene_from_json(sj);
  const CameraModel camera = oracle::scene_camera_from_json(sj);
  const LightRig rig = oracle::generate_rig(a.lights);
  const std::string ext = "." + a.format;
  const fs::path dir(a.out);
  ensure_dir(dir / "olat");
  Manifest m;
  m.rig = rig;
  m.camera = camera;
  m.meta = StackMetadata{"oracle-sphere", "oracle"};
  const auto stack = oracle::render_stack(scene, rig, camera);
  for (std::size_t l = 0; l < rig.size(); ++l) {
    const fs::path p = dir / "olat" / (rig.labels[l] + ext);
    save_image(p, stack[l]);
    m.images.push_back(p);
  }
  write_manifest(dir / "manifest.json", m);
  write_text(dir / "camera.json", camera_to_json(camera).dump(2) + "\n");
  if (!a.env.empty()) save_image(dir / ("env_truth" + ext), oracle::render_env_sphere(scene, load_env(a.env), camera));
  if (a.take_frames > 0) {
    LayoutFile lf;
    lf.layout = TakeLayout::regular(a.take_frames, a.block);
    const auto base = oracle::take_frames(scene, rig, lf.layout, camera);
    const auto take = oracle::generate_drifting_take(base, parse_vec2(a.drift), lf.layout);
    ensure_dir(dir / "take");
    ensure_dir(dir / "truth");
    for (std::size_t i = 0; i < a.take_frames; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04zu%s", i, ext.c_str());
      lf.frames.push_back(name);
      save_image(dir / "take" / name, take.misaligned[i]);
      save_image(dir / "truth" / name, take.ground_truth[i]);
    }
    write_text(dir / "layout.json", layout_to_json(lf).dump(2) + "\n");
  }
  out << "wrote " << rig.size() << " OLATs to " << (dir / "manifest.json").string() << "\n";
  return kExitOk;
}

// ---- train / render --------------------------------------------------------

struct TrainArgs {
  std::string manifest, out, loss_csv;
  std::size_t iters = 20000;
  double lr = 0.00015;
  double lambda_mrf = 0.3;
  std::size_t batch_rays = 4096;
  std::size_t crop = 32;
  std::size_t samples = 32;
  std::size_t channels = 16, resolution = 64, hidden = 64;
  bool stratified = false;
};

int cmd_train(const TrainArgs& a, std::uint64_t seed, std::ostream& out) {
  const OlatStack stack = load_manifest(a.manifest);
  std::vector<field::TrainView> views;
  for (std::size_t l = 0; l < stack.size(); ++l) {
    views.push_back({stack.camera(), stack.rig().directions[l], *stack.image(l)});
  }
  field::TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.iterations = a.iters;
  tc.batch_rays = a.batch_rays;
  tc.lambda_mrf = a.lambda_mrf;
  tc.mrf_crop = a.crop;
  tc.seed = seed;
  field::RaySampleConfig rc;
  rc.samples = a.samples;
  rc.stratified = a.stratified;
  rc.seed = seed;
  auto f = field::init_field({a.channels, a.resolution, a.hidden}, seed);
  const fs::path csv = a.loss_csv.empty() ? fs::path(a.out).replace_extension(".loss.csv") : fs::path(a.loss_csv);
  std::ostringstream log;
  log << "iteration,total,l1,mrf\n";
  char line[128];
  std::vector<float> snapshot;
  std::vector<field::LossRecord> history;
  try {
    history = field::train(f, views, tc, rc, [&](const field::LossRecord& r) {
      std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g\n", r.iteration, r.total, r.l1, r.mrf);
      log << line;
    }, &snapshot);
  } catch (const NumericError&) {
    write_text(csv, log.str());
    f.params = snapshot;
    write_file(fs::path(a.out).replace_extension(".nan.bin"), field::save_checkpoint(f));
    throw;
  }
  write_file(a.out, field::save_checkpoint(f));
  write_text(csv, log.str());
  if (!history.empty()) out << "final loss " << fmt(history.back().total) << " after " << history.size() << " iterations\n";
  return kExitOk;
}

struct RenderArgs {
  std::string field, light, camera, out, png;
  std::size_t samples = 32;
  double exposure = 0.0, gamma = 2.2;
};

CameraModel load_camera(const fs::path& path) {
  const json j = read_json(path);
  if (j.contains("fx")) return camera_from_json(j);
  return oracle::scene_camera_from_json(json{{"camera", j}});
}

int cmd_render(const RenderArgs& a, std::uint64_t seed) {
  const Bytes bytes = read_file(a.field);
  const auto f = field::load_checkpoint(bytes);
  const CameraModel cam = load_camera(a.camera);
  field::RaySampleConfig rc;
  rc.samples = a.samples;
  rc.seed = seed;
  const Vec3 light = parse_vec3(a.light);
  if (!(norm(light) > 0.0)) throw ValidationError("--light must be non-zero");
  const HdrImage img = field::render_olat(f, cam, normalize(light), rc);
  save_image(a.out, img);
  if (!a.png.empty()) write_file(a.png, encode_png(img, ToneMapParams{a.exposure, a.gamma}));
  return kExitOk;
}

// ---- serve -----------------------------------------------------------------

struct ServeArgs {
  std::vector<std::string> manifests;
  std::string host = "127.0.0.1";
  std::string static_dir;
  int port = 8080;
  std::size_t cache_mb = 2048;
  std::size_t max_env_mb = 64;
};

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  service::ServiceConfig cfg;
  cfg.cache_budget = a.cache_mb << 20;
  cfg.max_env_bytes = a.max_env_mb << 20;
  cfg.static_dir = a.static_dir;
  service::Service svc(cfg);
  for (const auto& m : a.manifests) out << "session " << svc.load_session(m) << " <- " << m << "\n";
  svc.bind(a.host, a.port);
  out << "listening on http://" << a.host << ":" << svc.bound_port() << "\n" << std::flush;
  svc.listen();
  return kExitOk;
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation:
    case ErrorKind::contract:
    case ErrorKind::domain:
      return kExitValidation;
    case ErrorKind::io:
    case ErrorKind::format:
    case ErrorKind::truncation:
    case ErrorKind::unsupported:
      return kExitIo;
    case ErrorKind::numeric:
      return kExitNumeric;
  }
  return kExitValidation;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"OLAT relighting toolkit", "olat"};
  app.require_subcommand(1);
  int threads = 0;
  std::uint64_t seed = 0;
  app.add_option("--threads", threads, "worker threads (default: all cores)")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "seed for every random choice");

  WeightsArgs wa;
  auto* weights = app.add_subcommand("weights", "environment map -> per-light weights");
  weights->add_option("manifest", wa.manifest)->required();
  weights->add_option("env", wa.env, "lat-long .hdr/.pfm")->required();
  weights->add_option("--rotation", wa.rotation, "azimuthal rotation, radians");
  weights->add_option("--max-lights", wa.max_lights, "keep the k strongest lights");
  weights->add_option("--out,-o", wa.out, "weights.json (default: stdout)");

  RelightArgs ra;
  auto* relight = app.add_subcommand("relight", "weighted OLAT combination");
  relight->add_option("manifest", ra.manifest)->required();
  relight->add_option("--weights", ra.weights, "weights.json");
  relight->add_option("--env", ra.env, "environment map");
  relight->add_option("--rotation", ra.rotation);
  relight->add_option("--out,-o", ra.out, "output .hdr/.pfm")->required();
  relight->add_option("--png", ra.png, "tone-mapped PNG");
  relight->add_option("--exposure", ra.exposure, "stops");
  relight->add_option("--gamma", ra.gamma);
  relight->add_option("--max-lights", ra.max_lights);
  relight->add_option("--tile", ra.tile)->check(CLI::PositiveNumber);
  relight->add_flag("--float32", ra.float32, "accumulate in float");
  relight->add_option("--reference", ra.reference, "ground truth; prints RMSE and PSNR");

  AlignArgs aa;
  auto* align = app.add_subcommand("align", "align a capture take on its tracking frames");
  align->add_option("take", aa.take)->required();
  align->add_option("layout", aa.layout)->required();
  align->add_option("--out,-o", aa.out)->required();
  align->add_option("--truth", aa.truth, "ground-truth frames; prints the RMSE reduction");
  align->add_option("--margin", aa.margin, "border excluded from the RMSE report, pixels");
  align->add_flag("--flows", aa.write_flows, "also write per-frame flows");

  OracleArgs oa;
  auto* orc = app.add_subcommand("oracle", "render an analytic sphere OLAT stack");
  orc->add_option("scene", oa.scene)->required();
  orc->add_option("lights", oa.lights, "rig size")->required();
  orc->add_option("--out,-o", oa.out)->required();
  orc->add_option("--format", oa.format, "hdr or pfm");
  orc->add_option("--env", oa.env, "also render this environment directly");
  orc->add_option("--take", oa.take_frames, "also write a drifting take with this many frames");
  orc->add_option("--block", oa.block, "frames per tracking block");
  orc->add_option("--drift", oa.drift, "per-frame drift dx,dy in pixels");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "fit a reflectance field to an OLAT stack");
  train->add_option("manifest", ta.manifest)->required();
  train->add_option("--out,-o", ta.out, "field checkpoint")->required();
  train->add_option("--iters", ta.iters);
  train->add_option("--lr", ta.lr);
  train->add_option("--lambda-mrf", ta.lambda_mrf);
  train->add_option("--loss-csv", ta.loss_csv);
  train->add_option("--batch-rays", ta.batch_rays);
  train->add_option("--crop", ta.crop, "MRF crop size");
  train->add_option("--samples", ta.samples, "samples per ray");
  train->add_option("--channels", ta.channels);
  train->add_option("--resolution", ta.resolution);
  train->add_option("--hidden", ta.hidden);
  train->add_flag("--stratified", ta.stratified);

  RenderArgs rna;
  auto* render = app.add_subcommand("render", "render an OLAT from a trained field");
  render->add_option("field", rna.field)->required();
  render->add_option("--light", rna.light, "x,y,z")->required();
  render->add_option("--camera", rna.camera, "cam.json")->required();
  render->add_option("--out,-o", rna.out)->required();
  render->add_option("--png", rna.png);
  render->add_option("--samples", rna.samples);
  render->add_option("--exposure", rna.exposure);
  render->add_option("--gamma", rna.gamma);

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "HTTP relighting service");
  serve->add_option("manifests", sa.manifests)->required();
  serve->add_option("--port", sa.port);
  serve->add_option("--host", sa.host);
  serve->add_option("--cache-mb", sa.cache_mb);
  serve->add_option("--max-env-mb", sa.max_env_mb);
  serve->add_option("--static", sa.static_dir, "UI bundle directory");

  std::vector<const char*> argv{"olat"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  if (threads > 0) omp_set_num_threads(threads);
  try {
    if (weights->parsed()) return cmd_weights(wa, out);
    if (relight->parsed()) return cmd_relight(ra, out);
    if (align->parsed()) return cmd_align(aa, out);
    if (orc->parsed()) return cmd_oracle(oa, out);
    if (train->parsed()) return cmd_train(ta, seed, out);
    if (render->parsed()) return cmd_render(rna, seed);
    if (serve->parsed()) return cmd_serve(sa, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitValidation;
}

}  // namespace olat::cli
