#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "olatkit/cli.hpp"
#include "olatkit/codec.hpp"
#include "olatkit/lightrig.hpp"
#include "olatkit/olat_stack.hpp"
#include "olatkit/oracle.hpp"
#include "olatkit/reflectfield.hpp"
#include "support.hpp"

using namespace olat;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  const Bytes b = read_file(p);
  return std::string(b.begin(), b.end());
}

void put(const fs::path& p, const std::string& text) {
  write_file(p, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// Oracle stack of `lights` OLATs at 16x16 in dir/stack.
fs::path make_stack(const test::TempDir& dir, std::size_t lights, const std::string& scene = "") {
  put(dir / "scene.json", scene.empty() ? R"({"camera": {"width": 16, "height": 16}})" : scene);
  const Result r = run({"oracle", (dir / "scene.json").string(), std::to_string(lights), "--out", (dir / "stack").string()});
  REQUIRE(r.code == 0);
  return dir / "stack" / "manifest.json";
}

fs::path write_env(const test::TempDir& dir, const std::string& name, const EnvMap& env) {
  save_image(dir / name, env.image);
  return dir / name;
}

}  // namespace

TEST_CASE("cli weights") {
  test::TempDir dir("cli-weights");
  const fs::path manifest = make_stack(dir, 12);
  EnvMap uniform{HdrImage(32, 16)};
  for (float& v : uniform.image.data) v = 1.0f;
  const fs::path env = write_env(dir, "uniform.pfm", uniform);

  const Result r = run({"weights", manifest.string(), env.string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.size() == 12);
  std::array<double, 3> sum{};
  for (const auto& item : j.items())
    for (int c = 0; c < 3; ++c) sum[c] += item.value()[c].get<double>();
  for (double s : sum) CHECK(s == doctest::Approx(4 * kPi).epsilon(1e-9));

  const fs::path smooth = write_env(dir, "smooth.pfm", oracle::smooth_env(16, 32, 0));
  const Result zero = run({"weights", manifest.string(), smooth.string(), "--rotation", "0"});
  const Result turn = run({"weights", manifest.string(), smooth.string(), "--rotation", "6.283185307"});
  CHECK(zero.out == turn.out);
  CHECK(zero.out != run({"weights", manifest.string(), smooth.string(), "--rotation", "1"}).out);

  EnvMap delta{HdrImage(32, 16)};
  delta.image.at(7, 5, 0) = delta.image.at(7, 5, 1) = delta.image.at(7, 5, 2) = 3.0f;
  const Result d = run({"weights", manifest.string(), write_env(dir, "delta.pfm", delta).string()});
  int nonzero = 0;
  for (const auto& w : nlohmann::json::parse(d.out)) nonzero += w[0].get<double>() != 0.0;
  CHECK(nonzero == 1);

  const Result file = run({"weights", manifest.string(), smooth.string(), "-o", (dir / "w.json").string()});
  CHECK(file.code == 0);
  CHECK(slurp(dir / "w.json") == zero.out);
}

TEST_CASE("cli relight") {
  test::TempDir dir("cli-relight");
  const fs::path manifest = make_stack(dir, 6);
  const LightRig rig = oracle::generate_rig(6);
  nlohmann::json w;
  for (std::size_t l = 0; l < 6; ++l) w[rig.labels[l]] = l == 2 ? std::vector<double>{1, 1, 1} : std::vector<double>{0, 0, 0};
  put(dir / "onehot.json", w.dump());

  const Result r = run({"relight", manifest.string(), "--weights", (dir / "onehot.json").string(), "--out",
                        (dir / "a.hdr").string(), "--png", (dir / "a.png").string()});
  REQUIRE(r.code == 0);
  CHECK(load_image(dir / "a.hdr") == load_image(dir / "stack" / "olat" / (rig.labels[2] + ".hdr")));
  CHECK(fs::file_size(dir / "a.png") > 0);

  run({"relight", manifest.string(), "--weights", (dir / "onehot.json").string(), "--out", (dir / "b.hdr").string(),
       "--png", (dir / "b.png").string()});
  CHECK(slurp(dir / "a.hdr") == slurp(dir / "b.hdr"));
  CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));

  // env path and weights path agree
  const fs::path env = write_env(dir, "env.pfm", oracle::smooth_env(16, 32, 1));
  REQUIRE(run({"weights", manifest.string(), env.string(), "--rotation", "0.5", "-o", (dir / "w.json").string()}).code == 0);
  run({"relight", manifest.string(), "--env", env.string(), "--rotation", "0.5", "--out", (dir / "e.pfm").string()});
  run({"relight", manifest.string(), "--weights", (dir / "w.json").string(), "--out", (dir / "f.pfm").string()});
  CHECK(slurp(dir / "e.pfm") == slurp(dir / "f.pfm"));

  // reference report
  const Result ref = run({"relight", manifest.string(), "--weights", (dir / "onehot.json").string(), "--out",
                          (dir / "c.hdr").string(), "--reference", (dir / "a.hdr").string()});
  CHECK(ref.out.rfind("rmse 0 psnr 100", 0) == 0);

  // rig / weights mismatch
  nlohmann::json short_w;
  short_w[rig.labels[0]] = {1, 1, 1};
  put(dir / "short.json", short_w.dump());
  const Result bad = run({"relight", manifest.string(), "--weights", (dir / "short.json").string(), "--out",
                          (dir / "x.hdr").string()});
  CHECK(bad.code == 2);
  CHECK(bad.err.rfind("error: ", 0) == 0);
  CHECK(std::count(bad.err.begin(), bad.err.end(), '\n') == 1);
  CHECK(run({"relight", manifest.string(), "--out", (dir / "x.hdr").string()}).code == 2);
  CHECK(run({"relight", manifest.string(), "--env", env.string(), "--weights", (dir / "w.json").string(), "--out",
             (dir / "x.hdr").string()})
            .code == 2);
}

TEST_CASE("cli exit codes") {
  test::TempDir dir("cli-exit");
  const fs::path manifest = make_stack(dir, 3);
  CHECK(run({"weights", manifest.string(), (dir / "missing.hdr").string()}).code == 3);
  CHECK(run({"weights", (dir / "missing.json").string(), (dir / "missing.hdr").string()}).code == 3);
  put(dir / "garbage.json", "{not json");
  CHECK(run({"weights", (dir / "garbage.json").string(), (dir / "x.hdr").string()}).code == 2);
  put(dir / "bad.hdr", "#?RADIANCE\nnonsense");
  CHECK(run({"weights", manifest.string(), (dir / "bad.hdr").string()}).code == 3);
  CHECK(run({"nope"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"weights"}).code == 2);
  CHECK(run({"--threads", "0", "weights", manifest.string(), "x"}).code == 2);
  const Result help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("relight") != std::string::npos);
  CHECK(cli::exit_code(ErrorKind::numeric) == 4);
  CHECK(cli::exit_code(ErrorKind::truncation) == 3);
  CHECK(cli::exit_code(ErrorKind::domain) == 2);
}

TEST_CASE("cli oracle writes a loadable stack") {
  test::TempDir dir("cli-oracle");
  put(dir / "scene.json", R"({"camera": {"width": 12, "height": 10}, "texture_amplitude": 0.2})");
  EnvMap env = oracle::smooth_env(8, 16, 2);
  write_env(dir, "env.pfm", env);
  const Result r = run({"oracle", (dir / "scene.json").string(), "5", "--out", (dir / "o").string(), "--format", "pfm",
                        "--env", (dir / "env.pfm").string()});
  REQUIRE(r.code == 0);
  const Manifest m = read_manifest(dir / "o" / "manifest.json");
  CHECK(m.rig.size() == 5);
  CHECK(load_image(m.images[0]).width == 12);
  CHECK(fs::exists(dir / "o" / "env_truth.pfm"));
  CHECK(fs::exists(dir / "o" / "camera.json"));
  CHECK(run({"oracle", (dir / "scene.json").string(), "0", "--out", (dir / "z").string()}).code == 2);
  CHECK(run({"oracle", (dir / "scene.json").string(), "2", "--out", (dir / "z").string(), "--format", "png"}).code == 2);
  put(dir / "bad.json", R"({"radius": -1})");
  CHECK(run({"oracle", (dir / "bad.json").string(), "2", "--out", (dir / "z").string()}).code == 2);
}

TEST_CASE("cli align") {
  test::TempDir dir("cli-align");
  put(dir / "scene.json", R"({"camera": {"width": 64, "height": 64}, "texture_amplitude": 0.5, "texture_frequency": 3})");
  REQUIRE(run({"oracle", (dir / "scene.json").string(), "20", "--out", (dir / "o").string(), "--take", "22"}).code == 0);
  const Result r = run({"align", (dir / "o" / "take").string(), (dir / "o" / "layout.json").string(), "--out",
                        (dir / "aligned").string(), "--truth", (dir / "o" / "truth").string(), "--flows"});
  REQUIRE(r.code == 0);
  const auto pos = r.out.find("reduction ");
  REQUIRE(pos != std::string::npos);
  const double reduction = std::stod(r.out.substr(pos + 10));
  MESSAGE(r.out);
  CHECK(reduction >= 70.0);
  CHECK(fs::exists(dir / "aligned" / "frame_0021.hdr"));
  CHECK(fs::exists(dir / "aligned" / "frame_0021.flo2"));

  // static take: output equals input within tolerance
  const Result still = run({"align", (dir / "o" / "truth").string(), (dir / "o" / "layout.json").string(), "--out",
                            (dir / "still").string(), "--truth", (dir / "o" / "truth").string()});
  REQUIRE(still.code == 0);
  CHECK(still.out.find("aligned 0 ") != std::string::npos);

  // missing tracking frames
  put(dir / "broken.json", R"({"frame_count": 22, "tracking": [0], "block_size": 21})");
  const Result bad = run({"align", (dir / "o" / "take").string(), (dir / "broken.json").string(), "--out",
                          (dir / "x").string()});
  CHECK(bad.code == 2);
  CHECK_FALSE(bad.err.empty());
}

TEST_CASE("cli train and render") {
  test::TempDir dir("cli-train");
  const fs::path manifest = make_stack(dir, 4);
  const std::vector<std::string> common{"train", manifest.string(), "--batch-rays", "64", "--crop", "12",
                                        "--samples", "8", "--channels", "4", "--resolution", "8", "--hidden", "8"};
  auto train = [&](const std::string& out, const std::string& iters, const std::string& seed) {
    std::vector<std::string> args{"--seed", seed};
    args.insert(args.end(), common.begin(), common.end());
    args.insert(args.end(), {"--iters", iters, "--out", (dir / out).string()});
    return run(args);
  };
  REQUIRE(train("zero.bin", "0", "3").code == 0);
  CHECK(read_file(dir / "zero.bin") == field::save_checkpoint(field::init_field({4, 8, 8}, 3)));

  REQUIRE(train("a.bin", "5", "3").code == 0);
  REQUIRE(train("b.bin", "5", "3").code == 0);
  REQUIRE(train("c.bin", "5", "4").code == 0);
  CHECK(read_file(dir / "a.bin") == read_file(dir / "b.bin"));
  CHECK(read_file(dir / "a.bin") != read_file(dir / "c.bin"));
  const std::string csv = slurp(dir / "a.loss.csv");
  CHECK(csv.rfind("iteration,total,l1,mrf\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);

  put(dir / "cam.json", R"({"width": 8, "height": 6})");
  const Result r = run({"render", (dir / "a.bin").string(), "--light", "0,1,0", "--camera", (dir / "cam.json").string(),
                        "--out", (dir / "r.pfm").string(), "--png", (dir / "r.png").string()});
  REQUIRE(r.code == 0);
  CHECK(load_image(dir / "r.pfm").width == 8);
  CHECK(run({"render", (dir / "a.bin").string(), "--light", "0,1", "--camera", (dir / "cam.json").string(), "--out",
             (dir / "r.pfm").string()})
            .code == 2);
  CHECK(run({"render", (dir / "a.bin").string(), "--light", "0,0,0", "--camera", (dir / "cam.json").string(), "--out",
             (dir / "r.pfm").string()})
            .code == 2);
  put(dir / "junk.bin", "OLATTPF1");
  CHECK(run({"render", (dir / "junk.bin").string(), "--light", "0,1,0", "--camera", (dir / "cam.json").string(),
             "--out", (dir / "r.pfm").string()})
            .code == 3);

  // a non-finite target makes the loss non-finite: exit 4 and a snapshot
  Manifest m = read_manifest(manifest);
  HdrImage poisoned = load_image(m.images[0]);
  poisoned.data[0] = std::numeric_limits<float>::quiet_NaN();
  save_image(dir / "nan.pfm", poisoned);
  m.images[0] = dir / "nan.pfm";
  write_manifest(dir / "nan_manifest.json", m);
  std::vector<std::string> args{"train", (dir / "nan_manifest.json").string(), "--batch-rays", "4096", "--crop", "12",
                                "--samples", "4", "--channels", "4", "--resolution", "8", "--hidden", "8",
                                "--iters", "3", "--out", (dir / "n.bin").string()};
  const Result nan = run(args);
  CHECK(nan.code == 4);
  CHECK(fs::exists(dir / "n.nan.bin"));
}
