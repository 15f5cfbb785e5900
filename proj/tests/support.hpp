#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "olatkit/image.hpp"
#include "olatkit/random.hpp"

namespace olat::test {

inline HdrImage random_image(std::size_t w, std::size_t h, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  HdrImage img(w, h);
  for (float& v : img.data) v = static_cast<float>(uniform(rng, lo, hi));
  return img;
}

inline HdrImageD random_image_d(std::size_t w, std::size_t h, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  HdrImageD img(w, h);
  for (double& v : img.data) v = uniform(rng, lo, hi);
  return img;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("olatkit-" + tag + "-" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace olat::test
