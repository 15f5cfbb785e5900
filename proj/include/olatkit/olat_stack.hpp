#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "olatkit/image.hpp"
#include "olatkit/lightrig.hpp"

namespace olat {

// Thread-safe LRU cache of decoded images with a byte budget. Entries larger
// than the whole budget are returned but never retained.
class ImageCache {
 public:
  static constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

  explicit ImageCache(std::size_t byte_budget = kUnlimited) : budget_(byte_budget) {}

  using Loader = std::function<HdrImage()>;
  std::shared_ptr<const HdrImage> get(const std::string& key, const Loader& load);

  std::size_t budget() const { return budget_; }
  std::size_t resident_bytes() const;
  std::size_t decode_count() const { return decodes_.load(); }

 private:
  struct Entry {
    std::shared_ptr<const HdrImage> image;
    std::size_t bytes = 0;
    std::list<std::string>::iterator lru;
  };

  void evict_locked();

  std::size_t budget_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, Entry> entries_;
  std::list<std::string> lru_;  // front = most recent
  std::size_t resident_ = 0;
  std::atomic<std::size_t> decodes_{0};
};

struct StackMetadata {
  std::string subject;
  std::string session;
};

// A light rig bound to one OLAT image per light. File-backed stacks decode
// lazily through a shared ImageCache; copies share images and cache.
class OlatStack {
 public:
  OlatStack() = default;

  static OlatStack from_images(LightRig rig, std::vector<HdrImage> images, CameraModel camera = {},
                               StackMetadata meta = {});
  static OlatStack from_files(LightRig rig, std::vector<std::filesystem::path> paths, CameraModel camera,
                              StackMetadata meta, std::size_t width, std::size_t height,
                              std::shared_ptr<ImageCache> cache = nullptr);

  const LightRig& rig() const { return state_->rig; }
  const CameraModel& camera() const { return state_->camera; }
  const StackMetadata& metadata() const { return state_->meta; }
  std::size_t size() const { return state_->rig.size(); }
  std::size_t width() const { return state_->width; }
  std::size_t height() const { return state_->height; }
  bool file_backed() const { return !state_->paths.empty(); }
  const std::vector<std::filesystem::path>& paths() const { return state_->paths; }

  // Decoded image of light `l`; throws IoError naming the light label when
  // the file cannot be read, ValidationError on a size mismatch.
  std::shared_ptr<const HdrImage> image(std::size_t l) const;

  // Number of file decodes performed so far (0 for in-memory stacks).
  std::size_t decode_count() const;
  const std::shared_ptr<ImageCache>& cache() const { return state_->cache; }

 private:
  struct State {
    LightRig rig;
    CameraModel camera;
    StackMetadata meta;
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::shared_ptr<const HdrImage>> images;
    std::vector<std::filesystem::path> paths;
    std::shared_ptr<ImageCache> cache;
  };
  std::shared_ptr<const State> state_ = std::make_shared<State>();
};

// Optional capture-take description carried by a manifest.
struct ManifestTake {
  std::vector<std::size_t> tracking_frames;
  std::size_t block_size = 0;
};

struct Manifest {
  LightRig rig;
  std::vector<std::filesystem::path> images;  // resolved against the manifest directory
  CameraModel camera;
  StackMetadata meta;
  ManifestTake take;
};

// Parses and validates a manifest; image files must exist but are not decoded.
Manifest read_manifest(const std::filesystem::path& path);
OlatStack load_manifest(const std::filesystem::path& path, std::shared_ptr<ImageCache> cache = nullptr);

// Writes `manifest` to `path`, storing image paths relative to its directory.
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace olat
