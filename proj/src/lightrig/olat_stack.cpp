#include "olatkit/olat_stack.hpp"

#include <fstream>
#include <set>

#include "olatkit/codec.hpp"
#include "olatkit/error.hpp"
#include "olatkit/json_io.hpp"

namespace olat {

std::shared_ptr<const HdrImage> ImageCache::get(const std::string& key, const Loader& load) {
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second.lru);
      return it->second.image;
    }
  }
  // Decode outside the lock; concurrent misses on one key may decode twice,
  // the first insertion wins.
  auto image = std::make_shared<const HdrImage>(load());
  decodes_.fetch_add(1);
  const std::size_t bytes = image->data.size() * sizeof(float);
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it != entries_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second.lru);
    return it->second.image;
  }
  if (bytes > budget_) return image;
  lru_.push_front(key);
  entries_.emplace(key, Entry{image, bytes, lru_.begin()});
  resident_ += bytes;
  evict_locked();
  return image;
}

void ImageCache::evict_locked() {
  while (resident_ > budget_ && !lru_.empty()) {
    const std::string victim = lru_.back();
    lru_.pop_back();
    auto it = entries_.find(victim);
    resident_ -= it->second.bytes;
    entries_.erase(it);
  }
}

std::size_t ImageCache::resident_bytes() const {
  std::lock_guard lock(mutex_);
  return resident_;
}

OlatStack OlatStack::from_images(LightRig rig, std::vector<HdrImage> images, CameraModel camera,
                                 StackMetadata meta) {
  validate(rig);
  if (images.size() != rig.size()) {
    throw ValidationError("stack has " + std::to_string(images.size()) + " images for " +
                          std::to_string(rig.size()) + " lights");
  }
  auto state = std::make_shared<State>();
  state->width = images.front().width;
  state->height = images.front().height;
  for (std::size_t l = 0; l < images.size(); ++l) {
    if (images[l].width != state->width || images[l].height != state->height) {
      throw ValidationError("OLAT image for light '" + rig.labels[l] + "' has mismatched dimensions");
    }
    state->images.push_back(std::make_shared<const HdrImage>(std::move(images[l])));
  }
  state->rig = std::move(rig);
  state->camera = camera;
  state->meta = std::move(meta);
  OlatStack stack;
  stack.state_ = std::move(state);
  return stack;
}

OlatStack OlatStack::from_files(LightRig rig, std::vector<std::filesystem::path> paths, CameraModel camera,
                                StackMetadata meta, std::size_t width, std::size_t height,
                                std::shared_ptr<ImageCache> cache) {
  validate(rig);
  if (paths.size() != rig.size()) {
    throw ValidationError("stack has " + std::to_string(paths.size()) + " image paths for " +
                          std::to_string(rig.size()) + " lights");
  }
  auto state = std::make_shared<State>();
  state->rig = std::move(rig);
  state->paths = std::move(paths);
  state->camera = camera;
  state->meta = std::move(meta);
  state->width = width;
  state->height = height;
  state->cache = cache ? std::move(cache) : std::make_shared<ImageCache>();
  OlatStack stack;
  stack.state_ = std::move(state);
  return stack;
}

std::shared_ptr<const HdrImage> OlatStack::image(std::size_t l) const {
  const State& s = *state_;
  if (l >= s.rig.size()) throw ContractError("light index " + std::to_string(l) + " out of range");
  if (s.paths.empty()) return s.images[l];
  const std::filesystem::path& path = s.paths[l];
  const std::string& label = s.rig.labels[l];
  return s.cache->get(path.string(), [&]() {
    HdrImage img;
    try {
      img = load_image(path);
    } catch (const IoError& e) {
      throw IoError("cannot load OLAT image for light '" + label + "': " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), "cannot decode OLAT image for light '" + label + "': " + e.what());
    }
    if ((s.width != 0 && img.width != s.width) || (s.height != 0 && img.height != s.height)) {
      throw ValidationError("OLAT image for light '" + label + "' is " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + ", expected " + std::to_string(s.width) + "x" +
                            std::to_string(s.height));
    }
    return img;
  });
}

std::size_t OlatStack::decode_count() const { return state_->cache ? state_->cache->decode_count() : 0; }

namespace {

template <typename Json>
Vec3 vec3_from(const Json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(what + " must be an array of 3 numbers");
  return {j[0].template get<double>(), j[1].template get<double>(), j[2].template get<double>()};
}

}  // namespace

nlohmann::json camera_to_json(const CameraModel& cam) {
  nlohmann::json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["rotation"] = cam.rotation.m;
  j["translation"] = {cam.translation.x, cam.translation.y, cam.translation.z};
  j["width"] = cam.width;
  j["height"] = cam.height;
  return j;
}

CameraModel camera_from_json(const nlohmann::json& j) {
  try {
    CameraModel cam;
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    const auto& rot = j.at("rotation");
    if (!rot.is_array() || rot.size() != 9) throw ValidationError("camera rotation must have 9 entries");
    for (std::size_t i = 0; i < 9; ++i) cam.rotation.m[i] = rot[i].get<double>();
    cam.translation = vec3_from(j.at("translation"), "camera translation");
    cam.width = j.at("width").get<std::size_t>();
    cam.height = j.at("height").get<std::size_t>();
    validate(cam);
    return cam;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid camera: ") + e.what());
  }
}

nlohmann::ordered_json weights_to_json(const WeightVector& w, const LightRig& rig) {
  validate(w, rig);
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t l = 0; l < rig.size(); ++l) j[rig.labels[l]] = {w.weights[l][0], w.weights[l][1], w.weights[l][2]};
  return j;
}

WeightVector weights_from_json(const nlohmann::json& j, const LightRig& rig) {
  if (!j.is_object()) throw ValidationError("weights document must be an object keyed by light label");
  if (j.size() != rig.size()) {
    throw ValidationError("weights document has " + std::to_string(j.size()) + " entries but the rig has " +
                          std::to_string(rig.size()) + " lights");
  }
  WeightVector w;
  w.weights.resize(rig.size());
  for (std::size_t l = 0; l < rig.size(); ++l) {
    auto it = j.find(rig.labels[l]);
    if (it == j.end()) throw ValidationError("weights document has no entry for light '" + rig.labels[l] + "'");
    if (!it->is_array() || it->size() != 3) throw ValidationError("weight for '" + rig.labels[l] + "' must be [r,g,b]");
    for (std::size_t c = 0; c < 3; ++c) {
      if (!(*it)[c].is_number()) throw ValidationError("weight for '" + rig.labels[l] + "' must be numeric");
      w.weights[l][c] = (*it)[c].get<double>();
    }
  }
  validate(w, rig);
  return w;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  const std::filesystem::path dir = path.parent_path();
  Manifest m;
  try {
    if (j.at("version").get<int>() != 1) throw ValidationError("unsupported manifest version");
    const auto& lights = j.at("lights");
    if (!lights.is_array() || lights.empty()) throw ValidationError("manifest must list at least one light");
    std::set<std::string> seen;
    for (const auto& light : lights) {
      const std::string label = light.at("label").get<std::string>();
      if (!seen.insert(label).second) throw ValidationError("duplicate light label '" + label + "'");
      m.rig.labels.push_back(label);
      m.rig.directions.push_back(vec3_from(light.at("direction"), "direction of light '" + label + "'"));
      m.images.push_back(dir / light.at("image").get<std::string>());
    }
    m.camera = camera_from_json(j.at("camera"));
    if (j.contains("subject")) m.meta.subject = j["subject"].get<std::string>();
    if (j.contains("session")) m.meta.session = j["session"].get<std::string>();
    if (j.contains("tracking_frames")) m.take.tracking_frames = j["tracking_frames"].get<std::vector<std::size_t>>();
    if (j.contains("block_size")) m.take.block_size = j["block_size"].get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest '" + path.string() + "' does not match the schema: " + e.what());
  }
  validate(m.rig);
  for (std::size_t l = 0; l < m.images.size(); ++l) {
    if (!std::filesystem::is_regular_file(m.images[l])) {
      throw IoError("image for light '" + m.rig.labels[l] + "' not found: " + m.images[l].string());
    }
  }
  return m;
}

OlatStack load_manifest(const std::filesystem::path& path, std::shared_ptr<ImageCache> cache) {
  Manifest m = read_manifest(path);
  return OlatStack::from_files(std::move(m.rig), std::move(m.images), m.camera, std::move(m.meta), m.camera.width,
                               m.camera.height, std::move(cache));
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  const std::filesystem::path base = std::filesystem::absolute(path).parent_path().lexically_normal();
  nlohmann::ordered_json j;
  j["version"] = 1;
  if (!manifest.meta.subject.empty()) j["subject"] = manifest.meta.subject;
  if (!manifest.meta.session.empty()) j["session"] = manifest.meta.session;
  nlohmann::ordered_json lights = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < manifest.rig.size(); ++l) {
    const Vec3& d = manifest.rig.directions[l];
    nlohmann::ordered_json light;
    light["label"] = manifest.rig.labels[l];
    light["direction"] = {d.x, d.y, d.z};
    light["image"] = std::filesystem::absolute(manifest.images[l])
                         .lexically_normal()
                         .lexically_relative(base)
                         .generic_string();
    lights.push_back(std::move(light));
  }
  j["lights"] = std::move(lights);
  j["camera"] = camera_to_json(manifest.camera);
  if (!manifest.take.tracking_frames.empty()) {
    j["tracking_frames"] = manifest.take.tracking_frames;
    j["block_size"] = manifest.take.block_size;
  }
  const std::string text = j.dump(2) + "\n";
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace olat
