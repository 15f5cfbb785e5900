#pragma once

#include <json.hpp>

#include "olatkit/align.hpp"
#include "olatkit/lightrig.hpp"

namespace olat {

// cam.json / manifest "camera" object:
// {fx, fy, cx, cy, rotation: [9, row-major world->camera], translation: [3], width, height}
nlohmann::json camera_to_json(const CameraModel& cam);
CameraModel camera_from_json(const nlohmann::json& j);

// weights.json: {"<label>": [r, g, b], ...} in rig order.
nlohmann::ordered_json weights_to_json(const WeightVector& w, const LightRig& rig);
WeightVector weights_from_json(const nlohmann::json& j, const LightRig& rig);

// layout.json: {frame_count, tracking: [indices], block_size, reference?,
// frames?: [file names]}. Missing "tracking" means every block_size-th frame.
struct LayoutFile {
  TakeLayout layout;
  std::size_t reference = 0;  // index into layout.tracking
  std::vector<std::string> frames;
};

LayoutFile layout_from_json(const nlohmann::json& j);
nlohmann::ordered_json layout_to_json(const LayoutFile& f);

}  // namespace olat
