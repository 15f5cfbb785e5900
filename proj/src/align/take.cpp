#include <algorithm>
#include <string>

#include "olatkit/align.hpp"
#include "olatkit/error.hpp"
#include "olatkit/json_io.hpp"

namespace olat {
namespace {

// Fixed-point inverse of a smooth flow: inv(p) = -f(p + inv(p)).
FlowField invert_flow(const FlowField& f) {
  FlowField inv(f.width, f.height);
  for (int it = 0; it < 20; ++it) {
    const FlowField sampled = warp(f, inv);
    for (std::size_t i = 0; i < inv.data.size(); ++i) inv.data[i] = -sampled.data[i];
  }
  return inv;
}

void check_frames(std::span<const HdrImage> frames, const TakeLayout& layout, std::size_t reference) {
  validate(layout);
  if (frames.size() != layout.frame_count) {
    throw ValidationError("take has " + std::to_string(frames.size()) + " frames but the layout describes " +
                          std::to_string(layout.frame_count));
  }
  if (reference >= layout.tracking.size()) throw ValidationError("reference tracking index out of range");
  for (const auto& f : frames) {
    if (f.width != frames.front().width || f.height != frames.front().height) {
      throw ValidationError("take frames differ in size");
    }
  }
}

// `to_ref[j]` maps tracking frame j onto the reference tracking frame.
AlignResult apply(std::span<const HdrImage> frames, const TakeLayout& layout, const std::vector<FlowField>& to_ref) {
  AlignResult result;
  result.frames.resize(frames.size());
  result.flows.resize(frames.size());
  const auto& tr = layout.tracking;
  const auto count = static_cast<std::ptrdiff_t>(frames.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t fi = 0; fi < count; ++fi) {
    const auto i = static_cast<std::size_t>(fi);
    FlowField flow;
    if (i <= tr.front()) {
      flow = to_ref.front();
    } else if (i >= tr.back()) {
      flow = to_ref.back();
    } else {
      const std::size_t b = static_cast<std::size_t>(std::upper_bound(tr.begin(), tr.end(), i) - tr.begin());
      const std::size_t a = b - 1;
      const double t = static_cast<double>(i - tr[a]) / static_cast<double>(tr[b] - tr[a]);
      flow = interpolate_flow(to_ref[a], to_ref[b], t);
    }
    result.frames[i] = warp(frames[i], flow);
    result.flows[i] = std::move(flow);
  }
  return result;
}

}  // namespace

TakeLayout TakeLayout::regular(std::size_t frame_count, std::size_t block_size) {
  if (block_size == 0) throw ValidationError("block size must be positive");
  TakeLayout layout;
  layout.frame_count = frame_count;
  layout.block_size = block_size;
  for (std::size_t i = 0; i < frame_count; i += block_size) layout.tracking.push_back(i);
  return layout;
}

void validate(const TakeLayout& layout) {
  if (layout.tracking.size() < 2) {
    throw ValidationError("insufficient tracking frames: alignment needs at least 2, got " +
                          std::to_string(layout.tracking.size()));
  }
  for (std::size_t i = 0; i < layout.tracking.size(); ++i) {
    if (layout.tracking[i] >= layout.frame_count) throw ValidationError("tracking frame index beyond take length");
    if (i > 0 && layout.tracking[i] <= layout.tracking[i - 1]) {
      throw ValidationError("tracking frame indices must be strictly increasing");
    }
  }
}

AlignResult align_take(std::span<const HdrImage> frames, const TakeLayout& layout, std::size_t reference,
                       const FlowParams& params) {
  check_frames(frames, layout, reference);
  const auto& tr = layout.tracking;
  const std::size_t n = tr.size();
  std::vector<GrayImage> gray(n);
  for (std::size_t j = 0; j < n; ++j) gray[j] = to_gray(frames[tr[j]]);

  // step[j] maps tracking frame j onto its neighbour one step closer to the reference.
  std::vector<FlowField> step(n);
  const auto pairs = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t ji = 0; ji < pairs; ++ji) {
    const auto j = static_cast<std::size_t>(ji);
    if (j == reference) continue;
    const std::size_t toward = j > reference ? j - 1 : j + 1;
    step[j] = compute_flow(gray[j], gray[toward], params);
  }
  std::vector<FlowField> to_ref(n);
  to_ref[reference] = FlowField(frames.front().width, frames.front().height);
  for (std::size_t j = reference + 1; j < n; ++j) to_ref[j] = compose_flow(to_ref[j - 1], step[j]);
  for (std::size_t j = reference; j-- > 0;) to_ref[j] = compose_flow(to_ref[j + 1], step[j]);
  return apply(frames, layout, to_ref);
}

AlignResult align_take_with_flows(std::span<const HdrImage> frames, const TakeLayout& layout,
                                  std::span<const FlowField> pair_flows, std::size_t reference) {
  check_frames(frames, layout, reference);
  const std::size_t n = layout.tracking.size();
  if (pair_flows.size() != n - 1) {
    throw ValidationError("expected " + std::to_string(n - 1) + " tracking-pair flows, got " +
                          std::to_string(pair_flows.size()));
  }
  for (const auto& f : pair_flows) {
    if (f.width != frames.front().width || f.height != frames.front().height) {
      throw ContractError("supplied flow does not match the frame size");
    }
  }
  std::vector<FlowField> to_ref(n);
  to_ref[reference] = FlowField(frames.front().width, frames.front().height);
  for (std::size_t j = reference + 1; j < n; ++j) to_ref[j] = compose_flow(to_ref[j - 1], pair_flows[j - 1]);
  for (std::size_t j = reference; j-- > 0;) to_ref[j] = compose_flow(to_ref[j + 1], invert_flow(pair_flows[j]));
  return apply(frames, layout, to_ref);
}

}  // namespace olat

namespace olat {

LayoutFile layout_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ValidationError("layout must be a JSON object");
    LayoutFile f;
    f.layout.frame_count = j.at("frame_count").get<std::size_t>();
    f.layout.block_size = j.value("block_size", std::size_t{21});
    if (j.contains("tracking")) {
      f.layout.tracking = j.at("tracking").get<std::vector<std::size_t>>();
    } else {
      f.layout = TakeLayout::regular(f.layout.frame_count, f.layout.block_size);
    }
    f.reference = j.value("reference", std::size_t{0});
    if (j.contains("frames")) {
      f.frames = j.at("frames").get<std::vector<std::string>>();
      if (f.frames.size() != f.layout.frame_count) throw ValidationError("layout lists a different number of frames");
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid layout: ") + e.what());
  }
}

nlohmann::ordered_json layout_to_json(const LayoutFile& f) {
  nlohmann::ordered_json j;
  j["frame_count"] = f.layout.frame_count;
  j["block_size"] = f.layout.block_size;
  j["tracking"] = f.layout.tracking;
  j["reference"] = f.reference;
  if (!f.frames.empty()) j["frames"] = f.frames;
  return j;
}

}  // namespace olat
