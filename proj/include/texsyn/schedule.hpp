#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "texsyn/network.hpp"

namespace texsyn {

/// Cross-correlation offsets per tapped layer, in tap order. Layers without
/// offsets (full-resolution taps, maps narrower than 3) have an empty list.
struct DeltaSchedule {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> layers;

  const std::vector<std::size_t>& at(const std::string& layer) const {
    for (const auto& [name, deltas] : layers)
      if (name == layer) return deltas;
    throw ConfigError("schedule has no layer '" + layer + "'");
  }
};

/// Offsets {2, 4, ..., 2^k} with 2^k the largest power of two <= extent/3,
/// or {2} when that set is empty but extent >= 3.
inline std::vector<std::size_t> offsets_for_extent(std::size_t extent) {
  std::vector<std::size_t> out;
  for (std::size_t d = 2; 3 * d <= extent; d *= 2) out.push_back(d);
  if (out.empty() && extent >= 3) out.push_back(2);
  return out;
}

/// Recommended schedule for an image of the given size. The extent of a
/// layer is the smaller side of its feature maps; taps at full input
/// resolution get no offsets.
template <typename T>
DeltaSchedule build_delta_schedule(const Network<T>& net, std::size_t height, std::size_t width) {
  const auto shapes = infer_shapes(net, height, width);
  DeltaSchedule schedule;
  for (const auto& tap : net.tap_points) {
    const auto& s = shapes[net.index_of(tap)];
    const bool full_resolution = s[1] == height && s[2] == width;
    schedule.layers.emplace_back(
        tap, full_resolution ? std::vector<std::size_t>{} : offsets_for_extent(std::min(s[1], s[2])));
  }
  return schedule;
}

inline std::string format_deltas(const std::vector<std::size_t>& deltas) {
  std::string s = "{";
  for (std::size_t i = 0; i < deltas.size(); ++i) s += (i ? "," : "") + std::to_string(deltas[i]);
  return s + "}";
}

}  // namespace texsyn
