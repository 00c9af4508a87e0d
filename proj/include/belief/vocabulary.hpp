#pragma once

#include "belief/common.hpp"

#include <array>
#include <string_view>

namespace belief {

/// Closed class set shared by the simulator, the voxel sampler and the benchmark.
/// Id 0 means "no class".
inline constexpr std::array<std::string_view, 13> kClassNames = {
    "none", "floor", "wall", "door", "table", "chair", "sofa", "bed", "shelf", "plant", "television", "toilet",
    "occluder"};

inline constexpr int kNumClasses = static_cast<int>(kClassNames.size());
inline constexpr int kFloorClass = 1;
inline constexpr int kWallClass = 2;
inline constexpr int kDoorClass = 3;

/// Classes an episode may ask the agent to find.
inline constexpr std::array<std::string_view, 5> kTargetClasses = {"bed", "sofa", "plant", "television", "toilet"};

/// Case-insensitive lookup; returns 0 for unknown names.
int class_id(std::string_view name);
std::string_view class_name(int id);
Vec3 class_color(int id);
bool is_target_class(std::string_view name);

} // namespace belief
