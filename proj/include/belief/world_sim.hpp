#pragma once

#include "belief/hypothesis_sampler.hpp"
#include "belief/occupancy_grid.hpp"
#include "belief/scene_belief.hpp"
#include "belief/semantic_field.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace belief {

struct Box {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();

    Vec3 center() const { return 0.5 * (lo + hi); }
    Vec3 size() const { return hi - lo; }
    bool operator==(const Box &) const = default;
};

struct Room {
    Vec2 lo = Vec2::Zero();
    Vec2 hi = Vec2::Zero();
    bool operator==(const Room &) const = default;
};

/// Opening in the wall line between two rooms: [lo, hi] along `axis` (0 = x, 1 = y)
/// at coordinate `line` on the other axis.
struct Door {
    int axis = 0;
    double line = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    int room_a = 0;
    int room_b = 0;
    bool operator==(const Door &) const = default;
};

struct Furniture {
    Box box;
    std::string cls;
    Vec3 color = Vec3::Zero();
    int room = 0;
    bool operator==(const Furniture &) const = default;
};

/// Any raycastable box: walls, door lintels and furniture. `object` indexes
/// World::furniture, -1 for structure.
struct Solid {
    Box box;
    int cls = 0;
    Vec3 color = Vec3::Zero();
    int object = -1;
};

struct WorldConfig {
    int rooms_min = 2;
    int rooms_max = 3;
    double furniture_density = 0.5;
    Vec2 size{9.0, 7.0};
    bool require_targets = true;
    bool operator==(const WorldConfig &) const = default;
};

inline constexpr double kWallHeight = 2.5;
inline constexpr double kWallThickness = 0.1;
inline constexpr double kDoorWidth = 1.0;
inline constexpr double kLintelBottom = 2.0;
inline constexpr double kAgentRadius = 0.2;
inline constexpr double kAgentBodyTop = 1.5;
inline constexpr double kForwardStep = 0.25;
inline constexpr double kTurnStep = 0.5235987755982988; // 30 degrees

struct World {
    std::uint64_t seed = 0;
    WorldConfig config;
    Vec2 bounds_lo = Vec2::Zero();
    Vec2 bounds_hi = Vec2::Zero();
    std::vector<Room> rooms;
    std::vector<Door> doors;
    std::vector<Furniture> furniture;
    std::vector<Solid> solids; // derived by finalize()

    /// Rebuilds wall, lintel and furniture solids from rooms, doors and furniture.
    void finalize();
    std::vector<int> instances(std::string_view cls) const;
    bool inside(const Vec2 &p) const;
};

/// Deterministic per (seed, config). Throws GenerationFailed.
World generate_world(std::uint64_t seed, const WorldConfig &config = {});

/// Invariant checks used by tests: room tiling, furniture containment, doors on
/// every shared wall, room graph and free-space connectivity. Returns the first
/// violated property, empty when all hold.
std::string check_world(const World &world);

struct AgentState {
    Vec2 position = Vec2::Zero();
    double heading = 0.0;
};

enum class Action { Forward, RotateLeft, RotateRight, Done };
const char *to_string(Action action);

struct SensorConfig {
    int width = 64;
    int height = 48;
    double fx = 32.0;
    double fy = 32.0;
    double camera_height = 1.0;
    double pitch = -0.2617993877991494; // -15 degrees
};

CameraPose agent_camera(const AgentState &state, const SensorConfig &sensor = {});
/// Camera at `position` looking along yaw / pitch (radians).
CameraPose look_camera(const Vec3 &position, double yaw, double pitch, const SensorConfig &sensor = {});

struct RayHit {
    double t = 0.0;       // distance along the unit direction
    int solid = -1;       // index into World::solids, -1 floor
    Vec3 normal = Vec3::Zero();
};

/// Nearest hit among solids and the building floor within max_t. `only_solid`
/// restricts the query to one solid (floor excluded).
std::optional<RayHit> raycast(const World &world, const Vec3 &origin, const Vec3 &dir, double max_t,
                              int only_solid = -2);

struct SensorReading {
    Observation observation;
    std::vector<RaySegment> rays;  // free space per logged pixel
    Image<int> hit_solid;          // per pixel: solid index, -1 floor, -2 nothing
};

/// Raycast RGB-D + semantic observation. Throws PoseOutOfBounds.
SensorReading observe(const World &world, const CameraPose &pose, const EmbeddingProvider &provider,
                      int ray_stride = 1);

struct StepResult {
    AgentState state;
    bool collided = false;
};

/// Agent disc (radius 0.2) against solids overlapping the body height.
bool collides(const World &world, const Vec2 &position);
StepResult step(const World &world, const AgentState &state, Action action);

struct SuccessCriteria {
    double distance = 1.5;
    double central_fraction = 0.4;
};

/// Distance to the nearest target box, central-window projection of its center
/// and an unobstructed ray. Throws UnknownTarget.
bool check_success(const World &world, const AgentState &state, std::string_view target,
                   const SensorConfig &sensor = {}, const SuccessCriteria &criteria = {});

/// Grids covering the building with a 0.5 m margin.
GridSpec2D world_grid_spec(const World &world, double cell = 0.25);
VoxelGridSpec world_voxel_spec(const World &world, double cell = 0.25, int nz = 4);

/// Occupied where any solid overlapping the height band intersects the cell,
/// Free elsewhere inside the building, Occupied outside it.
OccupancyGrid ground_truth_grid(const World &world, const GridSpec2D &spec, double z_lo = 0.1, double z_hi = 1.8);
/// Free where the agent disc centered in the cell is collision-free.
OccupancyGrid traversable_grid(const World &world, const GridSpec2D &spec);
/// Ground layer floor inside the building, solids above it; semantics = class id.
VoxelBelief ground_truth_voxels(const World &world, const VoxelGridSpec &spec);

/// Random collision-free start with heading a multiple of 30 degrees.
AgentState sample_start(const World &world, Rng &rng);

void export_world(const std::filesystem::path &path, const World &world);
World import_world(const std::filesystem::path &path);
std::string world_to_text(const World &world);
World world_from_text(const std::string &text);

} // namespace belief
