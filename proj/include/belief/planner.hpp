#pragma once

#include "belief/denoiser.hpp"
#include "belief/diffusion.hpp"
#include "belief/hypothesis_sampler.hpp"
#include "belief/occupancy_grid.hpp"
#include "belief/scene_belief.hpp"
#include "belief/semantic_field.hpp"
#include "belief/world_sim.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace belief {

struct HeightBand {
    double z_lo = 0.1;
    double z_hi = 1.8;
};

/// Free-space cells in the navigation plane from ray segments: samples of each
/// ray whose height lies inside the band, stopping 0.15 m short of the hit.
void carve_rays_2d(const GridSpec2D &spec, std::span<const RaySegment> rays, const HeightBand &band,
                   std::vector<std::uint8_t> &carved);

/// Occupied where a primitive with mean in the band and opacity >= 0.3 falls;
/// otherwise Free where carved or covered by a floor primitive (cosine >= 0.9 with
/// floor_embedding); Unknown elsewhere.
OccupancyGrid belief_occupancy(const SceneBelief &belief, const GridSpec2D &spec, const HeightBand &band = {},
                               const VecX *floor_embedding = nullptr,
                               const std::vector<std::uint8_t> *carved = nullptr);

/// Free cell with at least one 4-neighbor Unknown.
bool is_frontier(const OccupancyGrid &grid, Cell c);

/// Goal cell alone when localized, otherwise up to K_w frontier cells within
/// `radius` metres (all frontiers when none is that close), spread by farthest-
/// point sampling. Throws NoFrontier.
std::vector<Cell> sample_waypoints(const OccupancyGrid &grid, Cell agent, std::optional<Cell> localized_goal, int K_w,
                                   double radius);

struct GridPath {
    std::vector<Cell> cells;
    double cost = 0.0;
};

/// 4-connected A*: Free costs 1, Unknown costs unknown_cost_multiplier,
/// Occupied is impassable.
std::optional<GridPath> astar(const OccupancyGrid &grid, Cell start, Cell goal, double unknown_cost_multiplier = 2.0);

/// Poses at path indices stride, 2 stride, ... plus the final index, each facing
/// along the path tangent at the camera template's height and pitch. A single-cell
/// path uses default_yaw.
std::vector<CameraPose> path_poses(const GridSpec2D &spec, std::span<const Cell> path, int stride,
                                   const SensorConfig &camera_template, double default_yaw = 0.0);

/// Renders every path pose in every hypothesis.
std::vector<std::vector<Observation>> mental_simulate(std::span<const SceneBelief> hypotheses, const GridSpec2D &spec,
                                                      std::span<const Cell> path, const SensorConfig &camera_template,
                                                      int stride);

struct ScoreWeights {
    double w_sem = 1.0;
    double w_info = 0.3;
    double info_radius = 1.0;
};

/// Unknown cells within info_radius of any path cell, divided by the path length in cells.
double information_gain(const OccupancyGrid &grid, std::span<const Cell> path, double radius = 1.0);

/// w_sem * mean over hypotheses of the best query response in any frame plus
/// w_info * information_gain.
double score_path(const std::vector<std::vector<Observation>> &rollout, const VecX &query, const OccupancyGrid &grid,
                  std::span<const Cell> path, const ScoreWeights &weights = {},
                  std::vector<double> *per_hypothesis = nullptr);

struct PlanRollout {
    Vec2 waypoint = Vec2::Zero();
    std::vector<Cell> path;
    std::vector<std::vector<Observation>> imagined;
    double score = 0.0;
    std::vector<double> per_hypothesis;
};

struct PlannerConfig {
    int K = 3;
    int T_exec = 4;
    ScoreWeights weights;
    double unknown_cost = 2.0;
    int waypoints = 4;
    double waypoint_radius = 4.0;
    int sim_stride = 4;
    HeightBand band;
    int inflation = 1;
    double cell = 0.25;
    int voxel_layers = 4;
    double min_score = 0.6;
    int incorporate_stride = 2;
    int ray_stride = 4;
    bool single_hypothesis = false;
    bool no_geometry = false;
    SensorConfig sensor;
    SensorConfig sim_sensor{32, 24, 16.0, 16.0, 1.0, -0.2617993877991494};
};

struct PlannerComponents {
    const DenoiserParams *denoiser = nullptr;
    NoiseSchedule schedule = NoiseSchedule::standard();
    EmbeddingProvider provider = EmbeddingProvider::synthetic();
};

struct TraceRecord {
    int step = 0;
    Action action = Action::Done;
    AgentState pose;
    bool collided = false;
};

struct EpisodeResult {
    bool success = false;
    int steps_taken = 0;
    double path_length = 0.0;
    double shortest_path_length = 0.0;
    int oracle_steps = 0;
    int collisions = 0;
    int replans = 0;
    std::string termination;
    std::vector<TraceRecord> trace;
};

/// Geodesic from the start to the nearest cell where success is achievable,
/// on the agent-traversable grid (16-connected). nullopt if unreachable.
struct ShortestPath {
    double length = 0.0;
    int oracle_steps = 0;
};
std::optional<ShortestPath> shortest_path(const World &world, const AgentState &start, std::string_view target,
                                          const SensorConfig &sensor = {});

EpisodeResult navigate(const World &world, const AgentState &start, const PlannerComponents &components,
                       std::string_view target, int budget_steps, const PlannerConfig &config, std::uint64_t seed);

double sr(std::span<const EpisodeResult> results);
double spl(std::span<const EpisodeResult> results);
/// Episode lengths are capped at `budget` steps.
double sel(std::span<const EpisodeResult> results, int budget);

/// One JSON object per line: {"step", "action", "pose": [x, y, heading], "collided"}.
void write_trace(std::ostream &out, const EpisodeResult &result);

} // namespace belief
