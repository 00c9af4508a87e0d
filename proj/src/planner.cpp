#include "belief/planner.hpp"

#include "belief/parallel.hpp"
#include "belief/splat_renderer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <queue>

namespace belief {

namespace {

constexpr double kCarveMargin = 0.15;
constexpr double kFaceTolerance = 0.2617993877991494; // 15 degrees
constexpr double kBlacklistRadius = 1.0;
constexpr double kReach = 1.2;

double angle_diff(double a, double b) { return std::remainder(a - b, 2.0 * std::numbers::pi); }

double cell_cost(CellState s, double unknown) { return s == CellState::Unknown ? unknown : 1.0; }

// Rotations that bring `heading` within 15 degrees of `yaw`, shortest direction first.
void append_facing(double &heading, double yaw, std::vector<Action> &actions, std::size_t limit) {
    while (actions.size() < limit && std::abs(angle_diff(yaw, heading)) > kFaceTolerance + 1e-9) {
        const bool left = angle_diff(yaw, heading) > 0.0;
        actions.push_back(left ? Action::RotateLeft : Action::RotateRight);
        heading = std::remainder(heading + (left ? kTurnStep : -kTurnStep), 2.0 * std::numbers::pi);
    }
}

int rotations_between(double from, double to) {
    return static_cast<int>(std::lround(std::abs(angle_diff(to, from)) / kTurnStep));
}

bool near_any(const std::vector<Vec2> &points, const Vec2 &p, double radius) {
    return std::any_of(points.begin(), points.end(), [&](const Vec2 &q) { return (q - p).norm() <= radius; });
}

// Uniform-cost distances from `start` with the A* cell costs.
std::vector<double> cost_field(const OccupancyGrid &grid, Cell start, double unknown_cost) {
    const auto &spec = grid.spec;
    std::vector<double> dist(spec.cells(), std::numeric_limits<double>::infinity());
    if (!spec.contains(start) || grid.at(start) == CellState::Occupied) {
        return dist;
    }
    using Entry = std::pair<double, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    dist[spec.index(start)] = 0.0;
    open.emplace(0.0, spec.index(start));
    while (!open.empty()) {
        const auto [d, idx] = open.top();
        open.pop();
        if (d > dist[idx]) {
            continue;
        }
        const Cell c{static_cast<int>(idx % spec.nx), static_cast<int>(idx / spec.nx)};
        for (const Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}}) {
            if (!spec.contains(n) || grid.at(n) == CellState::Occupied) {
                continue;
            }
            const std::size_t ni = spec.index(n);
            const double nd = d + cell_cost(grid.at(n), unknown_cost);
            if (nd < dist[ni]) {
                dist[ni] = nd;
                open.emplace(nd, ni);
            }
        }
    }
    return dist;
}

struct Plan {
    std::vector<Action> actions;
    bool terminate = false;
};

} // namespace

void carve_rays_2d(const GridSpec2D &spec, std::span<const RaySegment> rays, const HeightBand &band,
                   std::vector<std::uint8_t> &carved) {
    carved.resize(spec.cells(), 0);
    const double stepLen = spec.cell / 4.0;
    for (const auto &ray : rays) {
        const Vec3 d = ray.to - ray.from;
        const double len = d.norm() - kCarveMargin;
        if (len <= 0.0) {
            continue;
        }
        const Vec3 dir = d.normalized();
        for (double t = 0.0; t <= len; t += stepLen) {
            const Vec3 p = ray.from + t * dir;
            if (p.z() < band.z_lo || p.z() > band.z_hi) {
                continue;
            }
            if (auto c = spec.locate(p.head<2>())) {
                carved[spec.index(*c)] = 1;
            }
        }
    }
}

OccupancyGrid belief_occupancy(const SceneBelief &belief, const GridSpec2D &spec, const HeightBand &band,
                               const VecX *floor_embedding, const std::vector<std::uint8_t> *carved) {
    if (!(band.z_hi > band.z_lo)) {
        throw Error(ErrorCode::InvalidArgument, "height band must have z_hi > z_lo");
    }
    OccupancyGrid grid(spec, CellState::Unknown);
    if (carved && carved->size() == spec.cells()) {
        for (std::size_t i = 0; i < carved->size(); ++i) {
            if ((*carved)[i]) {
                grid.state[i] = CellState::Free;
            }
        }
    }
    if (floor_embedding) {
        for (const auto &g : belief.primitives) {
            if (g.embedding.size() != floor_embedding->size() || g.embedding.dot(*floor_embedding) < 0.9) {
                continue;
            }
            if (auto c = spec.locate(g.mean.head<2>()); c && grid.at(*c) == CellState::Unknown) {
                grid.at(*c) = CellState::Free;
            }
        }
    }
    for (const auto &g : belief.primitives) {
        if (g.opacity < 0.3 || g.mean.z() < band.z_lo || g.mean.z() > band.z_hi) {
            continue;
        }
        if (auto c = spec.locate(g.mean.head<2>())) {
            grid.at(*c) = CellState::Occupied;
        }
    }
    return grid;
}

bool is_frontier(const OccupancyGrid &grid, Cell c) {
    if (!grid.spec.contains(c) || grid.at(c) != CellState::Free) {
        return false;
    }
    for (const Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}}) {
        if (grid.spec.contains(n) && grid.at(n) == CellState::Unknown) {
            return true;
        }
    }
    return false;
}

std::vector<Cell> sample_waypoints(const OccupancyGrid &grid, Cell agent, std::optional<Cell> localized_goal, int K_w,
                                   double radius) {
    if (K_w < 1) {
        throw Error(ErrorCode::InvalidArgument, "K_w must be at least 1");
    }
    if (localized_goal) {
        return {*localized_goal};
    }
    const auto &spec = grid.spec;
    const Vec2 a = spec.center(agent);
    std::vector<Cell> frontier, near;
    for (int y = 0; y < spec.ny; ++y) {
        for (int x = 0; x < spec.nx; ++x) {
            if (is_frontier(grid, {x, y})) {
                frontier.push_back({x, y});
                if ((spec.center({x, y}) - a).norm() <= radius + 1e-9) {
                    near.push_back({x, y});
                }
            }
        }
    }
    if (frontier.empty()) {
        throw Error(ErrorCode::NoFrontier, "exploration exhausted");
    }
    const auto &pool = near.empty() ? frontier : near;
    std::vector<Cell> out;
    std::vector<double> minDist(pool.size(), std::numeric_limits<double>::infinity());
    std::size_t first = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
        if ((spec.center(pool[i]) - a).norm() < (spec.center(pool[first]) - a).norm()) {
            first = i;
        }
    }
    std::size_t pick = first;
    while (static_cast<int>(out.size()) < K_w) {
        out.push_back(pool[pick]);
        const Vec2 p = spec.center(pool[pick]);
        double best = 0.0;
        bool found = false;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            minDist[i] = std::min(minDist[i], (spec.center(pool[i]) - p).norm());
            if (minDist[i] > best) {
                best = minDist[i];
                pick = i;
                found = true;
            }
        }
        if (!found) {
            break;
        }
    }
    return out;
}

std::optional<GridPath> astar(const OccupancyGrid &grid, Cell start, Cell goal, double unknown_cost_multiplier) {
    const auto &spec = grid.spec;
    if (!spec.contains(start) || !spec.contains(goal) || grid.at(start) == CellState::Occupied ||
        grid.at(goal) == CellState::Occupied) {
        return std::nullopt;
    }
    const double minCost = std::min(1.0, unknown_cost_multiplier);
    const auto h = [&](Cell c) { return minCost * (std::abs(c.x - goal.x) + std::abs(c.y - goal.y)); };
    std::vector<double> g(spec.cells(), std::numeric_limits<double>::infinity());
    std::vector<std::int64_t> parent(spec.cells(), -1);
    std::vector<std::uint8_t> closed(spec.cells(), 0);
    using Entry = std::tuple<double, double, std::size_t>; // f, -g, index
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    const std::size_t s = spec.index(start);
    g[s] = 0.0;
    open.emplace(h(start), 0.0, s);
    const std::size_t target = spec.index(goal);
    while (!open.empty()) {
        const auto [f, negG, idx] = open.top();
        open.pop();
        if (closed[idx]) {
            continue;
        }
        closed[idx] = 1;
        if (idx == target) {
            break;
        }
        const Cell c{static_cast<int>(idx % spec.nx), static_cast<int>(idx / spec.nx)};
        for (const Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}}) {
            if (!spec.contains(n) || grid.at(n) == CellState::Occupied) {
                continue;
            }
            const std::size_t ni = spec.index(n);
            const double ng = g[idx] + cell_cost(grid.at(n), unknown_cost_multiplier);
            if (ng < g[ni]) {
                g[ni] = ng;
                parent[ni] = static_cast<std::int64_t>(idx);
                open.emplace(ng + h(n), -ng, ni);
            }
        }
    }
    if (!closed[target]) {
        return std::nullopt;
    }
    GridPath path;
    path.cost = g[target];
    for (std::int64_t i = static_cast<std::int64_t>(target); i >= 0; i = parent[static_cast<std::size_t>(i)]) {
        path.cells.push_back({static_cast<int>(i % spec.nx), static_cast<int>(i / spec.nx)});
    }
    std::reverse(path.cells.begin(), path.cells.end());
    return path;
}

std::vector<CameraPose> path_poses(const GridSpec2D &spec, std::span<const Cell> path, int stride,
                                   const SensorConfig &camera_template, double default_yaw) {
    if (path.empty()) {
        throw Error(ErrorCode::InvalidArgument, "path must be non-empty");
    }
    stride = std::max(1, stride);
    const std::size_t n = path.size();
    std::vector<std::size_t> indices;
    if (n == 1) {
        indices.push_back(0);
    } else {
        for (std::size_t i = static_cast<std::size_t>(stride); i < n - 1; i += static_cast<std::size_t>(stride)) {
            indices.push_back(i);
        }
        indices.push_back(n - 1);
    }
    std::vector<CameraPose> poses;
    for (std::size_t i : indices) {
        double yaw = default_yaw;
        if (n > 1) {
            const std::size_t a = i == 0 ? 0 : i - 1;
            const std::size_t b = std::min(n - 1, i + 1);
            const Vec2 d = spec.center(path[b]) - spec.center(path[a]);
            yaw = std::atan2(d.y(), d.x());
        }
        const Vec2 c = spec.center(path[i]);
        poses.push_back(look_camera(Vec3(c.x(), c.y(), camera_template.camera_height), yaw, camera_template.pitch,
                                    camera_template));
    }
    return poses;
}

std::vector<std::vector<Observation>> mental_simulate(std::span<const SceneBelief> hypotheses, const GridSpec2D &spec,
                                                      std::span<const Cell> path, const SensorConfig &camera_template,
                                                      int stride) {
    const auto poses = path_poses(spec, path, stride, camera_template);
    std::vector<std::vector<Observation>> out(hypotheses.size(), std::vector<Observation>(poses.size()));
    parallel_for(hypotheses.size() * poses.size(), [&](std::size_t job) {
        const std::size_t k = job / poses.size();
        const std::size_t j = job % poses.size();
        out[k][j] = render(hypotheses[k], poses[j]);
    });
    return out;
}

double information_gain(const OccupancyGrid &grid, std::span<const Cell> path, double radius) {
    if (path.empty()) {
        return 0.0;
    }
    const auto &spec = grid.spec;
    const int r = static_cast<int>(std::ceil(radius / spec.cell));
    std::vector<std::uint8_t> counted(spec.cells(), 0);
    std::size_t unknown = 0;
    for (const Cell c : path) {
        const Vec2 pc = spec.center(c);
        for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
                const Cell n{c.x + dx, c.y + dy};
                if (!spec.contains(n) || counted[spec.index(n)] || grid.at(n) != CellState::Unknown) {
                    continue;
                }
                if ((spec.center(n) - pc).norm() <= radius + 1e-9) {
                    counted[spec.index(n)] = 1;
                    ++unknown;
                }
            }
        }
    }
    return static_cast<double>(unknown) / static_cast<double>(path.size());
}

double score_path(const std::vector<std::vector<Observation>> &rollout, const VecX &query, const OccupancyGrid &grid,
                  std::span<const Cell> path, const ScoreWeights &weights, std::vector<double> *per_hypothesis) {
    double sem = 0.0;
    std::vector<double> per;
    for (const auto &frames : rollout) {
        double best = -1.0;
        for (const auto &obs : frames) {
            const ImageD heat = query_heatmap(obs.semantic, query);
            for (double v : heat.data()) {
                best = std::max(best, v);
            }
        }
        per.push_back(best);
        sem += best;
    }
    if (!rollout.empty()) {
        sem /= static_cast<double>(rollout.size());
    }
    if (per_hypothesis) {
        *per_hypothesis = per;
    }
    return weights.w_sem * sem + weights.w_info * information_gain(grid, path, weights.info_radius);
}

std::optional<ShortestPath> shortest_path(const World &world, const AgentState &start, std::string_view target,
                                          const SensorConfig &sensor) {
    const auto ids = world.instances(target);
    if (ids.empty()) {
        throw Error(ErrorCode::UnknownTarget, "no instance of '" + std::string(target) + "' in the world");
    }
    const auto spec = world_grid_spec(world);
    const auto grid = traversable_grid(world, spec);
    const auto startCell = spec.locate(start.position);
    if (!startCell) {
        return std::nullopt;
    }
    // Success-capable cells: within reach of an instance with a clear line of sight.
    std::vector<int> goalOf(spec.cells(), -1);
    for (int y = 0; y < spec.ny; ++y) {
        for (int x = 0; x < spec.nx; ++x) {
            const Cell c{x, y};
            if (grid.at(c) != CellState::Free && !(c == *startCell)) {
                continue;
            }
            const Vec2 p = spec.center(c);
            for (int id : ids) {
                const Box &box = world.furniture[static_cast<std::size_t>(id)].box;
                const double dx = std::max({box.lo.x() - p.x(), 0.0, p.x() - box.hi.x()});
                const double dy = std::max({box.lo.y() - p.y(), 0.0, p.y() - box.hi.y()});
                if (std::hypot(dx, dy) > 1.5) {
                    continue;
                }
                const Vec3 eye(p.x(), p.y(), sensor.camera_height);
                const Vec3 delta = box.center() - eye;
                const auto hit = raycast(world, eye, delta.normalized(), delta.norm() + 1.0);
                if (hit && hit->solid >= 0 && world.solids[static_cast<std::size_t>(hit->solid)].object == id) {
                    goalOf[spec.index(c)] = id;
                    break;
                }
            }
        }
    }
    // Dijkstra over 16-connected moves whose swept cells are free.
    struct Move {
        int dx, dy;
        double cost;
    };
    std::vector<Move> moves;
    for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
            if ((dx == 0 && dy == 0) || (std::abs(dx) == 2 && std::abs(dy) != 1) || (std::abs(dy) == 2 && std::abs(dx) != 1)) {
                continue;
            }
            moves.push_back({dx, dy, std::hypot(dx, dy)});
        }
    }
    const auto passable = [&](Cell from, const Move &m) {
        const Cell to{from.x + m.dx, from.y + m.dy};
        if (!spec.contains(to) || grid.at(to) != CellState::Free) {
            return false;
        }
        // Cells the straight segment passes through.
        for (int s = 1; s < 8; ++s) {
            const double t = s / 8.0;
            const Cell mid{static_cast<int>(std::floor(from.x + 0.5 + t * m.dx)),
                           static_cast<int>(std::floor(from.y + 0.5 + t * m.dy))};
            if (!spec.contains(mid) || grid.at(mid) != CellState::Free) {
                return false;
            }
        }
        return true;
    };
    std::vector<double> dist(spec.cells(), std::numeric_limits<double>::infinity());
    std::vector<std::int64_t> parent(spec.cells(), -1);
    using Entry = std::pair<double, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    dist[spec.index(*startCell)] = 0.0;
    open.emplace(0.0, spec.index(*startCell));
    std::int64_t reached = -1;
    while (!open.empty()) {
        const auto [d, idx] = open.top();
        open.pop();
        if (d > dist[idx]) {
            continue;
        }
        if (goalOf[idx] >= 0) {
            reached = static_cast<std::int64_t>(idx);
            break;
        }
        const Cell c{static_cast<int>(idx % spec.nx), static_cast<int>(idx / spec.nx)};
        for (const auto &m : moves) {
            if (!passable(c, m)) {
                continue;
            }
            const std::size_t ni = spec.index({c.x + m.dx, c.y + m.dy});
            if (d + m.cost < dist[ni]) {
                dist[ni] = d + m.cost;
                parent[ni] = static_cast<std::int64_t>(idx);
                open.emplace(dist[ni], ni);
            }
        }
    }
    if (reached < 0) {
        return std::nullopt;
    }
    std::vector<Cell> cells;
    for (std::int64_t i = reached; i >= 0; i = parent[static_cast<std::size_t>(i)]) {
        cells.push_back({static_cast<int>(i % spec.nx), static_cast<int>(i / spec.nx)});
    }
    std::reverse(cells.begin(), cells.end());
    ShortestPath out;
    out.length = dist[static_cast<std::size_t>(reached)] * spec.cell;
    int forwards = static_cast<int>(std::ceil(out.length / kForwardStep - 1e-9));
    int rotations = 0;
    double heading = start.heading;
    for (std::size_t i = 1; i < cells.size(); ++i) {
        const double yaw = std::atan2(cells[i].y - cells[i - 1].y, cells[i].x - cells[i - 1].x);
        rotations += rotations_between(heading, yaw);
        heading = yaw;
    }
    const Vec2 end = spec.center(cells.back());
    const Vec3 goal = world.furniture[static_cast<std::size_t>(goalOf[static_cast<std::size_t>(reached)])].box.center();
    rotations += rotations_between(heading, std::atan2(goal.y() - end.y(), goal.x() - end.x()));
    out.oracle_steps = forwards + rotations;
    return out;
}

EpisodeResult navigate(const World &world, const AgentState &start, const PlannerComponents &components,
                       std::string_view target, int budget_steps, const PlannerConfig &config, std::uint64_t seed) {
    EpisodeResult result;
    if (world.instances(target).empty()) {
        throw Error(ErrorCode::UnknownTarget, "no instance of '" + std::string(target) + "' in the world");
    }
    if (auto sp = shortest_path(world, start, target, config.sensor)) {
        result.shortest_path_length = sp->length;
        result.oracle_steps = sp->oracle_steps;
    }
    const bool sampling = !config.no_geometry;
    const int K = config.single_hypothesis ? 1 : std::max(1, config.K);
    if (sampling && (!components.denoiser || !components.denoiser->trained())) {
        throw Error(ErrorCode::UntrainedDenoiser, "navigation with hypotheses needs a trained denoiser");
    }
    const auto &provider = components.provider;
    const GridSpec2D gspec = world_grid_spec(world, config.cell);
    const VoxelGridSpec vspec = world_voxel_spec(world, config.cell, config.voxel_layers);
    const VecX query = provider.embed(target);
    const VecX floorEmbedding = provider.embed("floor");

    SceneBelief belief;
    std::vector<std::uint8_t> carved3d(vspec.cells(), 0), carved2d(gspec.cells(), 0);
    AgentState state = start;
    std::vector<Vec2> goalBlacklist, frontierBlacklist;

    const auto sense = [&] {
        const auto reading = observe(world, agent_camera(state, config.sensor), provider, config.ray_stride);
        belief = incorporate_observation(belief, reading.observation, {config.incorporate_stride, 0.10});
        if (sampling) {
            carve_rays(vspec, reading.rays, carved3d);
        }
        carve_rays_2d(gspec, reading.rays, config.band, carved2d);
    };
    const auto finish = [&] {
        result.success = true;
        result.termination = "success";
        result.trace.push_back({result.steps_taken, Action::Done, state, false});
    };

    if (budget_steps <= 0) {
        result.termination = "budget";
        return result;
    }
    sense();
    if (check_success(world, state, target, config.sensor)) {
        finish();
        return result;
    }

    int idleRotations = 0;
    // Cells the agent collided with on a forward step.
    std::vector<std::uint8_t> bumped(gspec.cells(), 0);
    const auto make_plan = [&](int replan) -> Plan {
        Plan plan;
        OccupancyGrid observed = belief_occupancy(belief, gspec, config.band, &floorEmbedding, &carved2d);
        for (std::size_t i = 0; i < bumped.size(); ++i) {
            if (bumped[i]) {
                observed.state[i] = CellState::Occupied;
            }
        }
        const Cell agent = gspec.locate(state.position).value_or(Cell{0, 0});
        OccupancyGrid planning = observed;
        std::vector<SceneBelief> hypotheses;
        if (sampling) {
            const VoxelBelief cond = rasterize_observed(belief.primitives, vspec, carved3d, &provider);
            const auto samples = sample_hypotheses(cond, K, *components.denoiser, components.schedule,
                                                   derive_seed(seed, 0x5a3 + static_cast<std::uint64_t>(replan)));
            std::vector<OccupancyGrid> grids;
            for (int k = 0; k < K; ++k) {
                SceneBelief hb = replace_imagination(belief, lift_to_gaussians(samples[static_cast<std::size_t>(k)], provider));
                hb.hypothesis_id = static_cast<std::uint32_t>(k);
                grids.push_back(belief_occupancy(hb, gspec, config.band, &floorEmbedding, &carved2d));
                hypotheses.push_back(std::move(hb));
            }
            for (std::size_t i = 0; i < planning.state.size(); ++i) {
                if (observed.state[i] != CellState::Unknown) {
                    continue;
                }
                int occ = 0, free = 0;
                for (const auto &g : grids) {
                    occ += g.state[i] == CellState::Occupied;
                    free += g.state[i] == CellState::Free;
                }
                if (2 * occ > K) {
                    planning.state[i] = CellState::Occupied;
                } else if (2 * free > K) {
                    planning.state[i] = CellState::Free;
                }
            }
        }
        OccupancyGrid inflated = inflate(planning, config.inflation);
        OccupancyGrid observedInflated = inflate(observed, config.inflation);
        // The agent's own neighborhood keeps its uninflated state so it can leave.
        for (int dy = -config.inflation; dy <= config.inflation; ++dy) {
            for (int dx = -config.inflation; dx <= config.inflation; ++dx) {
                const Cell n{agent.x + dx, agent.y + dy};
                if (gspec.contains(n)) {
                    inflated.at(n) = planning.at(n);
                    observedInflated.at(n) = observed.at(n);
                }
            }
        }
        inflated.at(agent) = CellState::Free;
        observedInflated.at(agent) = CellState::Free;

        // Goal: observed evidence first, then hypothesis consensus.
        std::optional<Vec3> goal;
        const SceneBelief *goalSource = nullptr;
        // Localization that ignores primitives near abandoned goals.
        const auto localize_open = [&](const SceneBelief &b) -> std::optional<Localization> {
            auto loc = localize(b, query, config.min_score);
            if (!loc || !near_any(goalBlacklist, loc->position.head<2>(), kBlacklistRadius)) {
                return loc;
            }
            SceneBelief open;
            for (const auto &g : b.primitives) {
                if (!near_any(goalBlacklist, g.mean.head<2>(), kBlacklistRadius)) {
                    open.primitives.push_back(g);
                }
            }
            return localize(open, query, config.min_score);
        };
        if (auto loc = sampling ? localize_open(belief) : std::nullopt) {
            goal = loc->position;
            goalSource = &belief;
        } else if (sampling) {
            std::vector<std::optional<Localization>> locs;
            for (const auto &hb : hypotheses) {
                locs.push_back(localize_open(hb));
            }
            for (std::size_t k = 0; k < locs.size() && !goal; ++k) {
                if (!locs[k]) {
                    continue;
                }
                int agree = 0;
                for (const auto &other : locs) {
                    agree += other && (other->position - locs[k]->position).head<2>().norm() <= 1.0;
                }
                if (2 * agree >= K) {
                    goal = locs[k]->position;
                    goalSource = &hypotheses[k];
                }
            }
        }

        std::vector<Cell> waypoints;
        Vec2 facePoint = Vec2::Zero();
        if (goal) {
            // Primitives of the localized object; the goal cell is the cheapest
            // reachable cell within reach of any of them.
            std::vector<Vec2> cluster;
            for (const auto &g : goalSource->primitives) {
                if (g.embedding.size() == query.size() && g.embedding.dot(query) >= 0.9 &&
                    (g.mean - *goal).head<2>().norm() <= 2.0) {
                    cluster.push_back(g.mean.head<2>());
                    facePoint += g.mean.head<2>();
                }
            }
            facePoint /= static_cast<double>(std::max<std::size_t>(1, cluster.size()));
            std::optional<Cell> goalCell;
            for (const OccupancyGrid *g : {&inflated, &observedInflated, &observed}) {
                const auto costs = cost_field(*g, agent, config.unknown_cost);
                double best = std::numeric_limits<double>::infinity();
                for (int y = 0; y < gspec.ny; ++y) {
                    for (int x = 0; x < gspec.nx; ++x) {
                        const double c = costs[gspec.index({x, y})];
                        if (c < best && near_any(cluster, gspec.center({x, y}), kReach)) {
                            best = c;
                            goalCell = Cell{x, y};
                        }
                    }
                }
                if (goalCell) {
                    break;
                }
            }
            if (!goalCell) {
                goalBlacklist.push_back(goal->head<2>());
                plan.actions.push_back(Action::RotateLeft);
                return plan;
            }
            waypoints = sample_waypoints(inflated, agent, goalCell, config.waypoints, config.waypoint_radius);
        } else {
            OccupancyGrid frontierGrid = observed;
            for (std::size_t i = 0; i < frontierGrid.state.size(); ++i) {
                const Cell c{static_cast<int>(i % gspec.nx), static_cast<int>(i / gspec.nx)};
                if (near_any(frontierBlacklist, gspec.center(c), 0.75) ||
                    (gspec.center(c) - state.position).norm() < 0.5) {
                    frontierGrid.state[i] = frontierGrid.state[i] == CellState::Free ? CellState::Occupied
                                                                                     : frontierGrid.state[i];
                }
            }
            try {
                waypoints = sample_waypoints(frontierGrid, agent, std::nullopt, config.waypoints, config.waypoint_radius);
            } catch (const Error &e) {
                if (e.code() != ErrorCode::NoFrontier) {
                    throw;
                }
                if (idleRotations < 12) {
                    plan.actions.push_back(Action::RotateLeft);
                    return plan;
                }
                plan.terminate = true;
                return plan;
            }
        }

        // Waypoints inside the inflation margin move to the nearest cell outside it.
        for (Cell &wp : waypoints) {
            if (inflated.at(wp) != CellState::Occupied) {
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            const Cell from = wp;
            for (int dy = -2; dy <= 2; ++dy) {
                for (int dx = -2; dx <= 2; ++dx) {
                    const Cell n{from.x + dx, from.y + dy};
                    const double d = std::hypot(dx, dy);
                    if (gspec.contains(n) && inflated.at(n) != CellState::Occupied && d < best) {
                        best = d;
                        wp = n;
                    }
                }
            }
        }

        std::vector<std::optional<PlanRollout>> rollouts(waypoints.size());
        parallel_for(waypoints.size(), [&](std::size_t w) {
            auto path = astar(inflated, agent, waypoints[w], config.unknown_cost);
            if (!path) {
                path = astar(observedInflated, agent, waypoints[w], config.unknown_cost);
            }
            if (!path) {
                path = astar(observed, agent, waypoints[w], config.unknown_cost);
            }
            if (!path) {
                return;
            }
            PlanRollout r;
            r.waypoint = gspec.center(waypoints[w]);
            r.path = path->cells;
            if (sampling) {
                r.imagined = mental_simulate(hypotheses, gspec, r.path, config.sim_sensor, config.sim_stride);
                r.score = score_path(r.imagined, query, observed, r.path, config.weights, &r.per_hypothesis);
                r.imagined.clear();
            } else {
                r.score = config.weights.w_info * information_gain(observed, r.path, config.weights.info_radius);
            }
            rollouts[w] = std::move(r);
        });
        const PlanRollout *best = nullptr;
        for (const auto &r : rollouts) {
            if (r && (!best || r->score > best->score)) {
                best = &*r;
            }
        }
        if (!best) {
            if (goal) {
                goalBlacklist.push_back(goal->head<2>());
            } else {
                for (const Cell c : waypoints) {
                    frontierBlacklist.push_back(gspec.center(c));
                }
            }
            plan.actions.push_back(Action::RotateLeft);
            return plan;
        }

        const std::size_t limit = static_cast<std::size_t>(std::max(1, config.T_exec));
        double heading = state.heading;
        for (std::size_t i = 1; i < best->path.size() && plan.actions.size() < limit; ++i) {
            const Cell a = best->path[i - 1];
            const Cell b = best->path[i];
            append_facing(heading, std::atan2(b.y - a.y, b.x - a.x), plan.actions, limit);
            if (plan.actions.size() < limit) {
                plan.actions.push_back(Action::Forward);
            }
        }
        const bool arrives = best->path.size() <= 1 ||
                             std::count(plan.actions.begin(), plan.actions.end(), Action::Forward) ==
                                 static_cast<long>(best->path.size() - 1);
        if (goal && arrives) {
            const Vec2 end = gspec.center(best->path.back());
            append_facing(heading, std::atan2(facePoint.y() - end.y(), facePoint.x() - end.x()), plan.actions, limit);
        }
        if (plan.actions.empty()) {
            // Already at the waypoint and facing it: nothing left to learn there.
            if (goal) {
                goalBlacklist.push_back(goal->head<2>());
            } else {
                frontierBlacklist.push_back(best->waypoint);
            }
            plan.actions.push_back(Action::RotateLeft);
        } else if (!goal && best->path.size() <= 1) {
            frontierBlacklist.push_back(best->waypoint);
        }
        return plan;
    };

    while (result.steps_taken < budget_steps) {
        const Plan plan = make_plan(result.replans++);
        if (plan.terminate) {
            result.termination = "no_frontier";
            return result;
        }
        for (const Action a : plan.actions) {
            if (result.steps_taken >= budget_steps) {
                break;
            }
            const StepResult sr = step(world, state, a);
            result.path_length += (sr.state.position - state.position).norm();
            result.collisions += sr.collided ? 1 : 0;
            if (sr.collided) {
                const Vec2 ahead = state.position + kForwardStep * Vec2(std::cos(state.heading), std::sin(state.heading));
                const auto here = gspec.locate(state.position);
                if (auto c = gspec.locate(ahead); c && !(here && *c == *here)) {
                    bumped[gspec.index(*c)] = 1;
                }
            }
            idleRotations = (sr.state.position - state.position).norm() > 0.0 ? 0 : idleRotations + (a != Action::Forward);
            state = sr.state;
            ++result.steps_taken;
            result.trace.push_back({result.steps_taken, a, state, sr.collided});
            sense();
            if (check_success(world, state, target, config.sensor)) {
                finish();
                return result;
            }
            if (sr.collided) {
                break;
            }
        }
    }
    result.termination = "budget";
    return result;
}

double sr(std::span<const EpisodeResult> results) {
    if (results.empty()) {
        throw Error(ErrorCode::EmptyResultSet, "no episodes");
    }
    double s = 0.0;
    for (const auto &r : results) {
        s += r.success ? 1.0 : 0.0;
    }
    return s / static_cast<double>(results.size());
}

double spl(std::span<const EpisodeResult> results) {
    if (results.empty()) {
        throw Error(ErrorCode::EmptyResultSet, "no episodes");
    }
    double s = 0.0;
    for (const auto &r : results) {
        if (!r.success) {
            continue;
        }
        const double denom = std::max(r.path_length, r.shortest_path_length);
        s += denom > 0.0 ? r.shortest_path_length / denom : 1.0;
    }
    return s / static_cast<double>(results.size());
}

double sel(std::span<const EpisodeResult> results, int budget) {
    if (results.empty()) {
        throw Error(ErrorCode::EmptyResultSet, "no episodes");
    }
    double s = 0.0;
    for (const auto &r : results) {
        if (!r.success) {
            continue;
        }
        const double e = std::min(r.steps_taken, budget);
        const double denom = std::max<double>(e, r.oracle_steps);
        s += denom > 0.0 ? r.oracle_steps / denom : 1.0;
    }
    return s / static_cast<double>(results.size());
}

void write_trace(std::ostream &out, const EpisodeResult &result) {
    for (const auto &t : result.trace) {
        nlohmann::ordered_json j;
        j["step"] = t.step;
        j["action"] = to_string(t.action);
        j["pose"] = {t.pose.position.x(), t.pose.position.y(), t.pose.heading};
        j["collided"] = t.collided;
        out << j.dump() << '\n';
    }
}

} // namespace belief
