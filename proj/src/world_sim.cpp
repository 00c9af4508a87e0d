#include "belief/world_sim.hpp"

#include "belief/parallel.hpp"
#include "belief/vocabulary.hpp"

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace belief {

namespace {

constexpr double kGrid = 0.25;
constexpr double kMinRoomSide = 2.5;
constexpr double kEps = 1e-9;
constexpr int kGenerationAttempts = 64;

double quantize(double v) { return std::floor(v / kGrid + kEps) * kGrid; }

struct FurnitureShape {
    std::string_view cls;
    double width;  // along the wall
    double depth;
    double height;
    double z0;
};

constexpr FurnitureShape kShapes[] = {
    {"table", 1.2, 0.8, 0.75, 0.0},  {"chair", 0.5, 0.5, 0.45, 0.0},       {"sofa", 2.0, 0.9, 0.85, 0.0},
    {"bed", 2.0, 1.5, 0.55, 0.0},    {"shelf", 1.0, 0.4, 1.8, 0.0},        {"plant", 0.35, 0.35, 1.2, 0.0},
    {"television", 1.2, 0.15, 0.6, 0.5}, {"toilet", 0.45, 0.7, 0.8, 0.0},
};

const FurnitureShape &shape_of(std::string_view cls) {
    for (const auto &s : kShapes) {
        if (s.cls == cls) {
            return s;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "no furniture shape for class " + std::string(cls));
}

double overlap(double a0, double a1, double b0, double b1) { return std::min(a1, b1) - std::max(a0, b0); }

bool boxes_overlap_2d(const Box &a, const Box &b, double margin) {
    return overlap(a.lo.x() - margin, a.hi.x() + margin, b.lo.x(), b.hi.x()) > kEps &&
           overlap(a.lo.y() - margin, a.hi.y() + margin, b.lo.y(), b.hi.y()) > kEps;
}

double footprint_distance(const Box &box, const Vec2 &p) {
    const double dx = std::max({box.lo.x() - p.x(), 0.0, p.x() - box.hi.x()});
    const double dy = std::max({box.lo.y() - p.y(), 0.0, p.y() - box.hi.y()});
    return std::hypot(dx, dy);
}

// Shared wall segment between two rooms, if they touch along a line.
std::optional<Door> shared_segment(const Room &a, const Room &b, int ia, int ib) {
    for (int axis = 0; axis < 2; ++axis) {
        const int other = 1 - axis; // the line is perpendicular to `other`
        for (int flip = 0; flip < 2; ++flip) {
            const Room &p = flip ? b : a;
            const Room &q = flip ? a : b;
            if (std::abs(p.hi[other] - q.lo[other]) < kEps) {
                const double lo = std::max(p.lo[axis], q.lo[axis]);
                const double hi = std::min(p.hi[axis], q.hi[axis]);
                if (hi - lo > kEps) {
                    return Door{axis, p.hi[other], lo, hi, ia, ib};
                }
            }
        }
    }
    return std::nullopt;
}

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

std::optional<World> try_generate(std::uint64_t seed, const WorldConfig &cfg, Rng &rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    World w;
    w.seed = seed;
    w.config = cfg;
    const int R = std::uniform_int_distribution<int>(cfg.rooms_min, cfg.rooms_max)(rng);
    const auto dim = [&](double limit) {
        const double lo = std::max(kMinRoomSide, 0.6 * limit);
        return quantize(lo + unit(rng) * (limit - lo));
    };
    const double W = dim(cfg.size.x());
    const double D = dim(cfg.size.y());
    w.bounds_lo = Vec2::Zero();
    w.bounds_hi = Vec2(W, D);
    w.rooms.push_back({Vec2::Zero(), Vec2(W, D)});
    while (static_cast<int>(w.rooms.size()) < R) {
        int best = -1;
        double bestArea = 0.0;
        for (std::size_t i = 0; i < w.rooms.size(); ++i) {
            const Vec2 s = w.rooms[i].hi - w.rooms[i].lo;
            if (s.maxCoeff() >= 2.0 * kMinRoomSide - kEps && s.prod() > bestArea) {
                bestArea = s.prod();
                best = static_cast<int>(i);
            }
        }
        if (best < 0) {
            return std::nullopt;
        }
        Room room = w.rooms[static_cast<std::size_t>(best)];
        const Vec2 s = room.hi - room.lo;
        const int axis = s.x() >= s.y() ? 0 : 1;
        const double cut = room.lo[axis] + kMinRoomSide + quantize(unit(rng) * (s[axis] - 2.0 * kMinRoomSide));
        Room second = room;
        room.hi[axis] = cut;
        second.lo[axis] = cut;
        w.rooms[static_cast<std::size_t>(best)] = room;
        w.rooms.push_back(second);
    }

    for (std::size_t i = 0; i < w.rooms.size(); ++i) {
        for (std::size_t j = i + 1; j < w.rooms.size(); ++j) {
            auto seg = shared_segment(w.rooms[i], w.rooms[j], static_cast<int>(i), static_cast<int>(j));
            if (!seg) {
                continue;
            }
            const double len = seg->hi - seg->lo;
            if (len < kDoorWidth + 0.5 - kEps) {
                return std::nullopt;
            }
            const double start = seg->lo + kGrid + quantize(unit(rng) * (len - kDoorWidth - 2.0 * kGrid));
            seg->lo = start;
            seg->hi = start + kDoorWidth;
            w.doors.push_back(*seg);
        }
    }

    // Furniture: required targets first, then density-driven extras.
    std::vector<std::vector<std::string_view>> wanted(w.rooms.size());
    if (cfg.require_targets) {
        for (auto t : kTargetClasses) {
            wanted[std::uniform_int_distribution<std::size_t>(0, w.rooms.size() - 1)(rng)].push_back(t);
        }
    }
    std::vector<std::size_t> requiredCount(w.rooms.size());
    for (std::size_t r = 0; r < w.rooms.size(); ++r) {
        requiredCount[r] = wanted[r].size();
        const Vec2 s = w.rooms[r].hi - w.rooms[r].lo;
        const int extra = static_cast<int>(std::floor(cfg.furniture_density * s.prod() / 4.0 + unit(rng)));
        for (int e = 0; e < extra; ++e) {
            wanted[r].push_back(kShapes[std::uniform_int_distribution<std::size_t>(0, std::size(kShapes) - 1)(rng)].cls);
        }
    }
    for (std::size_t r = 0; r < w.rooms.size(); ++r) {
        const Room &room = w.rooms[r];
        const Vec2 lo = room.lo + Vec2::Constant(kWallThickness / 2 + 0.02);
        const Vec2 hi = room.hi - Vec2::Constant(kWallThickness / 2 + 0.02);
        for (std::size_t k = 0; k < wanted[r].size(); ++k) {
            const auto &shape = shape_of(wanted[r][k]);
            bool placed = false;
            for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
                const int side = std::uniform_int_distribution<int>(0, 3)(rng);
                const int along = side < 2 ? 0 : 1; // wall direction
                const int across = 1 - along;
                const double span = hi[along] - lo[along] - shape.width;
                if (span < 0.0 || hi[across] - lo[across] < shape.depth) {
                    continue;
                }
                const double a0 = lo[along] + unit(rng) * span;
                Box box;
                box.lo[along] = a0;
                box.hi[along] = a0 + shape.width;
                if (side % 2 == 0) {
                    box.lo[across] = lo[across];
                    box.hi[across] = lo[across] + shape.depth;
                } else {
                    box.hi[across] = hi[across];
                    box.lo[across] = hi[across] - shape.depth;
                }
                box.lo.z() = shape.z0;
                box.hi.z() = shape.z0 + shape.height;
                bool ok = true;
                for (const auto &f : w.furniture) {
                    if (f.room == static_cast<int>(r) && boxes_overlap_2d(f.box, box, 0.3)) {
                        ok = false;
                        break;
                    }
                }
                for (const auto &d : w.doors) {
                    if (!ok) {
                        break;
                    }
                    Box clear;
                    clear.lo[d.axis] = d.lo - 0.3;
                    clear.hi[d.axis] = d.hi + 0.3;
                    clear.lo[1 - d.axis] = d.line - 1.2;
                    clear.hi[1 - d.axis] = d.line + 1.2;
                    ok = !boxes_overlap_2d(clear, box, 0.0);
                }
                if (!ok) {
                    continue;
                }
                Vec3 color = class_color(class_id(shape.cls));
                for (int c = 0; c < 3; ++c) {
                    color[c] = std::clamp(color[c] + (unit(rng) - 0.5) * 0.08, 0.0, 1.0);
                }
                w.furniture.push_back({box, std::string(shape.cls), color, static_cast<int>(r)});
                placed = true;
            }
            if (!placed && k < requiredCount[r]) {
                return std::nullopt;
            }
        }
    }
    w.finalize();
    if (!check_world(w).empty()) {
        return std::nullopt;
    }
    return w;
}

nlohmann::ordered_json vec_json(const auto &v) {
    auto a = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v[i]);
    }
    return a;
}

template <int N>
Eigen::Matrix<double, N, 1> json_vec(const nlohmann::json &j) {
    if (!j.is_array() || j.size() != N) {
        throw Error(ErrorCode::FormatError, "expected a " + std::to_string(N) + "-vector");
    }
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) {
        v[i] = j[static_cast<std::size_t>(i)].get<double>();
    }
    return v;
}

} // namespace

const char *to_string(Action action) {
    switch (action) {
    case Action::Forward: return "forward";
    case Action::RotateLeft: return "rotate_left";
    case Action::RotateRight: return "rotate_right";
    case Action::Done: return "done";
    }
    return "unknown";
}

void World::finalize() {
    solids.clear();
    // Wall lines keyed by (axis the wall runs along, fixed coordinate).
    std::map<std::pair<int, double>, std::vector<std::pair<double, double>>> lines;
    for (const auto &r : rooms) {
        lines[{0, r.lo.y()}].emplace_back(r.lo.x(), r.hi.x());
        lines[{0, r.hi.y()}].emplace_back(r.lo.x(), r.hi.x());
        lines[{1, r.lo.x()}].emplace_back(r.lo.y(), r.hi.y());
        lines[{1, r.hi.x()}].emplace_back(r.lo.y(), r.hi.y());
    }
    const Vec3 wallColor = class_color(kWallClass);
    const double h = kWallThickness / 2;
    for (auto &[key, intervals] : lines) {
        const auto [axis, c] = key;
        std::sort(intervals.begin(), intervals.end());
        std::vector<std::pair<double, double>> merged;
        for (const auto &iv : intervals) {
            if (!merged.empty() && iv.first <= merged.back().second + kEps) {
                merged.back().second = std::max(merged.back().second, iv.second);
            } else {
                merged.push_back(iv);
            }
        }
        std::vector<std::pair<double, double>> cuts;
        for (const auto &d : doors) {
            if (d.axis == axis && std::abs(d.line - c) < kEps) {
                cuts.emplace_back(d.lo, d.hi);
            }
        }
        std::sort(cuts.begin(), cuts.end());
        for (const auto &[a, b] : merged) {
            std::vector<std::pair<double, double>> pieces{{a, b}};
            for (const auto &[ca, cb] : cuts) {
                std::vector<std::pair<double, double>> next;
                for (const auto &[pa, pb] : pieces) {
                    if (cb <= pa + kEps || ca >= pb - kEps) {
                        next.emplace_back(pa, pb);
                        continue;
                    }
                    if (ca > pa + kEps) {
                        next.emplace_back(pa, ca);
                    }
                    if (cb < pb - kEps) {
                        next.emplace_back(cb, pb);
                    }
                }
                pieces = std::move(next);
            }
            for (const auto &[pa, pb] : pieces) {
                const bool openLo = std::any_of(cuts.begin(), cuts.end(), [&](auto &cut) { return std::abs(cut.second - pa) < kEps; });
                const bool openHi = std::any_of(cuts.begin(), cuts.end(), [&](auto &cut) { return std::abs(cut.first - pb) < kEps; });
                Box box;
                box.lo[axis] = pa - (openLo ? 0.0 : h);
                box.hi[axis] = pb + (openHi ? 0.0 : h);
                box.lo[1 - axis] = c - h;
                box.hi[1 - axis] = c + h;
                box.lo.z() = 0.0;
                box.hi.z() = kWallHeight;
                solids.push_back({box, kWallClass, wallColor, -1});
            }
        }
    }
    for (const auto &d : doors) {
        Box box;
        box.lo[d.axis] = d.lo;
        box.hi[d.axis] = d.hi;
        box.lo[1 - d.axis] = d.line - h;
        box.hi[1 - d.axis] = d.line + h;
        box.lo.z() = kLintelBottom;
        box.hi.z() = kWallHeight;
        solids.push_back({box, kDoorClass, class_color(kDoorClass), -1});
    }
    for (std::size_t i = 0; i < furniture.size(); ++i) {
        const auto &f = furniture[i];
        solids.push_back({f.box, class_id(f.cls), f.color, static_cast<int>(i)});
    }
}

std::vector<int> World::instances(std::string_view cls) const {
    std::vector<int> out;
    const int id = class_id(cls);
    for (std::size_t i = 0; i < furniture.size(); ++i) {
        if (id != 0 && class_id(furniture[i].cls) == id) {
            out.push_back(static_cast<int>(i));
        }
    }
    return out;
}

bool World::inside(const Vec2 &p) const {
    return p.x() >= bounds_lo.x() && p.y() >= bounds_lo.y() && p.x() <= bounds_hi.x() && p.y() <= bounds_hi.y();
}

World generate_world(std::uint64_t seed, const WorldConfig &config) {
    if (config.rooms_min < 1 || config.rooms_max < config.rooms_min || config.size.minCoeff() < kMinRoomSide ||
        config.furniture_density < 0.0) {
        throw Error(ErrorCode::GenerationFailed, "degenerate world config");
    }
    Rng rng(derive_seed(seed, 0x3071d));
    for (int attempt = 0; attempt < kGenerationAttempts; ++attempt) {
        if (auto w = try_generate(seed, config, rng)) {
            return *w;
        }
    }
    throw Error(ErrorCode::GenerationFailed,
                "no valid world after " + std::to_string(kGenerationAttempts) + " attempts for seed " + std::to_string(seed));
}

std::string check_world(const World &world) {
    const auto &rooms = world.rooms;
    if (rooms.empty()) {
        return "no rooms";
    }
    for (std::size_t i = 0; i < rooms.size(); ++i) {
        const auto &r = rooms[i];
        if (!world.inside(r.lo) || !world.inside(r.hi) || (r.hi - r.lo).minCoeff() < kMinRoomSide - kEps) {
            return "room " + std::to_string(i) + " outside bounds or too small";
        }
        for (std::size_t j = i + 1; j < rooms.size(); ++j) {
            const auto &q = rooms[j];
            if (overlap(r.lo.x(), r.hi.x(), q.lo.x(), q.hi.x()) > kEps && overlap(r.lo.y(), r.hi.y(), q.lo.y(), q.hi.y()) > kEps) {
                return "rooms " + std::to_string(i) + " and " + std::to_string(j) + " overlap";
            }
        }
    }
    for (std::size_t k = 0; k < world.furniture.size(); ++k) {
        const auto &b = world.furniture[k].box;
        int containing = 0;
        for (const auto &r : rooms) {
            if (b.lo.x() >= r.lo.x() - kEps && b.hi.x() <= r.hi.x() + kEps && b.lo.y() >= r.lo.y() - kEps &&
                b.hi.y() <= r.hi.y() + kEps) {
                ++containing;
            }
        }
        if (containing != 1) {
            return "furniture " + std::to_string(k) + " is not inside exactly one room";
        }
    }
    // Doors on every shared wall and a connected room graph.
    std::vector<std::vector<int>> adj(rooms.size());
    for (std::size_t i = 0; i < rooms.size(); ++i) {
        for (std::size_t j = i + 1; j < rooms.size(); ++j) {
            const auto seg = shared_segment(rooms[i], rooms[j], static_cast<int>(i), static_cast<int>(j));
            if (!seg) {
                continue;
            }
            const bool hasDoor = std::any_of(world.doors.begin(), world.doors.end(), [&](const Door &d) {
                return d.axis == seg->axis && std::abs(d.line - seg->line) < kEps && d.lo >= seg->lo - kEps &&
                       d.hi <= seg->hi + kEps;
            });
            if (!hasDoor) {
                return "shared wall between rooms " + std::to_string(i) + " and " + std::to_string(j) + " has no door";
            }
            adj[i].push_back(static_cast<int>(j));
            adj[j].push_back(static_cast<int>(i));
        }
    }
    std::vector<int> seen(rooms.size(), 0), stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
        const int r = stack.back();
        stack.pop_back();
        for (int n : adj[static_cast<std::size_t>(r)]) {
            if (!seen[static_cast<std::size_t>(n)]) {
                seen[static_cast<std::size_t>(n)] = 1;
                stack.push_back(n);
            }
        }
    }
    if (std::count(seen.begin(), seen.end(), 1) != static_cast<long>(rooms.size())) {
        return "room graph is disconnected";
    }
    // Free-space flood fill on the traversable grid.
    const auto spec = world_grid_spec(world);
    const auto grid = traversable_grid(world, spec);
    std::vector<int> label(spec.cells(), -1);
    int components = 0;
    for (int y = 0; y < spec.ny; ++y) {
        for (int x = 0; x < spec.nx; ++x) {
            if (grid.at({x, y}) != CellState::Free || label[spec.index({x, y})] >= 0) {
                continue;
            }
            std::vector<Cell> st{{x, y}};
            label[spec.index({x, y})] = components;
            while (!st.empty()) {
                const Cell c = st.back();
                st.pop_back();
                for (const Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}}) {
                    if (spec.contains(n) && grid.at(n) == CellState::Free && label[spec.index(n)] < 0) {
                        label[spec.index(n)] = components;
                        st.push_back(n);
                    }
                }
            }
            ++components;
        }
    }
    if (components != 1) {
        return "free space splits into " + std::to_string(components) + " components";
    }
    for (std::size_t k = 0; k < world.furniture.size(); ++k) {
        bool reachable = false;
        for (int y = 0; y < spec.ny && !reachable; ++y) {
            for (int x = 0; x < spec.nx && !reachable; ++x) {
                reachable = grid.at({x, y}) == CellState::Free &&
                            footprint_distance(world.furniture[k].box, spec.center({x, y})) <= 1.0;
            }
        }
        if (!reachable) {
            return "furniture " + std::to_string(k) + " cannot be approached";
        }
    }
    return {};
}

CameraPose look_camera(const Vec3 &position, double yaw, double pitch, const SensorConfig &sensor) {
    const Vec3 f(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch));
    const Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
    const Vec3 down = f.cross(right);
    CameraPose cam;
    cam.position = position;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = f.transpose();
    cam.fx = sensor.fx;
    cam.fy = sensor.fy;
    cam.cx = (sensor.width - 1) / 2.0;
    cam.cy = (sensor.height - 1) / 2.0;
    cam.width = sensor.width;
    cam.height = sensor.height;
    return cam;
}

CameraPose agent_camera(const AgentState &state, const SensorConfig &sensor) {
    return look_camera(Vec3(state.position.x(), state.position.y(), sensor.camera_height), state.heading, sensor.pitch,
                       sensor);
}

std::optional<RayHit> raycast(const World &world, const Vec3 &origin, const Vec3 &dir, double max_t, int only_solid) {
    std::optional<RayHit> best;
    const auto test = [&](int index) {
        const Box &b = world.solids[static_cast<std::size_t>(index)].box;
        double tNear = -std::numeric_limits<double>::infinity();
        double tFar = std::numeric_limits<double>::infinity();
        int axisNear = 0;
        for (int a = 0; a < 3; ++a) {
            if (std::abs(dir[a]) < 1e-12) {
                if (origin[a] < b.lo[a] || origin[a] > b.hi[a]) {
                    return;
                }
                continue;
            }
            double t1 = (b.lo[a] - origin[a]) / dir[a];
            double t2 = (b.hi[a] - origin[a]) / dir[a];
            if (t1 > t2) {
                std::swap(t1, t2);
            }
            if (t1 > tNear) {
                tNear = t1;
                axisNear = a;
            }
            tFar = std::min(tFar, t2);
        }
        if (tNear > kEps && tNear <= tFar && tNear <= max_t && (!best || tNear < best->t)) {
            Vec3 n = Vec3::Zero();
            n[axisNear] = dir[axisNear] > 0 ? -1.0 : 1.0;
            best = RayHit{tNear, index, n};
        }
    };
    if (only_solid >= 0) {
        test(only_solid);
        return best;
    }
    for (std::size_t i = 0; i < world.solids.size(); ++i) {
        test(static_cast<int>(i));
    }
    if (dir.z() < -1e-12) {
        const double t = -origin.z() / dir.z();
        const Vec3 p = origin + t * dir;
        if (t > kEps && t <= max_t && (!best || t < best->t) && world.inside(p.head<2>())) {
            best = RayHit{t, -1, Vec3::UnitZ()};
        }
    }
    return best;
}

SensorReading observe(const World &world, const CameraPose &pose, const EmbeddingProvider &provider, int ray_stride) {
    pose.validate();
    if (!world.inside(pose.position.head<2>()) || pose.position.z() <= 0.0 || pose.position.z() >= kWallHeight) {
        throw Error(ErrorCode::PoseOutOfBounds, "camera outside the world");
    }
    constexpr double kMaxRange = 10.0;
    const int H = pose.height;
    const int W = pose.width;
    SensorReading out;
    out.observation = Observation(H, W, provider.dim());
    out.observation.pose = pose;
    out.hit_solid = Image<int>(H, W, 1, -2);
    std::vector<VecX> embeddings(kNumClasses);
    for (int id = 1; id < kNumClasses; ++id) {
        embeddings[static_cast<std::size_t>(id)] = provider.embed(class_name(id));
    }
    const Vec3 floorColor = class_color(kFloorClass);
    const int stride = std::max(1, ray_stride);
    std::vector<std::optional<RaySegment>> rays(static_cast<std::size_t>(H) * W);
    auto &obs = out.observation;
    parallel_for(static_cast<std::size_t>(H), [&](std::size_t row) {
        const int v = static_cast<int>(row);
        for (int u = 0; u < W; ++u) {
            const Vec3 dc = Vec3((u - pose.cx) / pose.fx, (v - pose.cy) / pose.fy, 1.0).normalized();
            const Vec3 dw = pose.rotation.transpose() * dc;
            const auto hit = raycast(world, pose.position, dw, kMaxRange);
            const bool logged = u % stride == 0 && v % stride == 0;
            if (!hit) {
                if (logged) {
                    rays[row * W + u] = RaySegment{pose.position, pose.position + kMaxRange * dw};
                }
                continue;
            }
            const int cls = hit->solid >= 0 ? world.solids[static_cast<std::size_t>(hit->solid)].cls : kFloorClass;
            const Vec3 base = hit->solid >= 0 ? world.solids[static_cast<std::size_t>(hit->solid)].color : floorColor;
            const double face = hit->normal.z() != 0.0 ? 1.0 : (hit->normal.x() != 0.0 ? 0.85 : 0.7);
            const Vec3 rgb = base * face / (1.0 + 0.03 * hit->t);
            for (int c = 0; c < 3; ++c) {
                obs.rgb(v, u, c) = rgb[c];
            }
            obs.depth(v, u) = hit->t * dc.z();
            const VecX &e = embeddings[static_cast<std::size_t>(cls)];
            for (int c = 0; c < provider.dim(); ++c) {
                obs.semantic(v, u, c) = e[c];
            }
            obs.validity(v, u) = 1;
            out.hit_solid(v, u) = hit->solid;
            if (logged) {
                rays[row * W + u] = RaySegment{pose.position, pose.position + hit->t * dw};
            }
        }
    });
    for (const auto &r : rays) {
        if (r) {
            out.rays.push_back(*r);
        }
    }
    return out;
}

bool collides(const World &world, const Vec2 &position) {
    if (!world.inside(position)) {
        return true;
    }
    for (const auto &s : world.solids) {
        if (s.box.lo.z() >= kAgentBodyTop || s.box.hi.z() <= 0.0) {
            continue;
        }
        if (footprint_distance(s.box, position) < kAgentRadius) {
            return true;
        }
    }
    return false;
}

StepResult step(const World &world, const AgentState &state, Action action) {
    StepResult r{state, false};
    switch (action) {
    case Action::Forward: {
        const Vec2 dir(std::cos(state.heading), std::sin(state.heading));
        const Vec2 next = state.position + kForwardStep * dir;
        const Vec2 mid = state.position + 0.5 * kForwardStep * dir;
        if (collides(world, mid) || collides(world, next)) {
            r.collided = true;
        } else {
            r.state.position = next;
        }
        break;
    }
    case Action::RotateLeft: r.state.heading = wrap_angle(state.heading + kTurnStep); break;
    case Action::RotateRight: r.state.heading = wrap_angle(state.heading - kTurnStep); break;
    case Action::Done: break;
    }
    return r;
}

bool check_success(const World &world, const AgentState &state, std::string_view target, const SensorConfig &sensor,
                   const SuccessCriteria &criteria) {
    const auto ids = world.instances(target);
    if (ids.empty()) {
        throw Error(ErrorCode::UnknownTarget, "no instance of '" + std::string(target) + "' in the world");
    }
    const CameraPose cam = agent_camera(state, sensor);
    for (int id : ids) {
        const Box &box = world.furniture[static_cast<std::size_t>(id)].box;
        if (footprint_distance(box, state.position) > criteria.distance) {
            continue;
        }
        const Vec3 c = box.center();
        const Vec3 pc = cam.to_camera(c);
        if (pc.z() <= 0.0) {
            continue;
        }
        const double u = cam.fx * pc.x() / pc.z() + cam.cx;
        if (std::abs(u - cam.cx) > 0.5 * criteria.central_fraction * cam.width) {
            continue;
        }
        const Vec3 delta = c - cam.position;
        const auto hit = raycast(world, cam.position, delta.normalized(), delta.norm() + 1.0);
        if (hit && hit->solid >= 0 && world.solids[static_cast<std::size_t>(hit->solid)].object == id) {
            return true;
        }
    }
    return false;
}

GridSpec2D world_grid_spec(const World &world, double cell) {
    GridSpec2D s;
    s.origin = world.bounds_lo - Vec2::Constant(0.5);
    s.cell = cell;
    const Vec2 extent = world.bounds_hi - world.bounds_lo + Vec2::Constant(1.0);
    s.nx = static_cast<int>(std::ceil(extent.x() / cell - 1e-9));
    s.ny = static_cast<int>(std::ceil(extent.y() / cell - 1e-9));
    return s;
}

VoxelGridSpec world_voxel_spec(const World &world, double cell, int nz) {
    const GridSpec2D g = world_grid_spec(world, cell);
    VoxelGridSpec v;
    v.origin = Vec3(g.origin.x(), g.origin.y(), -cell / 2.0);
    v.cell = cell;
    v.nx = g.nx;
    v.ny = g.ny;
    v.nz = nz;
    return v;
}

OccupancyGrid ground_truth_grid(const World &world, const GridSpec2D &spec, double z_lo, double z_hi) {
    OccupancyGrid grid(spec, CellState::Free);
    for (int y = 0; y < spec.ny; ++y) {
        for (int x = 0; x < spec.nx; ++x) {
            const Vec2 lo = spec.origin + spec.cell * Vec2(x, y);
            const Vec2 hi = lo + Vec2::Constant(spec.cell);
            if (!world.inside(spec.center({x, y}))) {
                grid.at({x, y}) = CellState::Occupied;
                continue;
            }
            for (const auto &s : world.solids) {
                if (overlap(s.box.lo.z(), s.box.hi.z(), z_lo, z_hi) > kEps &&
                    overlap(s.box.lo.x(), s.box.hi.x(), lo.x(), hi.x()) > kEps &&
                    overlap(s.box.lo.y(), s.box.hi.y(), lo.y(), hi.y()) > kEps) {
                    grid.at({x, y}) = CellState::Occupied;
                    break;
                }
            }
        }
    }
    return grid;
}

OccupancyGrid traversable_grid(const World &world, const GridSpec2D &spec) {
    OccupancyGrid grid(spec, CellState::Free);
    for (int y = 0; y < spec.ny; ++y) {
        for (int x = 0; x < spec.nx; ++x) {
            if (collides(world, spec.center({x, y}))) {
                grid.at({x, y}) = CellState::Occupied;
            }
        }
    }
    return grid;
}

VoxelBelief ground_truth_voxels(const World &world, const VoxelGridSpec &spec) {
    VoxelBelief v = VoxelBelief::unknown(spec);
    std::fill(v.known.begin(), v.known.end(), std::uint8_t{1});
    const int ground = static_cast<int>(std::floor((0.0 - spec.origin.z()) / spec.cell));
    for (int z = 0; z < spec.nz; ++z) {
        const double z0 = spec.origin.z() + z * spec.cell;
        const double z1 = z0 + spec.cell;
        for (int y = 0; y < spec.ny; ++y) {
            for (int x = 0; x < spec.nx; ++x) {
                const Vec3 lo = spec.origin + spec.cell * Vec3(x, y, z);
                const Vec3 hi = lo + Vec3::Constant(spec.cell);
                const std::size_t i = spec.index(x, y, z);
                v.occupancy[i] = 0.0;
                if (z == ground) {
                    if (overlap(lo.x(), hi.x(), world.bounds_lo.x(), world.bounds_hi.x()) > kEps &&
                        overlap(lo.y(), hi.y(), world.bounds_lo.y(), world.bounds_hi.y()) > kEps) {
                        v.occupancy[i] = 1.0;
                        v.semantics[i] = kFloorClass;
                    }
                    continue;
                }
                if (z < ground) {
                    continue;
                }
                for (const auto &s : world.solids) {
                    if (overlap(s.box.lo.z(), s.box.hi.z(), z0, z1) > kEps &&
                        overlap(s.box.lo.x(), s.box.hi.x(), lo.x(), hi.x()) > kEps &&
                        overlap(s.box.lo.y(), s.box.hi.y(), lo.y(), hi.y()) > kEps) {
                        v.occupancy[i] = 1.0;
                        // Furniture wins over structure when both touch the cell.
                        if (v.semantics[i] == 0 || s.object >= 0) {
                            v.semantics[i] = s.cls;
                        }
                    }
                }
            }
        }
    }
    return v;
}

AgentState sample_start(const World &world, Rng &rng) {
    const auto spec = world_grid_spec(world);
    const auto grid = traversable_grid(world, spec);
    std::vector<Cell> free;
    for (int y = 0; y < spec.ny; ++y) {
        for (int x = 0; x < spec.nx; ++x) {
            if (grid.at({x, y}) == CellState::Free) {
                free.push_back({x, y});
            }
        }
    }
    if (free.empty()) {
        throw Error(ErrorCode::GenerationFailed, "world has no free cell");
    }
    const Cell c = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    const int k = std::uniform_int_distribution<int>(0, 11)(rng);
    return {spec.center(c), wrap_angle(k * kTurnStep)};
}

std::string world_to_text(const World &world) {
    nlohmann::ordered_json j;
    j["format"] = "belief-world";
    j["version"] = 1;
    j["seed"] = world.seed;
    j["config"] = {{"rooms_min", world.config.rooms_min},
                   {"rooms_max", world.config.rooms_max},
                   {"furniture_density", world.config.furniture_density},
                   {"size", vec_json(world.config.size)},
                   {"require_targets", world.config.require_targets}};
    j["bounds"] = {{"lo", vec_json(world.bounds_lo)}, {"hi", vec_json(world.bounds_hi)}};
    auto rooms = nlohmann::ordered_json::array();
    for (const auto &r : world.rooms) {
        rooms.push_back({{"lo", vec_json(r.lo)}, {"hi", vec_json(r.hi)}});
    }
    j["rooms"] = rooms;
    auto doors = nlohmann::ordered_json::array();
    for (const auto &d : world.doors) {
        doors.push_back({{"axis", d.axis}, {"line", d.line}, {"lo", d.lo}, {"hi", d.hi}, {"room_a", d.room_a}, {"room_b", d.room_b}});
    }
    j["doors"] = doors;
    auto furniture = nlohmann::ordered_json::array();
    for (const auto &f : world.furniture) {
        furniture.push_back({{"class", f.cls},
                             {"lo", vec_json(f.box.lo)},
                             {"hi", vec_json(f.box.hi)},
                             {"color", vec_json(f.color)},
                             {"room", f.room}});
    }
    j["furniture"] = furniture;
    return j.dump(2) + "\n";
}

World world_from_text(const std::string &text) {
    World w;
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format") != "belief-world" || j.at("version") != 1) {
            throw Error(ErrorCode::FormatError, "not a version 1 world file");
        }
        w.seed = j.at("seed").get<std::uint64_t>();
        const auto &c = j.at("config");
        w.config.rooms_min = c.at("rooms_min").get<int>();
        w.config.rooms_max = c.at("rooms_max").get<int>();
        w.config.furniture_density = c.at("furniture_density").get<double>();
        w.config.size = json_vec<2>(c.at("size"));
        w.config.require_targets = c.at("require_targets").get<bool>();
        w.bounds_lo = json_vec<2>(j.at("bounds").at("lo"));
        w.bounds_hi = json_vec<2>(j.at("bounds").at("hi"));
        for (const auto &r : j.at("rooms")) {
            w.rooms.push_back({json_vec<2>(r.at("lo")), json_vec<2>(r.at("hi"))});
        }
        for (const auto &d : j.at("doors")) {
            w.doors.push_back({d.at("axis").get<int>(), d.at("line").get<double>(), d.at("lo").get<double>(),
                               d.at("hi").get<double>(), d.at("room_a").get<int>(), d.at("room_b").get<int>()});
        }
        for (const auto &f : j.at("furniture")) {
            w.furniture.push_back({{json_vec<3>(f.at("lo")), json_vec<3>(f.at("hi"))},
                                   f.at("class").get<std::string>(),
                                   json_vec<3>(f.at("color")),
                                   f.at("room").get<int>()});
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::FormatError, std::string("bad world text: ") + e.what());
    }
    w.finalize();
    return w;
}

void export_world(const std::filesystem::path &path, const World &world) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    out << world_to_text(world);
}

World import_world(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot read " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return world_from_text(ss.str());
}

} // namespace belief
