#include "support.hpp"

#include "belief/hypothesis_sampler.hpp"
#include "belief/planner.hpp"
#include "belief/splat_renderer.hpp"
#include "belief/vocabulary.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <numbers>
#include <sstream>

using namespace belief;
using namespace belief::testing;

namespace {

ErrorCode code_of(auto &&fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

OccupancyGrid blank(int nx, int ny, CellState fill) {
    GridSpec2D spec;
    spec.nx = nx;
    spec.ny = ny;
    return OccupancyGrid(spec, fill);
}

World single_room(std::vector<Furniture> furniture) {
    World w;
    w.bounds_lo = Vec2(0, 0);
    w.bounds_hi = Vec2(6, 4);
    w.rooms.push_back({Vec2(0, 0), Vec2(6, 4)});
    w.furniture = std::move(furniture);
    w.finalize();
    return w;
}

Furniture bed_at(const Vec3 &lo, const Vec3 &hi) {
    Furniture f;
    f.cls = "bed";
    f.box = {lo, hi};
    return f;
}

const DenoiserParams &trained() {
    static const DenoiserParams params = [] {
        std::vector<VoxelBelief> data;
        for (int i = 0; i < 100; ++i) {
            const World w = generate_world(7000 + static_cast<std::uint64_t>(i));
            data.push_back(ground_truth_voxels(w, world_voxel_spec(w)));
        }
        return train_denoiser(data, NoiseSchedule::linear(0.01, 0.45, 10), 150, 1);
    }();
    return params;
}

/// Replays the trace and checks the simulator agrees with every record.
void check_trace(const World &world, const AgentState &start, const EpisodeResult &r) {
    AgentState s = start;
    int collisions = 0;
    for (const auto &t : r.trace) {
        const auto next = step(world, s, t.action);
        CHECK(next.collided == t.collided);
        CHECK((next.state.position - t.pose.position).norm() < 1e-12);
        CHECK(std::abs(next.state.heading - t.pose.heading) < 1e-12);
        collisions += t.collided;
        s = next.state;
    }
    CHECK(collisions == r.collisions);
    // Done is recorded but takes no step.
    CHECK(static_cast<int>(r.trace.size()) == r.steps_taken + (r.success ? 1 : 0));
}

} // namespace

TEST_CASE("belief_occupancy basics") {
    GridSpec2D spec;
    spec.nx = 10;
    spec.ny = 8;
    const auto empty = belief_occupancy(SceneBelief{}, spec);
    CHECK(empty.count(CellState::Unknown) == spec.cells());

    SceneBelief one;
    VecX e = VecX::Zero(16);
    e[3] = 1;
    one.primitives.push_back(
        make_primitive(Vec3(1.1, 0.6, 1.0), Mat3::Identity() * 0.01, 1.0, Vec3::Zero(), e, Origin::Observed));
    const auto g = belief_occupancy(one, spec);
    CHECK(g.count(CellState::Occupied) == 1);
    CHECK(g.at({4, 2}) == CellState::Occupied);
    CHECK(code_of([&] { belief_occupancy(one, spec, HeightBand{1.0, 0.5}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("one observation of a corridor matches the ground-truth grid") {
    World w;
    w.bounds_lo = Vec2(0, 0);
    w.bounds_hi = Vec2(8, 1.5);
    w.rooms.push_back({Vec2(0, 0), Vec2(8, 1.5)});
    w.finalize();
    const auto provider = EmbeddingProvider::synthetic();
    const AgentState start{Vec2(0.6, 0.75), 0.0};
    const auto reading = observe(w, agent_camera(start), provider, 1);
    const auto belief = incorporate_observation(SceneBelief{}, reading.observation);
    const auto spec = world_grid_spec(w);
    std::vector<std::uint8_t> carved;
    carve_rays_2d(spec, reading.rays, {}, carved);
    const VecX floor = provider.embed("floor");
    const auto pred = belief_occupancy(belief, spec, {}, &floor, &carved);
    const auto gt = ground_truth_grid(w, spec);
    // Cells straddling a wall face are occupied in the ground truth but partly
    // free, so free predictions are scored on cells whose neighbors agree.
    const auto interior = [&](Cell c) {
        for (const Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}}) {
            if (spec.contains(n) && gt.at(n) != gt.at(c)) {
                return false;
            }
        }
        return true;
    };
    std::size_t occ = 0, occHit = 0, freeScored = 0, freeHit = 0;
    for (int y = 0; y < spec.ny; ++y) {
        for (int x = 0; x < spec.nx; ++x) {
            const Cell c{x, y};
            if (pred.at(c) == CellState::Occupied) {
                ++occ;
                occHit += gt.at(c) == CellState::Occupied;
            } else if (pred.at(c) == CellState::Free && interior(c)) {
                ++freeScored;
                freeHit += gt.at(c) == CellState::Free;
            }
        }
    }
    REQUIRE(occ > 20);
    REQUIRE(freeScored > 20);
    CHECK(static_cast<double>(occHit) / occ >= 0.95);
    CHECK(static_cast<double>(freeHit) / freeScored >= 0.95);
    CHECK(pred.count(CellState::Free) > 0);
    CHECK(pred.count(CellState::Occupied) > 0);
}

TEST_CASE("frontiers and waypoints") {
    auto known = blank(12, 12, CellState::Free);
    CHECK(code_of([&] { sample_waypoints(known, {1, 1}, std::nullopt, 4, 3.0); }) == ErrorCode::NoFrontier);
    CHECK(sample_waypoints(known, {1, 1}, Cell{7, 7}, 4, 3.0) == std::vector<Cell>{{7, 7}});
    CHECK(code_of([&] { sample_waypoints(known, {1, 1}, std::nullopt, 0, 3.0); }) == ErrorCode::InvalidArgument);

    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto half = blank(16, 16, CellState::Unknown);
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 8; ++x) {
                half.at({x, y}) = uniform(rng, 0, 1) < 0.85 ? CellState::Free : CellState::Occupied;
            }
        }
        half.at({2, 8}) = CellState::Free;
        const auto wps = sample_waypoints(half, {2, 8}, std::nullopt, 4, 1.0);
        CHECK(!wps.empty());
        CHECK(wps.size() <= 4);
        for (const Cell c : wps) {
            CHECK(is_frontier(half, c));
            CHECK(half.at(c) == CellState::Free);
            bool unknownNeighbor = false;
            const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                const Cell n{c.x + dx[k], c.y + dy[k]};
                unknownNeighbor |= half.spec.contains(n) && half.at(n) == CellState::Unknown;
            }
            CHECK(unknownNeighbor);
        }
        std::set<std::pair<int, int>> unique;
        for (const Cell c : wps) {
            unique.insert({c.x, c.y});
        }
        CHECK(unique.size() == wps.size());
    }
}

TEST_CASE("A* examples") {
    auto corridor = blank(6, 1, CellState::Free);
    const auto p = astar(corridor, {0, 0}, {5, 0});
    REQUIRE(p);
    CHECK(p->cells.size() == 6);
    CHECK(p->cost == 5.0);

    auto walled = blank(7, 7, CellState::Free);
    for (int i = 2; i <= 4; ++i) {
        walled.at({i, 2}) = walled.at({i, 4}) = walled.at({2, i}) = walled.at({4, i}) = CellState::Occupied;
    }
    CHECK_FALSE(astar(walled, {0, 0}, {3, 3}));

    auto mixed = blank(5, 1, CellState::Unknown);
    mixed.at({0, 0}) = CellState::Free;
    CHECK(astar(mixed, {0, 0}, {4, 0}, 3.0)->cost == 12.0);
}

TEST_CASE("A* matches uniform-cost search") {
    Rng rng(10);
    for (int trial = 0; trial < 300; ++trial) {
        const auto grid = random_grid(rng, 32, 32, 0.25, 0.25);
        const Cell s{uniform_int(rng, 0, 31), uniform_int(rng, 0, 31)};
        const Cell g{uniform_int(rng, 0, 31), uniform_int(rng, 0, 31)};
        const double mult = trial % 3 == 0 ? 1.0 : uniform(rng, 1.0, 4.0);
        const auto oracle = ucs_cost(grid, s, g, mult);
        const auto got = grid.at(s) == CellState::Occupied ? std::nullopt : astar(grid, s, g, mult);
        REQUIRE(oracle.has_value() == got.has_value());
        if (!got) {
            continue;
        }
        CHECK(got->cost == *oracle);
        CHECK(got->cells.front() == s);
        CHECK(got->cells.back() == g);
        double replay = 0.0;
        for (std::size_t i = 1; i < got->cells.size(); ++i) {
            const Cell a = got->cells[i - 1], b = got->cells[i];
            CHECK(std::abs(a.x - b.x) + std::abs(a.y - b.y) == 1);
            CHECK(grid.at(b) != CellState::Occupied);
            replay += grid.at(b) == CellState::Unknown ? mult : 1.0;
        }
        CHECK(replay == got->cost);
    }
}

TEST_CASE("information gain against brute force") {
    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        const auto grid = random_grid(rng, 20, 15, 0.1, 0.4);
        std::vector<Cell> path;
        for (int i = 0; i < 6; ++i) {
            path.push_back({uniform_int(rng, 0, 19), uniform_int(rng, 0, 14)});
        }
        const double radius = uniform(rng, 0.2, 1.5);
        std::size_t count = 0;
        for (int y = 0; y < 15; ++y) {
            for (int x = 0; x < 20; ++x) {
                if (grid.at({x, y}) != CellState::Unknown) {
                    continue;
                }
                for (const Cell c : path) {
                    if ((grid.spec.center({x, y}) - grid.spec.center(c)).norm() <= radius + 1e-9) {
                        ++count;
                        break;
                    }
                }
            }
        }
        CHECK(information_gain(grid, path, radius) == doctest::Approx(static_cast<double>(count) / 6).epsilon(1e-12));
    }
}

TEST_CASE("mental simulation") {
    GridSpec2D spec;
    spec.nx = 20;
    spec.ny = 20;
    Rng rng(5);
    SceneBelief h;
    for (int i = 0; i < 30; ++i) {
        auto g = random_primitive(rng, Origin::Observed, 16);
        g.mean += Vec3(5, 5, 0);
        h.primitives.push_back(g);
    }
    const std::vector<SceneBelief> hyps{h, h, h};
    std::vector<Cell> path;
    for (int i = 0; i < 9; ++i) {
        path.push_back({2 + i, 4});
    }
    const SensorConfig cam{16, 12, 8, 8, 1.0, 0.0};
    const auto all = mental_simulate(hyps, spec, path, cam, 1);
    REQUIRE(all.size() == 3);
    for (const auto &frames : all) {
        CHECK(frames.size() == 8);
    }
    const auto one = mental_simulate(std::span(hyps).first(1), spec, path, cam, 50);
    REQUIRE(one[0].size() == 1);
    CHECK(one[0][0].pose.position.x() == doctest::Approx(spec.center(path.back()).x()));

    SUBCASE("a closed loop renders the same semantics at both ends") {
        std::vector<Cell> loop;
        for (int x = 4; x <= 10; ++x) {
            loop.push_back({x, 4});
        }
        for (int y = 5; y <= 10; ++y) {
            loop.push_back({10, y});
        }
        for (int x = 9; x >= 4; --x) {
            loop.push_back({x, 10});
        }
        for (int y = 9; y >= 4; --y) {
            loop.push_back({4, y});
        }
        loop.push_back({5, 4});
        const auto poses = path_poses(spec, loop, 1, cam);
        const auto start = path_poses(spec, std::span(loop).first(2), 1, cam);
        const auto first = render(h, start.back());
        const auto last = render(h, poses.back());
        for (int y = 0; y < first.height(); ++y) {
            for (int x = 0; x < first.width(); ++x) {
                if (!first.validity(y, x)) {
                    continue;
                }
                double dot = 0;
                for (int c = 0; c < first.embed_dim(); ++c) {
                    dot += first.semantic(y, x, c) * last.semantic(y, x, c);
                }
                CHECK(dot >= 0.99);
            }
        }
    }
}

TEST_CASE("score_path") {
    const int d = 4;
    const VecX q = VecX::Unit(d, 0);
    const auto known = blank(10, 10, CellState::Free);
    const std::vector<Cell> path{{2, 2}, {3, 2}, {4, 2}};
    const auto frame = [&](const VecX &f) {
        Observation o(3, 3, d);
        for (int y = 0; y < 3; ++y) {
            for (int x = 0; x < 3; ++x) {
                for (int c = 0; c < d; ++c) {
                    o.semantic(y, x, c) = f[c];
                }
            }
        }
        return o;
    };
    const std::vector<std::vector<Observation>> ortho{{frame(VecX::Unit(d, 1)), frame(VecX::Unit(d, 2))}};
    CHECK(score_path(ortho, q, known, path) == doctest::Approx(0.0));

    const std::vector<std::vector<Observation>> hit{{frame(q)}, {frame(VecX::Unit(d, 1))}, {frame(VecX::Unit(d, 2))}};
    CHECK(score_path(hit, q, known, path) >= 1.0 / 3 - 1e-12);

    SUBCASE("arithmetic") {
        Rng rng(8);
        for (int trial = 0; trial < 20; ++trial) {
            const auto grid = random_grid(rng, 10, 10, 0.1, 0.5);
            std::vector<std::vector<Observation>> rollout(3);
            double sem = 0.0;
            for (auto &frames : rollout) {
                double best = -1.0;
                for (int f = 0; f < 2; ++f) {
                    const VecX v = random_unit(rng, d);
                    frames.push_back(frame(v));
                    best = std::max(best, v.dot(q));
                }
                sem += best / 3.0;
            }
            const ScoreWeights wts{uniform(rng, 0, 2), uniform(rng, 0, 1), 1.0};
            std::vector<double> per;
            const double got = score_path(rollout, q, grid, path, wts, &per);
            CHECK(per.size() == 3);
            CHECK(std::abs(got - (wts.w_sem * sem + wts.w_info * information_gain(grid, path, 1.0))) < 1e-9);
        }
    }
}

TEST_CASE("episode metrics") {
    EpisodeResult fail;
    CHECK(sr(std::vector{fail, fail}) == 0.0);
    CHECK(spl(std::vector{fail, fail}) == 0.0);
    CHECK(sel(std::vector{fail, fail}, 200) == 0.0);
    CHECK(code_of([] { sr({}); }) == ErrorCode::EmptyResultSet);
    CHECK(code_of([] { spl({}); }) == ErrorCode::EmptyResultSet);
    CHECK(code_of([] { sel({}, 10); }) == ErrorCode::EmptyResultSet);

    EpisodeResult exact;
    exact.success = true;
    exact.path_length = exact.shortest_path_length = 3.0;
    exact.steps_taken = exact.oracle_steps = 14;
    CHECK(spl(std::vector{exact}) == 1.0);

    EpisodeResult longer = exact;
    longer.path_length = 6.0;
    longer.steps_taken = 28;
    const std::vector batch{exact, longer, fail, fail};
    CHECK(std::abs(sr(batch) - 0.5) < 1e-12);
    CHECK(std::abs(spl(batch) - (1.0 + 0.5) / 4) < 1e-12);
    CHECK(std::abs(sel(batch, 200) - (1.0 + 0.5) / 4) < 1e-12);
    CHECK(std::abs(sel(batch, 20) - (1.0 + 14.0 / 20) / 4) < 1e-12);

    Rng rng(4);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<EpisodeResult> rs(static_cast<std::size_t>(uniform_int(rng, 1, 12)));
        for (auto &r : rs) {
            r.success = uniform(rng, 0, 1) < 0.6;
            r.shortest_path_length = uniform(rng, 0, 5);
            r.path_length = uniform(rng, 0, 10);
            r.oracle_steps = uniform_int(rng, 0, 40);
            r.steps_taken = uniform_int(rng, 0, 200);
        }
        CHECK(spl(rs) <= sr(rs) + 1e-12);
        CHECK(sel(rs, 200) <= sr(rs) + 1e-12);
    }
}

TEST_CASE("trace format") {
    EpisodeResult r;
    r.trace.push_back({1, Action::Forward, {Vec2(1.0, 2.0), 0.5}, true});
    r.trace.push_back({2, Action::Done, {Vec2(1.0, 2.0), 0.5}, false});
    std::ostringstream out;
    write_trace(out, r);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("step") == 1);
    CHECK(j.at("action") == "forward");
    CHECK(j.at("pose")[1] == 2.0);
    CHECK(j.at("collided") == true);
    std::getline(in, line);
    CHECK(nlohmann::json::parse(line).at("action") == "done");
}

TEST_CASE("degenerate episodes") {
    const World w = single_room({bed_at(Vec3(4.0, 1.5, 0.0), Vec3(5.0, 2.5, 0.6))});
    PlannerComponents comps;
    PlannerConfig cfg;
    cfg.no_geometry = true;
    const AgentState facing{Vec2(3.0, 2.0), 0.0};

    const auto quick = navigate(w, facing, comps, "bed", 200, cfg, 1);
    CHECK(quick.success);
    CHECK(quick.steps_taken <= 3);
    CHECK(quick.trace.back().action == Action::Done);

    const auto none = navigate(w, facing, comps, "bed", 0, cfg, 1);
    CHECK_FALSE(none.success);
    CHECK(none.steps_taken == 0);

    CHECK(code_of([&] { navigate(w, facing, comps, "toilet", 10, cfg, 1); }) == ErrorCode::UnknownTarget);
    PlannerConfig full;
    CHECK(code_of([&] { navigate(w, facing, comps, "bed", 10, full, 1); }) == ErrorCode::UntrainedDenoiser);
}

TEST_CASE("shortest path") {
    const World w = single_room({bed_at(Vec3(4.0, 1.5, 0.0), Vec3(5.0, 2.5, 0.6))});
    const auto sp = shortest_path(w, {Vec2(3.0, 2.0), 0.0}, "bed");
    REQUIRE(sp);
    CHECK(sp->length == doctest::Approx(0.0));
    CHECK(sp->oracle_steps == 0);
    const auto far = shortest_path(w, {Vec2(0.5, 2.0), std::numbers::pi}, "bed");
    REQUIRE(far);
    // At least the straight-line distance to the 1.5 m success ring, minus a cell.
    CHECK(far->length >= 4.0 - 0.5 - 1.5 - 0.25);
    CHECK(far->oracle_steps >= static_cast<int>(far->length / kForwardStep) + 5);
}

TEST_CASE("one-room episodes with the trained denoiser") {
    WorldConfig cfg;
    cfg.rooms_min = cfg.rooms_max = 1;
    cfg.size = Vec2(7, 6);
    PlannerComponents comps;
    comps.denoiser = &trained();
    comps.schedule = NoiseSchedule::linear(0.01, 0.45, 10);
    int successes = 0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const World w = generate_world(seed, cfg);
        Rng rng(seed);
        AgentState start = sample_start(w, rng);
        const auto beds = w.instances("bed");
        REQUIRE(!beds.empty());
        const Vec3 c = w.furniture[static_cast<std::size_t>(beds[0])].box.center();
        // Face away from the bed, snapped to the 30 degree lattice.
        const double away = std::atan2(start.position.y() - c.y(), start.position.x() - c.x());
        start.heading = std::round(away / kTurnStep) * kTurnStep;
        const auto r = navigate(w, start, comps, "bed", 200, PlannerConfig{}, seed);
        check_trace(w, start, r);
        if (r.success) {
            ++successes;
            CHECK(r.path_length >= r.shortest_path_length - 0.25);
            CHECK(r.steps_taken <= 200);
        }
    }
    CHECK(successes >= 3);
}

TEST_CASE("ablations do not change the simulator contract") {
    PlannerComponents comps;
    comps.denoiser = &trained();
    comps.schedule = NoiseSchedule::linear(0.01, 0.45, 10);
    const World w = generate_world(55);
    Rng rng(55);
    const AgentState start = sample_start(w, rng);
    for (int mode = 0; mode < 2; ++mode) {
        PlannerConfig cfg;
        cfg.single_hypothesis = mode == 0;
        cfg.no_geometry = mode == 1;
        const auto r = navigate(w, start, comps, "sofa", 60, cfg, 3);
        check_trace(w, start, r);
        const auto again = navigate(w, start, comps, "sofa", 60, cfg, 3);
        CHECK(again.steps_taken == r.steps_taken);
        CHECK(again.path_length == r.path_length);
    }
}
