#include "support.hpp"

#include "belief/denoiser.hpp"
#include "belief/hypothesis_sampler.hpp"
#include "belief/vocabulary.hpp"
#include "belief/world_sim.hpp"

#include <doctest.h>

#include <filesystem>

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

VoxelGridSpec small_spec() {
    VoxelGridSpec s;
    s.origin = Vec3(0, 0, 0);
    s.cell = 0.25;
    s.nx = 8;
    s.ny = 6;
    s.nz = 4;
    return s;
}

GaussianPrimitive point(const Vec3 &p) {
    VecX e = VecX::Zero(16);
    e[0] = 1;
    return make_primitive(p, Mat3::Identity() * 1e-4, 1.0, Vec3::Zero(), e, Origin::Observed);
}

std::vector<VoxelBelief> corpus(int n, std::uint64_t seed) {
    std::vector<VoxelBelief> out;
    for (int i = 0; i < n; ++i) {
        const World w = generate_world(seed + static_cast<std::uint64_t>(i));
        out.push_back(ground_truth_voxels(w, world_voxel_spec(w)));
    }
    return out;
}

const DenoiserParams &trained() {
    static const DenoiserParams params = [] {
        const auto data = corpus(100, 500);
        return train_denoiser(data, NoiseSchedule::linear(0.01, 0.45, 10), 60, 3);
    }();
    return params;
}

} // namespace

TEST_CASE("rasterize_observed") {
    const auto spec = small_spec();
    const auto empty = rasterize_observed({}, spec);
    CHECK(empty.known_count() == 0);
    for (double o : empty.occupancy) {
        CHECK(o == 0.5);
    }

    const std::vector<GaussianPrimitive> one{point(spec.center(4, 3, 2))};
    const auto v = rasterize_observed(one, spec);
    CHECK(v.known_count() == 1);
    CHECK(v.known[spec.index(4, 3, 2)] == 1);
    CHECK(v.occupancy[spec.index(4, 3, 2)] == 1.0);

    const std::vector<GaussianPrimitive> outside{point(Vec3(-5, 0, 0)), point(spec.center(1, 1, 1))};
    const auto o = rasterize_observed(outside, spec);
    CHECK(o.dropped == 1);
    CHECK(o.known_count() == 1);

    VoxelGridSpec none = spec;
    none.nx = 0;
    CHECK(code_of([&] { rasterize_observed({}, none); }) == ErrorCode::EmptyGrid);
}

TEST_CASE("carved rays become known free") {
    const auto spec = small_spec();
    const std::vector<RaySegment> rays{{spec.center(0, 2, 2), spec.center(7, 2, 2)}};
    const auto v = rasterize_observed({}, spec, rays);
    CHECK(v.known[spec.index(1, 2, 2)] == 1);
    CHECK(v.occupancy[spec.index(1, 2, 2)] == 0.0);
    // Cells at the ray end stay unconstrained; the carve stops short of the hit.
    CHECK(v.known[spec.index(7, 2, 2)] == 0);
    CHECK(v.known[spec.index(1, 4, 2)] == 0);
}

TEST_CASE("lift_to_gaussians counts occupied unknown cells") {
    const auto provider = EmbeddingProvider::synthetic();
    const auto spec = small_spec();
    auto v = VoxelBelief::unknown(spec);
    for (auto &o : v.occupancy) {
        o = 0.0;
    }
    CHECK(lift_to_gaussians(v, provider).empty());

    v.occupancy[spec.index(2, 2, 1)] = 1.0;
    v.semantics[spec.index(2, 2, 1)] = kWallClass;
    const auto one = lift_to_gaussians(v, provider);
    REQUIRE(one.size() == 1);
    CHECK((one[0].mean - spec.center(2, 2, 1)).norm() < 1e-12);
    CHECK(one[0].embedding.dot(embed_label(provider, "wall")) == doctest::Approx(1.0));
    CHECK(one[0].origin == Origin::Imagined);
    CHECK(one[0].opacity == doctest::Approx(0.8));
    CHECK(one[0].covariance(0, 0) == doctest::Approx(std::pow(spec.cell / 2, 2)));

    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        auto r = VoxelBelief::unknown(spec);
        std::size_t expected = 0;
        for (std::size_t i = 0; i < r.occupancy.size(); ++i) {
            r.occupancy[i] = uniform(rng, 0, 1) < 0.4 ? 1.0 : 0.0;
            r.known[i] = uniform(rng, 0, 1) < 0.5;
            r.semantics[i] = r.occupancy[i] > 0.5 ? uniform_int(rng, 1, kNumClasses - 1) : 0;
            expected += r.occupancy[i] >= 0.5 && !r.known[i];
        }
        CHECK(lift_to_gaussians(r, provider).size() == expected);
    }
}

TEST_CASE("sample_hypotheses preconditions") {
    const auto spec = small_spec();
    const auto cond = rasterize_observed({}, spec);
    const auto s = NoiseSchedule::linear(0.01, 0.45, 10);
    CHECK(code_of([&] { sample_hypotheses(cond, 1, DenoiserParams::initialize(1), s, 0); }) ==
          ErrorCode::UntrainedDenoiser);
    CHECK(code_of([&] { sample_hypotheses(cond, 0, trained(), s, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("sampling respects the conditioning and is deterministic") {
    const auto s = NoiseSchedule::linear(0.01, 0.45, 10);
    const World w = generate_world(77);
    const auto spec = world_voxel_spec(w);
    const auto truth = ground_truth_voxels(w, spec);

    SUBCASE("fully known grid comes back unchanged") {
        auto cond = truth;
        std::fill(cond.known.begin(), cond.known.end(), 1);
        const auto out = sample_hypotheses(cond, 1, trained(), s, 5);
        REQUIRE(out.size() == 1);
        CHECK(out[0].occupancy == cond.occupancy);
    }
    SUBCASE("partial conditioning") {
        Rng rng(4);
        auto cond = VoxelBelief::unknown(spec);
        const auto mask = simulate_visibility(truth, rng);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i]) {
                cond.known[i] = 1;
                cond.occupancy[i] = truth.occupancy[i];
            }
        }
        const auto a = sample_hypotheses(cond, 3, trained(), s, 99);
        const auto b = sample_hypotheses(cond, 3, trained(), s, 99);
        REQUIRE(a.size() == 3);
        for (int k = 0; k < 3; ++k) {
            CHECK(a[k].occupancy == b[k].occupancy);
            CHECK(a[k].semantics == b[k].semantics);
            for (std::size_t i = 0; i < cond.known.size(); ++i) {
                if (cond.known[i] && a[k].occupancy[i] != cond.occupancy[i]) {
                    FAIL("known cell changed");
                }
            }
            for (double o : a[k].occupancy) {
                CHECK((o == 0.0 || o == 1.0));
            }
        }
    }
}

TEST_CASE("training") {
    const auto s = NoiseSchedule::linear(0.01, 0.45, 10);
    const auto data = corpus(100, 900);
    CHECK(code_of([&] { train_denoiser(std::span(data).first(99), s, 1, 0); }) == ErrorCode::InsufficientData);

    const auto init = train_denoiser(data, s, 0, 8);
    CHECK(init.training_steps == 0);
    CHECK(init.initial_loss > 0.0);
    CHECK(init.weights == DenoiserParams::initialize(8).weights);

    const auto a = train_denoiser(data, s, 20, 8);
    const auto b = train_denoiser(data, s, 20, 8);
    CHECK(a == b);
    CHECK(a.training_steps == 20);

    const auto &t = trained();
    CHECK(t.final_loss < 0.5 * t.initial_loss);
    const auto eval = evaluate_denoiser(corpus(20, 4000), t, s, 12, 1);
    CHECK(eval.model_mse < eval.baseline_mse);
}

TEST_CASE("gradient matches finite differences") {
    auto params = DenoiserParams::initialize(42);
    ConvNet<double> net(params);
    const GridShape shape{5, 4, 3};
    Rng rng(6);
    ConvNet<double>::Matrix input(shape.cells(), kDenoiserInputs), target(shape.cells(), 1);
    for (Eigen::Index i = 0; i < input.size(); ++i) {
        input.data()[i] = uniform(rng, -1, 1);
    }
    for (Eigen::Index i = 0; i < target.size(); ++i) {
        target.data()[i] = uniform(rng, -1, 1);
    }
    std::vector<double> grad;
    net.loss_and_gradient(input, target, shape, grad);
    auto theta = net.flatten();
    REQUIRE(grad.size() == theta.size());
    std::vector<double> scratch;
    for (int probe = 0; probe < 32; ++probe) {
        const auto k = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(theta.size()) - 1));
        const double h = 1e-5;
        auto plus = theta, minus = theta;
        plus[k] += h;
        minus[k] -= h;
        net.unflatten(plus);
        const double lp = net.loss_and_gradient(input, target, shape, scratch);
        net.unflatten(minus);
        const double lm = net.loss_and_gradient(input, target, shape, scratch);
        const double fd = (lp - lm) / (2 * h);
        const double rel = std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-6});
        CHECK(rel <= 1e-4);
    }
    net.unflatten(theta);
}

TEST_CASE("checkpoint and voxel file round trips") {
    const auto dir = std::filesystem::temp_directory_path() / "belief_hyp_test";
    std::filesystem::create_directories(dir);
    const auto &t = trained();
    save_denoiser(dir / "model", t);
    CHECK(load_denoiser(dir / "model") == t);
    CHECK(code_of([&] { load_denoiser(dir / "absent"); }) == ErrorCode::IoError);

    const World w = generate_world(3);
    const auto v = ground_truth_voxels(w, world_voxel_spec(w));
    save_voxels(dir / "grid.vox", v);
    const auto back = load_voxels(dir / "grid.vox");
    CHECK(back.occupancy == v.occupancy);
    CHECK(back.semantics == v.semantics);
    CHECK(back.known == v.known);
    CHECK(back.spec.nx == v.spec.nx);
}

TEST_CASE("component labeling uses the class head") {
    const auto &t = trained();
    REQUIRE_FALSE(t.class_head.empty());
    const World w = generate_world(12);
    auto v = ground_truth_voxels(w, world_voxel_spec(w));
    std::fill(v.known.begin(), v.known.end(), 0);
    std::fill(v.semantics.begin(), v.semantics.end(), 0);
    label_components(v, t.class_head);
    for (std::size_t i = 0; i < v.occupancy.size(); ++i) {
        if (v.occupancy[i] >= 0.5) {
            CHECK(v.semantics[i] > 0);
        } else {
            CHECK(v.semantics[i] == 0);
        }
    }
    for (int z = 0, x = 0; x < v.spec.nx; ++x) {
        for (int y = 0; y < v.spec.ny; ++y) {
            const auto i = v.spec.index(x, y, z);
            if (v.occupancy[i] >= 0.5) {
                CHECK(v.semantics[i] == kFloorClass);
            }
        }
    }
}
