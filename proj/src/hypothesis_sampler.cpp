#include "belief/hypothesis_sampler.hpp"

#include "belief/binary_io.hpp"
#include "belief/parallel.hpp"
#include "belief/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <unordered_map>

namespace belief {

namespace {

constexpr double kCarveMargin = 0.15;

using MatrixF = ConvNet<float>::Matrix;

struct TrainingSample {
    MatrixF input;
    MatrixF target;
    GridShape shape;
    std::vector<std::uint8_t> known;
};

std::vector<std::vector<std::size_t>> components(const GridShape &shape, const std::vector<std::uint8_t> &member) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::uint8_t> seen(member.size(), 0);
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < member.size(); ++start) {
        if (!member[start] || seen[start]) {
            continue;
        }
        std::vector<std::size_t> comp;
        stack.assign(1, start);
        seen[start] = 1;
        while (!stack.empty()) {
            const std::size_t c = stack.back();
            stack.pop_back();
            comp.push_back(c);
            const int x = static_cast<int>(c % shape.nx);
            const int y = static_cast<int>((c / shape.nx) % shape.ny);
            const int z = static_cast<int>(c / (static_cast<std::size_t>(shape.nx) * shape.ny));
            const int nbr[6][3] = {{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z}, {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}};
            for (const auto &n : nbr) {
                if (n[0] < 0 || n[1] < 0 || n[2] < 0 || n[0] >= shape.nx || n[1] >= shape.ny || n[2] >= shape.nz) {
                    continue;
                }
                const std::size_t ni = shape.index(n[0], n[1], n[2]);
                if (member[ni] && !seen[ni]) {
                    seen[ni] = 1;
                    stack.push_back(ni);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
    }
    return out;
}

VoxelBelief crop(const VoxelBelief &v, int x0, int y0, int w, int h) {
    VoxelGridSpec spec = v.spec;
    spec.nx = w;
    spec.ny = h;
    spec.origin += Vec3(x0 * spec.cell, y0 * spec.cell, 0.0);
    VoxelBelief out = VoxelBelief::unknown(spec);
    for (int z = 0; z < spec.nz; ++z) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t src = v.spec.index(x0 + x, y0 + y, z);
                const std::size_t dst = spec.index(x, y, z);
                out.occupancy[dst] = v.occupancy[src];
                out.semantics[dst] = v.semantics[src];
                out.known[dst] = v.known[src];
            }
        }
    }
    return out;
}

// Random crop with a simulated visibility mask stored in `known`.
VoxelBelief masked_crop(const VoxelBelief &truth, Rng &rng, int size) {
    VoxelBelief masked = truth;
    masked.known = simulate_visibility(truth, rng);
    const int w = std::min(size, truth.spec.nx);
    const int h = std::min(size, truth.spec.ny);
    const int x0 = std::uniform_int_distribution<int>(0, truth.spec.nx - w)(rng);
    const int y0 = std::uniform_int_distribution<int>(0, truth.spec.ny - h)(rng);
    return crop(masked, x0, y0, w, h);
}

void fill_features(MatrixF &input, std::span<const double> x, std::span<const double> cond,
                   std::span<const std::uint8_t> known, double sigma) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        input(r, 0) = static_cast<float>(known[i] ? cond[i] : x[i]);
        input(r, 1) = static_cast<float>(known[i] ? cond[i] : 0.0);
        input(r, 2) = known[i] ? 1.0f : 0.0f;
        input(r, 3) = static_cast<float>(sigma);
    }
}

TrainingSample make_sample(const VoxelBelief &truth, Rng &rng, int size, const NoiseSchedule &schedule) {
    const VoxelBelief c = masked_crop(truth, rng, size);
    TrainingSample s;
    s.shape = c.spec.shape();
    s.known = c.known;
    const std::size_t n = s.shape.cells();
    const int tau = std::uniform_int_distribution<int>(1, schedule.steps())(rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x0(n), noise(n);
    for (std::size_t i = 0; i < n; ++i) {
        x0[i] = 2.0 * c.occupancy[i] - 1.0;
        noise[i] = normal(rng);
    }
    const auto xt = forward_noise(x0, tau, noise, schedule);
    s.input.resize(static_cast<Eigen::Index>(n), kDenoiserInputs);
    fill_features(s.input, xt, x0, s.known, schedule.sigma(tau));
    s.target.resize(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) {
        s.target(static_cast<Eigen::Index>(i), 0) = static_cast<float>(x0[i]);
    }
    return s;
}

std::vector<TrainingSample> make_batch(std::span<const VoxelBelief> worlds, Rng &rng, int count, int size,
                                       const NoiseSchedule &schedule) {
    std::vector<TrainingSample> out;
    out.reserve(static_cast<std::size_t>(count));
    std::uniform_int_distribution<std::size_t> pick(0, worlds.size() - 1);
    for (int i = 0; i < count; ++i) {
        out.push_back(make_sample(worlds[pick(rng)], rng, size, schedule));
    }
    return out;
}

double batch_loss(ConvNet<float> &net, const std::vector<TrainingSample> &batch) {
    double sum = 0.0;
    for (const auto &s : batch) {
        const MatrixF out = net.forward(s.input, s.shape);
        sum += static_cast<double>((out - s.target).squaredNorm()) / static_cast<double>(out.size());
    }
    return batch.empty() ? 0.0 : sum / static_cast<double>(batch.size());
}

} // namespace

std::optional<std::array<int, 3>> VoxelGridSpec::locate(const Vec3 &p) const {
    const Vec3 r = (p - origin) / cell;
    const std::array<int, 3> idx = {static_cast<int>(std::floor(r.x())), static_cast<int>(std::floor(r.y())),
                                    static_cast<int>(std::floor(r.z()))};
    if (idx[0] < 0 || idx[1] < 0 || idx[2] < 0 || idx[0] >= nx || idx[1] >= ny || idx[2] >= nz) {
        return std::nullopt;
    }
    return idx;
}

VoxelBelief VoxelBelief::unknown(const VoxelGridSpec &spec) {
    if (spec.nx < 1 || spec.ny < 1 || spec.nz < 1 || !(spec.cell > 0.0)) {
        throw Error(ErrorCode::EmptyGrid, "voxel grid has no cells");
    }
    VoxelBelief v;
    v.spec = spec;
    v.occupancy.assign(spec.cells(), 0.5);
    v.semantics.assign(spec.cells(), 0);
    v.known.assign(spec.cells(), 0);
    return v;
}

std::size_t VoxelBelief::known_count() const {
    return static_cast<std::size_t>(std::count(known.begin(), known.end(), std::uint8_t{1}));
}

void carve_rays(const VoxelGridSpec &spec, std::span<const RaySegment> rays, std::vector<std::uint8_t> &carved) {
    if (spec.cells() == 0) {
        throw Error(ErrorCode::EmptyGrid, "voxel grid has no cells");
    }
    carved.resize(spec.cells(), 0);
    // Layers whose span contains z = 0 hold the floor surface itself.
    const int groundLayer = static_cast<int>(std::floor((0.0 - spec.origin.z()) / spec.cell));
    for (const auto &ray : rays) {
        const Vec3 d = ray.to - ray.from;
        const double len = d.norm() - kCarveMargin;
        if (len <= 0.0) {
            continue;
        }
        const Vec3 dir = d.normalized();
        // Amanatides-Woo traversal in lattice coordinates.
        const Vec3 start = (ray.from - spec.origin) / spec.cell;
        const double tMax = len / spec.cell;
        int ix = static_cast<int>(std::floor(start.x()));
        int iy = static_cast<int>(std::floor(start.y()));
        int iz = static_cast<int>(std::floor(start.z()));
        int step[3];
        double next[3], delta[3];
        const int cellIdx[3] = {ix, iy, iz};
        for (int a = 0; a < 3; ++a) {
            if (dir[a] > 0) {
                step[a] = 1;
                next[a] = (cellIdx[a] + 1 - start[a]) / dir[a];
                delta[a] = 1.0 / dir[a];
            } else if (dir[a] < 0) {
                step[a] = -1;
                next[a] = (cellIdx[a] - start[a]) / dir[a];
                delta[a] = -1.0 / dir[a];
            } else {
                step[a] = 0;
                next[a] = std::numeric_limits<double>::infinity();
                delta[a] = std::numeric_limits<double>::infinity();
            }
        }
        double t = 0.0;
        while (t <= tMax) {
            if (ix >= 0 && iy >= 0 && iz >= 0 && ix < spec.nx && iy < spec.ny && iz < spec.nz && iz != groundLayer) {
                carved[spec.index(ix, iy, iz)] = 1;
            }
            const int a = next[0] < next[1] ? (next[0] < next[2] ? 0 : 2) : (next[1] < next[2] ? 1 : 2);
            t = next[a];
            next[a] += delta[a];
            if (a == 0) {
                ix += step[0];
            } else if (a == 1) {
                iy += step[1];
            } else {
                iz += step[2];
            }
        }
    }
}

VoxelBelief rasterize_observed(std::span<const GaussianPrimitive> observed, const VoxelGridSpec &spec,
                               std::span<const RaySegment> rays, const EmbeddingProvider *provider) {
    std::vector<std::uint8_t> carved;
    carve_rays(spec, rays, carved);
    return rasterize_observed(observed, spec, carved, provider);
}

VoxelBelief rasterize_observed(std::span<const GaussianPrimitive> observed, const VoxelGridSpec &spec,
                               const std::vector<std::uint8_t> &carved, const EmbeddingProvider *provider) {
    VoxelBelief v = VoxelBelief::unknown(spec);
    if (carved.size() == spec.cells()) {
        for (std::size_t i = 0; i < carved.size(); ++i) {
            if (carved[i]) {
                v.known[i] = 1;
                v.occupancy[i] = 0.0;
            }
        }
    }
    std::vector<VecX> classEmbeddings;
    if (provider) {
        for (int id = 1; id < kNumClasses; ++id) {
            classEmbeddings.push_back(provider->embed(class_name(id)));
        }
    }
    std::unordered_map<std::size_t, std::array<int, kNumClasses>> votes;
    for (const auto &g : observed) {
        const auto idx = spec.locate(g.mean);
        if (!idx) {
            ++v.dropped;
            continue;
        }
        const std::size_t i = spec.index((*idx)[0], (*idx)[1], (*idx)[2]);
        v.known[i] = 1;
        v.occupancy[i] = 1.0;
        if (provider && g.embedding.size() == provider->dim()) {
            int best = 0;
            double bestCos = 0.6;
            for (int id = 1; id < kNumClasses; ++id) {
                const double c = classEmbeddings[static_cast<std::size_t>(id - 1)].dot(g.embedding);
                if (c >= bestCos) {
                    bestCos = c;
                    best = id;
                }
            }
            if (best > 0) {
                ++votes[i][static_cast<std::size_t>(best)];
            }
        }
    }
    for (const auto &[cell, counts] : votes) {
        v.semantics[cell] = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
    return v;
}

std::array<double, ClassHead::kDescriptorDim> component_descriptor(const VoxelGridSpec &spec,
                                                                   std::span<const std::size_t> cells) {
    int minX = spec.nx, maxX = -1, minY = spec.ny, maxY = -1, minZ = spec.nz, maxZ = -1;
    std::vector<std::size_t> columns;
    columns.reserve(cells.size());
    const std::size_t layer = static_cast<std::size_t>(spec.nx) * spec.ny;
    for (std::size_t c : cells) {
        const int x = static_cast<int>(c % spec.nx);
        const int y = static_cast<int>((c / spec.nx) % spec.ny);
        const int z = static_cast<int>(c / layer);
        minX = std::min(minX, x);
        maxX = std::max(maxX, x);
        minY = std::min(minY, y);
        maxY = std::max(maxY, y);
        minZ = std::min(minZ, z);
        maxZ = std::max(maxZ, z);
        columns.push_back(c % layer);
    }
    std::sort(columns.begin(), columns.end());
    columns.erase(std::unique(columns.begin(), columns.end()), columns.end());
    const double w = maxX - minX + 1;
    const double h = maxY - minY + 1;
    const double d = maxZ - minZ + 1;
    return {std::log1p(static_cast<double>(columns.size())), static_cast<double>(minZ), static_cast<double>(maxZ),
            std::min(6.0, std::max(w, h) / std::min(w, h)), static_cast<double>(cells.size()) / (w * h * d)};
}

void label_components(VoxelBelief &voxels, const ClassHead &head) {
    const auto &spec = voxels.spec;
    const GridShape shape = spec.shape();
    const std::size_t layer = static_cast<std::size_t>(spec.nx) * spec.ny;
    std::vector<std::uint8_t> member(voxels.occupancy.size(), 0);
    for (std::size_t i = 0; i < member.size(); ++i) {
        if (voxels.known[i] || voxels.occupancy[i] < 0.5) {
            if (!voxels.known[i]) {
                voxels.semantics[i] = 0;
            }
            continue;
        }
        if (i < layer) {
            voxels.semantics[i] = kFloorClass;
        } else {
            member[i] = 1;
        }
    }
    for (const auto &comp : components(shape, member)) {
        const int cls = head.empty() ? kWallClass : head.classify(component_descriptor(spec, comp));
        for (std::size_t c : comp) {
            voxels.semantics[c] = cls == 0 ? kWallClass : cls;
        }
    }
}

std::vector<VoxelBelief> sample_hypotheses(const VoxelBelief &conditioned, int K, const DenoiserParams &denoiser,
                                           const NoiseSchedule &schedule, std::uint64_t seed) {
    if (K < 1) {
        throw Error(ErrorCode::InvalidArgument, "K must be at least 1");
    }
    if (!denoiser.trained()) {
        throw Error(ErrorCode::UntrainedDenoiser, "denoiser has not been trained");
    }
    const std::size_t n = conditioned.spec.cells();
    if (n == 0 || conditioned.occupancy.size() != n) {
        throw Error(ErrorCode::EmptyGrid, "conditioned grid is empty or inconsistent");
    }
    const GridShape shape = conditioned.spec.shape();
    std::vector<double> cond(n);
    for (std::size_t i = 0; i < n; ++i) {
        cond[i] = conditioned.known[i] ? 2.0 * conditioned.occupancy[i] - 1.0 : 0.0;
    }

    std::vector<VoxelBelief> out(static_cast<std::size_t>(K));
    parallel_for(out.size(), [&](std::size_t k) {
        Rng rng(derive_seed(seed, k));
        std::normal_distribution<double> normal(0.0, 1.0);
        ConvNet<float> net(denoiser);
        std::vector<double> x(n), noise(n), x0(n);
        for (double &v : x) {
            v = normal(rng);
        }
        MatrixF input(static_cast<Eigen::Index>(n), kDenoiserInputs);
        for (int tau = schedule.steps(); tau >= 1; --tau) {
            for (std::size_t i = 0; i < n; ++i) {
                if (conditioned.known[i]) {
                    x[i] = cond[i];
                }
            }
            fill_features(input, x, cond, conditioned.known, schedule.sigma(tau));
            const MatrixF pred = net.forward(input, shape);
            for (std::size_t i = 0; i < n; ++i) {
                x0[i] = std::clamp(static_cast<double>(pred(static_cast<Eigen::Index>(i), 0)), -1.0, 1.0);
            }
            if (tau > 1) {
                for (double &v : noise) {
                    v = normal(rng);
                }
            }
            x = reverse_step(x, x0, tau, schedule, noise);
        }
        VoxelBelief &h = out[k];
        h.spec = conditioned.spec;
        h.occupancy.resize(n);
        h.semantics.assign(n, 0);
        h.known = conditioned.known;
        for (std::size_t i = 0; i < n; ++i) {
            if (conditioned.known[i]) {
                h.occupancy[i] = conditioned.occupancy[i];
                h.semantics[i] = conditioned.semantics[i];
            } else {
                h.occupancy[i] = x[i] > 0.0 ? 1.0 : 0.0;
            }
        }
        label_components(h, denoiser.class_head);
    });
    return out;
}

std::vector<GaussianPrimitive> lift_to_gaussians(const VoxelBelief &voxels, const EmbeddingProvider &provider) {
    std::vector<GaussianPrimitive> out;
    const auto &spec = voxels.spec;
    const Mat3 cov = Mat3::Identity() * (0.25 * spec.cell * spec.cell);
    for (int z = 0; z < spec.nz; ++z) {
        for (int y = 0; y < spec.ny; ++y) {
            for (int x = 0; x < spec.nx; ++x) {
                const std::size_t i = spec.index(x, y, z);
                if (voxels.known[i] || voxels.occupancy[i] < 0.5) {
                    continue;
                }
                const int cls = voxels.semantics[i] > 0 ? voxels.semantics[i] : kWallClass;
                out.push_back(make_primitive(spec.center(x, y, z), cov, 0.8, class_color(cls),
                                             provider.embed(class_name(cls)), Origin::Imagined));
            }
        }
    }
    return out;
}

std::vector<std::uint8_t> simulate_visibility(const VoxelBelief &truth, Rng &rng) {
    const auto &spec = truth.spec;
    std::vector<std::uint8_t> known(spec.cells(), 0);
    const std::size_t layer = static_cast<std::size_t>(spec.nx) * spec.ny;
    const auto blocked = [&](int x, int y) {
        for (int z = 1; z < spec.nz; ++z) {
            if (truth.occupancy[spec.index(x, y, z)] >= 0.5) {
                return true;
            }
        }
        return false;
    };
    std::vector<std::size_t> seats;
    for (std::size_t c = 0; c < layer; ++c) {
        const int x = static_cast<int>(c % spec.nx);
        const int y = static_cast<int>(c / spec.nx);
        if (truth.occupancy[c] >= 0.5 && !blocked(x, y)) {
            seats.push_back(c);
        }
    }
    if (seats.empty()) {
        return known;
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int views = std::uniform_int_distribution<int>(0, 4)(rng);
    for (int v = 0; v < views; ++v) {
        const std::size_t seat = seats[std::uniform_int_distribution<std::size_t>(0, seats.size() - 1)(rng)];
        const double sx = static_cast<double>(seat % spec.nx) + 0.5;
        const double sy = static_cast<double>(seat / spec.nx) + 0.5;
        const double heading = 2.0 * std::numbers::pi * unit(rng);
        const double range = 8.0 / spec.cell * (0.4 + 0.6 * unit(rng));
        constexpr int kRays = 48;
        for (int r = 0; r < kRays; ++r) {
            const double a = heading + (static_cast<double>(r) / (kRays - 1) - 0.5) * std::numbers::pi / 2.0;
            const double dx = std::cos(a), dy = std::sin(a);
            for (double t = 0.0; t < range; t += 0.25) {
                const int x = static_cast<int>(std::floor(sx + t * dx));
                const int y = static_cast<int>(std::floor(sy + t * dy));
                if (x < 0 || y < 0 || x >= spec.nx || y >= spec.ny) {
                    break;
                }
                for (int z = 0; z < spec.nz; ++z) {
                    known[spec.index(x, y, z)] = 1;
                }
                if (blocked(x, y)) {
                    break;
                }
            }
        }
    }
    return known;
}

ClassHead fit_class_head(std::span<const VoxelBelief> worlds, std::uint64_t seed) {
    constexpr int D = ClassHead::kDescriptorDim;
    std::vector<std::array<double, D>> sums(kNumClasses);
    std::vector<int> counts(kNumClasses, 0);
    std::vector<std::array<double, D>> all;
    Rng rng(derive_seed(seed, 0xc1a55));
    for (const auto &world : worlds) {
        const auto &spec = world.spec;
        const auto known = simulate_visibility(world, rng);
        const std::size_t layer = static_cast<std::size_t>(spec.nx) * spec.ny;
        for (int cls = 2; cls < kNumClasses; ++cls) {
            std::vector<std::uint8_t> member(spec.cells(), 0);
            bool any = false;
            for (std::size_t i = layer; i < member.size(); ++i) {
                if (!known[i] && world.semantics[i] == cls && world.occupancy[i] >= 0.5) {
                    member[i] = 1;
                    any = true;
                }
            }
            if (!any) {
                continue;
            }
            for (const auto &comp : components(spec.shape(), member)) {
                const auto d = component_descriptor(spec, comp);
                for (int k = 0; k < D; ++k) {
                    sums[static_cast<std::size_t>(cls)][static_cast<std::size_t>(k)] += d[static_cast<std::size_t>(k)];
                }
                ++counts[static_cast<std::size_t>(cls)];
                all.push_back(d);
            }
        }
    }
    ClassHead head;
    if (all.empty()) {
        return head;
    }
    for (int k = 0; k < D; ++k) {
        double mean = 0.0, sq = 0.0;
        for (const auto &d : all) {
            mean += d[static_cast<std::size_t>(k)];
        }
        mean /= static_cast<double>(all.size());
        for (const auto &d : all) {
            sq += (d[static_cast<std::size_t>(k)] - mean) * (d[static_cast<std::size_t>(k)] - mean);
        }
        head.scale[static_cast<std::size_t>(k)] = std::max(1e-3, std::sqrt(sq / static_cast<double>(all.size())));
    }
    for (int cls = 0; cls < kNumClasses; ++cls) {
        const int c = counts[static_cast<std::size_t>(cls)];
        if (c == 0) {
            continue;
        }
        std::array<double, D> proto{};
        for (int k = 0; k < D; ++k) {
            proto[static_cast<std::size_t>(k)] = sums[static_cast<std::size_t>(cls)][static_cast<std::size_t>(k)] / c;
        }
        head.classes.push_back(cls);
        head.prototypes.push_back(proto);
    }
    return head;
}

DenoiserParams train_denoiser(std::span<const VoxelBelief> worlds, const NoiseSchedule &schedule, int steps,
                              std::uint64_t seed, const TrainOptions &options) {
    if (worlds.size() < 100) {
        throw Error(ErrorCode::InsufficientData, "training needs at least 100 grids, got " +
                                                     std::to_string(worlds.size()));
    }
    if (steps < 0 || options.batch < 1 || options.crop < 1) {
        throw Error(ErrorCode::InvalidArgument, "invalid training options");
    }
    DenoiserParams params = DenoiserParams::initialize(seed);
    params.class_head = fit_class_head(worlds, seed);
    ConvNet<float> net(params);

    Rng evalRng(derive_seed(seed, 0xe7a1));
    const auto evalBatch = make_batch(worlds, evalRng, options.eval_samples, options.crop, schedule);
    params.initial_loss = batch_loss(net, evalBatch);

    std::vector<float> theta = net.flatten();
    std::vector<float> m(theta.size(), 0.0f), v(theta.size(), 0.0f), grad, accum(theta.size());
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Rng rng(derive_seed(seed, 0x7a1));
    for (int step = 1; step <= steps; ++step) {
        std::fill(accum.begin(), accum.end(), 0.0f);
        const auto batch = make_batch(worlds, rng, options.batch, options.crop, schedule);
        for (const auto &s : batch) {
            net.loss_and_gradient(s.input, s.target, s.shape, grad);
            for (std::size_t i = 0; i < grad.size(); ++i) {
                accum[i] += grad[i] / static_cast<float>(batch.size());
            }
        }
        // Cosine decay to 10% of the base rate.
        const double progress = static_cast<double>(step - 1) / std::max(1, steps);
        const double lr = options.learning_rate * (0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * progress)));
        const double c1 = 1.0 - std::pow(b1, step);
        const double c2 = 1.0 - std::pow(b2, step);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * accum[i]);
            v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * accum[i] * accum[i]);
            theta[i] -= static_cast<float>(lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps));
        }
        net.unflatten(theta);
    }
    net.store(params);
    params.training_steps = static_cast<std::uint64_t>(steps);
    params.final_loss = batch_loss(net, evalBatch);
    return params;
}

DenoiseEval evaluate_denoiser(std::span<const VoxelBelief> worlds, const DenoiserParams &denoiser,
                              const NoiseSchedule &schedule, int samples, std::uint64_t seed, int crop) {
    if (worlds.empty()) {
        throw Error(ErrorCode::InsufficientData, "no evaluation grids");
    }
    Rng rng(derive_seed(seed, 0xe1a1));
    const auto batch = make_batch(worlds, rng, samples, crop, schedule);
    ConvNet<float> net(denoiser);
    double model = 0.0, baseline = 0.0;
    std::size_t count = 0;
    for (const auto &s : batch) {
        const MatrixF out = net.forward(s.input, s.shape);
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            if (s.known[static_cast<std::size_t>(i)]) {
                continue;
            }
            const double truth = (s.target(i, 0) + 1.0) / 2.0;
            const double pred = (std::clamp(static_cast<double>(out(i, 0)), -1.0, 1.0) + 1.0) / 2.0;
            model += (pred - truth) * (pred - truth);
            baseline += (0.5 - truth) * (0.5 - truth);
            ++count;
        }
    }
    if (count == 0) {
        return {};
    }
    return {model / static_cast<double>(count), baseline / static_cast<double>(count)};
}

void save_voxels(const std::filesystem::path &path, const VoxelBelief &voxels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    const auto &s = voxels.spec;
    io::put_u32(out, static_cast<std::uint32_t>(s.nz));
    io::put_u32(out, static_cast<std::uint32_t>(s.ny));
    io::put_u32(out, static_cast<std::uint32_t>(s.nx));
    io::put_u32(out, 3);
    io::put_f32(out, static_cast<float>(s.origin.x()));
    io::put_f32(out, static_cast<float>(s.origin.y()));
    io::put_f32(out, static_cast<float>(s.origin.z()));
    io::put_f32(out, static_cast<float>(s.cell));
    for (std::size_t i = 0; i < voxels.occupancy.size(); ++i) {
        io::put_f32(out, static_cast<float>(voxels.occupancy[i]));
        io::put_f32(out, static_cast<float>(voxels.semantics[i]));
        io::put_f32(out, static_cast<float>(voxels.known[i]));
    }
    if (!out) {
        throw Error(ErrorCode::IoError, "write failed for " + path.string());
    }
}

VoxelBelief load_voxels(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot read " + path.string());
    }
    VoxelGridSpec spec;
    spec.nz = static_cast<int>(io::get_u32(in));
    spec.ny = static_cast<int>(io::get_u32(in));
    spec.nx = static_cast<int>(io::get_u32(in));
    if (io::get_u32(in) != 3) {
        throw Error(ErrorCode::FormatError, "voxel file must carry 3 channels");
    }
    const double ox = io::get_f32(in), oy = io::get_f32(in), oz = io::get_f32(in);
    spec.origin = Vec3(ox, oy, oz);
    spec.cell = io::get_f32(in);
    VoxelBelief v = VoxelBelief::unknown(spec);
    for (std::size_t i = 0; i < v.occupancy.size(); ++i) {
        v.occupancy[i] = io::get_f32(in);
        v.semantics[i] = static_cast<int>(io::get_f32(in));
        v.known[i] = io::get_f32(in) != 0.0f ? 1 : 0;
    }
    if (!in) {
        throw Error(ErrorCode::FormatError, "truncated voxel file " + path.string());
    }
    return v;
}

} // namespace belief
