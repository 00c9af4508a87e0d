#include "belief/scene_belief.hpp"

#include "belief/binary_io.hpp"

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

namespace belief {

void CameraPose::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "focal lengths must be positive");
    }
    if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
        throw Error(ErrorCode::InvalidArgument, "camera rotation is not orthonormal");
    }
    if (width <= 0 || height <= 0) {
        throw Error(ErrorCode::InvalidArgument, "camera image size must be positive");
    }
}

Observation::Observation(int height, int width, int embed_dim)
    : rgb(height, width, 3), depth(height, width, 1), semantic(height, width, embed_dim),
      validity(height, width, 1) {}

std::size_t Observation::valid_count() const {
    return static_cast<std::size_t>(std::count(validity.data().begin(), validity.data().end(), 1));
}

GaussianPrimitive make_primitive(const Vec3 &mean, const Mat3 &covariance, double opacity,
                                 const Vec3 &appearance, const VecX &embedding, Origin origin) {
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
        throw Error(ErrorCode::NonSymmetricCovariance, "covariance differs from its transpose");
    }
    if (!(opacity >= -1e-9 && opacity <= 1.0 + 1e-9)) {
        throw Error(ErrorCode::OpacityOutOfRange, "opacity " + std::to_string(opacity));
    }
    const double norm = embedding.norm();
    if (embedding.size() == 0 || !(norm > 0.0) || !std::isfinite(norm)) {
        throw Error(ErrorCode::InvalidEmbedding, "embedding must be finite and non-zero");
    }

    GaussianPrimitive g;
    g.mean = mean;
    const Mat3 sym = 0.5 * (covariance + covariance.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> eig(sym);
    const Vec3 values = eig.eigenvalues();
    if (values.minCoeff() < kCovarianceFloor) {
        const Vec3 clamped = values.cwiseMax(kCovarianceFloor);
        const Mat3 rebuilt = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
        g.covariance = 0.5 * (rebuilt + rebuilt.transpose());
    } else {
        g.covariance = sym;
    }
    g.opacity = std::clamp(opacity, 0.0, 1.0);
    g.appearance = appearance.cwiseMax(0.0).cwiseMin(1.0);
    g.embedding = embedding / norm;
    g.origin = origin;
    return g;
}

std::size_t SceneBelief::count(Origin origin) const {
    return static_cast<std::size_t>(std::count_if(primitives.begin(), primitives.end(),
                                                  [origin](const auto &g) { return g.origin == origin; }));
}

Partition partition(const SceneBelief &belief) {
    Partition out;
    for (const auto &g : belief.primitives) {
        (g.origin == Origin::Observed ? out.observed : out.imagined).push_back(g);
    }
    return out;
}

namespace {

std::uint64_t voxel_key(const Vec3 &p, double cell) {
    // 21 bits per axis, offset so negative coordinates stay distinct.
    constexpr std::int64_t kOffset = 1 << 20;
    const auto q = [&](double v) {
        return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(v / cell)) + kOffset) & 0x1fffffULL;
    };
    return (q(p.x()) << 42) | (q(p.y()) << 21) | q(p.z());
}

} // namespace

SceneBelief incorporate_observation(const SceneBelief &belief, const Observation &obs,
                                    const IncorporateOptions &options) {
    if (options.stride < 1) {
        throw Error(ErrorCode::InvalidArgument, "stride must be >= 1");
    }
    if (obs.valid_count() == 0) {
        throw Error(ErrorCode::EmptyObservation, "observation has no valid pixels");
    }
    if (!obs.depth.same_extent(obs.height(), obs.width()) || !obs.validity.same_extent(obs.height(), obs.width()) ||
        !obs.semantic.same_extent(obs.height(), obs.width())) {
        throw Error(ErrorCode::ShapeMismatch, "observation images disagree in size");
    }

    SceneBelief next;
    next.step = belief.step + 1;
    next.hypothesis_id = belief.hypothesis_id;
    next.rng_seed = belief.rng_seed;

    std::unordered_set<std::uint64_t> occupied;
    for (const auto &g : belief.primitives) {
        if (g.origin == Origin::Observed) {
            next.primitives.push_back(g);
            occupied.insert(voxel_key(g.mean, options.dedup_cell));
        }
    }

    const auto &pose = obs.pose;
    const int d = obs.embed_dim();
    VecX feature(d);
    for (int v = 0; v < obs.height(); v += options.stride) {
        for (int u = 0; u < obs.width(); u += options.stride) {
            const double depth = obs.depth(v, u);
            if (!obs.validity(v, u) || !(depth > 0.0)) {
                continue;
            }
            const Vec3 world = pose.to_world(pose.unproject(u, v, depth));
            const auto key = voxel_key(world, options.dedup_cell);
            if (occupied.contains(key)) {
                continue;
            }
            for (int c = 0; c < d; ++c) {
                feature[c] = obs.semantic(v, u, c);
            }
            if (!(feature.norm() > 0.0)) {
                continue;
            }
            const double sigma = 0.5 * depth * (options.stride / pose.fx);
            const Vec3 color(obs.rgb(v, u, 0), obs.rgb(v, u, 1), obs.rgb(v, u, 2));
            next.primitives.push_back(
                make_primitive(world, Mat3::Identity() * sigma * sigma, 1.0, color, feature, Origin::Observed));
            occupied.insert(key);
        }
    }
    return next;
}

SceneBelief replace_imagination(const SceneBelief &belief, std::span<const GaussianPrimitive> imagined) {
    for (const auto &g : imagined) {
        if (g.origin != Origin::Imagined) {
            throw Error(ErrorCode::OriginMismatch, "replacement contains an Observed primitive");
        }
    }
    SceneBelief next;
    next.step = belief.step;
    next.hypothesis_id = belief.hypothesis_id;
    next.rng_seed = belief.rng_seed;
    next.primitives.reserve(belief.primitives.size() + imagined.size());
    for (const auto &g : belief.primitives) {
        if (g.origin == Origin::Observed) {
            next.primitives.push_back(g);
        }
    }
    next.primitives.insert(next.primitives.end(), imagined.begin(), imagined.end());
    return next;
}

double align_depth_scale(const ImageD &predicted, const ImageD &sensed, const Mask &mask) {
    if (!predicted.same_shape(sensed) || !mask.same_extent(predicted.height(), predicted.width())) {
        throw Error(ErrorCode::ShapeMismatch, "depth images and mask must share a shape");
    }
    std::vector<double> ratios;
    for (int y = 0; y < predicted.height(); ++y) {
        for (int x = 0; x < predicted.width(); ++x) {
            const double p = predicted(y, x);
            const double s = sensed(y, x);
            if (mask(y, x) && p > 1e-6 && s > 0.0) {
                ratios.push_back(s / p);
            }
        }
    }
    if (ratios.empty()) {
        throw Error(ErrorCode::NoValidOverlap, "no pixel is valid in both depth maps");
    }
    const std::size_t mid = ratios.size() / 2;
    std::nth_element(ratios.begin(), ratios.begin() + static_cast<std::ptrdiff_t>(mid), ratios.end());
    const double upper = ratios[mid];
    if (ratios.size() % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(ratios.begin(), ratios.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

void save_scene(const std::filesystem::path &path, const SceneBelief &belief) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    const std::uint32_t dim =
        belief.primitives.empty() ? 0u : static_cast<std::uint32_t>(belief.primitives.front().embedding.size());
    out.write("3DBF", 4);
    io::put_u32(out, kSceneFileVersion);
    io::put_u32(out, static_cast<std::uint32_t>(belief.primitives.size()));
    io::put_u32(out, dim);
    for (const auto &g : belief.primitives) {
        if (static_cast<std::uint32_t>(g.embedding.size()) != dim) {
            throw Error(ErrorCode::ShapeMismatch, "primitives disagree in embedding dimension");
        }
        for (int i = 0; i < 3; ++i) {
            io::put_f64(out, g.mean[i]);
        }
        const Mat3 &c = g.covariance;
        for (double v : {c(0, 0), c(0, 1), c(0, 2), c(1, 1), c(1, 2), c(2, 2)}) {
            io::put_f64(out, v);
        }
        io::put_f64(out, g.opacity);
        for (int i = 0; i < 3; ++i) {
            io::put_f64(out, g.appearance[i]);
        }
        for (Eigen::Index i = 0; i < g.embedding.size(); ++i) {
            io::put_f64(out, g.embedding[i]);
        }
        out.put(static_cast<char>(g.origin));
    }
    if (!out) {
        throw Error(ErrorCode::IoError, "write failed for " + path.string());
    }
}

SceneBelief load_scene(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    char magic[4];
    if (!in.read(magic, 4) || std::string_view(magic, 4) != "3DBF") {
        throw Error(ErrorCode::FormatError, "bad scene magic in " + path.string());
    }
    const auto version = io::get_u32(in);
    if (version != kSceneFileVersion) {
        throw Error(ErrorCode::FormatError, "unsupported scene version " + std::to_string(version));
    }
    const auto count = io::get_u32(in);
    const auto dim = io::get_u32(in);
    SceneBelief belief;
    belief.primitives.reserve(count);
    for (std::uint32_t k = 0; k < count; ++k) {
        GaussianPrimitive g;
        for (int i = 0; i < 3; ++i) {
            g.mean[i] = io::get_f64(in);
        }
        double c[6];
        for (double &v : c) {
            v = io::get_f64(in);
        }
        g.covariance << c[0], c[1], c[2], c[1], c[3], c[4], c[2], c[4], c[5];
        g.opacity = io::get_f64(in);
        for (int i = 0; i < 3; ++i) {
            g.appearance[i] = io::get_f64(in);
        }
        g.embedding.resize(dim);
        for (std::uint32_t i = 0; i < dim; ++i) {
            g.embedding[i] = io::get_f64(in);
        }
        const int origin = in.get();
        if (origin != 0 && origin != 1) {
            throw Error(ErrorCode::FormatError, "bad origin flag in primitive " + std::to_string(k));
        }
        g.origin = static_cast<Origin>(origin);
        belief.primitives.push_back(std::move(g));
    }
    return belief;
}

void export_scene_text(const std::filesystem::path &path, const SceneBelief &belief) {
    nlohmann::ordered_json doc;
    doc["format"] = "3DBF-text";
    doc["version"] = kSceneFileVersion;
    doc["step"] = belief.step;
    doc["hypothesis_id"] = belief.hypothesis_id;
    doc["rng_seed"] = belief.rng_seed;
    auto &list = doc["primitives"] = nlohmann::ordered_json::array();
    for (const auto &g : belief.primitives) {
        const Mat3 &c = g.covariance;
        list.push_back({
            {"origin", g.origin == Origin::Observed ? "observed" : "imagined"},
            {"mean", {g.mean.x(), g.mean.y(), g.mean.z()}},
            {"cov", {c(0, 0), c(0, 1), c(0, 2), c(1, 1), c(1, 2), c(2, 2)}},
            {"opacity", g.opacity},
            {"rgb", {g.appearance.x(), g.appearance.y(), g.appearance.z()}},
            {"embedding", std::vector<double>(g.embedding.data(), g.embedding.data() + g.embedding.size())},
        });
    }
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    out << doc.dump(1) << '\n';
}

} // namespace belief
