#pragma once

#include "belief/common.hpp"
#include "belief/image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace belief {

enum class Origin : std::uint8_t { Observed = 0, Imagined = 1 };

/// Pinhole camera. `rotation` maps world to camera coordinates
/// (x right, y down, z forward); pixel (u, v) sits at image-plane coordinate (u, v).
struct CameraPose {
    Vec3 position = Vec3::Zero();
    Mat3 rotation = Mat3::Identity();
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    Vec3 to_camera(const Vec3 &world) const { return rotation * (world - position); }
    Vec3 to_world(const Vec3 &camera) const { return rotation.transpose() * camera + position; }
    /// Camera-frame point at z-depth `depth` along pixel (u, v).
    Vec3 unproject(double u, double v, double depth) const {
        return {depth * (u - cx) / fx, depth * (v - cy) / fy, depth};
    }
    Vec3 forward() const { return rotation.row(2).transpose(); }

    /// Throws InvalidArgument unless rotation is orthonormal (1e-6) and fx, fy > 0.
    void validate() const;
};

/// Egocentric RGB + z-depth + semantic features. validity(u) == 0 implies depth(u) == 0
/// for sensor observations; rendered observations also carry an accumulated-opacity image.
struct Observation {
    ImageD rgb;       // H x W x 3 in [0, 1]
    ImageD depth;     // H x W x 1, metres along the camera z axis, 0 = invalid
    ImageD semantic;  // H x W x d
    Mask validity;    // H x W x 1, 0 / 1
    ImageD alpha;     // H x W x 1, empty for sensor observations
    CameraPose pose;

    Observation() = default;
    Observation(int height, int width, int embed_dim);

    int height() const { return rgb.height(); }
    int width() const { return rgb.width(); }
    int embed_dim() const { return semantic.channels(); }
    std::size_t valid_count() const;
};

struct GaussianPrimitive {
    Vec3 mean = Vec3::Zero();
    Mat3 covariance = Mat3::Identity();
    double opacity = 1.0;
    Vec3 appearance = Vec3::Zero();
    VecX embedding;
    Origin origin = Origin::Observed;
};

inline constexpr double kCovarianceFloor = 1e-8;

/// Validates and normalizes a primitive: symmetric covariance (1e-9), eigenvalues
/// clamped to kCovarianceFloor, opacity and appearance clamped to [0, 1], embedding
/// rescaled to unit norm.
GaussianPrimitive make_primitive(const Vec3 &mean, const Mat3 &covariance, double opacity,
                                 const Vec3 &appearance, const VecX &embedding, Origin origin);

struct SceneBelief {
    std::vector<GaussianPrimitive> primitives;
    std::uint64_t step = 0;
    std::uint32_t hypothesis_id = 0;
    std::uint64_t rng_seed = 0;

    std::size_t count(Origin origin) const;
};

struct Partition {
    std::vector<GaussianPrimitive> observed;
    std::vector<GaussianPrimitive> imagined;
};

Partition partition(const SceneBelief &belief);

struct IncorporateOptions {
    int stride = 1;
    double dedup_cell = 0.10;
};

/// Lifts every stride-th valid pixel into an Observed primitive unless an Observed
/// primitive already occupies its dedup voxel, drops all Imagined primitives and
/// advances the step counter.
SceneBelief incorporate_observation(const SceneBelief &belief, const Observation &obs,
                                    const IncorporateOptions &options = {});

SceneBelief replace_imagination(const SceneBelief &belief, std::span<const GaussianPrimitive> imagined);

/// Median of sensed / predicted over pixels valid in the mask, the sensed image and
/// with predicted > 1e-6.
double align_depth_scale(const ImageD &predicted, const ImageD &sensed, const Mask &mask);

// Scene files: "3DBF" | version u32 | count u32 | embed_dim u32, then per primitive
// f64 LE mean[3], cov[6] (xx xy xz yy yz zz), opacity, rgb[3], embedding[d], origin u8.
inline constexpr std::uint32_t kSceneFileVersion = 1;

void save_scene(const std::filesystem::path &path, const SceneBelief &belief);
SceneBelief load_scene(const std::filesystem::path &path);
void export_scene_text(const std::filesystem::path &path, const SceneBelief &belief);

} // namespace belief
