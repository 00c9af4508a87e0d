#pragma once

#include "belief/denoiser.hpp"
#include "belief/diffusion.hpp"
#include "belief/scene_belief.hpp"
#include "belief/semantic_field.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace belief {

/// Axis-aligned voxel lattice. Cell (ix, iy, iz) spans
/// origin + cell * [ix, ix+1) x [iy, iy+1) x [iz, iz+1).
struct VoxelGridSpec {
    Vec3 origin{0.0, 0.0, -0.125};
    double cell = 0.25;
    int nx = 0;
    int ny = 0;
    int nz = 4;

    GridShape shape() const { return {nx, ny, nz}; }
    std::size_t cells() const { return shape().cells(); }
    std::size_t index(int x, int y, int z) const { return shape().index(x, y, z); }
    Vec3 center(int x, int y, int z) const {
        return origin + cell * Vec3(x + 0.5, y + 0.5, z + 0.5);
    }
    std::optional<std::array<int, 3>> locate(const Vec3 &p) const;
    bool operator==(const VoxelGridSpec &) const = default;
};

/// Free space traversed by one sensor ray, camera to surface hit (or max range).
struct RaySegment {
    Vec3 from = Vec3::Zero();
    Vec3 to = Vec3::Zero();
};

struct VoxelBelief {
    VoxelGridSpec spec;
    std::vector<double> occupancy;    // [0, 1]
    std::vector<int> semantics;       // class id, 0 = none
    std::vector<std::uint8_t> known;  // 1 = constrained by observation
    std::size_t dropped = 0;          // primitives outside the lattice

    /// All cells unknown at occupancy 0.5.
    static VoxelBelief unknown(const VoxelGridSpec &spec);
    std::size_t known_count() const;
};

/// Marks cells traversed by the rays as free in `carved` (size spec.cells()).
/// Each ray stops 0.15 m short of its end point, and cells whose vertical span
/// contains the ground plane are never carved.
void carve_rays(const VoxelGridSpec &spec, std::span<const RaySegment> rays, std::vector<std::uint8_t> &carved);

/// Occupancy and known mask from observed primitive means and carved ray segments.
/// Semantic labels of occupied cells come from the majority class of their
/// primitives when a provider is given.
VoxelBelief rasterize_observed(std::span<const GaussianPrimitive> observed, const VoxelGridSpec &spec,
                               std::span<const RaySegment> rays = {},
                               const EmbeddingProvider *provider = nullptr);
/// Same, with free space already accumulated by carve_rays.
VoxelBelief rasterize_observed(std::span<const GaussianPrimitive> observed, const VoxelGridSpec &spec,
                               const std::vector<std::uint8_t> &carved, const EmbeddingProvider *provider);

/// K reverse-diffusion completions with known cells clamped at every step,
/// binarized at 0.5 and labeled per connected component.
std::vector<VoxelBelief> sample_hypotheses(const VoxelBelief &conditioned, int K, const DenoiserParams &denoiser,
                                           const NoiseSchedule &schedule, std::uint64_t seed);

/// One Imagined primitive per occupied, unknown cell.
std::vector<GaussianPrimitive> lift_to_gaussians(const VoxelBelief &voxels, const EmbeddingProvider &provider);

struct TrainOptions {
    int crop = 16;
    int batch = 4;
    double learning_rate = 3e-3;
    int eval_samples = 24;
};

/// Fits the denoiser to predict clean occupancy (in {-1, +1} space) from noised
/// grids with randomly masked known regions. initial_loss / final_loss are measured
/// on a fixed held-out batch drawn from the same corpus.
DenoiserParams train_denoiser(std::span<const VoxelBelief> worlds, const NoiseSchedule &schedule, int steps,
                              std::uint64_t seed, const TrainOptions &options = {});

/// Mean squared x0 error (in occupancy units) of the denoiser on a reproducible
/// corruption batch, alongside the constant-0.5 baseline.
struct DenoiseEval {
    double model_mse = 0.0;
    double baseline_mse = 0.0;
};
DenoiseEval evaluate_denoiser(std::span<const VoxelBelief> worlds, const DenoiserParams &denoiser,
                              const NoiseSchedule &schedule, int samples, std::uint64_t seed, int crop = 16);

/// Random visibility mask from 2D ray wedges cast through layers >= 1.
std::vector<std::uint8_t> simulate_visibility(const VoxelBelief &truth, Rng &rng);

/// Component shape descriptor used by the class head.
/// {log(1 + footprint columns), bottom layer, top layer, xy elongation, bbox fill}.
std::array<double, ClassHead::kDescriptorDim> component_descriptor(const VoxelGridSpec &spec,
                                                                   std::span<const std::size_t> cells);

/// Fits class prototypes on per-class connected components of the unseen part of
/// ground-truth grids under simulated visibility.
ClassHead fit_class_head(std::span<const VoxelBelief> worlds, std::uint64_t seed);

/// Labels occupied unknown cells: ground layer as floor, other 6-connected
/// components by the class head.
void label_components(VoxelBelief &voxels, const ClassHead &head);

/// Voxel grid file: header {nz, ny, nx, 3} u32, origin xyz and cell as f32, then
/// float32 LE (occupancy, semantics, known) per cell.
void save_voxels(const std::filesystem::path &path, const VoxelBelief &voxels);
VoxelBelief load_voxels(const std::filesystem::path &path);

} // namespace belief
