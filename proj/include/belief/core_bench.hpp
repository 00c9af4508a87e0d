#pragma once

#include "belief/denoiser.hpp"
#include "belief/diffusion.hpp"
#include "belief/occupancy_grid.hpp"
#include "belief/scene_belief.hpp"
#include "belief/semantic_field.hpp"
#include "belief/world_sim.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace belief {

enum class TaskKind { ObjectCompletion, RoomCompletion, ObjectPermanence };

const char *to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view name);

inline constexpr std::array<double, 3> kVisibilityLevels = {0.05, 0.55, 0.95};

struct CoreTask {
    TaskKind kind = TaskKind::ObjectCompletion;
    double visibility = 0.0;
    std::uint64_t world_seed = 0;
    WorldConfig world_config;
    int target = -1;  // furniture index, object completion
    int room = -1;    // room index, room completion
    std::vector<CameraPose> observed;    // poses whose sensor readings the model receives
    std::vector<CameraPose> trajectory;  // imagination / revisit poses
    std::vector<Box> occluders;          // extra solids placed for the task

    /// Throws InvalidArgument on an empty trajectory and TrajectoryNotClosed on
    /// an open permanence loop.
    void validate() const;
};

/// Generated world plus the task's occluders.
World task_world(const CoreTask &task);

/// Fraction of the target's in-frame pixels that are not hidden behind another solid.
/// Zero when the target is out of view.
double visible_fraction(const World &world, const CameraPose &pose, int target);

/// Initial pose (and occluder, when needed) whose visible fraction is within 0.05
/// of `visibility`. Throws InvalidVisibility, UnknownTarget, VisibilityUnachievable.
CoreTask gen_object_completion(const World &world, int target, double visibility);
CoreTask gen_room_completion(const World &world, int room);
/// Out-and-back loop from a seeded start; the last pose equals the first.
CoreTask gen_object_permanence(const World &world, std::uint64_t seed);

/// Object completion for every visibility level, room completion for every room
/// and one permanence loop per world, over worlds seed .. seed + worlds - 1.
/// Targets whose visibility search fails are skipped.
std::vector<CoreTask> make_task_set(std::uint64_t seed, int worlds, const WorldConfig &config = {});

void save_task_set(const std::filesystem::path &path, std::span<const CoreTask> tasks);
std::vector<CoreTask> load_task_set(const std::filesystem::path &path);

// Metric primitives.

using VoxelKey = std::array<std::int64_t, 3>;

/// Sorted unique voxel keys of the points at the given cell size.
std::vector<VoxelKey> voxelize(std::span<const Vec3> points, double cell);
double iou_3d(std::span<const Vec3> a, std::span<const Vec3> b, double cell = 0.05);
double bev_iou(std::span<const Vec3> a, std::span<const Vec3> b, double cell = 0.05);
/// Mean distance from each point of a to its nearest point in b.
double directed_chamfer(std::span<const Vec3> a, std::span<const Vec3> b);
/// Mean of both directed means.
double chamfer(std::span<const Vec3> a, std::span<const Vec3> b);
/// Points on the box surface on a lattice of the given spacing.
std::vector<Vec3> box_surface_points(const Box &box, double spacing = 0.05);

struct OccupancyMetrics {
    double occ_acc = 0.0;
    double iou_free = 0.0;
    double iou_occ = 0.0;
    double occ_iou = 0.0;
};
/// Accuracy over cells known in both; per-state IoU treats Unknown as neither
/// state. An empty union scores 1.
OccupancyMetrics occupancy_metrics(const OccupancyGrid &predicted, const OccupancyGrid &truth);

struct ObjectListMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};
/// Multiset match of class ids.
ObjectListMetrics object_list_metrics(std::span<const int> predicted, std::span<const int> truth);

/// Peak value 1, capped at 99 dB.
double psnr(const ImageD &a, const ImageD &b);
/// Mean SSIM over 7x7 windows of the channel-averaged images.
double ssim(const ImageD &a, const ImageD &b);
/// Mean cosine over pixels where either feature is non-zero; 1 when none is.
double embedding_cosine(const ImageD &a, const ImageD &b);
/// Joint 4x4x4 RGB histogram over valid pixels, L1-normalized.
std::vector<double> color_histogram(const ImageD &rgb, const Mask *validity = nullptr);
double histogram_cosine(std::span<const double> a, std::span<const double> b);

inline constexpr double kRecognitionThreshold = 0.8;

struct ObjectCompletionMetrics {
    double bev_iou = 0.0;
    double iou3d = 0.0;
    double chamfer = 0.0;
    double appearance_sim = 0.0;
    bool recognized = false;
};
/// Throws NothingPredicted when no primitive matches the target class near the object.
ObjectCompletionMetrics eval_object_completion(const CoreTask &task, const SceneBelief &predicted,
                                               const EmbeddingProvider &provider);

struct RoomCompletionMetrics {
    double obj_precision = 0.0;
    double obj_recall = 0.0;
    double obj_f1 = 0.0;
    OccupancyMetrics occupancy;
};
RoomCompletionMetrics eval_room_completion(const CoreTask &task, const SceneBelief &predicted,
                                           const EmbeddingProvider &provider);

struct PermanenceMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
    double embed_cos = 0.0;
};

/// A belief-producing model under test.
class CoreModel {
public:
    virtual ~CoreModel() = default;
    virtual std::string name() const = 0;
    virtual SceneBelief update(const SceneBelief &belief, const SensorReading &reading) const = 0;
    /// Belief with the unobserved parts filled in.
    virtual SceneBelief complete(const SceneBelief &belief, const VoxelGridSpec &spec) const = 0;
};

/// Accumulates observations; completes nothing.
class ObservedOnlyModel : public CoreModel {
public:
    explicit ObservedOnlyModel(int stride = 1) : mStride(stride) {}
    std::string name() const override { return "observed"; }
    SceneBelief update(const SceneBelief &belief, const SensorReading &reading) const override;
    SceneBelief complete(const SceneBelief &belief, const VoxelGridSpec &spec) const override;

private:
    int mStride;
};

/// Keeps the first observation and ignores later ones.
class StaticBeliefModel : public ObservedOnlyModel {
public:
    using ObservedOnlyModel::ObservedOnlyModel;
    std::string name() const override { return "static"; }
    SceneBelief update(const SceneBelief &belief, const SensorReading &reading) const override;
};

/// Observed accumulation plus one sampled hypothesis lifted into the belief.
class ImaginationModel : public ObservedOnlyModel {
public:
    ImaginationModel(const DenoiserParams &params, NoiseSchedule schedule, EmbeddingProvider provider,
                     std::uint64_t seed, int stride = 1);
    std::string name() const override { return "imagination"; }
    SceneBelief complete(const SceneBelief &belief, const VoxelGridSpec &spec) const override;

private:
    const DenoiserParams &mParams;
    NoiseSchedule mSchedule;
    EmbeddingProvider mProvider;
    std::uint64_t mSeed;
};

/// Renders at the first pose before and after rolling the model through the loop.
/// Throws TrajectoryNotClosed.
PermanenceMetrics eval_object_permanence(const CoreTask &task, const CoreModel &model,
                                         const EmbeddingProvider &provider);

struct SuiteRow {
    CoreTask task;
    std::string status;  // "ok" or the error code name
    std::optional<ObjectCompletionMetrics> object;
    std::optional<RoomCompletionMetrics> room;
    std::optional<PermanenceMetrics> permanence;
};

struct SuiteSummary {
    std::vector<SuiteRow> rows;
    std::size_t failures = 0;
};

/// Evaluates every task (in parallel), writes per-task rows followed by one mean
/// row per task kind present. A failing task is flagged and the suite continues.
SuiteSummary run_suite(std::span<const CoreTask> tasks, const CoreModel &model, const std::filesystem::path &out_path,
                       const EmbeddingProvider &provider);

/// Column order of the suite CSV.
const std::vector<std::string> &suite_columns();

} // namespace belief
