#pragma once

#include "belief/scene_belief.hpp"

#include <optional>

namespace belief {

struct Splat2D {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    double depth = 0.0;
    std::size_t index = 0;
};

struct RenderOptions {
    Vec3 background{0.5, 0.5, 0.5};
    double znear = 0.05;
    double dilation = 0.3;       // px^2 added to the projected covariance diagonal
    double sigma_extent = 3.0;   // splat support radius in standard deviations
};

/// Projects one primitive; std::nullopt means culled (behind znear or the
/// sigma_extent ellipse misses the image).
std::optional<Splat2D> project(const GaussianPrimitive &primitive, const CameraPose &camera,
                               const RenderOptions &options = {});

/// Front-to-back alpha compositing of all primitives sorted by (depth, index).
/// The returned observation carries rgb, depth, semantic, alpha and a validity mask
/// set where accumulated opacity >= 0.5.
Observation render(const SceneBelief &belief, const CameraPose &camera, const RenderOptions &options = {});

/// Embedding dimension used for empty scenes.
inline constexpr int kDefaultEmbedDim = 16;

} // namespace belief
