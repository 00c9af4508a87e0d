#include "belief/splat_renderer.hpp"

#include "belief/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace belief {

namespace {

constexpr int kTile = 16;
constexpr double kMinWeightSum = 1e-4;
constexpr double kTransmittanceStop = 1e-6;

struct PreparedSplat {
    Splat2D splat;
    double conicA = 0.0, conicB = 0.0, conicC = 0.0; // inverse covariance entries
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;              // inclusive pixel bounds
};

std::optional<PreparedSplat> prepare(const GaussianPrimitive &g, std::size_t index, const CameraPose &cam,
                                     const RenderOptions &options) {
    const Vec3 p = cam.to_camera(g.mean);
    if (p.z() <= options.znear) {
        return std::nullopt;
    }
    const double invZ = 1.0 / p.z();
    Eigen::Matrix<double, 2, 3> J;
    J << cam.fx * invZ, 0.0, -cam.fx * p.x() * invZ * invZ, 0.0, cam.fy * invZ, -cam.fy * p.y() * invZ * invZ;
    const Eigen::Matrix<double, 2, 3> T = J * cam.rotation;
    Mat2 cov = T * g.covariance * T.transpose();
    cov = 0.5 * (cov + cov.transpose());
    cov(0, 0) += options.dilation;
    cov(1, 1) += options.dilation;

    Eigen::SelfAdjointEigenSolver<Mat2> eig(cov);
    Vec2 values = eig.eigenvalues();
    if (values.minCoeff() < kCovarianceFloor) {
        values = values.cwiseMax(kCovarianceFloor);
        cov = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
        cov = 0.5 * (cov + cov.transpose());
    }

    PreparedSplat out;
    out.splat.mean2d = Vec2(cam.fx * p.x() * invZ + cam.cx, cam.fy * p.y() * invZ + cam.cy);
    out.splat.cov2d = cov;
    out.splat.depth = p.z();
    out.splat.index = index;

    // Axis-aligned bounds of the sigma_extent ellipse.
    const double rx = options.sigma_extent * std::sqrt(cov(0, 0));
    const double ry = options.sigma_extent * std::sqrt(cov(1, 1));
    const Vec2 &m = out.splat.mean2d;
    if (m.x() + rx < 0.0 || m.x() - rx > cam.width - 1 || m.y() + ry < 0.0 || m.y() - ry > cam.height - 1) {
        return std::nullopt;
    }
    out.x0 = std::max(0, static_cast<int>(std::ceil(m.x() - rx)));
    out.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(m.x() + rx)));
    out.y0 = std::max(0, static_cast<int>(std::ceil(m.y() - ry)));
    out.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(m.y() + ry)));
    if (out.x0 > out.x1 || out.y0 > out.y1) {
        return std::nullopt;
    }
    const double det = cov.determinant();
    out.conicA = cov(1, 1) / det;
    out.conicB = -cov(0, 1) / det;
    out.conicC = cov(0, 0) / det;
    return out;
}

} // namespace

std::optional<Splat2D> project(const GaussianPrimitive &primitive, const CameraPose &camera,
                               const RenderOptions &options) {
    auto prepared = prepare(primitive, 0, camera, options);
    if (!prepared) {
        return std::nullopt;
    }
    return prepared->splat;
}

Observation render(const SceneBelief &belief, const CameraPose &camera, const RenderOptions &options) {
    camera.validate();
    const int W = camera.width;
    const int H = camera.height;
    const int d = belief.primitives.empty() ? kDefaultEmbedDim : static_cast<int>(belief.primitives.front().embedding.size());

    Observation out(H, W, d);
    out.alpha = ImageD(H, W, 1);
    out.pose = camera;

    std::vector<PreparedSplat> splats;
    splats.reserve(belief.primitives.size());
    for (std::size_t i = 0; i < belief.primitives.size(); ++i) {
        if (auto s = prepare(belief.primitives[i], i, camera, options)) {
            splats.push_back(*s);
        }
    }
    // Primitive index breaks depth ties so the order is a pure function of content.
    std::sort(splats.begin(), splats.end(), [&](const PreparedSplat &a, const PreparedSplat &b) {
        if (a.splat.depth != b.splat.depth) {
            return a.splat.depth < b.splat.depth;
        }
        const auto &ga = belief.primitives[a.splat.index];
        const auto &gb = belief.primitives[b.splat.index];
        const auto key = [](const GaussianPrimitive &g) {
            return std::tuple(g.mean.x(), g.mean.y(), g.mean.z(), g.opacity, g.appearance.x(), g.appearance.y(),
                              g.appearance.z());
        };
        if (key(ga) != key(gb)) {
            return key(ga) < key(gb);
        }
        return a.splat.index < b.splat.index;
    });

    const int tilesX = (W + kTile - 1) / kTile;
    const int tilesY = (H + kTile - 1) / kTile;
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tilesX) * tilesY);
    for (std::size_t s = 0; s < splats.size(); ++s) {
        const auto &ps = splats[s];
        for (int ty = ps.y0 / kTile; ty <= ps.y1 / kTile; ++ty) {
            for (int tx = ps.x0 / kTile; tx <= ps.x1 / kTile; ++tx) {
                bins[static_cast<std::size_t>(ty) * tilesX + tx].push_back(static_cast<std::uint32_t>(s));
            }
        }
    }

    const double cutoff = 0.5 * options.sigma_extent * options.sigma_extent;
    parallel_for(bins.size(), [&](std::size_t tile) {
        const int tx = static_cast<int>(tile) % tilesX;
        const int ty = static_cast<int>(tile) / tilesX;
        const auto &list = bins[tile];
        VecX feature(d);
        for (int y = ty * kTile; y < std::min(H, (ty + 1) * kTile); ++y) {
            for (int x = tx * kTile; x < std::min(W, (tx + 1) * kTile); ++x) {
                double transmittance = 1.0;
                double weightSum = 0.0;
                double depthSum = 0.0;
                Vec3 color = Vec3::Zero();
                feature.setZero();
                for (std::uint32_t s : list) {
                    const auto &ps = splats[s];
                    if (x < ps.x0 || x > ps.x1 || y < ps.y0 || y > ps.y1) {
                        continue;
                    }
                    const double dx = x - ps.splat.mean2d.x();
                    const double dy = y - ps.splat.mean2d.y();
                    const double power = 0.5 * (ps.conicA * dx * dx + 2.0 * ps.conicB * dx * dy + ps.conicC * dy * dy);
                    if (power > cutoff) {
                        continue;
                    }
                    const auto &g = belief.primitives[ps.splat.index];
                    const double a = g.opacity * std::exp(-power);
                    const double w = a * transmittance;
                    weightSum += w;
                    depthSum += w * ps.splat.depth;
                    color += w * g.appearance;
                    feature += w * g.embedding;
                    transmittance *= 1.0 - a;
                    if (transmittance < kTransmittanceStop) {
                        break;
                    }
                }
                const Vec3 rgb = color + (1.0 - weightSum) * options.background;
                for (int c = 0; c < 3; ++c) {
                    out.rgb(y, x, c) = rgb[c];
                }
                out.alpha(y, x) = weightSum;
                if (weightSum >= kMinWeightSum) {
                    out.depth(y, x) = depthSum / weightSum;
                    const double norm = feature.norm();
                    if (norm > 0.0) {
                        for (int c = 0; c < d; ++c) {
                            out.semantic(y, x, c) = feature[c] / norm;
                        }
                    }
                }
                out.validity(y, x) = weightSum >= 0.5 ? 1 : 0;
            }
        }
    });
    return out;
}

} // namespace belief
