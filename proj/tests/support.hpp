#pragma once

// Random generators and brute-force reference implementations shared by the
// unit tests and the acceptance binary. Nothing here calls the library code it
// is meant to check.

#include "belief/occupancy_grid.hpp"
#include "belief/scene_belief.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <tuple>
#include <vector>

namespace belief::testing {

inline double uniform(Rng &rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline int uniform_int(Rng &rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline VecX random_unit(Rng &rng, int d) {
    std::normal_distribution<double> n;
    VecX v(d);
    do {
        for (int i = 0; i < d; ++i) {
            v[i] = n(rng);
        }
    } while (v.norm() < 1e-6);
    return v.normalized();
}

inline Mat3 random_rotation(Rng &rng) {
    std::normal_distribution<double> n;
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q.toRotationMatrix();
}

inline GaussianPrimitive random_primitive(Rng &rng, Origin origin, int d = 8) {
    GaussianPrimitive g;
    g.mean = Vec3(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, 0, 3));
    const Mat3 R = random_rotation(rng);
    const Vec3 s(uniform(rng, 0.01, 0.3), uniform(rng, 0.01, 0.3), uniform(rng, 0.01, 0.3));
    g.covariance = R * s.cwiseAbs2().asDiagonal() * R.transpose();
    g.covariance = 0.5 * (g.covariance + g.covariance.transpose()).eval();
    g.opacity = uniform(rng, 0.05, 1.0);
    g.appearance = Vec3(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
    g.embedding = random_unit(rng, d);
    g.origin = origin;
    return g;
}

inline CameraPose simple_camera(int width, int height, double f) {
    CameraPose cam;
    cam.fx = cam.fy = f;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.width = width;
    cam.height = height;
    return cam;
}

/// Small observation with random depths, validity, colors and features.
inline Observation random_observation(Rng &rng, int height = 6, int width = 8, int d = 8, double valid_rate = 0.7) {
    Observation obs(height, width, d);
    obs.pose = simple_camera(width, height, uniform(rng, 4.0, 12.0));
    obs.pose.rotation = random_rotation(rng);
    obs.pose.position = Vec3(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, 0, 2));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const bool valid = uniform(rng, 0, 1) < valid_rate;
            obs.validity(y, x) = valid ? 1 : 0;
            obs.depth(y, x) = valid ? uniform(rng, 0.3, 6.0) : 0.0;
            for (int c = 0; c < 3; ++c) {
                obs.rgb(y, x, c) = uniform(rng, 0, 1);
            }
            const VecX e = random_unit(rng, d);
            for (int c = 0; c < d; ++c) {
                obs.semantic(y, x, c) = e[c];
            }
        }
    }
    if (obs.valid_count() == 0) {
        obs.validity(0, 0) = 1;
        obs.depth(0, 0) = 1.0;
    }
    return obs;
}

/// Totally ordered fingerprint of a primitive for multiset comparison.
inline std::vector<double> fingerprint(const GaussianPrimitive &g) {
    std::vector<double> f;
    for (int i = 0; i < 3; ++i) {
        f.push_back(g.mean[i]);
    }
    for (int i = 0; i < 9; ++i) {
        f.push_back(g.covariance(i / 3, i % 3));
    }
    f.push_back(g.opacity);
    for (int i = 0; i < 3; ++i) {
        f.push_back(g.appearance[i]);
    }
    for (int i = 0; i < g.embedding.size(); ++i) {
        f.push_back(g.embedding[i]);
    }
    f.push_back(static_cast<double>(g.origin));
    return f;
}

inline std::multiset<std::vector<double>> multiset_of(const std::vector<GaussianPrimitive> &prims) {
    std::multiset<std::vector<double>> out;
    for (const auto &g : prims) {
        out.insert(fingerprint(g));
    }
    return out;
}

inline bool is_sub_multiset(const std::multiset<std::vector<double>> &a, const std::multiset<std::vector<double>> &b) {
    std::map<std::vector<double>, int> counts;
    for (const auto &x : b) {
        ++counts[x];
    }
    for (const auto &x : a) {
        if (--counts[x] < 0) {
            return false;
        }
    }
    return true;
}

/// Reference compositing of one pixel: every primitive is projected with the
/// textbook Jacobian, sorted by depth, and blended front to back without tiling,
/// early termination or extent culling beyond `sigma_extent`.
struct PixelRef {
    Vec3 rgb = Vec3::Zero();
    double depth = 0.0;
    double alpha = 0.0;
};

inline PixelRef composite_pixel(const std::vector<GaussianPrimitive> &prims, const CameraPose &cam, double px,
                                double py, const Vec3 &background = Vec3(0.5, 0.5, 0.5), double dilation = 0.3,
                                double sigma_extent = 3.0) {
    struct Hit {
        double z;
        std::size_t i;
        double a;
    };
    std::vector<Hit> hits;
    for (std::size_t i = 0; i < prims.size(); ++i) {
        const auto &g = prims[i];
        const Vec3 p = cam.rotation * (g.mean - cam.position);
        if (p.z() <= 0.05) {
            continue;
        }
        const double u = cam.fx * p.x() / p.z() + cam.cx;
        const double v = cam.fy * p.y() / p.z() + cam.cy;
        Eigen::Matrix<double, 2, 3> J;
        J << cam.fx / p.z(), 0, -cam.fx * p.x() / (p.z() * p.z()), 0, cam.fy / p.z(), -cam.fy * p.y() / (p.z() * p.z());
        Mat2 S = (J * cam.rotation) * g.covariance * (J * cam.rotation).transpose();
        S(0, 0) += dilation;
        S(1, 1) += dilation;
        const Vec2 delta(px - u, py - v);
        const double power = 0.5 * delta.dot(S.inverse() * delta);
        if (power > 0.5 * sigma_extent * sigma_extent) {
            continue;
        }
        if (std::abs(delta.x()) > sigma_extent * std::sqrt(S(0, 0)) ||
            std::abs(delta.y()) > sigma_extent * std::sqrt(S(1, 1))) {
            continue;
        }
        hits.push_back({p.z(), i, g.opacity * std::exp(-power)});
    }
    std::stable_sort(hits.begin(), hits.end(), [](const Hit &a, const Hit &b) { return a.z < b.z; });
    PixelRef out;
    double T = 1.0;
    double depthSum = 0.0;
    for (const auto &h : hits) {
        const double w = h.a * T;
        out.rgb += w * prims[h.i].appearance;
        depthSum += w * h.z;
        out.alpha += w;
        T *= 1.0 - h.a;
    }
    out.rgb += (1.0 - out.alpha) * background;
    out.depth = out.alpha >= 1e-4 ? depthSum / out.alpha : 0.0;
    return out;
}

/// Uniform-cost search on a 4-connected grid; entering a Free cell costs 1,
/// an Unknown cell `unknown_cost`.
inline std::optional<double> ucs_cost(const OccupancyGrid &grid, Cell start, Cell goal, double unknown_cost) {
    const auto &spec = grid.spec;
    if (!spec.contains(start) || !spec.contains(goal) || grid.at(start) == CellState::Occupied ||
        grid.at(goal) == CellState::Occupied) {
        return std::nullopt;
    }
    std::vector<double> dist(spec.cells(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    dist[spec.index(start)] = 0.0;
    open.push({0.0, spec.index(start)});
    while (!open.empty()) {
        const auto [d, idx] = open.top();
        open.pop();
        if (d > dist[idx]) {
            continue;
        }
        const Cell c{static_cast<int>(idx % spec.nx), static_cast<int>(idx / spec.nx)};
        if (c == goal) {
            return d;
        }
        const int dx[4] = {1, -1, 0, 0};
        const int dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            const Cell n{c.x + dx[k], c.y + dy[k]};
            if (!spec.contains(n) || grid.at(n) == CellState::Occupied) {
                continue;
            }
            const double nd = d + (grid.at(n) == CellState::Unknown ? unknown_cost : 1.0);
            if (nd < dist[spec.index(n)]) {
                dist[spec.index(n)] = nd;
                open.push({nd, spec.index(n)});
            }
        }
    }
    return std::nullopt;
}

inline OccupancyGrid random_grid(Rng &rng, int nx, int ny, double p_occ, double p_unknown) {
    GridSpec2D spec;
    spec.nx = nx;
    spec.ny = ny;
    OccupancyGrid grid(spec, CellState::Free);
    for (auto &s : grid.state) {
        const double r = uniform(rng, 0, 1);
        s = r < p_occ ? CellState::Occupied : r < p_occ + p_unknown ? CellState::Unknown : CellState::Free;
    }
    return grid;
}

/// All-pairs nearest-neighbor mean distance.
inline double brute_directed_chamfer(const std::vector<Vec3> &a, const std::vector<Vec3> &b) {
    double sum = 0.0;
    for (const auto &p : a) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto &q : b) {
            best = std::min(best, (p - q).norm());
        }
        sum += best;
    }
    return sum / static_cast<double>(a.size());
}

inline std::set<std::tuple<long, long, long>> brute_voxels(const std::vector<Vec3> &pts, double cell, bool bev) {
    std::set<std::tuple<long, long, long>> out;
    for (const auto &p : pts) {
        out.insert({std::lround(std::floor(p.x() / cell)), std::lround(std::floor(p.y() / cell)),
                    bev ? 0L : std::lround(std::floor(p.z() / cell))});
    }
    return out;
}

inline double brute_iou(const std::vector<Vec3> &a, const std::vector<Vec3> &b, double cell, bool bev) {
    const auto va = brute_voxels(a, cell, bev);
    const auto vb = brute_voxels(b, cell, bev);
    std::size_t inter = 0;
    for (const auto &k : va) {
        inter += vb.count(k);
    }
    const std::size_t uni = va.size() + vb.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace belief::testing
