#pragma once

#include "belief/common.hpp"
#include "belief/scene_belief.hpp"

#include <span>
#include <utility>
#include <vector>

namespace belief {

/// Variance-preserving noise schedule. Indices are 1-based in the public API:
/// beta(1) .. beta(T).
class NoiseSchedule {
public:
    /// Each beta must lie in (0, 1) unless allow_degenerate is set (test schedules
    /// with beta = 0 are then accepted).
    explicit NoiseSchedule(std::vector<double> betas, bool allow_degenerate = false);

    static NoiseSchedule linear(double beta_start, double beta_end, int steps);
    /// Default: linear 1e-4 .. 0.1 over 50 steps.
    static NoiseSchedule standard() { return linear(1e-4, 0.1, 50); }

    int steps() const noexcept { return static_cast<int>(mBetas.size()); }
    double beta(int tau) const { return mBetas.at(checked(tau) - 1); }
    double alpha(int tau) const { return 1.0 - beta(tau); }
    double alpha_bar(int tau) const { return mAlphaBars.at(checked(tau) - 1); }
    /// Noise standard deviation of the marginal at tau, sqrt(1 - alpha_bar).
    double sigma(int tau) const;
    const std::vector<double> &betas() const noexcept { return mBetas; }

    /// Posterior mean coefficients (on x0_hat, on x_tau) and variance for tau >= 2.
    struct Posterior {
        double coef_x0;
        double coef_xt;
        double variance;
    };
    Posterior posterior(int tau) const;

private:
    int checked(int tau) const;

    std::vector<double> mBetas;
    std::vector<double> mAlphaBars;
};

/// sqrt(abar) * x0 + sqrt(1 - abar) * noise.
std::vector<double> forward_noise(std::span<const double> x0, int tau, std::span<const double> noise,
                                  const NoiseSchedule &schedule);

/// One ancestral step from tau to tau - 1 given the clean estimate; tau == 1
/// returns x0_hat unchanged.
std::vector<double> reverse_step(std::span<const double> x_tau, std::span<const double> x0_hat, int tau,
                                 const NoiseSchedule &schedule, std::span<const double> noise);

/// Mean squared error over RGB entries of one view.
double loss_rgb(const Observation &rendered, const Observation &target);

struct PixelCoord {
    int x = 0;
    int y = 0;
};

/// (1/M) sum_j || S(u_j) - f_j ||^2.
double loss_sem(const ImageD &rendered_semantic, std::span<const PixelCoord> centers,
                std::span<const VecX> features);

struct DepthLoss {
    double value = 0.0;
    bool no_valid_pixels = false;
};

/// Masked mean absolute depth error; zero with the flag set when the mask is empty.
DepthLoss loss_depth(const ImageD &rendered_depth, const ImageD &target_depth, const Mask &mask);

} // namespace belief
