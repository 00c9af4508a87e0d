#include "belief/diffusion.hpp"

#include <cmath>

namespace belief {

NoiseSchedule::NoiseSchedule(std::vector<double> betas, bool allow_degenerate) : mBetas(std::move(betas)) {
    if (mBetas.empty()) {
        throw Error(ErrorCode::InvalidSchedule, "schedule needs at least one step");
    }
    double running = 1.0;
    for (double b : mBetas) {
        const bool inRange = allow_degenerate ? (b >= 0.0 && b < 1.0) : (b > 0.0 && b < 1.0);
        if (!inRange) {
            throw Error(ErrorCode::InvalidSchedule, "beta " + std::to_string(b) + " outside (0, 1)");
        }
        running *= 1.0 - b;
        mAlphaBars.push_back(running);
    }
}

NoiseSchedule NoiseSchedule::linear(double beta_start, double beta_end, int steps) {
    if (steps < 1) {
        throw Error(ErrorCode::InvalidSchedule, "schedule needs at least one step");
    }
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double t = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        betas[static_cast<std::size_t>(i)] = beta_start + t * (beta_end - beta_start);
    }
    return NoiseSchedule(std::move(betas));
}

int NoiseSchedule::checked(int tau) const {
    if (tau < 1 || tau > steps()) {
        throw Error(ErrorCode::TauOutOfRange, "tau " + std::to_string(tau) + " outside [1, " +
                                                  std::to_string(steps()) + "]");
    }
    return tau;
}

double NoiseSchedule::sigma(int tau) const { return std::sqrt(1.0 - alpha_bar(tau)); }

NoiseSchedule::Posterior NoiseSchedule::posterior(int tau) const {
    if (tau < 2) {
        throw Error(ErrorCode::TauOutOfRange, "posterior defined for tau >= 2");
    }
    const double abar = alpha_bar(tau);
    const double abarPrev = alpha_bar(tau - 1);
    const double b = beta(tau);
    const double denom = 1.0 - abar;
    return {std::sqrt(abarPrev) * b / denom, std::sqrt(1.0 - b) * (1.0 - abarPrev) / denom,
            b * (1.0 - abarPrev) / denom};
}

std::vector<double> forward_noise(std::span<const double> x0, int tau, std::span<const double> noise,
                                  const NoiseSchedule &schedule) {
    const double abar = schedule.alpha_bar(tau);
    if (noise.size() != x0.size()) {
        throw Error(ErrorCode::ShapeMismatch, "noise and x0 differ in size");
    }
    const double a = std::sqrt(abar);
    const double s = std::sqrt(1.0 - abar);
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        out[i] = a * x0[i] + s * noise[i];
    }
    return out;
}

std::vector<double> reverse_step(std::span<const double> x_tau, std::span<const double> x0_hat, int tau,
                                 const NoiseSchedule &schedule, std::span<const double> noise) {
    schedule.alpha_bar(tau); // range check
    if (x0_hat.size() != x_tau.size()) {
        throw Error(ErrorCode::ShapeMismatch, "x_tau and x0_hat differ in size");
    }
    if (tau == 1) {
        return {x0_hat.begin(), x0_hat.end()};
    }
    if (noise.size() != x_tau.size()) {
        throw Error(ErrorCode::ShapeMismatch, "noise and x_tau differ in size");
    }
    const auto post = schedule.posterior(tau);
    const double sd = std::sqrt(post.variance);
    std::vector<double> out(x_tau.size());
    for (std::size_t i = 0; i < x_tau.size(); ++i) {
        out[i] = post.coef_x0 * x0_hat[i] + post.coef_xt * x_tau[i] + sd * noise[i];
    }
    return out;
}

double loss_rgb(const Observation &rendered, const Observation &target) {
    if (!rendered.rgb.same_shape(target.rgb) || rendered.rgb.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "rgb images differ in shape");
    }
    double sum = 0.0;
    const auto &a = rendered.rgb.data();
    const auto &b = target.rgb.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = a[i] - b[i];
        sum += e * e;
    }
    return sum / static_cast<double>(a.size());
}

double loss_sem(const ImageD &rendered_semantic, std::span<const PixelCoord> centers,
                std::span<const VecX> features) {
    if (centers.empty()) {
        throw Error(ErrorCode::EmptyPatchSet, "no patch centers");
    }
    if (centers.size() != features.size()) {
        throw Error(ErrorCode::ShapeMismatch, "centers and features differ in count");
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < centers.size(); ++j) {
        const auto [x, y] = centers[j];
        if (x < 0 || y < 0 || x >= rendered_semantic.width() || y >= rendered_semantic.height()) {
            throw Error(ErrorCode::CenterOutOfBounds, "patch center outside the feature map");
        }
        if (features[j].size() != rendered_semantic.channels()) {
            throw Error(ErrorCode::ShapeMismatch, "feature dimension mismatch");
        }
        for (int c = 0; c < rendered_semantic.channels(); ++c) {
            const double e = rendered_semantic(y, x, c) - features[j][c];
            sum += e * e;
        }
    }
    return sum / static_cast<double>(centers.size());
}

DepthLoss loss_depth(const ImageD &rendered_depth, const ImageD &target_depth, const Mask &mask) {
    if (!rendered_depth.same_shape(target_depth) ||
        !mask.same_extent(rendered_depth.height(), rendered_depth.width())) {
        throw Error(ErrorCode::ShapeMismatch, "depth images and mask differ in shape");
    }
    double weight = 0.0;
    double sum = 0.0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask(y, x)) {
                weight += 1.0;
                sum += std::abs(rendered_depth(y, x) - target_depth(y, x));
            }
        }
    }
    if (weight == 0.0) {
        return {0.0, true};
    }
    return {sum / weight, false};
}

} // namespace belief
