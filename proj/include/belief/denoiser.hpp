#pragma once

#include "belief/common.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace belief {

struct GridShape {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    std::size_t cells() const { return static_cast<std::size_t>(nx) * ny * nz; }
    std::size_t index(int x, int y, int z) const { return (static_cast<std::size_t>(z) * ny + y) * nx + x; }
    bool operator==(const GridShape &) const = default;
};

struct ConvLayerShape {
    int in = 0;
    int out = 0;
    bool operator==(const ConvLayerShape &) const = default;
};

/// Per-cell input channels: noisy occupancy (known cells hold their clean value),
/// conditioned value, known mask, noise level sqrt(1 - abar).
inline constexpr int kDenoiserInputs = 4;
inline constexpr int kKernelTaps = 27;

/// Nearest-prototype classifier over component shape descriptors.
struct ClassHead {
    static constexpr int kDescriptorDim = 5;
    std::vector<int> classes;
    std::vector<std::array<double, kDescriptorDim>> prototypes;
    std::array<double, kDescriptorDim> scale{1, 1, 1, 1, 1};

    bool empty() const { return classes.empty(); }
    /// Class id of the prototype nearest to `descriptor` after per-axis scaling.
    int classify(const std::array<double, kDescriptorDim> &descriptor) const;
    bool operator==(const ClassHead &) const = default;
};

/// Weights of the 3x3x3 convolution stack. Layer l stores a (27 * in) x out
/// row-major matrix whose rows run over (tap, input channel) plus an `out` bias.
struct DenoiserParams {
    std::vector<ConvLayerShape> layers;
    std::vector<std::vector<float>> weights;
    std::vector<std::vector<float>> biases;
    std::uint64_t training_steps = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    ClassHead class_head;

    bool trained() const { return training_steps > 0; }
    std::size_t parameter_count() const;

    static std::vector<ConvLayerShape> default_layers() { return {{kDenoiserInputs, 8}, {8, 16}, {16, 8}, {8, 1}}; }
    /// Scaled-uniform initialization, deterministic in seed.
    static DenoiserParams initialize(std::uint64_t seed, std::vector<ConvLayerShape> layers = default_layers());

    bool operator==(const DenoiserParams &) const = default;
};

/// Writes `<stem>.bin` (flat float32 LE) and `<stem>.manifest` (layer shapes,
/// offsets, training record, class head).
void save_denoiser(const std::filesystem::path &stem, const DenoiserParams &params);
DenoiserParams load_denoiser(const std::filesystem::path &stem);

/// Forward / backward evaluation of the convolution stack (tanh hidden units,
/// linear output). Activations are cells x channels row-major matrices.
template <class S>
class ConvNet {
public:
    using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    explicit ConvNet(const DenoiserParams &params);

    /// input: cells x kDenoiserInputs. Returns cells x out.
    Matrix forward(const Matrix &input, const GridShape &shape);

    /// Mean squared error between forward(input) and target (cells x out) and its
    /// gradient with respect to every weight and bias, packed like flatten().
    S loss_and_gradient(const Matrix &input, const Matrix &target, const GridShape &shape, std::vector<S> &gradient);

    /// Concatenation of (weights, bias) per layer.
    std::vector<S> flatten() const;
    void unflatten(const std::vector<S> &values);
    void store(DenoiserParams &params) const;

private:
    void build_neighbors(const GridShape &shape);
    void im2col(const Matrix &act, int channels, Matrix &cols) const;
    void col2im(const Matrix &cols, int channels, Matrix &act) const;

    std::vector<ConvLayerShape> mLayers;
    std::vector<Matrix> mWeights;
    std::vector<Eigen::Matrix<S, 1, Eigen::Dynamic>> mBiases;

    GridShape mShape;
    std::vector<std::int32_t> mNeighbors; // cells x 27, -1 = outside (zero padding)

    std::vector<Matrix> mCols;
    std::vector<Matrix> mActs;
};

extern template class ConvNet<float>;
extern template class ConvNet<double>;

} // namespace belief
