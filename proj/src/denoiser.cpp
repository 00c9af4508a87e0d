#include "belief/denoiser.hpp"

#include "belief/binary_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace belief {

int ClassHead::classify(const std::array<double, kDescriptorDim> &descriptor) const {
    int best = 0;
    double bestDist = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < prototypes.size(); ++p) {
        double dist = 0.0;
        for (int k = 0; k < kDescriptorDim; ++k) {
            const double e = (descriptor[k] - prototypes[p][k]) / scale[k];
            dist += e * e;
        }
        if (dist < bestDist) {
            bestDist = dist;
            best = classes[p];
        }
    }
    return best;
}

std::size_t DenoiserParams::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        n += weights[l].size() + biases[l].size();
    }
    return n;
}

DenoiserParams DenoiserParams::initialize(std::uint64_t seed, std::vector<ConvLayerShape> layers) {
    DenoiserParams p;
    p.layers = std::move(layers);
    Rng rng(derive_seed(seed, 0xd3));
    for (const auto &layer : p.layers) {
        const int fanIn = kKernelTaps * layer.in;
        const double bound = std::sqrt(3.0 / fanIn);
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<float> w(static_cast<std::size_t>(fanIn) * layer.out);
        for (float &v : w) {
            v = static_cast<float>(dist(rng));
        }
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(static_cast<std::size_t>(layer.out), 0.0f);
    }
    return p;
}

void save_denoiser(const std::filesystem::path &stem, const DenoiserParams &params) {
    auto binPath = stem;
    binPath += ".bin";
    auto manifestPath = stem;
    manifestPath += ".manifest";
    std::ofstream bin(binPath, std::ios::binary);
    std::ofstream manifest(manifestPath);
    if (!bin || !manifest) {
        throw Error(ErrorCode::IoError, "cannot write checkpoint " + stem.string());
    }
    manifest.precision(17);
    manifest << "format denoiser-f32le\n";
    manifest << "layers " << params.layers.size() << '\n';
    std::size_t offset = 0;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto &shape = params.layers[l];
        manifest << "conv " << l << " in " << shape.in << " out " << shape.out << " kernel 3 offset " << offset
                 << " weights " << params.weights[l].size() << " bias " << params.biases[l].size() << '\n';
        for (float v : params.weights[l]) {
            io::put_f32(bin, v);
        }
        for (float v : params.biases[l]) {
            io::put_f32(bin, v);
        }
        offset += params.weights[l].size() + params.biases[l].size();
    }
    manifest << "training_steps " << params.training_steps << '\n';
    manifest << "initial_loss " << params.initial_loss << '\n';
    manifest << "final_loss " << params.final_loss << '\n';
    const auto &head = params.class_head;
    manifest << "class_head " << head.classes.size() << " scale";
    for (double s : head.scale) {
        manifest << ' ' << s;
    }
    manifest << '\n';
    for (std::size_t p = 0; p < head.classes.size(); ++p) {
        manifest << "prototype " << head.classes[p];
        for (double v : head.prototypes[p]) {
            manifest << ' ' << v;
        }
        manifest << '\n';
    }
    if (!bin || !manifest) {
        throw Error(ErrorCode::IoError, "write failed for checkpoint " + stem.string());
    }
}

DenoiserParams load_denoiser(const std::filesystem::path &stem) {
    auto binPath = stem;
    binPath += ".bin";
    auto manifestPath = stem;
    manifestPath += ".manifest";
    std::ifstream bin(binPath, std::ios::binary);
    std::ifstream manifest(manifestPath);
    if (!bin || !manifest) {
        throw Error(ErrorCode::IoError, "cannot read checkpoint " + stem.string());
    }
    DenoiserParams p;
    std::string line;
    std::size_t headCount = 0;
    while (std::getline(manifest, line)) {
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "conv") {
            std::size_t index = 0, offset = 0, nw = 0, nb = 0;
            ConvLayerShape shape;
            int kernel = 0;
            std::string tag;
            ss >> index >> tag >> shape.in >> tag >> shape.out >> tag >> kernel >> tag >> offset >> tag >> nw >> tag >> nb;
            if (!ss || kernel != 3 || nw != static_cast<std::size_t>(kKernelTaps * shape.in * shape.out) ||
                nb != static_cast<std::size_t>(shape.out)) {
                throw Error(ErrorCode::FormatError, "bad layer record: " + line);
            }
            p.layers.push_back(shape);
            std::vector<float> w(nw), b(nb);
            for (float &v : w) {
                v = io::get_f32(bin);
            }
            for (float &v : b) {
                v = io::get_f32(bin);
            }
            p.weights.push_back(std::move(w));
            p.biases.push_back(std::move(b));
        } else if (key == "training_steps") {
            ss >> p.training_steps;
        } else if (key == "initial_loss") {
            ss >> p.initial_loss;
        } else if (key == "final_loss") {
            ss >> p.final_loss;
        } else if (key == "class_head") {
            std::string tag;
            ss >> headCount >> tag;
            for (double &s : p.class_head.scale) {
                ss >> s;
            }
        } else if (key == "prototype") {
            int cls = 0;
            std::array<double, ClassHead::kDescriptorDim> proto{};
            ss >> cls;
            for (double &v : proto) {
                ss >> v;
            }
            p.class_head.classes.push_back(cls);
            p.class_head.prototypes.push_back(proto);
        } else if (key != "format" && key != "layers" && !key.empty()) {
            throw Error(ErrorCode::FormatError, "unknown manifest record: " + key);
        }
    }
    if (p.layers.empty() || p.class_head.classes.size() != headCount) {
        throw Error(ErrorCode::FormatError, "incomplete checkpoint manifest " + manifestPath.string());
    }
    return p;
}

template <class S>
ConvNet<S>::ConvNet(const DenoiserParams &params) : mLayers(params.layers) {
    for (std::size_t l = 0; l < mLayers.size(); ++l) {
        const auto &shape = mLayers[l];
        Matrix w(kKernelTaps * shape.in, shape.out);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w.data()[i] = static_cast<S>(params.weights[l][static_cast<std::size_t>(i)]);
        }
        Eigen::Matrix<S, 1, Eigen::Dynamic> b(shape.out);
        for (int i = 0; i < shape.out; ++i) {
            b[i] = static_cast<S>(params.biases[l][static_cast<std::size_t>(i)]);
        }
        mWeights.push_back(std::move(w));
        mBiases.push_back(std::move(b));
    }
}

template <class S>
void ConvNet<S>::build_neighbors(const GridShape &shape) {
    if (shape == mShape && !mNeighbors.empty()) {
        return;
    }
    mShape = shape;
    mNeighbors.assign(shape.cells() * kKernelTaps, -1);
    for (int z = 0; z < shape.nz; ++z) {
        for (int y = 0; y < shape.ny; ++y) {
            for (int x = 0; x < shape.nx; ++x) {
                const std::size_t cell = shape.index(x, y, z);
                int tap = 0;
                for (int dz = -1; dz <= 1; ++dz) {
                    for (int dy = -1; dy <= 1; ++dy) {
                        for (int dx = -1; dx <= 1; ++dx, ++tap) {
                            const int nx = x + dx, ny = y + dy, nz = z + dz;
                            if (nx >= 0 && ny >= 0 && nz >= 0 && nx < shape.nx && ny < shape.ny && nz < shape.nz) {
                                mNeighbors[cell * kKernelTaps + tap] = static_cast<std::int32_t>(shape.index(nx, ny, nz));
                            }
                        }
                    }
                }
            }
        }
    }
}

template <class S>
void ConvNet<S>::im2col(const Matrix &act, int channels, Matrix &cols) const {
    const Eigen::Index cells = act.rows();
    cols.resize(cells, kKernelTaps * channels);
    for (Eigen::Index cell = 0; cell < cells; ++cell) {
        S *row = cols.data() + cell * cols.cols();
        const std::int32_t *nb = mNeighbors.data() + cell * kKernelTaps;
        for (int tap = 0; tap < kKernelTaps; ++tap) {
            S *dst = row + tap * channels;
            if (nb[tap] < 0) {
                std::fill(dst, dst + channels, S(0));
            } else {
                const S *src = act.data() + static_cast<Eigen::Index>(nb[tap]) * channels;
                std::copy(src, src + channels, dst);
            }
        }
    }
}

template <class S>
void ConvNet<S>::col2im(const Matrix &cols, int channels, Matrix &act) const {
    const Eigen::Index cells = cols.rows();
    act.setZero(cells, channels);
    for (Eigen::Index cell = 0; cell < cells; ++cell) {
        const S *row = cols.data() + cell * cols.cols();
        const std::int32_t *nb = mNeighbors.data() + cell * kKernelTaps;
        for (int tap = 0; tap < kKernelTaps; ++tap) {
            if (nb[tap] < 0) {
                continue;
            }
            S *dst = act.data() + static_cast<Eigen::Index>(nb[tap]) * channels;
            const S *src = row + tap * channels;
            for (int c = 0; c < channels; ++c) {
                dst[c] += src[c];
            }
        }
    }
}

template <class S>
typename ConvNet<S>::Matrix ConvNet<S>::forward(const Matrix &input, const GridShape &shape) {
    if (static_cast<std::size_t>(input.rows()) != shape.cells() || input.cols() != mLayers.front().in) {
        throw Error(ErrorCode::ShapeMismatch, "denoiser input does not match grid");
    }
    build_neighbors(shape);
    const std::size_t L = mLayers.size();
    mCols.resize(L);
    mActs.resize(L + 1);
    mActs[0] = input;
    for (std::size_t l = 0; l < L; ++l) {
        im2col(mActs[l], mLayers[l].in, mCols[l]);
        Matrix z = mCols[l] * mWeights[l];
        z.rowwise() += mBiases[l];
        if (l + 1 < L) {
            z = z.array().tanh();
        }
        mActs[l + 1] = std::move(z);
    }
    return mActs[L];
}

template <class S>
S ConvNet<S>::loss_and_gradient(const Matrix &input, const Matrix &target, const GridShape &shape,
                                std::vector<S> &gradient) {
    const Matrix out = forward(input, shape);
    if (target.rows() != out.rows() || target.cols() != out.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "denoiser target does not match output");
    }
    const S n = static_cast<S>(out.size());
    const Matrix diff = out - target;
    const S loss = diff.squaredNorm() / n;

    const std::size_t L = mLayers.size();
    std::vector<Matrix> gradW(L);
    std::vector<Eigen::Matrix<S, 1, Eigen::Dynamic>> gradB(L);
    Matrix delta = diff * (S(2) / n);
    for (std::size_t l = L; l-- > 0;) {
        gradW[l] = mCols[l].transpose() * delta;
        gradB[l] = delta.colwise().sum();
        if (l == 0) {
            break;
        }
        const Matrix dCols = delta * mWeights[l].transpose();
        Matrix dAct;
        col2im(dCols, mLayers[l].in, dAct);
        delta = dAct.array() * (S(1) - mActs[l].array().square());
    }

    gradient.clear();
    for (std::size_t l = 0; l < L; ++l) {
        gradient.insert(gradient.end(), gradW[l].data(), gradW[l].data() + gradW[l].size());
        gradient.insert(gradient.end(), gradB[l].data(), gradB[l].data() + gradB[l].size());
    }
    return loss;
}

template <class S>
std::vector<S> ConvNet<S>::flatten() const {
    std::vector<S> values;
    for (std::size_t l = 0; l < mLayers.size(); ++l) {
        values.insert(values.end(), mWeights[l].data(), mWeights[l].data() + mWeights[l].size());
        values.insert(values.end(), mBiases[l].data(), mBiases[l].data() + mBiases[l].size());
    }
    return values;
}

template <class S>
void ConvNet<S>::unflatten(const std::vector<S> &values) {
    std::size_t k = 0;
    for (std::size_t l = 0; l < mLayers.size(); ++l) {
        for (Eigen::Index i = 0; i < mWeights[l].size(); ++i) {
            mWeights[l].data()[i] = values.at(k++);
        }
        for (Eigen::Index i = 0; i < mBiases[l].size(); ++i) {
            mBiases[l].data()[i] = values.at(k++);
        }
    }
}

template <class S>
void ConvNet<S>::store(DenoiserParams &params) const {
    for (std::size_t l = 0; l < mLayers.size(); ++l) {
        for (Eigen::Index i = 0; i < mWeights[l].size(); ++i) {
            params.weights[l][static_cast<std::size_t>(i)] = static_cast<float>(mWeights[l].data()[i]);
        }
        for (Eigen::Index i = 0; i < mBiases[l].size(); ++i) {
            params.biases[l][static_cast<std::size_t>(i)] = static_cast<float>(mBiases[l].data()[i]);
        }
    }
}

template class ConvNet<float>;
template class ConvNet<double>;

} // namespace belief
