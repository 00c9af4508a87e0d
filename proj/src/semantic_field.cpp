#include "belief/semantic_field.hpp"

#include "belief/vocabulary.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <unordered_map>

namespace belief {

struct EmbeddingProvider::Cache {
    std::mutex mutex;
    std::unordered_map<std::string, VecX> entries;
    std::size_t requests = 0;
};

EmbeddingProvider::EmbeddingProvider(Mode mode, int dim, std::uint64_t seed, std::string url, int timeout_ms)
    : mMode(mode), mDim(dim), mSeed(seed), mUrl(std::move(url)), mTimeoutMs(timeout_ms),
      mCache(std::make_shared<Cache>()) {
    if (dim < 1) {
        throw Error(ErrorCode::InvalidArgument, "embedding dimension must be positive");
    }
}

EmbeddingProvider EmbeddingProvider::synthetic(int dim, std::uint64_t seed) {
    return {Mode::SyntheticHash, dim, seed, {}, 0};
}

EmbeddingProvider EmbeddingProvider::external(std::string url, int timeout_ms, int dim) {
    return {Mode::ExternalService, dim, kShippedEmbeddingSeed, std::move(url), timeout_ms};
}

EmbeddingProvider EmbeddingProvider::from_environment(int dim) {
    if (const char *url = std::getenv("BELIEF_EMBED_URL"); url && *url) {
        return external(url, 2000, dim);
    }
    return synthetic(dim);
}

std::size_t EmbeddingProvider::network_requests() const {
    std::lock_guard lock(mCache->mutex);
    return mCache->requests;
}

VecX EmbeddingProvider::synthesize(const std::string &folded) const {
    Rng rng(mix_seed(fnv1a64(folded) ^ mSeed));
    std::normal_distribution<double> normal(0.0, 1.0);
    VecX v(mDim);
    for (int i = 0; i < mDim; ++i) {
        v[i] = normal(rng);
    }
    return v.normalized();
}

VecX EmbeddingProvider::fetch(const std::string &folded) const {
    httplib::Client client(mUrl);
    const auto seconds = mTimeoutMs / 1000;
    const auto micros = (mTimeoutMs % 1000) * 1000;
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);
    const nlohmann::json body = {{"label", folded}, {"dim", mDim}};
    auto response = client.Post("/embed", body.dump(), "application/json");
    {
        std::lock_guard lock(mCache->mutex);
        ++mCache->requests;
    }
    if (!response || response->status != 200) {
        throw Error(ErrorCode::ServiceUnavailable, "embedding service at " + mUrl + " did not answer");
    }
    VecX v;
    try {
        const auto reply = nlohmann::json::parse(response->body);
        const auto &values = reply.at("vector");
        v.resize(static_cast<Eigen::Index>(values.size()));
        for (std::size_t i = 0; i < values.size(); ++i) {
            v[static_cast<Eigen::Index>(i)] = values[i].get<double>();
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::ServiceUnavailable, std::string("malformed embedding reply: ") + e.what());
    }
    if (v.size() != mDim || !(v.norm() > 0.0) || !v.allFinite()) {
        throw Error(ErrorCode::ServiceUnavailable, "embedding reply has wrong dimension or zero norm");
    }
    return v.normalized();
}

VecX EmbeddingProvider::embed(std::string_view label) const {
    if (label.empty()) {
        throw Error(ErrorCode::EmptyLabel, "label must be non-empty");
    }
    std::string folded(label);
    std::transform(folded.begin(), folded.end(), folded.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    {
        std::lock_guard lock(mCache->mutex);
        if (auto it = mCache->entries.find(folded); it != mCache->entries.end()) {
            return it->second;
        }
    }
    VecX v = mMode == Mode::SyntheticHash ? synthesize(folded) : fetch(folded);
    std::lock_guard lock(mCache->mutex);
    return mCache->entries.try_emplace(folded, std::move(v)).first->second;
}

VecX embed_label(const EmbeddingProvider &provider, std::string_view label) { return provider.embed(label); }

ImageD query_heatmap(const ImageD &semantic, const VecX &query) {
    if (semantic.channels() != query.size()) {
        throw Error(ErrorCode::ShapeMismatch, "query dimension differs from the feature image");
    }
    const double qn = query.norm();
    ImageD out(semantic.height(), semantic.width(), 1, -1.0);
    for (int y = 0; y < semantic.height(); ++y) {
        for (int x = 0; x < semantic.width(); ++x) {
            const auto f = semantic.pixel(y, x);
            double dot = 0.0, nn = 0.0;
            for (std::size_t c = 0; c < f.size(); ++c) {
                dot += f[c] * query[static_cast<Eigen::Index>(c)];
                nn += f[c] * f[c];
            }
            if (nn > 0.0 && qn > 0.0) {
                out(y, x) = std::clamp(dot / (std::sqrt(nn) * qn), -1.0, 1.0);
            }
        }
    }
    return out;
}

std::optional<Localization> localize(const SceneBelief &belief, const VecX &query, double min_score) {
    std::optional<Localization> best;
    const double qn = query.norm();
    if (qn == 0.0) {
        return std::nullopt;
    }
    for (std::size_t i = 0; i < belief.primitives.size(); ++i) {
        const auto &g = belief.primitives[i];
        if (g.embedding.size() != query.size()) {
            continue;
        }
        const double en = g.embedding.norm();
        if (en == 0.0) {
            continue;
        }
        const double score = g.opacity * g.embedding.dot(query) / (en * qn);
        if (!best || score > best->score) {
            best = Localization{g.mean, score, i};
        }
    }
    if (!best || best->score < min_score) {
        return std::nullopt;
    }
    return best;
}

int classify_embedding(const EmbeddingProvider &provider, const VecX &embedding, double min_cos) {
    const double en = embedding.norm();
    if (en == 0.0) {
        return 0;
    }
    int best = 0;
    double bestCos = min_cos;
    for (int id = 1; id < kNumClasses; ++id) {
        const VecX e = provider.embed(class_name(id));
        if (e.size() != embedding.size()) {
            continue;
        }
        const double c = e.dot(embedding) / en;
        if (c >= bestCos) {
            bestCos = c;
            best = id;
        }
    }
    return best;
}

} // namespace belief
