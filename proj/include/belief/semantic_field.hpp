#pragma once

#include "belief/common.hpp"
#include "belief/image.hpp"
#include "belief/scene_belief.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace belief {

/// Seed mixed into every synthetic label hash. Chosen so that all vocabulary
/// classes are pairwise |cos| < 0.5 at 16 dimensions.
inline constexpr std::uint64_t kShippedEmbeddingSeed = 3041;

/// Label -> unit embedding. Copies share one cache.
class EmbeddingProvider {
public:
    enum class Mode { SyntheticHash, ExternalService };

    static EmbeddingProvider synthetic(int dim = 16, std::uint64_t seed = kShippedEmbeddingSeed);
    /// `url` is a base such as "http://127.0.0.1:8080"; labels are POSTed to /embed.
    static EmbeddingProvider external(std::string url, int timeout_ms = 2000, int dim = 16);
    /// External mode when BELIEF_EMBED_URL is set, synthetic otherwise.
    static EmbeddingProvider from_environment(int dim = 16);

    Mode mode() const { return mMode; }
    int dim() const { return mDim; }
    const std::string &url() const { return mUrl; }
    std::size_t network_requests() const;

    VecX embed(std::string_view label) const;

private:
    struct Cache;

    EmbeddingProvider(Mode mode, int dim, std::uint64_t seed, std::string url, int timeout_ms);
    VecX synthesize(const std::string &folded) const;
    VecX fetch(const std::string &folded) const;

    Mode mMode;
    int mDim;
    std::uint64_t mSeed;
    std::string mUrl;
    int mTimeoutMs;
    std::shared_ptr<Cache> mCache;
};

/// Unit-norm embedding of a case-folded label. Throws EmptyLabel, ServiceUnavailable.
VecX embed_label(const EmbeddingProvider &provider, std::string_view label);

/// Per-pixel cosine similarity with the query; zero-norm pixels score -1.
ImageD query_heatmap(const ImageD &semantic, const VecX &query);

struct Localization {
    Vec3 position = Vec3::Zero();
    double score = 0.0;
    std::size_t index = 0;
};

/// Primitive maximizing opacity * cos(embedding, query), if that score reaches min_score.
std::optional<Localization> localize(const SceneBelief &belief, const VecX &query, double min_score = 0.6);

/// Class id whose embedding is most similar to `embedding` (0 if none reaches min_cos).
int classify_embedding(const EmbeddingProvider &provider, const VecX &embedding, double min_cos = 0.6);

} // namespace belief
