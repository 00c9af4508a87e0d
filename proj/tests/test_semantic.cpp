#include "support.hpp"

#include "belief/semantic_field.hpp"
#include "belief/vocabulary.hpp"

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <Eigen/QR>

#include <atomic>
#include <thread>

using namespace belief;
using namespace belief::testing;

namespace {

ErrorCode code_of(auto &&fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

GaussianPrimitive with_embedding(const Vec3 &mean, const VecX &e, double opacity) {
    return make_primitive(mean, Mat3::Identity() * 0.01, opacity, Vec3::Zero(), e, Origin::Observed);
}

} // namespace

TEST_CASE("synthetic embeddings") {
    const auto p = EmbeddingProvider::synthetic();
    CHECK(embed_label(p, "sofa") == embed_label(p, "sofa"));
    CHECK(embed_label(p, "Sofa") == embed_label(p, "sofa"));
    CHECK(embed_label(EmbeddingProvider::synthetic(), "sofa") == embed_label(p, "sofa"));
    CHECK(code_of([&] { embed_label(p, ""); }) == ErrorCode::EmptyLabel);

    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        std::string label;
        const int n = uniform_int(rng, 1, 12);
        for (int c = 0; c < n; ++c) {
            label.push_back(static_cast<char>(uniform_int(rng, 33, 126)));
        }
        CHECK(std::abs(embed_label(p, label).norm() - 1.0) <= 1e-6);
    }
}

TEST_CASE("vocabulary classes are well separated") {
    const auto p = EmbeddingProvider::synthetic(16, kShippedEmbeddingSeed);
    for (int a = 1; a < kNumClasses; ++a) {
        for (int b = a + 1; b < kNumClasses; ++b) {
            const double c = embed_label(p, class_name(a)).dot(embed_label(p, class_name(b)));
            CHECK_MESSAGE(std::abs(c) < 0.5, class_name(a), " vs ", class_name(b));
        }
    }
    for (int a = 1; a < kNumClasses; ++a) {
        CHECK(classify_embedding(p, embed_label(p, class_name(a))) == a);
    }
}

TEST_CASE("query_heatmap") {
    const auto p = EmbeddingProvider::synthetic(8);
    const VecX q = embed_label(p, "bed");
    ImageD same(3, 4, 8);
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 4; ++x) {
            for (int c = 0; c < 8; ++c) {
                same(y, x, c) = 2.0 * q[c];
            }
        }
    }
    const auto uniformHeat = query_heatmap(same, q);
    for (double s : uniformHeat.data()) {
        CHECK(s == doctest::Approx(1.0));
    }

    VecX e0 = VecX::Zero(8), e1 = VecX::Zero(8);
    e0[0] = 1;
    e1[1] = 1;
    ImageD ortho(1, 2, 8);
    ortho(0, 0, 1) = 1.0;
    const auto h = query_heatmap(ortho, e0);
    CHECK(h(0, 0) == doctest::Approx(0.0));
    CHECK(h(0, 1) == -1.0);

    Rng rng(2);
    ImageD img(5, 6, 8);
    for (auto &v : img.data()) {
        v = uniform(rng, -1, 1);
    }
    const auto heat = query_heatmap(img, q);
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 6; ++x) {
            double dot = 0, nf = 0, nq = 0;
            for (int c = 0; c < 8; ++c) {
                dot += img(y, x, c) * q[c];
                nf += img(y, x, c) * img(y, x, c);
                nq += q[c] * q[c];
            }
            CHECK(std::abs(heat(y, x) - dot / std::sqrt(nf * nq)) < 1e-9);
            CHECK(heat(y, x) >= -1.0);
            CHECK(heat(y, x) <= 1.0);
        }
    }
    CHECK(code_of([&] { query_heatmap(img, VecX::Ones(3)); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("localize") {
    const VecX q = VecX::Unit(4, 0);
    CHECK_FALSE(localize(SceneBelief{}, q));

    SceneBelief one;
    one.primitives.push_back(with_embedding(Vec3(1, 2, 3), q, 1.0));
    const auto hit = localize(one, q);
    REQUIRE(hit);
    CHECK(hit->position == Vec3(1, 2, 3));
    CHECK(hit->score == doctest::Approx(1.0));

    SceneBelief two;
    two.primitives.push_back(with_embedding(Vec3(0, 0, 0), q, 0.7));
    two.primitives.push_back(with_embedding(Vec3(5, 0, 0), q, 0.9));
    REQUIRE(localize(two, q));
    CHECK(localize(two, q)->index == 1);
    auto dim = two;
    for (auto &g : dim.primitives) {
        g.opacity *= 0.5;
    }
    CHECK_FALSE(localize(dim, q, 0.6));
    CHECK(localize(dim, q, 0.0)->index == 1);

    SUBCASE("argmax invariant under opacity scaling and joint rotation") {
        Rng rng(3);
        for (int trial = 0; trial < 100; ++trial) {
            SceneBelief b;
            for (int i = 0; i < 20; ++i) {
                b.primitives.push_back(random_primitive(rng, Origin::Observed, 4));
            }
            const VecX query = random_unit(rng, 4);
            const auto base = localize(b, query, -1.0);
            REQUIRE(base);
            auto scaled = b;
            const double s = uniform(rng, 0.1, 1.0);
            for (auto &g : scaled.primitives) {
                g.opacity *= s;
            }
            CHECK(localize(scaled, query, -1.0)->index == base->index);

            Eigen::MatrixXd M(4, 4);
            for (Eigen::Index i = 0; i < M.size(); ++i) {
                M.data()[i] = uniform(rng, -1, 1);
            }
            const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(M).householderQ();
            auto rotated = b;
            for (auto &g : rotated.primitives) {
                g.embedding = Q * g.embedding;
            }
            CHECK(localize(rotated, Q * query, -1.0)->index == base->index);
        }
    }
}

TEST_CASE("external provider protocol") {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/embed", [&](const httplib::Request &req, httplib::Response &res) {
        ++calls;
        const auto body = nlohmann::json::parse(req.body);
        const int dim = body.at("dim");
        std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
        v[body.at("label").get<std::string>().size() % static_cast<std::size_t>(dim)] = 3.0;
        res.set_content(nlohmann::json{{"vector", v}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const auto p = EmbeddingProvider::external("http://127.0.0.1:" + std::to_string(port), 2000, 8);
    const VecX a = embed_label(p, "Chair");
    CHECK(a.norm() == doctest::Approx(1.0));
    CHECK(a[5] == doctest::Approx(1.0));
    CHECK(embed_label(p, "chair") == a);
    CHECK(calls == 1);
    CHECK(p.network_requests() == 1);

    server.stop();
    thread.join();

    const auto dead = EmbeddingProvider::external("http://127.0.0.1:" + std::to_string(port), 200, 8);
    CHECK(code_of([&] { embed_label(dead, "table"); }) == ErrorCode::ServiceUnavailable);
}
