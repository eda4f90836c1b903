#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "miwv/digest.hpp"
#include "miwv/embedding.hpp"
#include "miwv/error.hpp"
#include "miwv/json_text.hpp"
#include "miwv/template_profile.hpp"
#include "support.hpp"

using namespace miwv;

namespace {

class CountingBackend final : public EmbeddingBackend {
public:
    const EmbeddingBackendDescriptor& descriptor() const override { return inner_.descriptor(); }
    std::vector<BackendEmbedding> embed_batch(std::span<const std::string> texts) override {
        ++calls;
        texts_seen += texts.size();
        return inner_.embed_batch(texts);
    }
    std::atomic<std::size_t> calls{0};
    std::atomic<std::size_t> texts_seen{0};

private:
    HashEmbeddingBackend inner_;
};

EmbeddingVector vec(std::vector<float> v) { return EmbeddingVector(std::move(v)); }

}  // namespace

TEST_CASE("mean pooling") {
    const auto p = mean_pool({{1, 3, 3, 5}, 2, 2});
    CHECK(p.components()[0] == 2.0f);
    CHECK(p.components()[1] == 4.0f);

    const auto one = mean_pool({{0.25f, -7.5f, 3.0f}, 1, 3});
    CHECK(std::vector<float>(one.components().begin(), one.components().end()) ==
          std::vector<float>{0.25f, -7.5f, 3.0f});

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    TokenEmbeddingSequence seq{{}, 37, 64};
    for (std::size_t i = 0; i < seq.rows * seq.dim; ++i) seq.values.push_back(u(rng));
    const auto pooled = mean_pool(seq);
    for (std::size_t c = 0; c < seq.dim; ++c) {
        long double acc = 0;
        for (std::size_t r = 0; r < seq.rows; ++r) acc += seq.values[r * seq.dim + c];
        CHECK(pooled.components()[c] == doctest::Approx(static_cast<double>(acc / seq.rows)).epsilon(1e-6));
    }
}

TEST_CASE("mean pooling rejects bad shapes") {
    try {
        mean_pool({{}, 0, 4});
        FAIL("expected EmptySequence");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptySequence);
    }
    try {
        mean_pool({{1, 2, 3}, 2, 2});
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DimensionMismatch);
    }
}

TEST_CASE("non-finite components are rejected") {
    CHECK_THROWS_AS(vec({1.0f, NAN}), Error);
    CHECK_THROWS_AS(vec({INFINITY, 0.0f}), Error);
}

TEST_CASE("cosine similarity") {
    const auto a = vec({1, 2, 3});
    const auto b = vec({4, 5, 6});
    CHECK(cosine_similarity(a, b).value == doctest::Approx(0.9746318).epsilon(1e-6));
    CHECK(cosine_similarity(a, b).value == cosine_similarity(b, a).value);
    CHECK(cosine_similarity(vec({2, 4, 6}), b).value == doctest::Approx(cosine_similarity(a, b).value).epsilon(1e-12));
    CHECK(cosine_similarity(vec({-4, -5, -6}), b).value == doctest::Approx(-1.0));
    const auto z = cosine_similarity(vec({0, 0, 0}), b);
    CHECK(z.value == 0.0);
    CHECK(z.degenerate);
    CHECK(cosine_similarity(a, a).value <= 1.0);
}

TEST_CASE("hash embedding") {
    const auto e = hash_embed("Explain how tree pruning works.");
    CHECK(e.dim() == 256);
    CHECK(e.norm() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(hash_embed("ab").dim() == 256);
    CHECK_FALSE(hash_embed("ab").zero_norm());
    CHECK(hash_embed("same text") == hash_embed("same text"));
    CHECK(hash_embed("x", 16).dim() == 16);

    // one window: all mass in one bucket, sign from the top hash bit
    const auto h = fnv1a64("abc");
    const auto one = hash_embed("abc", 256);
    const float expect = (h >> 63) ? -1.0f : 1.0f;
    CHECK(one.components()[h % 256] == expect);
}

TEST_CASE("warm cache makes no backend calls") {
    testing::TempDir tmp("cache");
    const auto d = testing::fixture20();
    const auto profile = TemplateProfile::alpaca_style();

    CountingBackend cold;
    EmbedStats s1;
    const auto m1 = embed_corpus(d, profile, cold, tmp.path(), {4, 2}, &s1);
    CHECK(cold.calls > 0);
    CHECK(cold.texts_seen == d.size());
    CHECK(s1.cache_hits == 0);

    CountingBackend warm;
    EmbedStats s2;
    const auto m2 = embed_corpus(d, profile, warm, tmp.path(), {4, 2}, &s2);
    CHECK(warm.calls == 0);
    CHECK(s2.cache_hits == d.size());
    CHECK(s2.backend_calls == 0);
    REQUIRE(m1.size() == m2.size());
    for (std::size_t i = 0; i < m1.size(); ++i) CHECK(m1.rows[i] == m2.rows[i]);
    CHECK(m1.rows[0] == m1.rows[19]);
}

TEST_CASE("damaged cache entry is reported") {
    testing::TempDir tmp("corrupt");
    const auto d = testing::fixture20();
    const auto profile = TemplateProfile::alpaca_style();
    CountingBackend backend;
    embed_corpus(d, profile, backend, tmp.path());

    std::filesystem::path victim;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(tmp.path())) {
        if (entry.path().extension() == ".emb") victim = entry.path();
    }
    REQUIRE_FALSE(victim.empty());
    const auto text = read_file(victim);
    std::ofstream(victim, std::ios::binary | std::ios::trunc) << text.substr(0, text.size() - 3);
    try {
        embed_corpus(d, profile, backend, tmp.path());
        FAIL("expected CacheCorrupt");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::CacheCorrupt);
        CHECK(exit_code(e.kind()) == 4);
    }
}

TEST_CASE("embedding matrix artifact round-trips") {
    testing::TempDir tmp("matrix");
    const auto d = testing::fixture20();
    HashEmbeddingBackend backend;
    auto m = embed_corpus(d, TemplateProfile::alpaca_style(), backend, {});
    write_embedding_matrix(tmp / "e.bin", m);
    const auto back = read_embedding_matrix(tmp / "e.bin");
    CHECK(back.dataset_hash == d.content_hash);
    CHECK(back.profile_name == "alpaca-style");
    CHECK(back.backend == m.backend);
    REQUIRE(back.size() == m.size());
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(back.rows[i] == m.rows[i]);

    const auto bytes = read_file(tmp / "e.bin");
    write_file_atomic(tmp / "short.bin", std::string_view(bytes).substr(0, bytes.size() - 4));
    try {
        read_embedding_matrix(tmp / "short.bin");
        FAIL("expected StaleArtifact");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::StaleArtifact);
    }
    try {
        read_embedding_matrix(tmp / "absent.bin");
        FAIL("expected MissingArtifact");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingArtifact);
    }
}

TEST_CASE("digests") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("shortest round-trip float text") {
    const auto lines = testing::fixture_text("oracle_double_repr.txt");
    std::size_t checked = 0;
    std::string_view rest = lines;
    while (!rest.empty()) {
        const auto nl = rest.find('\n');
        const auto line = rest.substr(0, nl);
        rest.remove_prefix(nl == std::string_view::npos ? rest.size() : nl + 1);
        if (line.empty()) continue;
        const auto bits = std::stoull(std::string(line.substr(0, 16)), nullptr, 16);
        double x;
        std::memcpy(&x, &bits, sizeof x);
        CHECK_MESSAGE(format_double(x) == line.substr(17), line);
        ++checked;
    }
    CHECK(checked > 4000);
}
