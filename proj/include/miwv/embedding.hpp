#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "miwv/dataset.hpp"
#include "miwv/template_profile.hpp"

namespace miwv {

// Q x d row-major token vectors.
struct TokenEmbeddingSequence {
    std::vector<float> values;
    std::size_t rows = 0;
    std::size_t dim = 0;
};

class EmbeddingVector {
public:
    EmbeddingVector() = default;
    // Throws MalformedResponse on non-finite components.
    explicit EmbeddingVector(std::vector<float> components);

    std::span<const float> components() const noexcept { return components_; }
    std::size_t dim() const noexcept { return components_.size(); }
    double norm() const noexcept { return norm_; }
    bool zero_norm() const noexcept { return norm_ == 0.0; }

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

private:
    std::vector<float> components_;
    double norm_ = 0.0;
};

// Column means accumulated in double, stored as float.
EmbeddingVector mean_pool(const TokenEmbeddingSequence& tokens);

struct Similarity {
    double value = 0.0;
    bool degenerate = false;  // one side had zero norm; value forced to 0
};

// a.b / (|a||b|) with double accumulation, clamped to [-1, 1].
Similarity cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Signed feature hashing of all 3-byte windows into `dim` buckets, L2-normalized.
EmbeddingVector hash_embed(std::string_view text, std::size_t dim = 256);

enum class EmbeddingBackendKind { Remote, BuiltinHash };
enum class Pooling { TokenMean, BackendPooled };

std::string_view to_string(EmbeddingBackendKind kind);
std::string_view to_string(Pooling pooling);

struct EmbeddingBackendDescriptor {
    EmbeddingBackendKind kind = EmbeddingBackendKind::BuiltinHash;
    std::string model_id = "builtin-hash-256";
    std::size_t dimension = 256;
    Pooling pooling = Pooling::BackendPooled;

    friend bool operator==(const EmbeddingBackendDescriptor&,
                           const EmbeddingBackendDescriptor&) = default;
};

// What a backend hands back for one text: a pooled vector, or per-token
// vectors when the descriptor asks for token-mean pooling.
using BackendEmbedding = std::variant<std::vector<float>, TokenEmbeddingSequence>;

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual const EmbeddingBackendDescriptor& descriptor() const = 0;
    // Must be safe to call from several threads at once.
    virtual std::vector<BackendEmbedding> embed_batch(std::span<const std::string> texts) = 0;
};

class HashEmbeddingBackend final : public EmbeddingBackend {
public:
    explicit HashEmbeddingBackend(std::size_t dimension = 256);
    const EmbeddingBackendDescriptor& descriptor() const override { return desc_; }
    std::vector<BackendEmbedding> embed_batch(std::span<const std::string> texts) override;

private:
    EmbeddingBackendDescriptor desc_;
};

struct RemoteEmbeddingOptions {
    std::string base_url;
    std::string model_id;
    std::size_t dimension = 0;
    Pooling pooling = Pooling::BackendPooled;
    std::size_t retries = 2;
    int backoff_ms = 200;
    int timeout_s = 60;
};

// POST {base_url}/v1/embeddings {"model", "input": [texts]}.
class RemoteEmbeddingBackend final : public EmbeddingBackend {
public:
    explicit RemoteEmbeddingBackend(RemoteEmbeddingOptions options);
    const EmbeddingBackendDescriptor& descriptor() const override { return desc_; }
    std::vector<BackendEmbedding> embed_batch(std::span<const std::string> texts) override;

private:
    RemoteEmbeddingOptions opts_;
    EmbeddingBackendDescriptor desc_;
};

struct EmbeddingMatrix {
    std::vector<EmbeddingVector> rows;
    EmbeddingBackendDescriptor backend;
    std::string dataset_hash;
    std::string profile_name;

    std::size_t size() const noexcept { return rows.size(); }
    std::size_t dim() const noexcept { return rows.empty() ? 0 : rows.front().dim(); }
};

struct EmbedOptions {
    std::size_t batch_size = 32;
    std::size_t max_in_flight = 1;
};

struct EmbedStats {
    std::size_t cache_hits = 0;
    std::size_t computed = 0;
    std::size_t backend_calls = 0;
};

// One vector per sample (zero-shot rendering) in id order. Vectors are cached
// under `cache_dir` by (model_id, profile name, rendered-text digest); hits
// never reach the backend. An empty `cache_dir` disables caching.
EmbeddingMatrix embed_corpus(const Dataset& dataset, const TemplateProfile& profile,
                             EmbeddingBackend& backend, const std::filesystem::path& cache_dir,
                             const EmbedOptions& options = {}, EmbedStats* stats = nullptr);

// Binary artifact: a JSON header line, then n*d little-endian float32.
void write_embedding_matrix(const std::filesystem::path& path, const EmbeddingMatrix& matrix);
EmbeddingMatrix read_embedding_matrix(const std::filesystem::path& path);

}  // namespace miwv
