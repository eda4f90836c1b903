#include "miwv/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <thread>

#include "embedding_cache.hpp"
#include "json.hpp"
#include "miwv/digest.hpp"
#include "miwv/error.hpp"
#include "miwv/json_text.hpp"

namespace miwv {

EmbeddingVector::EmbeddingVector(std::vector<float> components)
    : components_(std::move(components)) {
    double acc = 0.0;
    for (float v : components_) {
        if (!std::isfinite(v)) throw Error(ErrorKind::MalformedResponse, "non-finite embedding component");
        acc += static_cast<double>(v) * static_cast<double>(v);
    }
    norm_ = std::sqrt(acc);
}

EmbeddingVector mean_pool(const TokenEmbeddingSequence& tokens) {
    if (tokens.rows == 0) throw Error(ErrorKind::EmptySequence, "token sequence has no rows");
    if (tokens.dim == 0 || tokens.values.size() != tokens.rows * tokens.dim) {
        throw Error(ErrorKind::DimensionMismatch, "token matrix shape does not match its data");
    }
    std::vector<double> sums(tokens.dim, 0.0);
    for (std::size_t q = 0; q < tokens.rows; ++q) {
        const float* row = tokens.values.data() + q * tokens.dim;
        for (std::size_t c = 0; c < tokens.dim; ++c) sums[c] += row[c];
    }
    std::vector<float> out(tokens.dim);
    const double count = static_cast<double>(tokens.rows);
    for (std::size_t c = 0; c < tokens.dim; ++c) out[c] = static_cast<float>(sums[c] / count);
    return EmbeddingVector(std::move(out));
}

Similarity cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw Error(ErrorKind::DimensionMismatch,
                    std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    }
    if (a.zero_norm() || b.zero_norm()) return {0.0, true};
    // elementwise products commute, so argument order never changes the result
    const auto x = a.components();
    const auto y = b.components();
    double dot = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
        dot += static_cast<double>(x[c]) * static_cast<double>(y[c]);
    }
    const double sim = dot / (a.norm() * b.norm());
    return {std::clamp(sim, -1.0, 1.0), false};
}

EmbeddingVector hash_embed(std::string_view text, std::size_t dim) {
    if (dim == 0) throw Error(ErrorKind::DimensionMismatch, "hash embedding dimension is 0");
    std::vector<long long> counts(dim, 0);
    auto add_window = [&](std::string_view window) {
        const auto h = fnv1a64(window);
        counts[h % dim] += (h >> 63) ? -1 : 1;
    };
    if (text.size() < 3) {
        add_window(text);
    } else {
        for (std::size_t p = 0; p + 3 <= text.size(); ++p) add_window(text.substr(p, 3));
    }
    double acc = 0.0;
    for (auto c : counts) acc += static_cast<double>(c) * static_cast<double>(c);
    const double norm = std::sqrt(acc);
    std::vector<float> out(dim, 0.0f);
    if (norm > 0.0) {
        for (std::size_t c = 0; c < dim; ++c) {
            out[c] = static_cast<float>(static_cast<double>(counts[c]) / norm);
        }
    }
    return EmbeddingVector(std::move(out));
}

std::string_view to_string(EmbeddingBackendKind kind) {
    return kind == EmbeddingBackendKind::Remote ? "remote" : "builtin-hash";
}

std::string_view to_string(Pooling pooling) {
    return pooling == Pooling::TokenMean ? "token-mean" : "backend-pooled";
}

namespace {

EmbeddingVector pooled(BackendEmbedding&& out, const EmbeddingBackendDescriptor& desc) {
    EmbeddingVector v;
    if (desc.pooling == Pooling::TokenMean) {
        auto* tokens = std::get_if<TokenEmbeddingSequence>(&out);
        if (!tokens) {
            throw Error(ErrorKind::MalformedResponse,
                        "token-mean pooling needs per-token vectors from the backend");
        }
        v = mean_pool(*tokens);
    } else {
        auto* vec = std::get_if<std::vector<float>>(&out);
        if (!vec) {
            throw Error(ErrorKind::MalformedResponse, "backend returned token vectors; expected pooled");
        }
        v = EmbeddingVector(std::move(*vec));
    }
    if (v.dim() != desc.dimension) {
        throw Error(ErrorKind::DimensionMismatch, "backend returned d=" + std::to_string(v.dim()) +
                                                      ", descriptor says " +
                                                      std::to_string(desc.dimension));
    }
    return v;
}

}  // namespace

EmbeddingMatrix embed_corpus(const Dataset& dataset, const TemplateProfile& profile,
                             EmbeddingBackend& backend, const std::filesystem::path& cache_dir,
                             const EmbedOptions& options, EmbedStats* stats) {
    const auto& desc = backend.descriptor();
    detail::EmbeddingCache cache(cache_dir, desc.model_id, profile.name());

    const std::size_t n = dataset.size();
    std::vector<std::string> texts(n);
    std::vector<std::string> hashes(n);
    std::vector<std::optional<EmbeddingVector>> rows(n);
    std::vector<std::size_t> misses;
    for (std::size_t i = 0; i < n; ++i) {
        texts[i] = profile.zero_shot(dataset.samples[i]);
        hashes[i] = sha256_hex(texts[i]);
        if (auto hit = cache.get(hashes[i], desc.dimension)) {
            rows[i] = EmbeddingVector(std::move(*hit));
        } else {
            misses.push_back(i);
        }
    }

    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
    const std::size_t n_batches = (misses.size() + batch - 1) / batch;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> calls{0};
    std::mutex err_mu;
    std::exception_ptr first_error;

    auto worker = [&] {
        for (;;) {
            const auto b = next.fetch_add(1);
            if (b >= n_batches) return;
            {
                std::lock_guard lock(err_mu);
                if (first_error) return;
            }
            try {
                const auto begin = b * batch;
                const auto end = std::min(misses.size(), begin + batch);
                std::vector<std::string> chunk;
                for (auto k = begin; k < end; ++k) chunk.push_back(texts[misses[k]]);
                auto outs = backend.embed_batch(chunk);
                calls.fetch_add(1);
                if (outs.size() != chunk.size()) {
                    throw Error(ErrorKind::MalformedResponse, "backend returned " +
                                                                  std::to_string(outs.size()) +
                                                                  " vectors for " +
                                                                  std::to_string(chunk.size()) +
                                                                  " texts");
                }
                for (auto k = begin; k < end; ++k) {
                    const auto id = misses[k];
                    auto v = pooled(std::move(outs[k - begin]), desc);
                    cache.put(hashes[id], std::vector<float>(v.components().begin(),
                                                             v.components().end()));
                    rows[id] = std::move(v);
                }
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const std::size_t n_threads = std::min(std::max<std::size_t>(1, options.max_in_flight), n_batches);
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    if (first_error) std::rethrow_exception(first_error);

    EmbeddingMatrix m;
    m.backend = desc;
    m.dataset_hash = dataset.content_hash;
    m.profile_name = profile.name();
    m.rows.reserve(n);
    for (auto& r : rows) m.rows.push_back(std::move(*r));
    if (stats) {
        stats->cache_hits = n - misses.size();
        stats->computed = misses.size();
        stats->backend_calls = calls.load();
    }
    return m;
}

void write_embedding_matrix(const std::filesystem::path& path, const EmbeddingMatrix& matrix) {
    nlohmann::ordered_json header;
    header["format"] = "miwv-embeddings";
    header["dataset_hash"] = matrix.dataset_hash;
    header["backend"] = to_string(matrix.backend.kind);
    header["model_id"] = matrix.backend.model_id;
    header["pooling"] = to_string(matrix.backend.pooling);
    header["profile"] = matrix.profile_name;
    header["n"] = matrix.size();
    header["d"] = matrix.backend.dimension;
    std::string bytes = header.dump();
    bytes.push_back('\n');
    bytes.reserve(bytes.size() + matrix.size() * matrix.backend.dimension * 4);
    for (const auto& row : matrix.rows) {
        for (float v : row.components()) detail::append_f32_le(bytes, v);
    }
    write_file_atomic(path, bytes);
}

EmbeddingMatrix read_embedding_matrix(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::MissingArtifact, path.string());
    const auto bytes = read_file(path);
    const auto nl = bytes.find('\n');
    EmbeddingMatrix m;
    std::size_t n = 0;
    try {
        if (nl == std::string::npos) throw std::runtime_error("no header");
        const auto header = nlohmann::json::parse(std::string_view(bytes).substr(0, nl));
        if (header.at("format") != "miwv-embeddings") throw std::runtime_error("wrong format tag");
        m.dataset_hash = header.at("dataset_hash").get<std::string>();
        m.backend.kind = header.at("backend") == "remote" ? EmbeddingBackendKind::Remote
                                                          : EmbeddingBackendKind::BuiltinHash;
        m.backend.model_id = header.at("model_id").get<std::string>();
        m.backend.pooling =
            header.at("pooling") == "token-mean" ? Pooling::TokenMean : Pooling::BackendPooled;
        m.backend.dimension = header.at("d").get<std::size_t>();
        m.profile_name = header.at("profile").get<std::string>();
        n = header.at("n").get<std::size_t>();
    } catch (const std::exception& e) {
        throw Error(ErrorKind::StaleArtifact, path.string() + ": unreadable header (" + e.what() + ")");
    }
    const std::size_t d = m.backend.dimension;
    if (bytes.size() - nl - 1 != n * d * 4) {
        throw Error(ErrorKind::StaleArtifact, path.string() + ": payload size mismatch");
    }
    const char* p = bytes.data() + nl + 1;
    m.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<float> row(d);
        for (std::size_t c = 0; c < d; ++c, p += 4) row[c] = detail::read_f32_le(p);
        m.rows.emplace_back(std::move(row));
    }
    return m;
}

}  // namespace miwv
