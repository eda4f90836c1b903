#include <algorithm>

#include "http.hpp"
#include "json.hpp"
#include "miwv/embedding.hpp"
#include "miwv/error.hpp"

namespace miwv {

HashEmbeddingBackend::HashEmbeddingBackend(std::size_t dimension) {
    desc_.kind = EmbeddingBackendKind::BuiltinHash;
    desc_.model_id = "builtin-hash-" + std::to_string(dimension);
    desc_.dimension = dimension;
    desc_.pooling = Pooling::BackendPooled;
}

std::vector<BackendEmbedding> HashEmbeddingBackend::embed_batch(
    std::span<const std::string> texts) {
    std::vector<BackendEmbedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        auto v = hash_embed(t, desc_.dimension);
        out.emplace_back(std::vector<float>(v.components().begin(), v.components().end()));
    }
    return out;
}

RemoteEmbeddingBackend::RemoteEmbeddingBackend(RemoteEmbeddingOptions options)
    : opts_(std::move(options)) {
    if (opts_.base_url.empty()) throw Error(ErrorKind::Config, "embedding.base_url is required");
    if (opts_.dimension == 0) throw Error(ErrorKind::Config, "embedding.dimension is required");
    desc_.kind = EmbeddingBackendKind::Remote;
    desc_.model_id = opts_.model_id;
    desc_.dimension = opts_.dimension;
    desc_.pooling = opts_.pooling;
}

namespace {

std::vector<float> float_row(const nlohmann::json& arr) {
    if (!arr.is_array()) throw Error(ErrorKind::MalformedResponse, "embedding row is not an array");
    std::vector<float> row;
    row.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number()) throw Error(ErrorKind::MalformedResponse, "non-numeric embedding value");
        row.push_back(v.get<float>());
    }
    return row;
}

}  // namespace

std::vector<BackendEmbedding> RemoteEmbeddingBackend::embed_batch(
    std::span<const std::string> texts) {
    nlohmann::json req;
    req["model"] = opts_.model_id;
    req["input"] = nlohmann::json(std::vector<std::string>(texts.begin(), texts.end()));
    const auto body = detail::post_json(opts_.base_url, "/v1/embeddings", req.dump(),
                                        {opts_.retries, opts_.backoff_ms, opts_.timeout_s});

    std::vector<std::optional<BackendEmbedding>> slots(texts.size());
    try {
        const auto res = nlohmann::json::parse(body);
        for (const auto& item : res.at("data")) {
            const auto index = item.at("index").get<std::size_t>();
            if (index >= slots.size() || slots[index]) {
                throw Error(ErrorKind::MalformedResponse, "bad or repeated embedding index");
            }
            const auto& emb = item.at("embedding");
            if (desc_.pooling == Pooling::TokenMean) {
                TokenEmbeddingSequence seq;
                for (const auto& tok : emb) {
                    auto row = float_row(tok);
                    if (seq.rows == 0) seq.dim = row.size();
                    if (row.size() != seq.dim) {
                        throw Error(ErrorKind::DimensionMismatch, "ragged token vectors");
                    }
                    seq.values.insert(seq.values.end(), row.begin(), row.end());
                    ++seq.rows;
                }
                slots[index] = std::move(seq);
            } else {
                slots[index] = float_row(emb);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedResponse, std::string("embeddings response: ") + e.what());
    }
    std::vector<BackendEmbedding> out;
    out.reserve(slots.size());
    for (auto& s : slots) {
        if (!s) throw Error(ErrorKind::MalformedResponse, "embeddings response is missing an index");
        out.push_back(std::move(*s));
    }
    return out;
}

}  // namespace miwv
