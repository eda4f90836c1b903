#include "embedding_cache.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "json.hpp"
#include "miwv/digest.hpp"
#include "miwv/error.hpp"
#include "miwv/json_text.hpp"

namespace miwv::detail {

void append_f32_le(std::string& out, float value) {
    const auto bits = std::bit_cast<std::uint32_t>(value);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

float read_f32_le(const char* bytes) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
    }
    return std::bit_cast<float>(bits);
}

EmbeddingCache::EmbeddingCache(std::filesystem::path dir, std::string model_id,
                               std::string profile)
    : dir_(std::move(dir)), model_id_(std::move(model_id)), profile_(std::move(profile)) {
    if (enabled()) std::filesystem::create_directories(dir_);
}

std::filesystem::path EmbeddingCache::path_for(const std::string& content_hash) const {
    std::string key = model_id_;
    key.push_back('\0');
    key += profile_;
    key.push_back('\0');
    key += content_hash;
    return dir_ / (sha256_hex(key) + ".emb");
}

std::optional<std::vector<float>> EmbeddingCache::get(const std::string& content_hash,
                                                      std::size_t dim) const {
    if (!enabled()) return std::nullopt;
    const auto path = path_for(content_hash);
    std::string bytes;
    {
        std::lock_guard lock(stripes_[fnv1a64(content_hash) % stripes_.size()]);
        if (!std::filesystem::exists(path)) return std::nullopt;
        bytes = read_file(path);
    }
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) throw Error(ErrorKind::CacheCorrupt, path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(std::string_view(bytes).substr(0, nl));
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorKind::CacheCorrupt, path.string() + ": bad header");
    }
    try {
        if (header.at("model_id") != model_id_ || header.at("profile") != profile_ ||
            header.at("content_hash") != content_hash ||
            header.at("d").get<std::size_t>() != dim) {
            throw Error(ErrorKind::CacheCorrupt, path.string() + ": header does not match key");
        }
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorKind::CacheCorrupt, path.string() + ": incomplete header");
    }
    if (bytes.size() - nl - 1 != dim * 4) {
        throw Error(ErrorKind::CacheCorrupt, path.string() + ": payload size mismatch");
    }
    std::vector<float> values(dim);
    for (std::size_t c = 0; c < dim; ++c) {
        values[c] = read_f32_le(bytes.data() + nl + 1 + 4 * c);
        if (!std::isfinite(values[c])) {
            throw Error(ErrorKind::CacheCorrupt, path.string() + ": non-finite component");
        }
    }
    return values;
}

void EmbeddingCache::put(const std::string& content_hash, const std::vector<float>& values) {
    if (!enabled()) return;
    nlohmann::ordered_json header;
    header["model_id"] = model_id_;
    header["profile"] = profile_;
    header["d"] = values.size();
    header["content_hash"] = content_hash;
    std::string bytes = header.dump();
    bytes.push_back('\n');
    for (float v : values) append_f32_le(bytes, v);
    std::lock_guard lock(stripes_[fnv1a64(content_hash) % stripes_.size()]);
    write_file_atomic(path_for(content_hash), bytes);
}

}  // namespace miwv::detail
