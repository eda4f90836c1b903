#pragma once

#include <array>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace miwv::detail {

// One file per key: a JSON header line {model_id, profile, d, content_hash}
// followed by d little-endian float32. Writers for the same key are serialized.
class EmbeddingCache {
public:
    EmbeddingCache(std::filesystem::path dir, std::string model_id, std::string profile);

    bool enabled() const noexcept { return !dir_.empty(); }
    std::optional<std::vector<float>> get(const std::string& content_hash, std::size_t dim) const;
    void put(const std::string& content_hash, const std::vector<float>& values);

    std::filesystem::path path_for(const std::string& content_hash) const;

private:
    std::filesystem::path dir_;
    std::string model_id_;
    std::string profile_;
    mutable std::array<std::mutex, 32> stripes_;
};

void append_f32_le(std::string& out, float value);
float read_f32_le(const char* bytes);

}  // namespace miwv::detail
