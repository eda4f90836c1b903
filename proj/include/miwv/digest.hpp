#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace miwv {

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// Streaming FNV-1a (64-bit). Feeding "ab" then "c" equals hashing "abc".
class Fnv1a64 {
public:
    void update(std::string_view bytes) noexcept {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= kFnvPrime;
        }
    }
    void update(unsigned char c) noexcept {
        state_ ^= c;
        state_ *= kFnvPrime;
    }
    std::uint64_t value() const noexcept { return state_; }

private:
    std::uint64_t state_ = kFnvOffsetBasis;
};

inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    Fnv1a64 h;
    h.update(bytes);
    return h.value();
}

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace miwv
