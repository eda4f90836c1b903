#include "miwv/artifacts.hpp"

#include "miwv/digest.hpp"
#include "miwv/error.hpp"
#include "miwv/json_text.hpp"

namespace miwv::artifacts {

void write_meta(const std::filesystem::path& meta_path, const std::filesystem::path& artifact,
                nlohmann::ordered_json meta) {
    meta["artifact"] = artifact.filename().string();
    meta["sha256"] = sha256_file_hex(artifact);
    write_file_atomic(meta_path, meta.dump(2) + "\n");
}

nlohmann::json read_checked_meta(
    const std::filesystem::path& meta_path, const std::filesystem::path& artifact,
    std::initializer_list<std::pair<const char*, std::string>> expected) {
    if (!std::filesystem::exists(artifact)) throw Error(ErrorKind::MissingArtifact, artifact.string());
    if (!std::filesystem::exists(meta_path)) throw Error(ErrorKind::MissingArtifact, meta_path.string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(meta_path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::StaleArtifact, meta_path.string() + ": " + e.what());
    }
    if (meta.value("sha256", std::string{}) != sha256_file_hex(artifact)) {
        throw Error(ErrorKind::StaleArtifact, artifact.string() + " changed since it was written");
    }
    for (const auto& [key, value] : expected) {
        if (meta.value(key, std::string{}) != value) {
            throw Error(ErrorKind::StaleArtifact, artifact.string() + " was built for a different " +
                                                      key + "; rerun the earlier stage");
        }
    }
    return meta;
}

}  // namespace miwv::artifacts
