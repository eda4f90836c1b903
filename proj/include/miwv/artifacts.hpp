#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace miwv::artifacts {

struct Layout {
    std::filesystem::path root;

    std::filesystem::path embeddings() const { return root / "embeddings.bin"; }
    std::filesystem::path neighbors() const { return root / "neighbors.jsonl"; }
    std::filesystem::path neighbors_meta() const { return root / "neighbors.meta.json"; }
    std::filesystem::path scores() const { return root / "scores.jsonl"; }
    std::filesystem::path scores_meta() const { return root / "scores.meta.json"; }
    std::filesystem::path scores_progress() const { return root / "scores.progress.jsonl"; }
    std::filesystem::path rejects() const { return root / "rejects.jsonl"; }
    std::filesystem::path subsets() const { return root / "subsets"; }
    std::filesystem::path stats_json() const { return root / "stats.json"; }
    std::filesystem::path stats_text() const { return root / "stats.txt"; }
    std::filesystem::path histogram_csv() const { return root / "histogram.csv"; }
    std::filesystem::path run_summary() const { return root / "run_summary.json"; }
};

// Sidecar metadata for a JSONL artifact. Records the artifact's own sha256 plus
// whatever input hashes the producer adds to `meta`.
void write_meta(const std::filesystem::path& meta_path, const std::filesystem::path& artifact,
                nlohmann::ordered_json meta);

// Loads the sidecar, checks the artifact exists and still hashes to the recorded
// value, and that meta[key] == expected for every pair. MissingArtifact or
// StaleArtifact otherwise.
nlohmann::json read_checked_meta(
    const std::filesystem::path& meta_path, const std::filesystem::path& artifact,
    std::initializer_list<std::pair<const char*, std::string>> expected);

}  // namespace miwv::artifacts
