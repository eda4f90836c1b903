#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "miwv/dataset.hpp"
#include "miwv/embedding.hpp"
#include "miwv/retrieval.hpp"
#include "miwv/scoring.hpp"
#include "miwv/selection.hpp"
#include "miwv/template_profile.hpp"

namespace miwv {

struct DatasetConfig {
    std::filesystem::path path;
    SourceFormat format = SourceFormat::AlpacaJson;
};

struct EmbeddingConfig {
    EmbeddingBackendKind backend = EmbeddingBackendKind::BuiltinHash;
    std::string base_url;
    std::string model_id;
    std::size_t dimension = 256;
    Pooling pooling = Pooling::BackendPooled;
    std::filesystem::path cache_dir;  // empty: <output_dir>/cache/embeddings
    std::size_t batch_size = 32;
    std::size_t max_in_flight = 4;
    std::size_t retries = 2;
    int backoff_ms = 200;
};

struct ScorerConfig {
    ScorerKind backend = ScorerKind::HashMock;
    std::string base_url;
    std::string model_id;
    std::size_t context_limit = 0;  // 0: backend default (unbounded for builtins, 4096 remote)
    std::size_t max_in_flight = 1;
    std::size_t retries = 2;
    int backoff_ms = 200;
    std::filesystem::path corpus;  // ngram-reference training text
    bool truncate = true;
    OffsetUnit offset_unit = OffsetUnit::Byte;
};

struct SelectionConfig {
    Strategy strategy;
    std::vector<double> ratios;
    ExportFormat export_format = ExportFormat::Source;
    bool source_order = false;
};

struct PipelineConfig {
    DatasetConfig dataset;
    nlohmann::json template_profile = "alpaca-style";
    EmbeddingConfig embedding;
    ScorerConfig scorer;
    RetrievalOptions retrieval;
    SelectionConfig selection;
    std::filesystem::path output_dir = "miwv-out";
    bool quiet = false;

    // Relative paths resolve against `base_dir`.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    // Throws Config on out-of-range values; selection settings only when asked.
    void validate(bool with_selection) const;
    std::filesystem::path cache_dir() const;
};

PipelineConfig load_config(const std::filesystem::path& path);

// Command-line values that take precedence over the config file.
struct ConfigOverrides {
    std::optional<std::filesystem::path> output_dir;
    std::optional<std::vector<double>> ratios;
    std::optional<std::string> strategy;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
    bool source_order = false;
};

void apply_overrides(PipelineConfig& config, const ConfigOverrides& overrides);

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const EmbeddingConfig& config);
std::unique_ptr<Scorer> make_scorer(const ScorerConfig& config);

// Structured one-line logs on stderr: "stage=<name> key=value ...".
class Logger {
public:
    explicit Logger(bool quiet) : quiet_(quiet) {}
    void info(std::string_view stage, std::string_view message) const;
    // Emits every 1000 samples and at completion.
    void progress(std::string_view stage, std::size_t done, std::size_t total) const;

private:
    bool quiet_;
};

// Each command returns a machine-readable summary of what it did.
nlohmann::ordered_json cmd_embed(const PipelineConfig& config, const Logger& log);
nlohmann::ordered_json cmd_retrieve(const PipelineConfig& config, const Logger& log);
nlohmann::ordered_json cmd_score(const PipelineConfig& config, const Logger& log);
nlohmann::ordered_json cmd_select(const PipelineConfig& config, const Logger& log);
// All four stages in order; also writes run_summary.json.
nlohmann::ordered_json cmd_run(const PipelineConfig& config, const Logger& log);

}  // namespace miwv
