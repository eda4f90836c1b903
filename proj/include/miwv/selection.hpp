#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "miwv/dataset.hpp"
#include "miwv/scoring.hpp"

namespace miwv {

// SplitMix64 (Steele, Lea, Flood). From seed 0 the first outputs are
// 0xe220a8397b1dcdaf, 0x6e789e6aa1b965f4, 0x06c45d188009454f.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    // Uniform-ish draw in [0, bound) by the high 64 bits of next() * bound.
    std::uint64_t below(std::uint64_t bound) noexcept {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * bound) >> 64);
    }

private:
    std::uint64_t state_;
};

enum class StrategyKind { MiwvDesc, MiwvAsc, PromptLossDesc, Random };

struct Strategy {
    StrategyKind kind = StrategyKind::MiwvDesc;
    std::uint64_t seed = 0;

    // "miwv-desc", "miwv-asc" (alias "low-miwv"), "prompt-loss-desc"
    // (alias "high-prompt-loss"), "random" or "random(<seed>)".
    static Strategy parse(std::string_view text, std::uint64_t default_seed = 0);
    std::string name() const;

    friend bool operator==(const Strategy&, const Strategy&) = default;
};

struct Ranking {
    std::vector<std::size_t> ordered_ids;  // best first
    Strategy strategy;
};

// miwv-desc: miwv descending, ties by ascending id. miwv-asc: the exact reverse
// of miwv-desc. prompt-loss-desc: conditioned loss descending, ties by id.
// random: Fisher-Yates over the id-ordered list, j = below(i + 1) for i = n-1..1.
Ranking rank(std::span<const MiwvRecord> records, const Strategy& strategy);

// floor(ratio * n), where products within 1e-9 below an integer count as that integer.
std::size_t subset_count(double ratio, std::size_t n_scored);

struct SelectionContext {
    std::string dataset_hash;
    std::string embedding_model;
    std::string scorer_model;
    std::string template_profile;
    std::size_t n_rejected = 0;
};

struct SelectionSubset {
    std::vector<std::size_t> ids;
    double ratio = 1.0;
    std::size_t count = 0;
    std::size_t n_scored = 0;
    Strategy strategy;
    SelectionContext context;

    // dataset_hash, embedding_model, scorer_model, template_profile, strategy,
    // ratio, count, n_scored, n_rejected, tool_version, created_at, ids
    nlohmann::ordered_json manifest() const;
};

SelectionSubset select_top_fraction(const Ranking& ranking, double ratio,
                                    const SelectionContext& context = {});

enum class ExportFormat { Source, GenericJsonl };

struct ExportOptions {
    ExportFormat format = ExportFormat::Source;
    bool source_order = false;  // write by ascending id instead of rank order
};

// Writes the subset records and a `<path>.manifest.json` sidecar. Returns the
// sidecar path.
std::filesystem::path export_subset(const Dataset& dataset, const SelectionSubset& subset,
                                    const std::filesystem::path& path,
                                    const ExportOptions& options = {});

struct ScoreReport {
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;  // population
    double min = 0.0;
    double max = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    std::vector<double> bin_edges;       // 21 edges
    std::vector<std::size_t> histogram;  // 20 equal-width bins, last one closed
    std::vector<std::size_t> top_ids;    // highest miwv first
    std::vector<std::size_t> bottom_ids; // lowest miwv first

    nlohmann::ordered_json to_json() const;
    std::string to_text() const;
    std::string histogram_csv() const;
};

inline constexpr std::size_t kHistogramBins = 20;

// Quantile of sorted data by linear interpolation between closest ranks:
// h = (n - 1) p, x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
double quantile_linear(std::span<const double> sorted, double p);

ScoreReport score_statistics(std::span<const MiwvRecord> records);

}  // namespace miwv
