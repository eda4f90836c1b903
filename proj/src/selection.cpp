#include "miwv/selection.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "miwv/error.hpp"
#include "miwv/json_text.hpp"

namespace miwv {

Strategy Strategy::parse(std::string_view text, std::uint64_t default_seed) {
    if (text == "miwv-desc") return {StrategyKind::MiwvDesc, 0};
    if (text == "miwv-asc" || text == "low-miwv") return {StrategyKind::MiwvAsc, 0};
    if (text == "prompt-loss-desc" || text == "high-prompt-loss") {
        return {StrategyKind::PromptLossDesc, 0};
    }
    if (text == "random") return {StrategyKind::Random, default_seed};
    if (text.starts_with("random(") && text.ends_with(")")) {
        const auto digits = text.substr(7, text.size() - 8);
        std::uint64_t seed = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
        if (ec == std::errc{} && ptr == digits.data() + digits.size() && !digits.empty()) {
            return {StrategyKind::Random, seed};
        }
    }
    throw Error(ErrorKind::Config, "unknown selection strategy '" + std::string(text) + "'");
}

std::string Strategy::name() const {
    switch (kind) {
        case StrategyKind::MiwvDesc: return "miwv-desc";
        case StrategyKind::MiwvAsc: return "miwv-asc";
        case StrategyKind::PromptLossDesc: return "prompt-loss-desc";
        case StrategyKind::Random: return "random(" + std::to_string(seed) + ")";
    }
    return "miwv-desc";
}

Ranking rank(std::span<const MiwvRecord> records, const Strategy& strategy) {
    if (records.empty()) throw Error(ErrorKind::Empty, "no scored records to rank");
    std::vector<const MiwvRecord*> order;
    order.reserve(records.size());
    for (const auto& r : records) order.push_back(&r);
    std::sort(order.begin(), order.end(),
              [](const MiwvRecord* a, const MiwvRecord* b) { return a->sample_id < b->sample_id; });

    switch (strategy.kind) {
        case StrategyKind::MiwvDesc:
        case StrategyKind::MiwvAsc:
            std::stable_sort(order.begin(), order.end(),
                             [](const MiwvRecord* a, const MiwvRecord* b) { return a->miwv > b->miwv; });
            if (strategy.kind == StrategyKind::MiwvAsc) std::reverse(order.begin(), order.end());
            break;
        case StrategyKind::PromptLossDesc:
            std::stable_sort(order.begin(), order.end(), [](const MiwvRecord* a, const MiwvRecord* b) {
                return a->loss_cond.mean_nll > b->loss_cond.mean_nll;
            });
            break;
        case StrategyKind::Random: {
            SplitMix64 rng(strategy.seed);
            for (std::size_t i = order.size() - 1; i > 0; --i) {
                std::swap(order[i], order[rng.below(i + 1)]);
            }
            break;
        }
    }
    Ranking out;
    out.strategy = strategy;
    out.ordered_ids.reserve(order.size());
    for (const auto* r : order) out.ordered_ids.push_back(r->sample_id);
    return out;
}

std::size_t subset_count(double ratio, std::size_t n_scored) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw Error(ErrorKind::RatioOutOfRange, "ratio " + format_double(ratio) + " is outside (0, 1]");
    }
    const double exact = ratio * static_cast<double>(n_scored);
    auto count = static_cast<std::size_t>(std::floor(exact));
    // 0.29 * 100 evaluates to 28.999999999999996
    if (static_cast<double>(count + 1) - exact <= 1e-9) ++count;
    return std::min(count, n_scored);
}

SelectionSubset select_top_fraction(const Ranking& ranking, double ratio,
                                    const SelectionContext& context) {
    const std::size_t n = ranking.ordered_ids.size();
    const std::size_t count = subset_count(ratio, n);
    if (count == 0) {
        throw Error(ErrorKind::EmptySelection, "ratio " + format_double(ratio) + " of " +
                                                   std::to_string(n) + " scored samples selects nothing");
    }
    SelectionSubset s;
    s.ids.assign(ranking.ordered_ids.begin(), ranking.ordered_ids.begin() + static_cast<std::ptrdiff_t>(count));
    s.ratio = ratio;
    s.count = count;
    s.n_scored = n;
    s.strategy = ranking.strategy;
    s.context = context;
    return s;
}

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

nlohmann::ordered_json SelectionSubset::manifest() const {
    nlohmann::ordered_json m;
    m["dataset_hash"] = context.dataset_hash;
    m["embedding_model"] = context.embedding_model;
    m["scorer_model"] = context.scorer_model;
    m["template_profile"] = context.template_profile;
    m["strategy"] = strategy.name();
    m["ratio"] = ratio;
    m["count"] = count;
    m["n_scored"] = n_scored;
    m["n_rejected"] = context.n_rejected;
    m["tool_version"] = MIWV_VERSION;
    m["created_at"] = utc_now();
    m["ids"] = ids;
    return m;
}

std::filesystem::path export_subset(const Dataset& dataset, const SelectionSubset& subset,
                                    const std::filesystem::path& path,
                                    const ExportOptions& options) {
    std::vector<std::size_t> ids = subset.ids;
    if (options.source_order) std::sort(ids.begin(), ids.end());
    std::vector<const InstructionSample*> samples;
    samples.reserve(ids.size());
    for (auto id : ids) samples.push_back(&dataset.at(id));

    const auto format = options.format == ExportFormat::Source ? dataset.source_format
                                                               : SourceFormat::GenericJsonl;
    // ids are positional; a subset file re-numbers from 0, so they are left out
    write_file_atomic(path, serialize_samples(samples, format, false));

    auto manifest_path = path;
    manifest_path += ".manifest.json";
    auto m = subset.manifest();
    m["format"] = to_string(format);
    m["source_order"] = options.source_order;
    write_file_atomic(manifest_path, m.dump(2) + "\n");
    return manifest_path;
}

double quantile_linear(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw Error(ErrorKind::Empty, "quantile of no values");
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

ScoreReport score_statistics(std::span<const MiwvRecord> records) {
    if (records.empty()) throw Error(ErrorKind::Empty, "no scored records");
    ScoreReport r;
    r.count = records.size();
    std::vector<double> values;
    values.reserve(records.size());
    for (const auto& rec : records) values.push_back(rec.miwv);

    double sum = 0.0;
    for (double v : values) sum += v;
    r.mean = sum / static_cast<double>(r.count);
    double sq = 0.0;
    for (double v : values) sq += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(sq / static_cast<double>(r.count));

    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    r.min = sorted.front();
    r.max = sorted.back();
    r.q1 = quantile_linear(sorted, 0.25);
    r.median = quantile_linear(sorted, 0.5);
    r.q3 = quantile_linear(sorted, 0.75);

    const double width = (r.max - r.min) / static_cast<double>(kHistogramBins);
    r.bin_edges.resize(kHistogramBins + 1);
    for (std::size_t b = 0; b <= kHistogramBins; ++b) {
        r.bin_edges[b] = b == kHistogramBins ? r.max : r.min + width * static_cast<double>(b);
    }
    r.histogram.assign(kHistogramBins, 0);
    for (double v : values) {
        std::size_t bin = 0;
        if (width > 0.0) {
            bin = std::min(kHistogramBins - 1, static_cast<std::size_t>((v - r.min) / width));
        }
        ++r.histogram[bin];
    }

    const auto desc = rank(records, Strategy{StrategyKind::MiwvDesc, 0}).ordered_ids;
    const std::size_t k = std::min<std::size_t>(10, desc.size());
    r.top_ids.assign(desc.begin(), desc.begin() + static_cast<std::ptrdiff_t>(k));
    // lowest first, ties by ascending id
    std::vector<const MiwvRecord*> asc;
    for (const auto& rec : records) asc.push_back(&rec);
    std::sort(asc.begin(), asc.end(), [](const MiwvRecord* a, const MiwvRecord* b) {
        return a->miwv != b->miwv ? a->miwv < b->miwv : a->sample_id < b->sample_id;
    });
    for (std::size_t i = 0; i < k; ++i) r.bottom_ids.push_back(asc[i]->sample_id);
    return r;
}

nlohmann::ordered_json ScoreReport::to_json() const {
    nlohmann::ordered_json j;
    j["count"] = count;
    j["mean"] = mean;
    j["stddev"] = stddev;
    j["min"] = min;
    j["max"] = max;
    j["quartiles"] = {q1, median, q3};
    j["histogram"] = {{"bin_edges", bin_edges}, {"counts", histogram}};
    j["top_ids"] = top_ids;
    j["bottom_ids"] = bottom_ids;
    return j;
}

std::string ScoreReport::to_text() const {
    std::string out;
    char line[160];
    auto row = [&](const char* name, double v) {
        std::snprintf(line, sizeof(line), "%-10s %14.6f\n", name, v);
        out += line;
    };
    std::snprintf(line, sizeof(line), "%-10s %14zu\n", "count", count);
    out += line;
    row("mean", mean);
    row("stddev", stddev);
    row("min", min);
    row("q1", q1);
    row("median", median);
    row("q3", q3);
    row("max", max);
    out += "\nbin  lower          upper          count\n";
    for (std::size_t b = 0; b < histogram.size(); ++b) {
        std::snprintf(line, sizeof(line), "%3zu  %13.6f  %13.6f  %6zu\n", b, bin_edges[b],
                      bin_edges[b + 1], histogram[b]);
        out += line;
    }
    auto ids = [&](const char* name, const std::vector<std::size_t>& v) {
        out += name;
        for (auto id : v) out += " " + std::to_string(id);
        out += "\n";
    };
    out += "\n";
    ids("top   :", top_ids);
    ids("bottom:", bottom_ids);
    return out;
}

std::string ScoreReport::histogram_csv() const {
    std::string out = "bin,lower,upper,count\n";
    for (std::size_t b = 0; b < histogram.size(); ++b) {
        out += std::to_string(b) + "," + format_double(bin_edges[b]) + "," +
               format_double(bin_edges[b + 1]) + "," + std::to_string(histogram[b]) + "\n";
    }
    return out;
}

}  // namespace miwv
