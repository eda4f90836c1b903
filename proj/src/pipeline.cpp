#include "miwv/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include "miwv/artifacts.hpp"
#include "miwv/digest.hpp"
#include "miwv/error.hpp"
#include "miwv/json_text.hpp"

namespace miwv {
namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

void reject_unknown_keys(const nlohmann::json& obj, std::string_view section,
                         std::initializer_list<std::string_view> known) {
    for (const auto& item : obj.items()) {
        if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
            throw Error(ErrorKind::Config,
                        "unknown key '" + item.key() + "' in " + std::string(section));
        }
    }
}

template <typename T>
void read_opt(const nlohmann::json& obj, const char* key, T& out) {
    auto it = obj.find(key);
    if (it != obj.end() && !it->is_null()) out = it->get<T>();
}

fs::path resolve(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute()) return p;
    return base / p;
}

EmbeddingBackendKind parse_embedding_kind(const std::string& s) {
    if (s == "builtin-hash") return EmbeddingBackendKind::BuiltinHash;
    if (s == "remote") return EmbeddingBackendKind::Remote;
    throw Error(ErrorKind::Config, "embedding.backend must be builtin-hash or remote, got '" + s + "'");
}

Pooling parse_pooling(const std::string& s) {
    if (s == "token-mean") return Pooling::TokenMean;
    if (s == "backend-pooled") return Pooling::BackendPooled;
    throw Error(ErrorKind::Config, "embedding.pooling must be token-mean or backend-pooled");
}

ScorerKind parse_scorer_kind(const std::string& s) {
    if (s == "hash-mock") return ScorerKind::HashMock;
    if (s == "ngram-reference") return ScorerKind::NgramReference;
    if (s == "remote") return ScorerKind::Remote;
    throw Error(ErrorKind::Config,
                "scorer.backend must be hash-mock, ngram-reference or remote, got '" + s + "'");
}

std::string file_token(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_') {
            out.push_back(c);
        } else if (c == '(') {
            out.push_back('-');
        }
    }
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Loaded {
    Dataset dataset;
    TemplateProfile profile;
};

Loaded load_inputs(const PipelineConfig& config) {
    auto profile = TemplateProfile::from_json(config.template_profile);
    return {load_dataset(config.dataset.path, config.dataset.format), std::move(profile)};
}

std::string profile_digest(const TemplateProfile& profile) {
    const auto& s = profile.spec();
    nlohmann::json j = {s.name, s.zero_shot_with_input, s.zero_shot_no_input, s.one_shot_frame,
                        s.example_block, s.separator};
    return sha256_hex(j.dump());
}

// Identity of one sample's scoring inputs; a stored record is reused only when
// every one of these is unchanged.
std::string resume_key(const Scorer& scorer, const ScorerConfig& cfg,
                       const std::string& profile_hash, const InstructionSample& sample,
                       const InstructionSample& neighbor, const NeighborAssignment& a) {
    const auto& d = scorer.descriptor();
    nlohmann::json j = {std::string(to_string(d.kind)),
                        d.model_id,
                        d.context_limit,
                        cfg.truncate,
                        profile_hash,
                        serialize_record(sample, SourceFormat::GenericJsonl, true),
                        serialize_record(neighbor, SourceFormat::GenericJsonl, true),
                        format_double(a.similarity)};
    return sha256_hex(j.dump());
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
    PipelineConfig c;
    c.retrieval.workers = std::max(1u, std::thread::hardware_concurrency());
    if (!j.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
    try {
        reject_unknown_keys(j, "config", {"dataset", "template_profile", "embedding", "scorer",
                                          "retrieval", "selection", "output_dir", "quiet"});
        const auto& ds = j.at("dataset");
        reject_unknown_keys(ds, "dataset", {"path", "format"});
        c.dataset.path = resolve(base_dir, ds.at("path").get<std::string>());
        const auto fmt = ds.value("format", std::string("alpaca-json"));
        auto parsed = parse_source_format(fmt);
        if (!parsed) throw Error(ErrorKind::Config, "unknown dataset.format '" + fmt + "'");
        c.dataset.format = *parsed;

        if (j.contains("template_profile")) c.template_profile = j.at("template_profile");

        if (auto it = j.find("embedding"); it != j.end()) {
            const auto& e = *it;
            reject_unknown_keys(e, "embedding", {"backend", "base_url", "model_id", "dimension",
                                                 "pooling", "cache_dir", "batch_size",
                                                 "max_in_flight", "retries", "backoff_ms"});
            c.embedding.backend = parse_embedding_kind(e.value("backend", std::string("builtin-hash")));
            read_opt(e, "base_url", c.embedding.base_url);
            read_opt(e, "model_id", c.embedding.model_id);
            read_opt(e, "dimension", c.embedding.dimension);
            c.embedding.pooling = parse_pooling(e.value("pooling", std::string("backend-pooled")));
            if (e.contains("cache_dir")) {
                c.embedding.cache_dir = resolve(base_dir, e.at("cache_dir").get<std::string>());
            }
            read_opt(e, "batch_size", c.embedding.batch_size);
            read_opt(e, "max_in_flight", c.embedding.max_in_flight);
            read_opt(e, "retries", c.embedding.retries);
            read_opt(e, "backoff_ms", c.embedding.backoff_ms);
        }
        if (auto it = j.find("scorer"); it != j.end()) {
            const auto& s = *it;
            reject_unknown_keys(s, "scorer", {"backend", "base_url", "model_id", "context_limit",
                                              "max_in_flight", "retries", "backoff_ms", "corpus",
                                              "truncate", "offset_unit"});
            c.scorer.backend = parse_scorer_kind(s.value("backend", std::string("hash-mock")));
            read_opt(s, "base_url", c.scorer.base_url);
            read_opt(s, "model_id", c.scorer.model_id);
            read_opt(s, "context_limit", c.scorer.context_limit);
            read_opt(s, "max_in_flight", c.scorer.max_in_flight);
            read_opt(s, "retries", c.scorer.retries);
            read_opt(s, "backoff_ms", c.scorer.backoff_ms);
            read_opt(s, "truncate", c.scorer.truncate);
            if (s.contains("corpus")) c.scorer.corpus = resolve(base_dir, s.at("corpus").get<std::string>());
            const auto unit = s.value("offset_unit", std::string("byte"));
            if (unit != "byte" && unit != "codepoint") {
                throw Error(ErrorKind::Config, "scorer.offset_unit must be byte or codepoint");
            }
            c.scorer.offset_unit = unit == "codepoint" ? OffsetUnit::Codepoint : OffsetUnit::Byte;
        }
        if (auto it = j.find("retrieval"); it != j.end()) {
            reject_unknown_keys(*it, "retrieval", {"block_rows", "workers"});
            read_opt(*it, "block_rows", c.retrieval.block_rows);
            read_opt(*it, "workers", c.retrieval.workers);
        }
        if (auto it = j.find("selection"); it != j.end()) {
            const auto& s = *it;
            reject_unknown_keys(s, "selection",
                                {"strategy", "ratios", "seed", "export_format", "source_order"});
            const auto seed = s.value("seed", std::uint64_t{0});
            c.selection.strategy = Strategy::parse(s.value("strategy", std::string("miwv-desc")), seed);
            read_opt(s, "ratios", c.selection.ratios);
            const auto fmt = s.value("export_format", std::string("source"));
            if (fmt != "source" && fmt != "generic-jsonl") {
                throw Error(ErrorKind::Config, "selection.export_format must be source or generic-jsonl");
            }
            c.selection.export_format = fmt == "source" ? ExportFormat::Source : ExportFormat::GenericJsonl;
            read_opt(s, "source_order", c.selection.source_order);
        }
        if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
        read_opt(j, "quiet", c.quiet);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, e.what());
    }
    return c;
}

void PipelineConfig::validate(bool with_selection) const {
    if (dataset.path.empty()) throw Error(ErrorKind::Config, "dataset.path is required");
    if (embedding.max_in_flight < 1 || scorer.max_in_flight < 1) {
        throw Error(ErrorKind::Config, "max_in_flight must be >= 1");
    }
    if (embedding.batch_size < 1) throw Error(ErrorKind::Config, "embedding.batch_size must be >= 1");
    if (retrieval.block_rows < 1 || retrieval.workers < 1) {
        throw Error(ErrorKind::Config, "retrieval.block_rows and retrieval.workers must be >= 1");
    }
    if (embedding.backend == EmbeddingBackendKind::BuiltinHash &&
        embedding.pooling == Pooling::TokenMean) {
        throw Error(ErrorKind::Config, "builtin-hash embeddings are already pooled; use backend-pooled");
    }
    if (scorer.backend == ScorerKind::NgramReference && scorer.corpus.empty()) {
        throw Error(ErrorKind::Config, "scorer.corpus is required for ngram-reference");
    }
    if (with_selection) {
        if (selection.ratios.empty()) throw Error(ErrorKind::Config, "selection.ratios is empty");
        for (double r : selection.ratios) {
            if (!(r > 0.0 && r <= 1.0)) {
                throw Error(ErrorKind::Config, "selection ratio " + format_double(r) + " is outside (0, 1]");
            }
        }
    }
}

fs::path PipelineConfig::cache_dir() const {
    return embedding.cache_dir.empty() ? output_dir / "cache" / "embeddings" : embedding.cache_dir;
}

PipelineConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw Error(ErrorKind::Config, "config file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, path.string() + ": " + e.what());
    }
    return PipelineConfig::from_json(j, fs::absolute(path).parent_path());
}

void apply_overrides(PipelineConfig& config, const ConfigOverrides& o) {
    if (o.output_dir) config.output_dir = *o.output_dir;
    if (o.ratios) config.selection.ratios = *o.ratios;
    if (o.strategy) config.selection.strategy = Strategy::parse(*o.strategy, config.selection.strategy.seed);
    if (o.seed) config.selection.strategy.seed = *o.seed;
    if (o.quiet) config.quiet = true;
    if (o.source_order) config.selection.source_order = true;
}

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const EmbeddingConfig& c) {
    if (c.backend == EmbeddingBackendKind::BuiltinHash) {
        return std::make_unique<HashEmbeddingBackend>(c.dimension);
    }
    if (c.model_id.empty()) throw Error(ErrorKind::Config, "embedding.model_id is required");
    return std::make_unique<RemoteEmbeddingBackend>(RemoteEmbeddingOptions{
        .base_url = c.base_url,
        .model_id = c.model_id,
        .dimension = c.dimension,
        .pooling = c.pooling,
        .retries = c.retries,
        .backoff_ms = c.backoff_ms,
    });
}

std::unique_ptr<Scorer> make_scorer(const ScorerConfig& c) {
    const std::size_t unbounded = std::numeric_limits<std::size_t>::max();
    switch (c.backend) {
        case ScorerKind::HashMock:
            return std::make_unique<HashMockScorer>(c.context_limit ? c.context_limit : unbounded);
        case ScorerKind::NgramReference:
            if (!fs::exists(c.corpus)) {
                throw Error(ErrorKind::Config, "ngram corpus not found: " + c.corpus.string());
            }
            return std::make_unique<NgramReferenceScorer>(
                NgramReferenceScorer::from_file(c.corpus, c.context_limit ? c.context_limit : unbounded));
        case ScorerKind::Remote:
            if (c.model_id.empty()) throw Error(ErrorKind::Config, "scorer.model_id is required");
            return std::make_unique<RemoteScorer>(RemoteScorerOptions{
                .base_url = c.base_url,
                .model_id = c.model_id,
                .context_limit = c.context_limit ? c.context_limit : 4096,
                .retries = c.retries,
                .backoff_ms = c.backoff_ms,
                .offset_unit = c.offset_unit,
            });
    }
    throw Error(ErrorKind::Config, "unknown scorer backend");
}

void Logger::info(std::string_view stage, std::string_view message) const {
    if (quiet_) return;
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << "stage=" << stage << ' ' << message << '\n';
}

void Logger::progress(std::string_view stage, std::size_t done, std::size_t total) const {
    if (done % 1000 == 0 || done == total) {
        info(stage, "event=progress done=" + std::to_string(done) + " total=" + std::to_string(total));
    }
}

ordered_json cmd_embed(const PipelineConfig& config, const Logger& log) {
    config.validate(false);
    const auto t0 = std::chrono::steady_clock::now();
    auto [dataset, profile] = load_inputs(config);
    auto backend = make_embedding_backend(config.embedding);
    const artifacts::Layout out{config.output_dir};

    EmbedStats stats;
    const auto matrix = embed_corpus(dataset, profile, *backend, config.cache_dir(),
                                     {config.embedding.batch_size, config.embedding.max_in_flight},
                                     &stats);
    write_embedding_matrix(out.embeddings(), matrix);

    const double hit_rate = static_cast<double>(stats.cache_hits) / static_cast<double>(dataset.size());
    log.progress("embed", dataset.size(), dataset.size());
    log.info("embed", "event=done n=" + std::to_string(dataset.size()) +
                          " cache_hits=" + std::to_string(stats.cache_hits) +
                          " cache_hit_rate=" + format_double(hit_rate) +
                          " backend_calls=" + std::to_string(stats.backend_calls));
    ordered_json s;
    s["n"] = dataset.size();
    s["dimension"] = matrix.backend.dimension;
    s["model_id"] = matrix.backend.model_id;
    s["cache_hits"] = stats.cache_hits;
    s["computed"] = stats.computed;
    s["backend_calls"] = stats.backend_calls;
    s["cache_hit_rate"] = hit_rate;
    s["seconds"] = seconds_since(t0);
    return s;
}

ordered_json cmd_retrieve(const PipelineConfig& config, const Logger& log) {
    config.validate(false);
    const auto t0 = std::chrono::steady_clock::now();
    auto [dataset, profile] = load_inputs(config);
    const artifacts::Layout out{config.output_dir};

    auto matrix = read_embedding_matrix(out.embeddings());
    if (matrix.dataset_hash != dataset.content_hash || matrix.size() != dataset.size()) {
        throw Error(ErrorKind::StaleArtifact,
                    out.embeddings().string() + " was built from a different dataset; rerun embed");
    }
    if (matrix.profile_name != profile.name()) {
        throw Error(ErrorKind::StaleArtifact,
                    out.embeddings().string() + " was built with profile '" + matrix.profile_name + "'");
    }
    auto map = all_nearest_neighbors(matrix, config.retrieval);
    write_file_atomic(out.neighbors(), serialize_neighbor_map(map));

    ordered_json meta;
    meta["dataset_hash"] = dataset.content_hash;
    meta["embedding_model"] = matrix.backend.model_id;
    meta["profile"] = profile.name();
    meta["embeddings_sha256"] = sha256_file_hex(out.embeddings());
    artifacts::write_meta(out.neighbors_meta(), out.neighbors(), meta);

    double lo = 1.0, hi = -1.0, sum = 0.0;
    std::size_t degenerate = 0;
    for (const auto& a : map.assignments) {
        lo = std::min(lo, a.similarity);
        hi = std::max(hi, a.similarity);
        sum += a.similarity;
        degenerate += a.degenerate ? 1 : 0;
    }
    const double mean = sum / static_cast<double>(map.assignments.size());
    log.progress("retrieve", dataset.size(), dataset.size());
    log.info("retrieve", "event=done n=" + std::to_string(dataset.size()) +
                             " sim_min=" + format_double(lo) + " sim_mean=" + format_double(mean) +
                             " sim_max=" + format_double(hi) +
                             " zero_norm_pairs=" + std::to_string(degenerate));
    ordered_json s;
    s["n"] = dataset.size();
    s["sim_min"] = lo;
    s["sim_mean"] = mean;
    s["sim_max"] = hi;
    s["zero_norm_pairs"] = degenerate;
    s["seconds"] = seconds_since(t0);
    return s;
}

ordered_json cmd_score(const PipelineConfig& config, const Logger& log) {
    config.validate(false);
    const auto t0 = std::chrono::steady_clock::now();
    auto [dataset, profile] = load_inputs(config);
    const artifacts::Layout out{config.output_dir};

    const auto nmeta = artifacts::read_checked_meta(
        out.neighbors_meta(), out.neighbors(),
        {{"dataset_hash", dataset.content_hash}, {"profile", profile.name()}});
    const auto neighbors = parse_neighbor_lines(read_file(out.neighbors()));
    if (neighbors.size() != dataset.size()) {
        throw Error(ErrorKind::StaleArtifact, out.neighbors().string() + " row count mismatch");
    }
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        if (neighbors[i].query_id != i || neighbors[i].neighbor_id >= dataset.size() ||
            neighbors[i].neighbor_id == i) {
            throw Error(ErrorKind::StaleArtifact, out.neighbors().string() + " line " +
                                                      std::to_string(i + 1) + " is inconsistent");
        }
    }

    auto scorer = make_scorer(config.scorer);
    const auto profile_hash = profile_digest(profile);
    std::vector<std::string> keys(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        keys[i] = resume_key(*scorer, config.scorer, profile_hash, dataset.samples[i],
                             dataset.samples[neighbors[i].neighbor_id], neighbors[i]);
    }

    // Reuse records from an earlier, possibly interrupted, run.
    std::unordered_map<std::size_t, MiwvRecord> resumed;
    bool needs_newline = false;
    if (fs::exists(out.scores_progress())) {
        const auto text = read_file(out.scores_progress());
        needs_newline = !text.empty() && text.back() != '\n';
        std::string_view rest = text;
        while (!rest.empty()) {
            const auto nl = rest.find('\n');
            const auto line = rest.substr(0, nl);
            rest.remove_prefix(nl == std::string_view::npos ? rest.size() : nl + 1);
            try {
                const auto j = nlohmann::json::parse(line);
                auto rec = parse_score_line(j.at("record").dump());
                if (rec.sample_id < keys.size() && j.at("key") == keys[rec.sample_id]) {
                    resumed.insert_or_assign(rec.sample_id, rec);
                }
            } catch (const std::exception&) {
                // torn trailing line from an interrupted run
            }
        }
    }

    std::ofstream progress(out.scores_progress(), std::ios::binary | std::ios::app);
    if (!progress) throw Error(ErrorKind::Io, "cannot open " + out.scores_progress().string());
    if (needs_newline) progress << '\n';

    CorpusScoringOptions opts;
    opts.max_in_flight = config.scorer.max_in_flight;
    opts.truncate = config.scorer.truncate;
    opts.skip = [&](std::size_t id) { return resumed.contains(id); };
    opts.on_record = [&](const MiwvRecord& r) {
        progress << "{\"key\":\"" << keys[r.sample_id] << "\",\"record\":" << format_score_line(r)
                 << "}\n";
        progress.flush();
    };
    opts.on_progress = [&](std::size_t done, std::size_t total) { log.progress("score", done, total); };
    auto run = score_corpus(dataset, neighbors, *scorer, profile, opts);

    std::vector<MiwvRecord> records = std::move(run.records);
    for (auto& [id, rec] : resumed) records.push_back(rec);
    std::sort(records.begin(), records.end(),
              [](const MiwvRecord& a, const MiwvRecord& b) { return a.sample_id < b.sample_id; });

    std::string score_text;
    for (const auto& r : records) score_text += format_score_line(r) + "\n";
    write_file_atomic(out.scores(), score_text);

    std::string reject_text;
    for (const auto& r : run.rejects) {
        ordered_json j;
        j["i"] = r.sample_id;
        j["error"] = r.error;
        reject_text += j.dump() + "\n";
    }
    write_file_atomic(out.rejects(), reject_text);

    ordered_json meta;
    meta["dataset_hash"] = dataset.content_hash;
    meta["embedding_model"] = nmeta.value("embedding_model", std::string{});
    meta["scorer_model"] = scorer->descriptor().model_id;
    meta["profile"] = profile.name();
    meta["neighbors_sha256"] = nmeta.value("sha256", std::string{});
    meta["n_scored"] = records.size();
    meta["n_rejected"] = run.rejects.size();
    artifacts::write_meta(out.scores_meta(), out.scores(), meta);

    std::size_t truncated = 0;
    for (const auto& r : records) truncated += r.truncated ? 1 : 0;
    log.info("score", "event=done scored=" + std::to_string(records.size()) +
                          " resumed=" + std::to_string(resumed.size()) +
                          " rejected=" + std::to_string(run.rejects.size()) +
                          " truncated=" + std::to_string(truncated));
    for (const auto& r : run.rejects) {
        log.info("score", "event=reject i=" + std::to_string(r.sample_id) + " error=\"" + r.error + "\"");
    }
    ordered_json s;
    s["n"] = dataset.size();
    s["scored"] = records.size();
    s["resumed"] = resumed.size();
    s["rejected"] = run.rejects.size();
    s["truncated"] = truncated;
    s["scorer_model"] = scorer->descriptor().model_id;
    s["seconds"] = seconds_since(t0);
    return s;
}

ordered_json cmd_select(const PipelineConfig& config, const Logger& log) {
    config.validate(true);
    const auto t0 = std::chrono::steady_clock::now();
    auto [dataset, profile] = load_inputs(config);
    const artifacts::Layout out{config.output_dir};

    const auto smeta = artifacts::read_checked_meta(out.scores_meta(), out.scores(),
                                                    {{"dataset_hash", dataset.content_hash}});
    const auto records = parse_score_lines(read_file(out.scores()));
    for (const auto& r : records) {
        if (r.sample_id >= dataset.size()) {
            throw Error(ErrorKind::StaleArtifact, "score file names sample " + std::to_string(r.sample_id));
        }
    }
    if (records.empty()) throw Error(ErrorKind::EmptySelection, "no scored samples to select from");

    SelectionContext ctx;
    ctx.dataset_hash = dataset.content_hash;
    ctx.embedding_model = smeta.value("embedding_model", std::string{});
    ctx.scorer_model = smeta.value("scorer_model", std::string{});
    ctx.template_profile = profile.name();
    ctx.n_rejected = smeta.value("n_rejected", std::size_t{0});

    const auto ranking = rank(records, config.selection.strategy);
    const auto format = config.selection.export_format == ExportFormat::Source
                            ? dataset.source_format
                            : SourceFormat::GenericJsonl;
    const char* ext = format == SourceFormat::GenericJsonl ? ".jsonl" : ".json";

    auto ratios = config.selection.ratios;
    std::sort(ratios.begin(), ratios.end());
    ratios.erase(std::unique(ratios.begin(), ratios.end()), ratios.end());

    ordered_json subsets = ordered_json::array();
    std::vector<std::size_t> previous;
    bool nested = true;
    for (double ratio : ratios) {
        const auto subset = select_top_fraction(ranking, ratio, ctx);
        if (!std::equal(previous.begin(), previous.end(), subset.ids.begin())) nested = false;
        previous = subset.ids;
        const auto path = out.subsets() / ("subset_" + file_token(ranking.strategy.name()) + "_" +
                                           format_double(ratio) + ext);
        export_subset(dataset, subset, path, {config.selection.export_format, config.selection.source_order});
        ordered_json entry;
        entry["ratio"] = ratio;
        entry["count"] = subset.count;
        entry["path"] = path.string();
        subsets.push_back(entry);
        log.info("select", "event=subset ratio=" + format_double(ratio) +
                               " count=" + std::to_string(subset.count) + " path=" + path.string());
    }

    const auto report = score_statistics(records);
    write_file_atomic(out.stats_json(), report.to_json().dump(2) + "\n");
    write_file_atomic(out.stats_text(), report.to_text());
    write_file_atomic(out.histogram_csv(), report.histogram_csv());
    log.info("select", std::string("event=done strategy=") + ranking.strategy.name() +
                           " n_scored=" + std::to_string(records.size()) +
                           " nested=" + (nested ? "true" : "false"));

    ordered_json s;
    s["strategy"] = ranking.strategy.name();
    s["n_scored"] = records.size();
    s["n_rejected"] = ctx.n_rejected;
    s["subsets"] = subsets;
    s["nested"] = nested;
    s["seconds"] = seconds_since(t0);
    return s;
}

ordered_json cmd_run(const PipelineConfig& config, const Logger& log) {
    config.validate(true);
    TemplateProfile::from_json(config.template_profile);

    ordered_json stages;
    auto stage = [&](const char* name, auto&& fn) {
        try {
            stages[name] = fn(config, log);
        } catch (const Error& e) {
            throw Error(e.kind(), std::string("stage ") + name + ": " + e.message(), e.index(), e.field());
        }
    };
    const auto t0 = std::chrono::steady_clock::now();
    stage("embed", cmd_embed);
    stage("retrieve", cmd_retrieve);
    stage("score", cmd_score);
    stage("select", cmd_select);

    ordered_json summary;
    summary["status"] = "ok";
    summary["stage_seconds"] = {{"embed", stages["embed"]["seconds"]},
                                {"retrieve", stages["retrieve"]["seconds"]},
                                {"score", stages["score"]["seconds"]},
                                {"select", stages["select"]["seconds"]},
                                {"total", seconds_since(t0)}};
    summary["counts"] = {{"n", stages["embed"]["n"]},
                         {"scored", stages["score"]["scored"]},
                         {"rejected", stages["score"]["rejected"]},
                         {"subsets", stages["select"]["subsets"].size()}};
    summary["cache_hit_rate"] = stages["embed"]["cache_hit_rate"];
    summary["rejects"] = stages["score"]["rejected"];
    summary["stages"] = stages;
    write_file_atomic(artifacts::Layout{config.output_dir}.run_summary(), summary.dump(2) + "\n");
    return summary;
}

}  // namespace miwv
