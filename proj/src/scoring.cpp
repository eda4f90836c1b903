#include "miwv/scoring.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "miwv/error.hpp"
#include "miwv/json_text.hpp"

namespace miwv {

std::string_view to_string(ScorerKind kind) {
    switch (kind) {
        case ScorerKind::Remote: return "remote";
        case ScorerKind::NgramReference: return "ngram-reference";
        case ScorerKind::HashMock: return "hash-mock";
    }
    return "hash-mock";
}

TokenSpan locate_response_span(std::span<const TokenLogProb> tokens,
                               std::size_t prompt_char_len) {
    std::size_t start = tokens.size();
    for (std::size_t k = 0; k < tokens.size(); ++k) {
        if (tokens[k].char_start >= prompt_char_len) {
            start = k;
            break;
        }
    }
    // A token that begins inside the prompt but runs past the boundary belongs
    // to the response. Its extent ends where the next token begins.
    if (start > 0) {
        const auto& prev = tokens[start - 1];
        const std::size_t prev_end = start < tokens.size()
                                         ? tokens[start].char_start
                                         : prev.char_start + prev.token_text.size();
        if (prev.char_start < prompt_char_len && prev_end > prompt_char_len) --start;
    }
    if (start >= tokens.size()) {
        throw Error(ErrorKind::EmptyResponseSpan,
                    "no token at or after offset " + std::to_string(prompt_char_len));
    }
    return {start, tokens.size()};
}

namespace {

void check_token_contract(std::span<const TokenLogProb> tokens) {
    for (std::size_t k = 0; k < tokens.size(); ++k) {
        if (k == 0 && tokens[k].char_start != 0) {
            throw Error(ErrorKind::MalformedResponse, "first token offset is not 0");
        }
        if (k > 0 && tokens[k].char_start <= tokens[k - 1].char_start) {
            throw Error(ErrorKind::MalformedResponse, "token offsets are not strictly increasing");
        }
        if (tokens[k].logprob && (!std::isfinite(*tokens[k].logprob) || *tokens[k].logprob > 0.0)) {
            throw Error(ErrorKind::MalformedResponse, "logprob must be finite and <= 0");
        }
    }
}

LossValue loss_over_response(const Scorer& scorer, const PromptText& prompt,
                             std::string_view response) {
    if (response.empty()) throw Error(ErrorKind::EmptyResponseSpan, "response is empty");
    std::string full = prompt.text;
    full += response;
    const auto tokens = scorer.score_tokens(full);
    check_token_contract(tokens);
    const auto span = locate_response_span(tokens, prompt.char_len);
    LossValue loss;
    for (std::size_t k = span.begin; k < span.end; ++k) {
        if (!tokens[k].logprob) continue;
        loss.sum_nll += -*tokens[k].logprob;
        ++loss.token_count;
    }
    if (loss.token_count == 0) {
        throw Error(ErrorKind::EmptyResponseSpan, "response span has no scored tokens");
    }
    loss.mean_nll = loss.sum_nll / static_cast<double>(loss.token_count);
    return loss;
}

std::size_t utf8_floor(std::string_view text, std::size_t len) {
    while (len > 0 && len < text.size() &&
           (static_cast<unsigned char>(text[len]) & 0xC0) == 0x80) {
        --len;
    }
    return len;
}

}  // namespace

LossValue response_loss(const Scorer& scorer, const PromptText& prompt, std::string_view response) {
    return loss_over_response(scorer, prompt, response);
}

LossValue conditioned_response_loss(const Scorer& scorer, const PromptText& one_shot_prompt,
                                    std::string_view response) {
    return loss_over_response(scorer, one_shot_prompt, response);
}

MiwvRecord compute_miwv(const Scorer& scorer, const InstructionSample& sample,
                        const InstructionSample& neighbor, const NeighborAssignment& assignment,
                        const TemplateProfile& profile, const ScoringOptions& options) {
    if (assignment.query_id != sample.id || assignment.neighbor_id != neighbor.id) {
        throw Error(ErrorKind::IdOutOfRange,
                    "assignment " + std::to_string(assignment.query_id) + "->" +
                        std::to_string(assignment.neighbor_id) + " does not match samples " +
                        std::to_string(sample.id) + "/" + std::to_string(neighbor.id));
    }
    const std::size_t limit = scorer.descriptor().context_limit;
    const std::string_view response = sample.response;

    const auto zero_shot = render_instruction(sample, profile);
    if (zero_shot.char_len + response.size() > limit) {
        throw Error(ErrorKind::ContextOverflow,
                    "sample " + std::to_string(sample.id) + " exceeds the context limit without an example");
    }

    auto one_shot = render_one_shot_prompt(neighbor, sample, profile);
    bool truncated = false;
    if (one_shot.char_len + response.size() > limit) {
        const std::size_t overflow = one_shot.char_len + response.size() - limit;
        if (!options.truncate || overflow > neighbor.response.size()) {
            throw Error(ErrorKind::ContextOverflow,
                        "one-shot prompt for sample " + std::to_string(sample.id) +
                            " does not fit the context limit");
        }
        const auto keep = utf8_floor(neighbor.response, neighbor.response.size() - overflow);
        one_shot = render_one_shot_prompt(neighbor, std::string_view(neighbor.response).substr(0, keep),
                                          sample, profile);
        truncated = true;
    }

    MiwvRecord r;
    r.sample_id = sample.id;
    r.neighbor_id = neighbor.id;
    r.similarity = assignment.similarity;
    r.loss_uncond = response_loss(scorer, zero_shot, response);
    r.loss_cond = conditioned_response_loss(scorer, one_shot, response);
    r.miwv = r.loss_cond.mean_nll - r.loss_uncond.mean_nll;
    r.truncated = truncated;
    return r;
}

ScoreRun score_corpus(const Dataset& dataset, const std::vector<NeighborAssignment>& neighbors,
                      const Scorer& scorer, const TemplateProfile& profile,
                      const CorpusScoringOptions& options) {
    if (neighbors.size() != dataset.size()) {
        throw Error(ErrorKind::StaleArtifact,
                    "neighbor map has " + std::to_string(neighbors.size()) + " rows for " +
                        std::to_string(dataset.size()) + " samples");
    }
    std::vector<std::size_t> work;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (!options.skip || !options.skip(i)) work.push_back(i);
    }

    std::vector<std::optional<MiwvRecord>> results(dataset.size());
    std::vector<std::optional<std::string>> failures(dataset.size());
    std::atomic<std::size_t> next{0};
    std::size_t done = 0;
    std::mutex mu;
    const ScoringOptions per_sample{options.truncate};

    auto worker = [&] {
        for (std::size_t w; (w = next.fetch_add(1)) < work.size();) {
            const std::size_t id = work[w];
            const auto& a = neighbors[id];
            std::optional<MiwvRecord> rec;
            std::string error;
            try {
                if (a.query_id != id) {
                    throw Error(ErrorKind::StaleArtifact, "neighbor map row " + std::to_string(id) +
                                                              " is for query " + std::to_string(a.query_id));
                }
                rec = compute_miwv(scorer, dataset.at(id), dataset.at(a.neighbor_id), a, profile,
                                   per_sample);
            } catch (const std::exception& e) {
                error = e.what();
            }
            std::lock_guard lock(mu);
            if (rec) {
                if (options.on_record) options.on_record(*rec);
                results[id] = std::move(rec);
            } else {
                failures[id] = std::move(error);
            }
            ++done;
            if (options.on_progress) options.on_progress(done, work.size());
        }
    };

    const std::size_t n_threads =
        std::min(std::max<std::size_t>(1, options.max_in_flight), std::max<std::size_t>(1, work.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }

    ScoreRun run;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (results[i]) run.records.push_back(std::move(*results[i]));
        if (failures[i]) run.rejects.push_back({i, std::move(*failures[i])});
    }
    return run;
}

std::string format_score_line(const MiwvRecord& r) {
    std::string out = "{\"i\":" + std::to_string(r.sample_id);
    out += ",\"k\":" + std::to_string(r.neighbor_id);
    out += ",\"sim\":" + format_double(r.similarity);
    out += ",\"loss\":" + format_double(r.loss_uncond.mean_nll);
    out += ",\"loss_cond\":" + format_double(r.loss_cond.mean_nll);
    out += ",\"A\":" + std::to_string(r.loss_uncond.token_count);
    out += ",\"A_cond\":" + std::to_string(r.loss_cond.token_count);
    out += ",\"miwv\":" + format_double(r.miwv);
    out += r.truncated ? ",\"truncated\":true}" : ",\"truncated\":false}";
    return out;
}

MiwvRecord parse_score_line(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        MiwvRecord r;
        r.sample_id = j.at("i").get<std::size_t>();
        r.neighbor_id = j.at("k").get<std::size_t>();
        r.similarity = j.at("sim").get<double>();
        r.loss_uncond.mean_nll = j.at("loss").get<double>();
        r.loss_uncond.token_count = j.at("A").get<std::size_t>();
        r.loss_uncond.sum_nll = r.loss_uncond.mean_nll * static_cast<double>(r.loss_uncond.token_count);
        r.loss_cond.mean_nll = j.at("loss_cond").get<double>();
        r.loss_cond.token_count = j.at("A_cond").get<std::size_t>();
        r.loss_cond.sum_nll = r.loss_cond.mean_nll * static_cast<double>(r.loss_cond.token_count);
        r.miwv = j.at("miwv").get<double>();
        r.truncated = j.at("truncated").get<bool>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("score line: ") + e.what());
    }
}

std::vector<MiwvRecord> parse_score_lines(std::string_view jsonl) {
    std::vector<MiwvRecord> out;
    while (!jsonl.empty()) {
        const auto nl = jsonl.find('\n');
        const auto line = jsonl.substr(0, nl);
        jsonl.remove_prefix(nl == std::string_view::npos ? jsonl.size() : nl + 1);
        if (!trim(line).empty()) out.push_back(parse_score_line(line));
    }
    return out;
}

}  // namespace miwv
