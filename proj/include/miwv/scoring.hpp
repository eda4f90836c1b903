#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "miwv/dataset.hpp"
#include "miwv/retrieval.hpp"
#include "miwv/template_profile.hpp"

namespace miwv {

struct TokenLogProb {
    std::string token_text;
    std::size_t char_start = 0;  // byte offset into the scored text
    // natural-log probability; empty for a token the backend could not score
    // (the first token of an echo response)
    std::optional<double> logprob;

    friend bool operator==(const TokenLogProb&, const TokenLogProb&) = default;
};

enum class ScorerKind { Remote, NgramReference, HashMock };
std::string_view to_string(ScorerKind kind);

struct ScorerDescriptor {
    ScorerKind kind = ScorerKind::HashMock;
    std::string model_id;
    // Longest text (bytes of prompt + response) the scorer accepts.
    std::size_t context_limit = std::numeric_limits<std::size_t>::max();
};

class Scorer {
public:
    virtual ~Scorer() = default;
    virtual const ScorerDescriptor& descriptor() const = 0;
    // Per-token log-probabilities covering `full_text` in order. Implementations
    // are called concurrently and must not mutate shared state.
    virtual std::vector<TokenLogProb> score_tokens(std::string_view full_text) const = 0;
};

// Single-byte tokens; logprob of byte t after context s is
// -(1 + (fnv1a64(s + t) mod 1000) / 1000).
class HashMockScorer final : public Scorer {
public:
    explicit HashMockScorer(std::size_t context_limit = std::numeric_limits<std::size_t>::max());
    const ScorerDescriptor& descriptor() const override { return desc_; }
    std::vector<TokenLogProb> score_tokens(std::string_view full_text) const override;

private:
    ScorerDescriptor desc_;
};

// Byte-level trigram model with add-one smoothing over a 256-symbol alphabet:
//   p(b | u v) = (count(u v b) + 1) / (count(u v *) + 256)
// The training corpus and every scored text are prefixed with two BOS symbols,
// so the first two positions condition on (BOS BOS) and (BOS x0).
class NgramReferenceScorer final : public Scorer {
public:
    explicit NgramReferenceScorer(std::string_view corpus, std::string model_id = "ngram-reference",
                                  std::size_t context_limit = std::numeric_limits<std::size_t>::max());
    static NgramReferenceScorer from_file(const std::filesystem::path& corpus_path,
                                          std::size_t context_limit =
                                              std::numeric_limits<std::size_t>::max());

    const ScorerDescriptor& descriptor() const override { return desc_; }
    std::vector<TokenLogProb> score_tokens(std::string_view full_text) const override;
    double logprob(int prev2, int prev1, unsigned char next) const;

    static constexpr int kBos = 256;

private:
    static std::uint32_t context_key(int prev2, int prev1) {
        return static_cast<std::uint32_t>(prev2) * 257u + static_cast<std::uint32_t>(prev1);
    }
    ScorerDescriptor desc_;
    std::unordered_map<std::uint32_t, std::uint64_t> trigram_;  // (ctx * 256 + b) -> count
    std::unordered_map<std::uint32_t, std::uint64_t> context_;  // ctx -> count
};

enum class OffsetUnit { Byte, Codepoint };

struct RemoteScorerOptions {
    std::string base_url;
    std::string model_id;
    std::size_t context_limit = 4096;
    std::size_t retries = 2;
    int backoff_ms = 200;
    int timeout_s = 120;
    // Unit of "text_offset" in responses; codepoint offsets are mapped to bytes.
    OffsetUnit offset_unit = OffsetUnit::Byte;
};

// POST {base_url}/v1/completions with echo=true, max_tokens=0, logprobs=1.
class RemoteScorer final : public Scorer {
public:
    explicit RemoteScorer(RemoteScorerOptions options);
    const ScorerDescriptor& descriptor() const override { return desc_; }
    std::vector<TokenLogProb> score_tokens(std::string_view full_text) const override;

private:
    RemoteScorerOptions opts_;
    ScorerDescriptor desc_;
};

// Builds the completions-with-echo request body.
std::string build_echo_request(std::string_view model_id, std::string_view full_text);
// Decodes an echo response into tokens with byte offsets. Throws MalformedResponse
// on missing or misaligned arrays, non-increasing offsets, a first offset != 0, or
// positive logprobs.
std::vector<TokenLogProb> parse_echo_response(std::string_view body, std::string_view full_text,
                                              OffsetUnit unit = OffsetUnit::Byte);

struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const noexcept { return end - begin; }
    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

// Tokens [begin, end) that make up the response: starts at the earliest token with
// char_start >= prompt_char_len, or at a token straddling the boundary.
TokenSpan locate_response_span(std::span<const TokenLogProb> tokens, std::size_t prompt_char_len);

struct LossValue {
    double mean_nll = 0.0;  // nats per token
    std::size_t token_count = 0;
    double sum_nll = 0.0;

    friend bool operator==(const LossValue&, const LossValue&) = default;
};

// Mean negative log-likelihood of the response tokens of prompt.text + response.
LossValue response_loss(const Scorer& scorer, const PromptText& prompt, std::string_view response);
// Same quantity with a one-shot prompt in front of the target.
LossValue conditioned_response_loss(const Scorer& scorer, const PromptText& one_shot_prompt,
                                    std::string_view response);

struct MiwvRecord {
    std::size_t sample_id = 0;
    std::size_t neighbor_id = 0;
    double similarity = 0.0;
    LossValue loss_uncond;
    LossValue loss_cond;
    double miwv = 0.0;  // loss_cond.mean_nll - loss_uncond.mean_nll
    bool truncated = false;

    friend bool operator==(const MiwvRecord&, const MiwvRecord&) = default;
};

struct ScoringOptions {
    // Trim the example's response to fit context_limit; when false, overflow is an error.
    bool truncate = true;
};

MiwvRecord compute_miwv(const Scorer& scorer, const InstructionSample& sample,
                        const InstructionSample& neighbor, const NeighborAssignment& assignment,
                        const TemplateProfile& profile, const ScoringOptions& options = {});

struct Reject {
    std::size_t sample_id = 0;
    std::string error;
};

struct CorpusScoringOptions {
    std::size_t max_in_flight = 1;
    bool truncate = true;
    // Ids to skip (already scored in an earlier run).
    std::function<bool(std::size_t)> skip;
    // Called once per finished record, serialized, in completion order.
    std::function<void(const MiwvRecord&)> on_record;
    std::function<void(std::size_t done, std::size_t total)> on_progress;
};

struct ScoreRun {
    std::vector<MiwvRecord> records;  // id order, skipped ids and rejects omitted
    std::vector<Reject> rejects;
};

ScoreRun score_corpus(const Dataset& dataset, const std::vector<NeighborAssignment>& neighbors,
                      const Scorer& scorer, const TemplateProfile& profile,
                      const CorpusScoringOptions& options = {});

// Score file line: {"i","k","sim","loss","loss_cond","A","A_cond","miwv","truncated"}.
std::string format_score_line(const MiwvRecord& record);
MiwvRecord parse_score_line(std::string_view line);
std::vector<MiwvRecord> parse_score_lines(std::string_view jsonl);

}  // namespace miwv
