#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "json.hpp"
#include "miwv/digest.hpp"
#include "miwv/error.hpp"
#include "miwv/scoring.hpp"
#include "support.hpp"

using namespace miwv;

namespace {

// One token per byte with a fixed logprob, optionally lower after the first
// "### Instruction" header repeats (i.e. inside one-shot prompts).
class FixedScorer final : public Scorer {
public:
    FixedScorer(double base, double one_shot, std::size_t limit = SIZE_MAX)
        : base_(base), one_shot_(one_shot) {
        desc_.kind = ScorerKind::HashMock;
        desc_.model_id = "fixed";
        desc_.context_limit = limit;
    }
    const ScorerDescriptor& descriptor() const override { return desc_; }
    std::vector<TokenLogProb> score_tokens(std::string_view text) const override {
        if (text.size() > desc_.context_limit) throw Error(ErrorKind::ContextOverflow, "too long");
        const auto first = text.find("### Instruction");
        const bool two = first != std::string_view::npos &&
                         text.find("### Instruction", first + 1) != std::string_view::npos;
        std::vector<TokenLogProb> out;
        for (std::size_t i = 0; i < text.size(); ++i) {
            out.push_back({std::string(1, text[i]), i, two ? one_shot_ : base_});
        }
        return out;
    }

private:
    double base_;
    double one_shot_;
    ScorerDescriptor desc_;
};

std::vector<TokenLogProb> tokens_at(std::vector<std::size_t> starts, std::string_view text) {
    std::vector<TokenLogProb> out;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        const auto end = k + 1 < starts.size() ? starts[k + 1] : text.size();
        out.push_back({std::string(text.substr(starts[k], end - starts[k])), starts[k], -1.0});
    }
    return out;
}

NeighborAssignment link(std::size_t i, std::size_t k) { return {i, k, 0.5, 1, false}; }

}  // namespace

TEST_CASE("response span location") {
    const std::string text = "abcdefghijkl";
    const auto toks = tokens_at({0, 5, 9}, text);
    CHECK(locate_response_span(toks, 9) == TokenSpan{2, 3});
    CHECK(locate_response_span(toks, 7) == TokenSpan{1, 3});
    CHECK(locate_response_span(toks, 0) == TokenSpan{0, 3});
    // the last token straddles the boundary
    CHECK(locate_response_span(toks, 10) == TokenSpan{2, 3});
    try {
        locate_response_span(toks, text.size());
        FAIL("expected EmptyResponseSpan");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptyResponseSpan);
    }
}

TEST_CASE("loss of a uniform scorer is ln 16") {
    FixedScorer uniform(-std::log(16.0), -std::log(16.0));
    const PromptText prompt{"prompt: ", 8, PromptKind::ZeroShot};
    const auto loss = response_loss(uniform, prompt, "0123456789abcdef");
    CHECK(loss.token_count == 16);
    CHECK(loss.mean_nll == doctest::Approx(std::log(16.0)).epsilon(1e-15));

    FixedScorer certain(0.0, 0.0);
    CHECK(response_loss(certain, prompt, "xyz").mean_nll == 0.0);
}

TEST_CASE("miwv is conditioned minus unconditioned loss") {
    const auto d = testing::fixture20();
    FixedScorer scorer(-1.0, -1.5);
    const auto profile = TemplateProfile::alpaca_style();
    const auto r = compute_miwv(scorer, d.samples[2], d.samples[5], link(2, 5), profile);
    CHECK(r.loss_uncond.mean_nll == 1.0);
    CHECK(r.loss_cond.mean_nll == 1.5);
    CHECK(r.miwv == 0.5);
    CHECK(r.loss_uncond.token_count == d.samples[2].response.size());
    CHECK(r.loss_cond.token_count == r.loss_uncond.token_count);
    CHECK_FALSE(r.truncated);
}

TEST_CASE("hash-mock logprobs follow the prefix hash") {
    HashMockScorer mock;
    const std::string text = "hello";
    const auto toks = mock.score_tokens(text);
    REQUIRE(toks.size() == 5);
    for (std::size_t p = 0; p < 5; ++p) {
        CHECK(toks[p].char_start == p);
        const auto h = fnv1a64(std::string_view(text).substr(0, p + 1));
        CHECK(*toks[p].logprob == -(1.0 + static_cast<double>(h % 1000) / 1000.0));
    }
}

TEST_CASE("ngram reference matches brute-force counts") {
    const auto corpus = testing::fixture_text("ngram_corpus.txt");
    const NgramReferenceScorer ngram(corpus);
    const std::string text = "The cat is on the table.\nZq";

    std::vector<int> padded = {256, 256};
    for (unsigned char c : corpus) padded.push_back(c);
    auto count = [&](int a, int b, int c) {
        std::size_t n = 0;
        for (std::size_t i = 0; i + 2 < padded.size(); ++i) {
            if (padded[i] == a && padded[i + 1] == b && (c < 0 || padded[i + 2] == c)) ++n;
        }
        return n;
    };

    const auto toks = ngram.score_tokens(text);
    REQUIRE(toks.size() == text.size());
    int p2 = 256, p1 = 256;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const int c = static_cast<unsigned char>(text[i]);
        const double want = std::log((count(p2, p1, c) + 1.0) / (count(p2, p1, -1) + 256.0));
        CHECK(std::abs(*toks[i].logprob - want) < 1e-12);
        p2 = p1;
        p1 = c;
    }
}

TEST_CASE("example response is truncated to fit the context") {
    const auto d = testing::fixture20();
    const auto profile = TemplateProfile::alpaca_style();
    const auto& target = d.samples[4];
    const auto& example = d.samples[0];
    const auto full = render_one_shot_prompt(example, target, profile).char_len + target.response.size();

    FixedScorer scorer(-1.0, -2.0, full - 10);
    const auto r = compute_miwv(scorer, target, example, link(4, 0), profile);
    CHECK(r.truncated);
    CHECK(r.loss_cond.token_count == target.response.size());

    FixedScorer exact(-1.0, -2.0, full);
    CHECK_FALSE(compute_miwv(exact, target, example, link(4, 0), profile).truncated);

    try {
        compute_miwv(scorer, target, example, link(4, 0), profile, {false});
        FAIL("expected ContextOverflow");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ContextOverflow);
    }
    // the target alone does not fit
    FixedScorer tiny(-1.0, -2.0, 20);
    CHECK_THROWS_AS(compute_miwv(tiny, target, example, link(4, 0), profile), Error);
}

TEST_CASE("truncation keeps whole UTF-8 characters") {
    const auto d = testing::fixture20();
    const auto profile = TemplateProfile::alpaca_style();
    const auto& example = d.samples[7];  // response contains a two-byte character
    const auto& target = d.samples[17];
    const auto pos = example.response.find("\xc3\xa1");
    REQUIRE(pos != std::string::npos);
    const auto full = render_one_shot_prompt(example, target, profile).char_len + target.response.size();
    // cut through the middle of the character
    const auto limit = full - (example.response.size() - pos - 1);
    FixedScorer scorer(-1.0, -2.0, limit);
    const auto r = compute_miwv(scorer, target, example, link(17, 7), profile);
    CHECK(r.truncated);
    const auto kept = render_one_shot_prompt(example, std::string_view(example.response).substr(0, pos), target, profile);
    CHECK(kept.char_len + target.response.size() <= limit);
}

TEST_CASE("echo responses decode with a null first logprob") {
    const std::string text = "Hi there";
    const std::string body = R"({"choices":[{"text":"Hi there","logprobs":{
        "tokens":["Hi"," there"],"token_logprobs":[null,-0.25],"text_offset":[0,2]}}]})";
    const auto toks = parse_echo_response(body, text);
    REQUIRE(toks.size() == 2);
    CHECK_FALSE(toks[0].logprob.has_value());
    CHECK(toks[1].logprob == -0.25);
    CHECK(toks[1].char_start == 2);

    const auto req = nlohmann::json::parse(build_echo_request("m", text));
    CHECK(req["echo"] == true);
    CHECK(req["max_tokens"] == 0);
    CHECK(req["logprobs"] == 1);
    CHECK(req["prompt"] == text);

    for (const char* bad : {
             R"({"choices":[]})",
             R"({"choices":[{"logprobs":{"tokens":["a"],"token_logprobs":[null,-1],"text_offset":[0]}}]})",
             R"({"choices":[{"logprobs":{"tokens":["Hi"," there"],"token_logprobs":[null,0.5],"text_offset":[0,2]}}]})",
             R"({"choices":[{"logprobs":{"tokens":["Hi"," there"],"token_logprobs":[null,-1],"text_offset":[0,0]}}]})",
             R"({"choices":[{"logprobs":{"tokens":["Hi"," there"],"token_logprobs":[null,-1],"text_offset":[1,2]}}]})",
             "not json",
         }) {
        try {
            parse_echo_response(bad, text);
            FAIL("accepted " << bad);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::MalformedResponse);
        }
    }
}

TEST_CASE("codepoint offsets map to bytes") {
    const std::string text = "\xc3\xa9t\xc3\xa9!";  // "été!"
    const std::string body = R"({"choices":[{"logprobs":{"tokens":["é","té","!"],"token_logprobs":[null,-1,-2],"text_offset":[0,1,3]}}]})";
    const auto toks = parse_echo_response(body, text, OffsetUnit::Codepoint);
    REQUIRE(toks.size() == 3);
    CHECK(toks[1].char_start == 2);
    CHECK(toks[2].char_start == 5);
}

TEST_CASE("null logprobs are skipped in the loss") {
    class NullFirst final : public Scorer {
    public:
        const ScorerDescriptor& descriptor() const override { return desc_; }
        std::vector<TokenLogProb> score_tokens(std::string_view text) const override {
            std::vector<TokenLogProb> out;
            for (std::size_t i = 0; i < text.size(); ++i) {
                out.push_back({std::string(1, text[i]), i, i == 0 ? std::nullopt : std::optional<double>(-2.0)});
            }
            return out;
        }
        ScorerDescriptor desc_;
    } scorer;
    const auto loss = response_loss(scorer, PromptText{"", 0, PromptKind::ZeroShot}, "abcd");
    CHECK(loss.token_count == 3);
    CHECK(loss.mean_nll == 2.0);
}

TEST_CASE("corpus scoring isolates failures per sample") {
    const auto d = testing::fixture20();
    std::vector<NeighborAssignment> nb;
    for (std::size_t i = 0; i < d.size(); ++i) nb.push_back(link(i, (i + 1) % d.size()));
    // long responses no longer fit
    FixedScorer scorer(-1.0, -1.25, 420);
    CorpusScoringOptions opts;
    opts.max_in_flight = 3;
    opts.truncate = false;
    const auto run = score_corpus(d, nb, scorer, TemplateProfile::alpaca_style(), opts);
    CHECK(run.records.size() + run.rejects.size() == d.size());
    CHECK_FALSE(run.rejects.empty());
    CHECK_FALSE(run.records.empty());
    for (std::size_t k = 1; k < run.records.size(); ++k) {
        CHECK(run.records[k - 1].sample_id < run.records[k].sample_id);
    }
    for (const auto& r : run.records) CHECK(r.miwv == 0.25);
}

TEST_CASE("score lines round-trip") {
    MiwvRecord r;
    r.sample_id = 3;
    r.neighbor_id = 9;
    r.similarity = 0.1;
    r.loss_uncond = {1.25, 8, 10.0};
    r.loss_cond = {1.0 / 3.0, 3, 1.0};
    r.miwv = r.loss_cond.mean_nll - r.loss_uncond.mean_nll;
    const auto line = format_score_line(r);
    CHECK(line ==
          R"({"i":3,"k":9,"sim":0.1,"loss":1.25,"loss_cond":0.3333333333333333,"A":8,"A_cond":3,"miwv":-0.9166666666666667,"truncated":false})");
    const auto back = parse_score_line(line);
    CHECK(back.sample_id == 3);
    CHECK(back.loss_cond.mean_nll == r.loss_cond.mean_nll);
    CHECK(back.miwv == r.miwv);
    CHECK(format_score_line(back) == line);
}
