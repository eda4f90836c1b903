#include <cmath>

#include "http.hpp"
#include "json.hpp"
#include "miwv/error.hpp"
#include "miwv/scoring.hpp"

namespace miwv {

RemoteScorer::RemoteScorer(RemoteScorerOptions options) : opts_(std::move(options)) {
    if (opts_.base_url.empty()) throw Error(ErrorKind::Config, "scorer.base_url is required");
    desc_.kind = ScorerKind::Remote;
    desc_.model_id = opts_.model_id;
    desc_.context_limit = opts_.context_limit;
}

std::string build_echo_request(std::string_view model_id, std::string_view full_text) {
    nlohmann::ordered_json req;
    req["model"] = model_id;
    req["prompt"] = full_text;
    req["max_tokens"] = 0;
    req["echo"] = true;
    req["logprobs"] = 1;
    return req.dump();
}

namespace {

// byte offset of every code point start, plus one past the end
std::vector<std::size_t> codepoint_starts(std::string_view text) {
    std::vector<std::size_t> starts;
    for (std::size_t b = 0; b < text.size(); ++b) {
        if ((static_cast<unsigned char>(text[b]) & 0xC0) != 0x80) starts.push_back(b);
    }
    starts.push_back(text.size());
    return starts;
}

}  // namespace

std::vector<TokenLogProb> parse_echo_response(std::string_view body, std::string_view full_text,
                                              OffsetUnit unit) {
    std::vector<TokenLogProb> out;
    try {
        const auto res = nlohmann::json::parse(body);
        const auto& lp = res.at("choices").at(0).at("logprobs");
        const auto& tokens = lp.at("tokens");
        const auto& logprobs = lp.at("token_logprobs");
        const auto& offsets = lp.at("text_offset");
        if (!tokens.is_array() || !logprobs.is_array() || !offsets.is_array() ||
            tokens.size() != logprobs.size() || tokens.size() != offsets.size()) {
            throw Error(ErrorKind::MalformedResponse, "logprobs arrays are missing or misaligned");
        }
        const auto starts = unit == OffsetUnit::Codepoint ? codepoint_starts(full_text)
                                                          : std::vector<std::size_t>{};
        out.reserve(tokens.size());
        for (std::size_t k = 0; k < tokens.size(); ++k) {
            TokenLogProb t;
            t.token_text = tokens[k].get<std::string>();
            auto offset = offsets[k].get<std::size_t>();
            if (unit == OffsetUnit::Codepoint) {
                if (offset >= starts.size()) {
                    throw Error(ErrorKind::MalformedResponse, "text_offset past end of text");
                }
                offset = starts[offset];
            }
            t.char_start = offset;
            if (!logprobs[k].is_null()) {
                double v = logprobs[k].get<double>();
                if (!std::isfinite(v) || v > 1e-6) {
                    throw Error(ErrorKind::MalformedResponse, "token " + std::to_string(k) +
                                                                  " has logprob > 0 or non-finite");
                }
                t.logprob = std::min(v, 0.0);
            }
            if (k == 0 && t.char_start != 0) {
                throw Error(ErrorKind::MalformedResponse, "first text_offset is not 0");
            }
            if (k > 0 && t.char_start <= out.back().char_start) {
                throw Error(ErrorKind::MalformedResponse, "text_offset not strictly increasing");
            }
            if (t.char_start >= full_text.size()) {
                throw Error(ErrorKind::MalformedResponse, "text_offset past end of text");
            }
            out.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedResponse, std::string("completions response: ") + e.what());
    }
    if (out.empty()) throw Error(ErrorKind::MalformedResponse, "completions response has no tokens");
    return out;
}

std::vector<TokenLogProb> RemoteScorer::score_tokens(std::string_view full_text) const {
    if (full_text.size() > desc_.context_limit) {
        throw Error(ErrorKind::ContextOverflow, std::to_string(full_text.size()) +
                                                    " bytes exceed the context limit of " +
                                                    std::to_string(desc_.context_limit));
    }
    const auto body = detail::post_json(opts_.base_url, "/v1/completions",
                                        build_echo_request(opts_.model_id, full_text),
                                        {opts_.retries, opts_.backoff_ms, opts_.timeout_s});
    return parse_echo_response(body, full_text, opts_.offset_unit);
}

}  // namespace miwv
