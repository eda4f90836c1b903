#include <cmath>

#include "miwv/digest.hpp"
#include "miwv/error.hpp"
#include "miwv/json_text.hpp"
#include "miwv/scoring.hpp"

namespace miwv {
namespace {

void check_context(const ScorerDescriptor& desc, std::string_view text) {
    if (text.empty()) throw Error(ErrorKind::EmptyResponseSpan, "nothing to score");
    if (text.size() > desc.context_limit) {
        throw Error(ErrorKind::ContextOverflow, std::to_string(text.size()) + " bytes exceed " +
                                                    desc.model_id + " limit of " +
                                                    std::to_string(desc.context_limit));
    }
}

}  // namespace

HashMockScorer::HashMockScorer(std::size_t context_limit) {
    desc_.kind = ScorerKind::HashMock;
    desc_.model_id = "hash-mock";
    desc_.context_limit = context_limit;
}

std::vector<TokenLogProb> HashMockScorer::score_tokens(std::string_view full_text) const {
    check_context(desc_, full_text);
    std::vector<TokenLogProb> out;
    out.reserve(full_text.size());
    Fnv1a64 h;  // hash of context + token, extended one byte at a time
    for (std::size_t p = 0; p < full_text.size(); ++p) {
        h.update(static_cast<unsigned char>(full_text[p]));
        const double lp = -(1.0 + static_cast<double>(h.value() % 1000) / 1000.0);
        out.push_back({std::string(1, full_text[p]), p, lp});
    }
    return out;
}

NgramReferenceScorer::NgramReferenceScorer(std::string_view corpus, std::string model_id,
                                           std::size_t context_limit) {
    desc_.kind = ScorerKind::NgramReference;
    desc_.model_id = std::move(model_id);
    desc_.context_limit = context_limit;
    int prev2 = kBos;
    int prev1 = kBos;
    for (unsigned char b : corpus) {
        const auto ctx = context_key(prev2, prev1);
        ++trigram_[ctx * 256u + b];
        ++context_[ctx];
        prev2 = prev1;
        prev1 = b;
    }
}

NgramReferenceScorer NgramReferenceScorer::from_file(const std::filesystem::path& corpus_path,
                                                     std::size_t context_limit) {
    const auto corpus = read_file(corpus_path);
    // the corpus digest is part of the model identity
    return NgramReferenceScorer(corpus, "ngram-reference:" + sha256_hex(corpus).substr(0, 16),
                                context_limit);
}

double NgramReferenceScorer::logprob(int prev2, int prev1, unsigned char next) const {
    const auto ctx = context_key(prev2, prev1);
    const auto tri = trigram_.find(ctx * 256u + next);
    const auto tot = context_.find(ctx);
    const double count = tri == trigram_.end() ? 0.0 : static_cast<double>(tri->second);
    const double total = tot == context_.end() ? 0.0 : static_cast<double>(tot->second);
    return std::log((count + 1.0) / (total + 256.0));
}

std::vector<TokenLogProb> NgramReferenceScorer::score_tokens(std::string_view full_text) const {
    check_context(desc_, full_text);
    std::vector<TokenLogProb> out;
    out.reserve(full_text.size());
    int prev2 = kBos;
    int prev1 = kBos;
    for (std::size_t p = 0; p < full_text.size(); ++p) {
        const auto b = static_cast<unsigned char>(full_text[p]);
        out.push_back({std::string(1, full_text[p]), p, logprob(prev2, prev1, b)});
        prev2 = prev1;
        prev1 = b;
    }
    return out;
}

}  // namespace miwv
