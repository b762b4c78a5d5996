#include "qac/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "qac/error.hpp"
#include "qac/kernels.hpp"
#include "qac/text.hpp"

namespace qac {

namespace {

// exp() of anything below this is not a normal double; such tokens have
// effectively zero probability and are not expanded.
constexpr double kMinExpandLogProb = -708.0;

struct Beam {
    std::vector<TokenId> tokens;
    double logprob = 0.0;
    std::optional<GuidanceTrie::NodeId> node;  // set while the beam is on a trie path
};

struct Candidate {
    double logprob;
    std::size_t parent;
    TokenId token;
};

bool candidate_before(const Candidate& a, const Candidate& b)
{
    if (a.logprob != b.logprob) {
        return a.logprob > b.logprob;
    }
    if (a.parent != b.parent) {
        return a.parent < b.parent;
    }
    return a.token < b.token;
}

std::string render(const std::string& prefix, std::string_view suffix)
{
    auto full = text::normalize_prefix(prefix + std::string(suffix));
    if (full.size() > prefix.size() && !full.empty() && full.back() == ' ') {
        full.pop_back();
    }
    return full;
}

}  // namespace

void DecodeConfig::validate() const
{
    auto bad = [](double v) { return !std::isfinite(v) || v < 0.0; };
    if (beam_size == 0 || max_steps == 0 || top_k_out == 0) {
        fail(ErrorCode::invalid_input, "decode config: beam_size, max_steps and top_k_out must be positive");
    }
    if (bad(initial_bias) || bad(alpha) || bad(beta)) {
        fail(ErrorCode::invalid_input, "decode config: bias, alpha and beta must be finite and non-negative");
    }
    if (!std::isfinite(length_penalty)) {
        fail(ErrorCode::invalid_input, "decode config: length_penalty must be finite");
    }
}

std::string_view to_string(SuggestionSource s)
{
    switch (s) {
    case SuggestionSource::mpc: return "mpc";
    case SuggestionSource::lm: return "lm";
    case SuggestionSource::guided: return "guided";
    }
    return "unknown";
}

double annealed_bias(double initial_bias, double alpha, double beta, std::size_t length, std::size_t rank)
{
    return initial_bias * std::exp(-alpha * static_cast<double>(length)) * std::exp(-beta * static_cast<double>(rank));
}

std::vector<Suggestion> guided_beam_search(const Scorer& scorer, const Tokenizer& tok, const GuidanceTrie* guide,
                                           std::string_view raw_prefix, const DecodeConfig& cfg)
{
    cfg.validate();
    const std::string prefix = text::normalize_prefix(raw_prefix);
    if (prefix.empty()) {
        fail(ErrorCode::invalid_input, "guided_beam_search: prefix is empty after normalization");
    }
    const std::size_t vocab = scorer.vocab_size();
    if (vocab != tok.vocab_size()) {
        fail(ErrorCode::invalid_input, "guided_beam_search: scorer and tokenizer vocabularies differ");
    }

    Beam start;
    start.tokens = tok.encode(prefix);
    start.tokens.push_back(kSepSplit);
    const std::size_t start_len = start.tokens.size();
    if (guide != nullptr) {
        start.node = guide->walk(start.tokens);
    }

    std::vector<Beam> beams{std::move(start)};
    std::vector<Beam> finished;
    std::vector<double> z(vocab);
    std::vector<std::uint8_t> keep(vocab, 0);
    std::vector<TokenId> order(vocab);
    std::vector<Candidate> candidates;
    const bool guided = guide != nullptr && cfg.initial_bias > 0.0;

    for (std::size_t step = 0; step < cfg.max_steps && !beams.empty(); ++step) {
        candidates.clear();
        for (std::size_t rank = 0; rank < beams.size(); ++rank) {
            const Beam& b = beams[rank];
            scorer.log_probs(b.tokens, z);

            if (guided && b.node) {
                std::size_t length =
                    cfg.bias_length_source == BiasLengthSource::beam ? b.tokens.size() : start_len;
                double delta = annealed_bias(cfg.initial_bias, cfg.alpha, cfg.beta, length, rank);
                if (delta > 0.0) {
                    auto edges = guide->edges(*b.node);
                    for (const auto& e : edges) {
                        keep[e.label] = 1;
                    }
                    kernels::subtract_unmasked(z, keep, delta);
                    for (const auto& e : edges) {
                        keep[e.label] = 0;
                    }
                }
            }
            kernels::log_softmax(z);

            std::size_t n = 0;
            for (TokenId v = 0; v < vocab; ++v) {
                if (v != kUnk && v != kSepSplit && z[v] >= kMinExpandLogProb) {
                    order[n++] = v;
                }
            }
            std::size_t take = std::min(n, cfg.beam_size);
            auto by_prob = [&](TokenId a, TokenId c) { return z[a] != z[c] ? z[a] > z[c] : a < c; };
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                              order.begin() + static_cast<std::ptrdiff_t>(n), by_prob);
            for (std::size_t j = 0; j < take; ++j) {
                candidates.push_back(Candidate{b.logprob + z[order[j]], rank, order[j]});
            }
        }

        std::size_t keep_n = std::min(candidates.size(), cfg.beam_size);
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep_n),
                          candidates.end(), candidate_before);

        std::vector<Beam> next;
        next.reserve(keep_n);
        for (std::size_t j = 0; j < keep_n; ++j) {
            const Candidate& c = candidates[j];
            const Beam& parent = beams[c.parent];
            Beam child;
            child.tokens.reserve(parent.tokens.size() + 1);
            child.tokens = parent.tokens;
            child.tokens.push_back(c.token);
            child.logprob = c.logprob;
            if (parent.node) {
                child.node = guide->child(*parent.node, c.token);
            }
            if (c.token == kEos) {
                finished.push_back(std::move(child));
            } else {
                next.push_back(std::move(child));
            }
        }
        beams = std::move(next);
        if (finished.size() >= cfg.beam_size) {
            break;
        }
    }

    const std::vector<Beam>& pool = finished.empty() ? beams : finished;
    std::vector<Suggestion> scored;
    scored.reserve(pool.size());
    const SuggestionSource source = guide != nullptr ? SuggestionSource::guided : SuggestionSource::lm;
    for (const Beam& b : pool) {
        std::span<const TokenId> suffix(b.tokens.data() + start_len, b.tokens.size() - start_len);
        auto gen_len = static_cast<double>(std::max<std::size_t>(suffix.size(), 1));
        Suggestion s;
        s.text = render(prefix, tok.decode(suffix));
        s.score = b.logprob / std::pow(gen_len, cfg.length_penalty);
        s.source = source;
        s.trie_conforming = guide != nullptr && guide->contains(b.tokens);
        s.tokens = b.tokens;
        scored.push_back(std::move(s));
    }
    std::stable_sort(scored.begin(), scored.end(), [](const Suggestion& a, const Suggestion& b) {
        return a.score != b.score ? a.score > b.score : a.text < b.text;
    });

    std::vector<Suggestion> out;
    std::vector<std::string> seen;
    for (auto& s : scored) {
        if (out.size() >= cfg.top_k_out) {
            break;
        }
        auto key = text::normalize(s.text);
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
            continue;
        }
        seen.push_back(std::move(key));
        s.rank = out.size() + 1;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace qac
