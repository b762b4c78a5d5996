#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qac/scorer.hpp"
#include "qac/tokenizer.hpp"
#include "qac/trie.hpp"

namespace qac {

/// What `length` means in the annealed bias.
enum class BiasLengthSource {
    beam,    // total tokens in the beam, prefix included
    prefix,  // tokens of the typed prefix plus SEP_SPLIT, fixed per request
};

struct DecodeConfig {
    std::size_t beam_size = 25;
    std::size_t max_steps = 48;
    double initial_bias = 40.0;
    double alpha = 0.1;
    double beta = 0.05;
    double length_penalty = 1.0;
    std::size_t top_k_out = 10;
    BiasLengthSource bias_length_source = BiasLengthSource::beam;

    /// Throws invalid_input for non-finite or negative hyperparameters.
    void validate() const;
};

enum class SuggestionSource { mpc, lm, guided };

std::string_view to_string(SuggestionSource s);

struct Suggestion {
    std::string text;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based
    SuggestionSource source = SuggestionSource::lm;
    bool trie_conforming = false;
    /// Full decoded token path (prefix, SEP_SPLIT, suffix, EOS). Empty for mpc.
    std::vector<TokenId> tokens;
};

/// b0 * exp(-alpha * length) * exp(-beta * rank).
double annealed_bias(double initial_bias, double alpha, double beta, std::size_t length, std::size_t rank);

/// Soft trie-guided beam search.
///
/// Beams start as encode(prefix) ++ SEP_SPLIT. At every step each live beam
/// still on a guidance-trie path has the annealed bias subtracted from the
/// logits of every token outside the trie's valid next set; beams that have
/// left the trie (or every beam, when `guide` is null) are scored unchanged.
/// A uniform shift cannot change softmax rankings, so skipping the penalty
/// off-trie is the same as applying it. Expansion uses the top beam_size
/// tokens of the penalized softmax; tokens whose probability underflows to
/// zero, UNK and SEP_SPLIT are never expanded. Candidates are pruned to
/// beam_size by (log-prob desc, parent rank asc, token asc); beams ending in
/// EOS are set aside. Stops after max_steps or once beam_size beams finished.
///
/// Finished beams are scored logprob / generated_len^length_penalty,
/// deduplicated on normalized text and truncated to top_k_out. If nothing
/// finished, the surviving beams are reported instead.
std::vector<Suggestion> guided_beam_search(const Scorer& scorer, const Tokenizer& tok, const GuidanceTrie* guide,
                                           std::string_view prefix, const DecodeConfig& cfg);

}  // namespace qac
