#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "qac/decoder.hpp"
#include "qac/error.hpp"
#include "qac/text.hpp"

using namespace qac;

namespace {

class UniformScorer final : public Scorer {
  public:
    explicit UniformScorer(std::size_t v) : v_(v) {}
    std::size_t vocab_size() const override { return v_; }
    void log_probs(std::span<const TokenId>, std::span<double> out) const override
    {
        std::fill(out.begin(), out.end(), -std::log(static_cast<double>(v_)));
    }

  private:
    std::size_t v_;
};

// Pseudo-random but deterministic distribution per beam.
class HashScorer final : public Scorer {
  public:
    HashScorer(std::size_t v, std::uint64_t seed) : v_(v), seed_(seed) {}
    std::size_t vocab_size() const override { return v_; }
    void log_probs(std::span<const TokenId> beam, std::span<double> out) const override
    {
        std::uint64_t h = seed_;
        for (TokenId t : beam) {
            h = h * 1000003u ^ (t + 0x9E37u);
        }
        std::mt19937_64 g(h);
        double sum = 0;
        for (auto& x : out) {
            x = std::uniform_real_distribution<double>(0.0, 4.0)(g);
            sum += std::exp(x);
        }
        for (auto& x : out) {
            x -= std::log(sum);
        }
    }

  private:
    std::size_t v_;
    std::uint64_t seed_;
};

struct RefBeam {
    std::vector<TokenId> tokens;
    double lp = 0;
};

bool on_trie(const GuidanceTrie* gt, const std::vector<TokenId>& tokens)
{
    return gt != nullptr && gt->walk(tokens).has_value();
}

// Straight-line transcription of the search loop with the penalty applied
// to every off-set token and a plain log-sum-exp.
std::vector<std::pair<std::string, double>> ref_search(const Scorer& sc, const Tokenizer& tok,
                                                       const GuidanceTrie* gt, const std::string& prefix,
                                                       const DecodeConfig& cfg)
{
    std::vector<TokenId> start = tok.encode(prefix);
    start.push_back(kSepSplit);
    const std::size_t start_len = start.size();
    std::vector<RefBeam> beams{{start, 0.0}};
    std::vector<RefBeam> finished;
    const std::size_t v = sc.vocab_size();
    for (std::size_t step = 0; step < cfg.max_steps && !beams.empty(); ++step) {
        struct Cand {
            double lp;
            std::size_t parent;
            TokenId tok;
        };
        std::vector<Cand> cands;
        for (std::size_t r = 0; r < beams.size(); ++r) {
            std::vector<double> z(v);
            sc.log_probs(beams[r].tokens, z);
            if (on_trie(gt, beams[r].tokens)) {
                const auto valid = gt->valid_next_tokens(beams[r].tokens);
                const std::size_t len = cfg.bias_length_source == BiasLengthSource::beam ? beams[r].tokens.size()
                                                                                           : start_len;
                const double delta = cfg.initial_bias * std::exp(-cfg.alpha * static_cast<double>(len)) *
                                     std::exp(-cfg.beta * static_cast<double>(r));
                for (TokenId t = 0; t < v; ++t) {
                    if (std::find(valid.begin(), valid.end(), t) == valid.end()) {
                        z[t] -= delta;
                    }
                }
            }
            const double mx = *std::max_element(z.begin(), z.end());
            double s = 0;
            for (double x : z) {
                s += std::exp(x - mx);
            }
            std::vector<std::pair<double, TokenId>> ranked;
            for (TokenId t = 0; t < v; ++t) {
                const double lp = z[t] - mx - std::log(s);
                if (t != kUnk && t != kSepSplit && lp >= -708.0) {
                    ranked.push_back({-lp, t});
                }
            }
            std::sort(ranked.begin(), ranked.end());
            for (std::size_t j = 0; j < ranked.size() && j < cfg.beam_size; ++j) {
                cands.push_back({beams[r].lp - ranked[j].first, r, ranked[j].second});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            return a.lp != b.lp ? a.lp > b.lp : (a.parent != b.parent ? a.parent < b.parent : a.tok < b.tok);
        });
        std::vector<RefBeam> next;
        for (std::size_t j = 0; j < cands.size() && j < cfg.beam_size; ++j) {
            RefBeam b = beams[cands[j].parent];
            b.tokens.push_back(cands[j].tok);
            b.lp = cands[j].lp;
            (cands[j].tok == kEos ? finished : next).push_back(std::move(b));
        }
        beams = std::move(next);
        if (finished.size() >= cfg.beam_size) {
            break;
        }
    }
    const auto& pool = finished.empty() ? beams : finished;
    std::vector<std::pair<std::string, double>> out;
    for (const auto& b : pool) {
        const std::vector<TokenId> suffix(b.tokens.begin() + static_cast<long>(start_len), b.tokens.end());
        const double n = static_cast<double>(std::max<std::size_t>(suffix.size(), 1));
        out.push_back({text::normalize(prefix + tok.decode(suffix)), b.lp / std::pow(n, cfg.length_penalty)});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::pair<std::string, double>> dedup;
    for (const auto& s : out) {
        if (dedup.size() >= cfg.top_k_out) {
            break;
        }
        if (std::none_of(dedup.begin(), dedup.end(), [&](const auto& d) { return d.first == s.first; })) {
            dedup.push_back(s);
        }
    }
    return dedup;
}

Tokenizer small_tokenizer()
{
    const std::vector<std::string> corpus = {"paris tourism", "paris history", "python tutorial", "pandas tips",
                                             "party ideas", "pasta recipes"};
    return Tokenizer::train(corpus, 40);
}

}  // namespace

TEST_CASE("annealed bias closed form")
{
    CHECK(annealed_bias(40, 0.1, 0.05, 0, 0) == 40.0);
    CHECK(annealed_bias(40, 0.1, 0.2, 5, 2) == doctest::Approx(40 * std::exp(-0.9)).epsilon(1e-12));
    CHECK(std::abs(annealed_bias(40, 0.1, 0.2, 5, 2) - 16.2628) < 1e-4);
    CHECK(annealed_bias(0, 0.3, 0.7, 9, 4) == 0.0);
    double prev = annealed_bias(40, 0.1, 0.05, 0, 0);
    for (std::size_t len = 1; len < 20; ++len) {
        const double cur = annealed_bias(40, 0.1, 0.05, len, len % 3);
        CHECK(cur <= annealed_bias(40, 0.1, 0.05, len - 1, len % 3));
        prev = cur;
    }
    CHECK(prev > 0.0);
}

TEST_CASE("config validation")
{
    DecodeConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.beam_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = DecodeConfig{};
    cfg.alpha = -1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = DecodeConfig{};
    cfg.initial_bias = std::nan("");
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("tiny instance: strong bias forces the only trie path")
{
    const std::vector<std::string> corpus = {"ab"};
    const auto tok = Tokenizer::train(corpus, 5);  // ids: unk eos sep a b
    const TokenId a = *tok.id_of("a");
    const auto gt = GuidanceTrie::from_sequences({{a, kSepSplit, a, kEos}});
    const UniformScorer sc(5);
    DecodeConfig cfg;
    cfg.initial_bias = 1e4;
    cfg.alpha = 0;
    cfg.beta = 0;
    cfg.beam_size = 1;
    cfg.max_steps = 4;
    const auto out = guided_beam_search(sc, tok, &gt, "a", cfg);
    REQUIRE(out.size() == 1);
    CHECK(out[0].text == "aa");
    CHECK(out[0].trie_conforming);
    CHECK(out[0].source == SuggestionSource::guided);

    // Exhaustive check: among every continuation of length <= 4, the
    // penalized score of "a EOS" is the unique maximum.
    const std::vector<TokenId> alphabet = {kEos, a, *tok.id_of("b")};
    double best = -1e300;
    std::vector<TokenId> best_seq;
    std::vector<std::vector<TokenId>> frontier = {{a, kSepSplit}};
    for (int depth = 0; depth < 4; ++depth) {
        std::vector<std::vector<TokenId>> grown;
        for (const auto& seq : frontier) {
            for (TokenId t : alphabet) {
                auto next = seq;
                next.push_back(t);
                grown.push_back(std::move(next));
            }
        }
        frontier = std::move(grown);
    }
    // Score complete sequences ending in EOS.
    for (const auto& seq0 : frontier) {
        std::vector<TokenId> prefix_path = {a, kSepSplit};
        double lp = 0;
        bool done = false;
        std::vector<TokenId> cur = prefix_path;
        for (std::size_t i = 2; i < seq0.size() && !done; ++i) {
            const bool alive = gt.walk(cur).has_value();
            const auto valid = gt.valid_next_tokens(cur);
            std::vector<double> z(5, -std::log(5.0));
            for (TokenId t = 0; t < 5 && alive; ++t) {
                if (std::find(valid.begin(), valid.end(), t) == valid.end()) {
                    z[t] -= 1e4;
                }
            }
            double m = *std::max_element(z.begin(), z.end()), s = 0;
            for (double x : z) {
                s += std::exp(x - m);
            }
            lp += z[seq0[i]] - m - std::log(s);
            cur.push_back(seq0[i]);
            done = seq0[i] == kEos;
        }
        if (done) {
            const double score = lp / static_cast<double>(cur.size() - 2);
            if (score > best) {
                best = score;
                best_seq = cur;
            }
        }
    }
    CHECK(best_seq == std::vector<TokenId>{a, kSepSplit, a, kEos});
}

TEST_CASE("zero bias is identical to unguided search")
{
    const auto tok = small_tokenizer();
    std::vector<WeightedQuery> qs = {{"paris tourism", 3}, {"party ideas", 1}, {"pasta recipes", 2}};
    const auto gt = GuidanceTrie::build(qs, tok);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const HashScorer sc(tok.vocab_size(), seed);
        DecodeConfig cfg;
        cfg.initial_bias = 0;
        cfg.beam_size = 6;
        cfg.max_steps = 8;
        const auto guided = guided_beam_search(sc, tok, &gt, "pa", cfg);
        const auto plain = guided_beam_search(sc, tok, nullptr, "pa", cfg);
        REQUIRE(guided.size() == plain.size());
        for (std::size_t i = 0; i < plain.size(); ++i) {
            CHECK(guided[i].text == plain[i].text);
            CHECK(std::abs(guided[i].score - plain[i].score) < 1e-9);
            CHECK(guided[i].rank == i + 1);
        }
    }
}

TEST_CASE("search agrees with the reference loop")
{
    const auto tok = small_tokenizer();
    std::vector<WeightedQuery> qs = {{"paris tourism", 3}, {"paris history", 2}, {"party ideas", 1},
                                     {"pasta recipes", 2}, {"python tutorial", 1}};
    const auto gt = GuidanceTrie::build(qs, tok);
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        for (auto src : {BiasLengthSource::beam, BiasLengthSource::prefix}) {
            for (const GuidanceTrie* guide : {static_cast<const GuidanceTrie*>(&gt),
                                              static_cast<const GuidanceTrie*>(nullptr)}) {
                const HashScorer sc(tok.vocab_size(), seed);
                DecodeConfig cfg;
                cfg.beam_size = 5;
                cfg.max_steps = 12;
                cfg.initial_bias = 6.0;
                cfg.bias_length_source = src;
                const std::string prefix = seed % 2 ? "par" : "p";
                const auto got = guided_beam_search(sc, tok, guide, prefix, cfg);
                const auto expect = ref_search(sc, tok, guide, prefix, cfg);
                REQUIRE(got.size() == expect.size());
                for (std::size_t i = 0; i < got.size(); ++i) {
                    CHECK(text::normalize(got[i].text) == expect[i].first);
                    CHECK(got[i].score == doctest::Approx(expect[i].second).epsilon(1e-9));
                }
            }
        }
    }
}

TEST_CASE("prefix fidelity and trie conformance under strong bias")
{
    const auto tok = small_tokenizer();
    std::vector<WeightedQuery> qs = {{"paris tourism", 3}, {"paris history", 2}, {"pasta recipes", 2}};
    const auto gt = GuidanceTrie::build(qs, tok);
    const HashScorer sc(tok.vocab_size(), 99);
    DecodeConfig cfg;
    cfg.initial_bias = 1e3;
    cfg.alpha = 0;
    cfg.beta = 0;
    cfg.max_steps = 30;
    for (std::string prefix : {"pa", "pari", "paris ", "pas"}) {
        const auto out = guided_beam_search(sc, tok, &gt, prefix, cfg);
        REQUIRE_FALSE(out.empty());
        for (const auto& s : out) {
            CHECK(text::starts_with(s.text, text::normalize_prefix(prefix)));
        }
        CHECK(out[0].trie_conforming);
        CHECK((out[0].text == "paris tourism" || out[0].text == "paris history" || out[0].text == "pasta recipes"));
    }
}

TEST_CASE("invalid inputs")
{
    const auto tok = small_tokenizer();
    const UniformScorer sc(tok.vocab_size());
    CHECK_THROWS_AS(guided_beam_search(sc, tok, nullptr, "   ", DecodeConfig{}), Error);
    const UniformScorer wrong(tok.vocab_size() + 1);
    CHECK_THROWS_AS(guided_beam_search(wrong, tok, nullptr, "pa", DecodeConfig{}), Error);
}
