#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "qac/tokenizer.hpp"

namespace qac {

inline constexpr int kDefaultOrder = 4;
inline constexpr double kDefaultDiscount = 0.75;
inline constexpr double kDefaultLambda = 0.3;

/// Token n-gram model with absolute discounting and recursive backoff down
/// to a uniform distribution over the whole vocabulary:
///
///   P(v | h) = max(c(h v) - D, 0) / c(h) + D * N1+(h .) / c(h) * P(v | h')
///
/// where h' drops the oldest token of h. Unseen histories defer entirely to
/// the shorter history.
class NgramModel {
  public:
    struct Continuation {
        TokenId token;
        std::uint32_t count;
    };
    struct ContextStats {
        std::uint64_t total = 0;
        std::vector<Continuation> next;  // sorted by token id
    };

    NgramModel() = default;

    /// Counts every position under all history lengths 0..order-1.
    /// Sequences are expected to end with EOS.
    static NgramModel train(std::span<const std::vector<TokenId>> sequences, int order, std::size_t vocab_size,
                            double discount = kDefaultDiscount);

    int order() const { return order_; }
    std::size_t vocab_size() const { return vocab_size_; }
    double discount() const { return discount_; }

    /// Writes P(. | history) into out (size vocab_size). Only the last
    /// order-1 tokens of history matter.
    void probabilities(std::span<const TokenId> history, std::span<double> out) const;

    /// Raw count of `token` after exactly `context` (nullopt-free: 0 if unseen).
    std::uint32_t count(std::span<const TokenId> context, TokenId token) const;
    const ContextStats* stats(std::span<const TokenId> context) const;
    std::size_t context_count(std::size_t length) const;

    /// Same counts with every table of history length >= new_order - 1 dropped.
    NgramModel truncated(int new_order) const;

    std::vector<std::uint8_t> serialize() const;
    static NgramModel deserialize(std::span<const std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static NgramModel load(const std::filesystem::path& path);

  private:
    static std::string key_of(std::span<const TokenId> context);

    int order_ = 0;
    std::size_t vocab_size_ = 0;
    double discount_ = kDefaultDiscount;
    // tables_[L] maps a packed history of L tokens to its continuations.
    std::vector<std::unordered_map<std::string, ContextStats>> tables_;
};

/// Document conditioning for the scorer: an optional model trained on the
/// assembled context text, interpolated with weight lambda.
struct ScorerContext {
    std::shared_ptr<const NgramModel> doc_model;
    double lambda = 0.0;

    double effective_lambda() const { return doc_model ? lambda : 0.0; }
};

/// The decoder's view of a language model: full-vocabulary log-probabilities
/// for the next token given the beam so far. Implementations must be safe
/// for concurrent calls.
class Scorer {
  public:
    virtual ~Scorer() = default;
    virtual std::size_t vocab_size() const = 0;
    virtual void log_probs(std::span<const TokenId> beam_tokens, std::span<double> out) const = 0;
};

/// logits = log((1 - lambda) P_global + lambda P_doc). The document model
/// sees the beam with SEP_SPLIT removed, since its training text never
/// contains the separator.
class NgramScorer final : public Scorer {
  public:
    NgramScorer(std::shared_ptr<const NgramModel> global, ScorerContext ctx);

    std::size_t vocab_size() const override { return global_->vocab_size(); }
    void log_probs(std::span<const TokenId> beam_tokens, std::span<double> out) const override;

  private:
    std::shared_ptr<const NgramModel> global_;
    ScorerContext ctx_;
};

/// Free-function form of the scorer contract.
std::vector<double> logits(const NgramModel& model, const ScorerContext& ctx, std::span<const TokenId> beam_tokens);

}  // namespace qac
