#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace qac {

using TokenId = std::uint32_t;

inline constexpr TokenId kUnk = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kSepSplit = 2;
inline constexpr std::size_t kNumSpecials = 3;

inline constexpr std::size_t kDefaultVocabSize = 1024;

/// Byte-pair-encoding tokenizer over UTF-8 code points.
///
/// Ids: 0 UNK, 1 EOS, 2 SEP_SPLIT, then the base alphabet in code-point
/// string order, then learned tokens in the order they were created.
/// Text is segmented into chunks that start at each whitespace character
/// ("machine learning" -> "machine", " learning"); merges never cross a
/// chunk boundary. Immutable once built.
class Tokenizer {
  public:
    using Merge = std::pair<std::string, std::string>;

    /// Greedy most-frequent-pair merging until vocab_size tokens exist or no
    /// pair occurs at least twice. Ties go to the lexicographically smallest
    /// merged string, then the smallest left part.
    static Tokenizer train(std::span<const std::string> corpus, std::size_t vocab_size);

    static Tokenizer from_text(std::string_view contents);
    static Tokenizer load(const std::filesystem::path& path);
    std::string to_text() const;
    void save(const std::filesystem::path& path) const;

    std::vector<TokenId> encode(std::string_view text) const;

    /// SEP_SPLIT and EOS are dropped, UNK renders as U+FFFD.
    std::string decode(std::span<const TokenId> ids) const;

    /// encode(prefix) ++ [SEP_SPLIT] ++ encode(suffix). prefix must be non-empty.
    std::vector<TokenId> encode_split(std::string_view prefix, std::string_view suffix) const;

    std::size_t vocab_size() const { return tokens_.size(); }
    const std::string& token(TokenId id) const;
    std::optional<TokenId> id_of(std::string_view token) const;
    const std::vector<Merge>& merges() const { return merges_; }
    std::size_t alphabet_size() const { return alphabet_size_; }

    bool operator==(const Tokenizer& other) const
    {
        return tokens_ == other.tokens_ && merges_ == other.merges_;
    }

  private:
    struct PairHash {
        std::size_t operator()(std::uint64_t v) const noexcept { return std::hash<std::uint64_t>{}(v); }
    };
    struct MergeRule {
        std::uint32_t rank;
        TokenId result;
    };

    Tokenizer() = default;
    void rebuild_indexes();
    void encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const;

    std::vector<std::string> tokens_;
    std::vector<Merge> merges_;
    std::size_t alphabet_size_ = 0;
    std::unordered_map<std::string, TokenId> token_to_id_;
    std::unordered_map<std::uint64_t, MergeRule, PairHash> merge_rules_;
};

}  // namespace qac
