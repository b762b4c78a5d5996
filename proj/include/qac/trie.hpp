#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qac/tokenizer.hpp"

namespace qac {

/// A normalized query string and its click count. Augmented queries carry
/// fractional pseudo-counts.
struct WeightedQuery {
    std::string text;
    double clicks = 0.0;

    bool operator==(const WeightedQuery&) const = default;
};

inline constexpr std::size_t kMinQueryChars = 3;

/// Normalizes text; nullopt when the result is shorter than 3 code points.
std::optional<WeightedQuery> make_query(std::string_view text, double clicks);

namespace detail {

struct TrieEdge {
    std::uint32_t label;
    std::uint32_t child;
};

/// Flat preorder tree shared by both trie kinds. Edges of one node are
/// contiguous and sorted by label.
struct TrieStorage {
    struct Node {
        std::uint32_t first_edge = 0;
        std::uint32_t edge_count = 0;
        bool terminal = false;
    };

    std::vector<Node> nodes;
    std::vector<TrieEdge> edges;
    std::vector<double> weight;       // completion tries only
    std::vector<double> max_weight;   // completion tries only

    std::span<const TrieEdge> edges_of(std::uint32_t node) const
    {
        const auto& n = nodes[node];
        return {edges.data() + n.first_edge, n.edge_count};
    }

    std::optional<std::uint32_t> child(std::uint32_t node, std::uint32_t label) const;
};

}  // namespace detail

struct Completion {
    std::string text;
    double weight = 0.0;

    bool operator==(const Completion&) const = default;
};

/// Character (UTF-8 byte) trie with per-node subtree maxima for
/// most-popular-completion lookups. Immutable after build.
class CompletionTrie {
  public:
    CompletionTrie() = default;

    /// Duplicate texts have their weights summed. Texts are normalized.
    static CompletionTrie build(std::span<const WeightedQuery> queries);

    /// Lowercase word n-grams (n = 1..5) of the body weighted by raw
    /// occurrence count; n-grams under 3 characters are skipped.
    static CompletionTrie build_docc(std::string_view body);

    /// Up to k stored strings extending prefix: weight descending, then
    /// text ascending. Empty when the prefix is not a path.
    std::vector<Completion> mpc(std::string_view prefix, std::size_t k) const;

    bool empty() const { return store_.nodes.empty(); }
    std::size_t node_count() const { return store_.nodes.size(); }
    std::size_t terminal_count() const;
    double max_subtree_weight() const { return empty() ? 0.0 : store_.max_weight[0]; }
    std::optional<double> weight_of(std::string_view text) const;

    /// Every stored string in lexicographic order.
    std::vector<Completion> entries() const;

    const detail::TrieStorage& storage() const { return store_; }

    std::vector<std::uint8_t> serialize() const;
    static CompletionTrie deserialize(std::span<const std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static CompletionTrie load(const std::filesystem::path& path);

  private:
    detail::TrieStorage store_;
};

/// Token-id trie over every character-level prefix/suffix split of a query
/// set: encode(q[..i]) ++ SEP_SPLIT ++ encode(q[i..]) ++ EOS for i in
/// [1, |q|]. Matching the typed prefix plus SEP_SPLIT selects exactly one
/// path, which is what makes guidance unambiguous for super-strings.
class GuidanceTrie {
  public:
    using NodeId = std::uint32_t;

    GuidanceTrie() = default;

    static GuidanceTrie build(std::span<const WeightedQuery> queries, const Tokenizer& tok);
    static GuidanceTrie from_sequences(std::vector<std::vector<TokenId>> sequences);

    bool empty() const { return store_.nodes.empty(); }
    std::size_t node_count() const { return store_.nodes.size(); }
    std::size_t sequence_count() const;

    std::optional<NodeId> root() const;
    std::optional<NodeId> child(NodeId node, TokenId token) const;
    std::optional<NodeId> walk(std::span<const TokenId> path) const;
    std::span<const detail::TrieEdge> edges(NodeId node) const { return store_.edges_of(node); }
    bool is_terminal(NodeId node) const { return store_.nodes[node].terminal; }

    /// Labels reachable in one step after `path`; empty if the path is absent.
    std::vector<TokenId> valid_next_tokens(std::span<const TokenId> path) const;

    /// True when `sequence` is a complete stored sequence.
    bool contains(std::span<const TokenId> sequence) const;

    std::vector<std::vector<TokenId>> sequences() const;

    std::vector<std::uint8_t> serialize() const;
    static GuidanceTrie deserialize(std::span<const std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static GuidanceTrie load(const std::filesystem::path& path);

  private:
    detail::TrieStorage store_;
};

}  // namespace qac
