#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "binio.hpp"
#include "qac/trie.hpp"

namespace qac::detail {

inline std::uint32_t label_at(const std::string& s, std::size_t i)
{
    return static_cast<unsigned char>(s[i]);
}

inline std::uint32_t label_at(const std::vector<TokenId>& s, std::size_t i) { return s[i]; }

/// Builds preorder storage from sorted, unique sequences. `weights` is
/// parallel to `seqs` and may be empty (guidance tries).
template <typename Seq>
class SortedBuilder {
  public:
    SortedBuilder(TrieStorage& out, std::span<const Seq> seqs, std::span<const double> weights)
        : out_(out), seqs_(seqs), weights_(weights)
    {}

    void run()
    {
        if (!seqs_.empty()) {
            build(0, seqs_.size(), 0);
        }
    }

  private:
    std::uint32_t build(std::size_t lo, std::size_t hi, std::size_t depth)
    {
        auto id = static_cast<std::uint32_t>(out_.nodes.size());
        out_.nodes.emplace_back();
        bool weighted = !weights_.empty();
        if (weighted) {
            out_.weight.push_back(0.0);
            out_.max_weight.push_back(0.0);
        }
        double best = 0.0;
        if (seqs_[lo].size() == depth) {
            out_.nodes[id].terminal = true;
            if (weighted) {
                out_.weight[id] = weights_[lo];
                best = weights_[lo];
            }
            ++lo;
        }
        std::vector<std::pair<std::size_t, std::size_t>> groups;
        for (std::size_t i = lo; i < hi;) {
            std::uint32_t label = label_at(seqs_[i], depth);
            std::size_t j = i + 1;
            while (j < hi && label_at(seqs_[j], depth) == label) {
                ++j;
            }
            groups.emplace_back(i, j);
            i = j;
        }
        auto first = static_cast<std::uint32_t>(out_.edges.size());
        out_.nodes[id].first_edge = first;
        out_.nodes[id].edge_count = static_cast<std::uint32_t>(groups.size());
        out_.edges.resize(out_.edges.size() + groups.size());
        for (std::size_t g = 0; g < groups.size(); ++g) {
            auto [a, b] = groups[g];
            std::uint32_t label = label_at(seqs_[a], depth);
            std::uint32_t child = build(a, b, depth + 1);
            out_.edges[first + g] = TrieEdge{label, child};
            if (weighted) {
                best = std::max(best, out_.max_weight[child]);
            }
        }
        if (weighted) {
            out_.max_weight[id] = best;
        }
        return id;
    }

    TrieStorage& out_;
    std::span<const Seq> seqs_;
    std::span<const double> weights_;
};

void write_storage(binio::Writer& w, const TrieStorage& s, bool weighted);
TrieStorage read_storage(binio::Reader& r, bool weighted, std::uint32_t max_label);

}  // namespace qac::detail
