#include "qac/trie.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

#include "binio.hpp"
#include "qac/error.hpp"
#include "qac/text.hpp"
#include "trie_storage.hpp"

namespace qac {

namespace {

constexpr std::string_view kCompletionMagic = "QTRIE1";
constexpr std::string_view kGuidanceMagic = "QGTRI1";
constexpr std::size_t kDoccMaxOrder = 5;

}  // namespace

std::optional<WeightedQuery> make_query(std::string_view raw, double clicks)
{
    auto t = text::normalize(raw);
    if (text::codepoint_count(t) < kMinQueryChars) {
        return std::nullopt;
    }
    return WeightedQuery{std::move(t), clicks};
}

namespace detail {

std::optional<std::uint32_t> TrieStorage::child(std::uint32_t node, std::uint32_t label) const
{
    auto es = edges_of(node);
    auto it = std::lower_bound(es.begin(), es.end(), label,
                               [](const TrieEdge& e, std::uint32_t l) { return e.label < l; });
    if (it == es.end() || it->label != label) {
        return std::nullopt;
    }
    return it->child;
}

void write_storage(binio::Writer& w, const TrieStorage& s, bool weighted)
{
    w.u32(static_cast<std::uint32_t>(s.nodes.size()));
    for (std::uint32_t i = 0; i < s.nodes.size(); ++i) {
        const auto& n = s.nodes[i];
        w.varint(n.edge_count);
        for (const auto& e : s.edges_of(i)) {
            w.varint(e.label);
            w.varint(e.child);
        }
        w.u8(n.terminal ? 1 : 0);
        if (weighted) {
            w.f64(s.weight[i]);
            w.f64(s.max_weight[i]);
        }
    }
}

TrieStorage read_storage(binio::Reader& r, bool weighted, std::uint32_t max_label)
{
    TrieStorage s;
    std::uint32_t count = r.u32();
    // Every node needs at least two bytes; reject absurd counts before allocating.
    if (count > r.remaining() / 2 + 1) {
        r.corrupt("node count exceeds stream size");
    }
    s.nodes.resize(count);
    if (weighted) {
        s.weight.resize(count);
        s.max_weight.resize(count);
    }
    std::vector<std::uint8_t> parents(count, 0);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto edge_count = r.varint();
        if (edge_count > count) {
            r.corrupt("edge count out of range");
        }
        s.nodes[i].first_edge = static_cast<std::uint32_t>(s.edges.size());
        s.nodes[i].edge_count = static_cast<std::uint32_t>(edge_count);
        std::uint64_t prev_label = 0;
        for (std::uint64_t e = 0; e < edge_count; ++e) {
            auto label = r.varint();
            auto child = r.varint();
            if (label > max_label) {
                r.corrupt("edge label out of range");
            }
            if (e > 0 && label <= prev_label) {
                r.corrupt("edge labels not strictly increasing");
            }
            if (child <= i || child >= count) {
                r.corrupt("child offset out of range");
            }
            if (parents[child]++ != 0) {
                r.corrupt("node has more than one parent");
            }
            prev_label = label;
            s.edges.push_back(TrieEdge{static_cast<std::uint32_t>(label), static_cast<std::uint32_t>(child)});
        }
        auto flag = r.u8();
        if (flag > 1) {
            r.corrupt("bad terminal flag");
        }
        s.nodes[i].terminal = flag == 1;
        if (weighted) {
            s.weight[i] = r.f64();
            s.max_weight[i] = r.f64();
            if (!std::isfinite(s.weight[i]) || s.weight[i] < 0.0 || !std::isfinite(s.max_weight[i])) {
                r.corrupt("bad node weight");
            }
        }
    }
    if (!r.at_end()) {
        r.corrupt("trailing bytes");
    }
    for (std::uint32_t i = 1; i < count; ++i) {
        if (parents[i] != 1) {
            fail(ErrorCode::corrupt_file, "trie: node " + std::to_string(i) + " unreachable");
        }
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto& n = s.nodes[i];
        if (!n.terminal && n.edge_count == 0 && count > 0) {
            fail(ErrorCode::corrupt_file, "trie: dangling non-terminal leaf");
        }
    }
    if (weighted) {
        for (std::uint32_t i = count; i-- > 0;) {
            double best = s.nodes[i].terminal ? s.weight[i] : 0.0;
            for (const auto& e : s.edges_of(i)) {
                best = std::max(best, s.max_weight[e.child]);
            }
            if (best != s.max_weight[i]) {
                fail(ErrorCode::corrupt_file, "trie: inconsistent max_subtree_weight");
            }
        }
    }
    return s;
}

}  // namespace detail

CompletionTrie CompletionTrie::build(std::span<const WeightedQuery> queries)
{
    std::map<std::string, double> merged;
    for (const auto& q : queries) {
        auto t = text::normalize(q.text);
        if (!t.empty()) {
            merged[t] += q.clicks;
        }
    }
    std::vector<std::string> keys;
    std::vector<double> weights;
    keys.reserve(merged.size());
    weights.reserve(merged.size());
    for (auto& [k, w] : merged) {
        keys.push_back(k);
        weights.push_back(w);
    }
    CompletionTrie t;
    if (!keys.empty()) {
        detail::SortedBuilder<std::string>(t.store_, keys, weights).run();
    }
    return t;
}

CompletionTrie CompletionTrie::build_docc(std::string_view body)
{
    std::map<std::string, double> counts;
    for (const auto& sentence : text::split_sentences(body)) {
        auto ws = text::words(sentence);
        for (std::size_t i = 0; i < ws.size(); ++i) {
            std::string gram;
            for (std::size_t n = 1; n <= kDoccMaxOrder && i + n <= ws.size(); ++n) {
                if (n > 1) {
                    gram.push_back(' ');
                }
                gram += ws[i + n - 1];
                if (text::codepoint_count(gram) >= kMinQueryChars) {
                    counts[gram] += 1.0;
                }
            }
        }
    }
    std::vector<WeightedQuery> qs;
    qs.reserve(counts.size());
    for (auto& [g, c] : counts) {
        qs.push_back({g, c});
    }
    return build(qs);
}

std::vector<Completion> CompletionTrie::mpc(std::string_view raw_prefix, std::size_t k) const
{
    std::vector<Completion> out;
    auto prefix = text::normalize_prefix(raw_prefix);
    if (empty() || k == 0 || prefix.empty()) {
        return out;
    }
    std::uint32_t node = 0;
    for (char c : prefix) {
        auto next = store_.child(node, static_cast<unsigned char>(c));
        if (!next) {
            return out;
        }
        node = *next;
    }

    // Best-first over (bound desc, text asc). A subtree's path string is a
    // lexicographic lower bound of every string under it, so popping in this
    // order yields completions in exact (weight desc, text asc) order.
    struct Item {
        double bound;
        std::string text;
        std::uint32_t node;
        bool is_result;
    };
    auto worse = [](const Item& a, const Item& b) {
        if (a.bound != b.bound) {
            return a.bound < b.bound;
        }
        if (a.text != b.text) {
            return a.text > b.text;
        }
        return !a.is_result && b.is_result;
    };
    std::priority_queue<Item, std::vector<Item>, decltype(worse)> heap(worse);
    heap.push(Item{store_.max_weight[node], prefix, node, false});
    while (!heap.empty() && out.size() < k) {
        Item top = heap.top();
        heap.pop();
        if (top.is_result) {
            out.push_back(Completion{std::move(top.text), top.bound});
            continue;
        }
        if (store_.nodes[top.node].terminal) {
            heap.push(Item{store_.weight[top.node], top.text, top.node, true});
        }
        for (const auto& e : store_.edges_of(top.node)) {
            std::string t = top.text;
            t.push_back(static_cast<char>(e.label));
            heap.push(Item{store_.max_weight[e.child], std::move(t), e.child, false});
        }
    }
    return out;
}

std::size_t CompletionTrie::terminal_count() const
{
    return static_cast<std::size_t>(
        std::count_if(store_.nodes.begin(), store_.nodes.end(), [](const auto& n) { return n.terminal; }));
}

std::optional<double> CompletionTrie::weight_of(std::string_view raw) const
{
    if (empty()) {
        return std::nullopt;
    }
    std::uint32_t node = 0;
    for (char c : text::normalize(raw)) {
        auto next = store_.child(node, static_cast<unsigned char>(c));
        if (!next) {
            return std::nullopt;
        }
        node = *next;
    }
    if (!store_.nodes[node].terminal) {
        return std::nullopt;
    }
    return store_.weight[node];
}

std::vector<Completion> CompletionTrie::entries() const
{
    std::vector<Completion> out;
    if (empty()) {
        return out;
    }
    std::string path;
    auto visit = [&](auto&& self, std::uint32_t node) -> void {
        if (store_.nodes[node].terminal) {
            out.push_back({path, store_.weight[node]});
        }
        for (const auto& e : store_.edges_of(node)) {
            path.push_back(static_cast<char>(e.label));
            self(self, e.child);
            path.pop_back();
        }
    };
    visit(visit, 0);
    return out;
}

std::vector<std::uint8_t> CompletionTrie::serialize() const
{
    binio::Writer w;
    w.bytes(kCompletionMagic);
    detail::write_storage(w, store_, true);
    return w.take();
}

CompletionTrie CompletionTrie::deserialize(std::span<const std::uint8_t> bytes)
{
    binio::Reader r(bytes, "completion trie");
    r.expect_magic(kCompletionMagic);
    CompletionTrie t;
    t.store_ = detail::read_storage(r, true, 0xFF);
    return t;
}

void CompletionTrie::save(const std::filesystem::path& path) const { binio::write_file(path, serialize()); }

CompletionTrie CompletionTrie::load(const std::filesystem::path& path)
{
    return deserialize(binio::read_file(path));
}

GuidanceTrie GuidanceTrie::build(std::span<const WeightedQuery> queries, const Tokenizer& tok)
{
    std::vector<std::vector<TokenId>> seqs;
    for (const auto& q : queries) {
        auto t = text::normalize(q.text);
        if (t.empty()) {
            continue;
        }
        auto offsets = text::codepoint_offsets(t);
        for (std::size_t i = 1; i < offsets.size(); ++i) {
            std::string_view view(t);
            auto seq = tok.encode_split(view.substr(0, offsets[i]), view.substr(offsets[i]));
            seq.push_back(kEos);
            seqs.push_back(std::move(seq));
        }
    }
    return from_sequences(std::move(seqs));
}

GuidanceTrie GuidanceTrie::from_sequences(std::vector<std::vector<TokenId>> seqs)
{
    std::sort(seqs.begin(), seqs.end());
    seqs.erase(std::unique(seqs.begin(), seqs.end()), seqs.end());
    GuidanceTrie t;
    if (!seqs.empty()) {
        detail::SortedBuilder<std::vector<TokenId>>(t.store_, seqs, {}).run();
    }
    return t;
}

std::size_t GuidanceTrie::sequence_count() const
{
    return static_cast<std::size_t>(
        std::count_if(store_.nodes.begin(), store_.nodes.end(), [](const auto& n) { return n.terminal; }));
}

std::optional<GuidanceTrie::NodeId> GuidanceTrie::root() const
{
    if (empty()) {
        return std::nullopt;
    }
    return NodeId{0};
}

std::optional<GuidanceTrie::NodeId> GuidanceTrie::child(NodeId node, TokenId token) const
{
    return store_.child(node, token);
}

std::optional<GuidanceTrie::NodeId> GuidanceTrie::walk(std::span<const TokenId> path) const
{
    auto node = root();
    for (TokenId t : path) {
        if (!node) {
            break;
        }
        node = child(*node, t);
    }
    return node;
}

std::vector<TokenId> GuidanceTrie::valid_next_tokens(std::span<const TokenId> path) const
{
    std::vector<TokenId> out;
    if (auto node = walk(path)) {
        for (const auto& e : edges(*node)) {
            out.push_back(e.label);
        }
    }
    return out;
}

bool GuidanceTrie::contains(std::span<const TokenId> sequence) const
{
    auto node = walk(sequence);
    return node && is_terminal(*node);
}

std::vector<std::vector<TokenId>> GuidanceTrie::sequences() const
{
    std::vector<std::vector<TokenId>> out;
    if (empty()) {
        return out;
    }
    std::vector<TokenId> path;
    auto visit = [&](auto&& self, std::uint32_t node) -> void {
        if (store_.nodes[node].terminal) {
            out.push_back(path);
        }
        for (const auto& e : store_.edges_of(node)) {
            path.push_back(e.label);
            self(self, e.child);
            path.pop_back();
        }
    };
    visit(visit, 0);
    return out;
}

std::vector<std::uint8_t> GuidanceTrie::serialize() const
{
    binio::Writer w;
    w.bytes(kGuidanceMagic);
    detail::write_storage(w, store_, false);
    return w.take();
}

GuidanceTrie GuidanceTrie::deserialize(std::span<const std::uint8_t> bytes)
{
    binio::Reader r(bytes, "guidance trie");
    r.expect_magic(kGuidanceMagic);
    GuidanceTrie t;
    t.store_ = detail::read_storage(r, false, 0xFFFFFFFFu);
    return t;
}

void GuidanceTrie::save(const std::filesystem::path& path) const { binio::write_file(path, serialize()); }

GuidanceTrie GuidanceTrie::load(const std::filesystem::path& path) { return deserialize(binio::read_file(path)); }

}  // namespace qac
