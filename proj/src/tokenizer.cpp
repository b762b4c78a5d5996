#include "qac/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "qac/error.hpp"
#include "qac/text.hpp"

namespace qac {

namespace {

constexpr std::string_view kMagic = "QTOK1";
constexpr std::string_view kMergesMarker = "#MERGES";
constexpr std::string_view kReplacement = "\xEF\xBF\xBD";

std::uint64_t pair_key(TokenId left, TokenId right)
{
    return (static_cast<std::uint64_t>(left) << 32) | right;
}

/// Chunks start at offset 0 and at every whitespace character.
template <typename Fn>
void for_each_chunk(std::string_view text, Fn&& fn)
{
    std::size_t start = 0;
    for (std::size_t i = 1; i < text.size(); ++i) {
        if (text::is_space(text[i])) {
            fn(text.substr(start, i - start));
            start = i;
        }
    }
    if (start < text.size()) {
        fn(text.substr(start));
    }
}

void apply_merge(std::vector<TokenId>& symbols, TokenId left, TokenId right, TokenId result)
{
    std::size_t w = 0;
    for (std::size_t r = 0; r < symbols.size(); ++r) {
        if (r + 1 < symbols.size() && symbols[r] == left && symbols[r + 1] == right) {
            symbols[w++] = result;
            ++r;
        } else {
            symbols[w++] = symbols[r];
        }
    }
    symbols.resize(w);
}

}  // namespace

Tokenizer Tokenizer::train(std::span<const std::string> corpus, std::size_t vocab_size)
{
    if (corpus.empty()) {
        fail(ErrorCode::invalid_input, "train_bpe: empty corpus");
    }

    std::map<std::string, std::uint64_t> chunk_freq;
    std::set<std::string> alphabet;
    for (const auto& line : corpus) {
        for_each_chunk(line, [&](std::string_view chunk) { ++chunk_freq[std::string(chunk)]; });
        for (auto& cp : text::split_codepoints(line)) {
            alphabet.insert(std::move(cp));
        }
    }
    if (vocab_size < alphabet.size() + kNumSpecials) {
        fail(ErrorCode::invalid_input,
             "train_bpe: vocab_size " + std::to_string(vocab_size) + " cannot hold " +
                 std::to_string(alphabet.size()) + " base characters plus " + std::to_string(kNumSpecials) +
                 " specials");
    }

    Tokenizer tok;
    tok.tokens_ = {"<unk>", "</s>", "[SEP_SPLIT]"};
    tok.tokens_.insert(tok.tokens_.end(), alphabet.begin(), alphabet.end());
    tok.alphabet_size_ = alphabet.size();
    tok.rebuild_indexes();

    struct Word {
        std::vector<TokenId> symbols;
        std::uint64_t freq;
    };
    std::vector<Word> words;
    words.reserve(chunk_freq.size());
    for (const auto& [chunk, freq] : chunk_freq) {
        Word w{{}, freq};
        for (const auto& cp : text::split_codepoints(chunk)) {
            w.symbols.push_back(tok.token_to_id_.at(cp));
        }
        words.push_back(std::move(w));
    }

    std::unordered_map<std::uint64_t, std::uint64_t> counts;
    while (tok.tokens_.size() < vocab_size) {
        counts.clear();
        for (const auto& w : words) {
            for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
                counts[pair_key(w.symbols[i], w.symbols[i + 1])] += w.freq;
            }
        }

        std::uint64_t best_count = 1;
        for (const auto& [key, c] : counts) {
            best_count = std::max(best_count, c);
        }
        if (best_count < 2) {
            break;
        }
        TokenId best_left = 0;
        TokenId best_right = 0;
        std::string best_merged;
        bool found = false;
        for (const auto& [key, c] : counts) {
            if (c != best_count) {
                continue;
            }
            auto left = static_cast<TokenId>(key >> 32);
            auto right = static_cast<TokenId>(key & 0xFFFFFFFFu);
            std::string merged = tok.tokens_[left] + tok.tokens_[right];
            if (!found || merged < best_merged ||
                (merged == best_merged && tok.tokens_[left] < tok.tokens_[best_left])) {
                best_left = left;
                best_right = right;
                best_merged = std::move(merged);
                found = true;
            }
        }

        TokenId result;
        if (auto it = tok.token_to_id_.find(best_merged); it != tok.token_to_id_.end()) {
            result = it->second;
        } else {
            result = static_cast<TokenId>(tok.tokens_.size());
            tok.tokens_.push_back(best_merged);
            tok.token_to_id_.emplace(best_merged, result);
        }
        tok.merges_.emplace_back(tok.tokens_[best_left], tok.tokens_[best_right]);
        for (auto& w : words) {
            apply_merge(w.symbols, best_left, best_right, result);
        }
    }
    tok.rebuild_indexes();
    return tok;
}

void Tokenizer::rebuild_indexes()
{
    token_to_id_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!token_to_id_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
            fail(ErrorCode::corrupt_file, "tokenizer: duplicate token '" + tokens_[i] + "'");
        }
    }
    merge_rules_.clear();
    for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
        const auto& [left, right] = merges_[rank];
        auto l = token_to_id_.find(left);
        auto r = token_to_id_.find(right);
        auto m = token_to_id_.find(left + right);
        if (l == token_to_id_.end() || r == token_to_id_.end() || m == token_to_id_.end()) {
            fail(ErrorCode::corrupt_file, "tokenizer: merge refers to unknown token");
        }
        merge_rules_.try_emplace(pair_key(l->second, r->second),
                                 MergeRule{static_cast<std::uint32_t>(rank), m->second});
    }
}

void Tokenizer::encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const
{
    std::vector<TokenId> symbols;
    for (const auto& cp : text::split_codepoints(chunk)) {
        auto it = token_to_id_.find(cp);
        bool base = it != token_to_id_.end() && it->second >= kNumSpecials &&
                    it->second < kNumSpecials + alphabet_size_;
        symbols.push_back(base ? it->second : kUnk);
    }
    // Applying the lowest-ranked present pair repeatedly is equivalent to
    // applying merges in list order: a merge's result only ever forms pairs
    // with later rank.
    while (symbols.size() > 1) {
        std::uint32_t best_rank = std::numeric_limits<std::uint32_t>::max();
        std::size_t best_pos = 0;
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            auto it = merge_rules_.find(pair_key(symbols[i], symbols[i + 1]));
            if (it != merge_rules_.end() && it->second.rank < best_rank) {
                best_rank = it->second.rank;
                best_pos = i;
            }
        }
        if (best_rank == std::numeric_limits<std::uint32_t>::max()) {
            break;
        }
        TokenId left = symbols[best_pos];
        TokenId right = symbols[best_pos + 1];
        apply_merge(symbols, left, right, merge_rules_.at(pair_key(left, right)).result);
    }
    out.insert(out.end(), symbols.begin(), symbols.end());
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const
{
    std::vector<TokenId> out;
    for_each_chunk(text, [&](std::string_view chunk) { encode_chunk(chunk, out); });
    return out;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const
{
    std::string out;
    for (TokenId id : ids) {
        if (id >= tokens_.size()) {
            fail(ErrorCode::invalid_input, "decode: unknown token id " + std::to_string(id));
        }
        if (id == kEos || id == kSepSplit) {
            continue;
        }
        if (id == kUnk) {
            out.append(kReplacement);
            continue;
        }
        out.append(tokens_[id]);
    }
    return out;
}

std::vector<TokenId> Tokenizer::encode_split(std::string_view prefix, std::string_view suffix) const
{
    if (prefix.empty()) {
        fail(ErrorCode::invalid_input, "encode_split: empty prefix");
    }
    auto out = encode(prefix);
    out.push_back(kSepSplit);
    for_each_chunk(suffix, [&](std::string_view chunk) { encode_chunk(chunk, out); });
    return out;
}

const std::string& Tokenizer::token(TokenId id) const
{
    if (id >= tokens_.size()) {
        fail(ErrorCode::invalid_input, "unknown token id " + std::to_string(id));
    }
    return tokens_[id];
}

std::optional<TokenId> Tokenizer::id_of(std::string_view token) const
{
    auto it = token_to_id_.find(std::string(token));
    if (it == token_to_id_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::string Tokenizer::to_text() const
{
    std::string out;
    out.append(kMagic).push_back('\n');
    out.append(std::to_string(tokens_.size())).push_back('\n');
    for (const auto& t : tokens_) {
        out.append(text::escape_field(t)).push_back('\n');
    }
    out.append(kMergesMarker).push_back('\n');
    for (const auto& [l, r] : merges_) {
        out.append(text::escape_field(l)).append("\t").append(text::escape_field(r)).push_back('\n');
    }
    return out;
}

Tokenizer Tokenizer::from_text(std::string_view contents)
{
    std::vector<std::string> lines = text::split(contents, '\n');
    if (!lines.empty() && lines.back().empty()) {
        lines.pop_back();
    }
    if (lines.empty() || lines[0] != kMagic) {
        fail(ErrorCode::corrupt_file, "tokenizer: bad magic (expected QTOK1)");
    }
    if (lines.size() < 2) {
        fail(ErrorCode::corrupt_file, "tokenizer: truncated header");
    }
    std::size_t n = 0;
    try {
        n = std::stoul(lines[1]);
    } catch (const std::exception&) {
        fail(ErrorCode::corrupt_file, "tokenizer: bad vocab size line");
    }
    if (n < kNumSpecials || lines.size() < n + 3 || lines[n + 2] != kMergesMarker) {
        fail(ErrorCode::corrupt_file, "tokenizer: truncated or malformed token list");
    }
    Tokenizer tok;
    for (std::size_t i = 0; i < n; ++i) {
        tok.tokens_.push_back(text::unescape_field(lines[2 + i]));
    }
    std::size_t alpha = 0;
    while (kNumSpecials + alpha < n && text::codepoint_count(tok.tokens_[kNumSpecials + alpha]) == 1) {
        ++alpha;
    }
    tok.alphabet_size_ = alpha;
    for (std::size_t i = n + 3; i < lines.size(); ++i) {
        auto tab = lines[i].find('\t');
        if (tab == std::string::npos) {
            fail(ErrorCode::corrupt_file, "tokenizer: malformed merge line " + std::to_string(i + 1));
        }
        tok.merges_.emplace_back(text::unescape_field(std::string_view(lines[i]).substr(0, tab)),
                                 text::unescape_field(std::string_view(lines[i]).substr(tab + 1)));
    }
    tok.rebuild_indexes();
    return tok;
}

Tokenizer Tokenizer::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::io, "cannot open tokenizer file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

void Tokenizer::save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(ErrorCode::io, "cannot write tokenizer file " + path.string());
    }
    out << to_text();
}

}  // namespace qac
