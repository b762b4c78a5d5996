#include "qac/scorer.hpp"

#include <algorithm>
#include <map>

#include "binio.hpp"
#include "qac/error.hpp"
#include "qac/kernels.hpp"

namespace qac {

namespace {

constexpr std::string_view kMagic = "QNGRM1";

}  // namespace

std::string NgramModel::key_of(std::span<const TokenId> context)
{
    std::string key(context.size() * sizeof(TokenId), '\0');
    for (std::size_t i = 0; i < context.size(); ++i) {
        for (std::size_t b = 0; b < sizeof(TokenId); ++b) {
            key[i * sizeof(TokenId) + b] = static_cast<char>((context[i] >> (8 * b)) & 0xFF);
        }
    }
    return key;
}

NgramModel NgramModel::train(std::span<const std::vector<TokenId>> sequences, int order, std::size_t vocab_size,
                             double discount)
{
    if (sequences.empty()) {
        fail(ErrorCode::invalid_input, "train_ngram: no training sequences");
    }
    if (order < 2) {
        fail(ErrorCode::invalid_input, "train_ngram: order must be >= 2");
    }
    if (!(discount > 0.0 && discount < 1.0)) {
        fail(ErrorCode::invalid_input, "train_ngram: discount must lie in (0, 1)");
    }
    if (vocab_size == 0) {
        fail(ErrorCode::invalid_input, "train_ngram: empty vocabulary");
    }

    // Ordered maps keep construction deterministic before flattening.
    std::vector<std::map<std::string, std::map<TokenId, std::uint32_t>>> raw(static_cast<std::size_t>(order));
    for (const auto& seq : sequences) {
        for (std::size_t j = 0; j < seq.size(); ++j) {
            if (seq[j] >= vocab_size) {
                fail(ErrorCode::invalid_input, "train_ngram: token id out of vocabulary");
            }
            std::size_t max_len = std::min<std::size_t>(j, static_cast<std::size_t>(order - 1));
            for (std::size_t len = 0; len <= max_len; ++len) {
                std::span<const TokenId> ctx(seq.data() + j - len, len);
                ++raw[len][key_of(ctx)][seq[j]];
            }
        }
    }

    NgramModel m;
    m.order_ = order;
    m.vocab_size_ = vocab_size;
    m.discount_ = discount;
    m.tables_.resize(static_cast<std::size_t>(order));
    for (std::size_t len = 0; len < raw.size(); ++len) {
        for (auto& [key, nexts] : raw[len]) {
            ContextStats st;
            for (auto [tok, c] : nexts) {
                st.next.push_back({tok, c});
                st.total += c;
            }
            m.tables_[len].emplace(key, std::move(st));
        }
    }
    return m;
}

const NgramModel::ContextStats* NgramModel::stats(std::span<const TokenId> context) const
{
    if (context.size() >= tables_.size()) {
        return nullptr;
    }
    const auto& table = tables_[context.size()];
    auto it = table.find(key_of(context));
    return it == table.end() ? nullptr : &it->second;
}

std::uint32_t NgramModel::count(std::span<const TokenId> context, TokenId token) const
{
    const auto* st = stats(context);
    if (st == nullptr) {
        return 0;
    }
    auto it = std::lower_bound(st->next.begin(), st->next.end(), token,
                               [](const Continuation& c, TokenId t) { return c.token < t; });
    return (it != st->next.end() && it->token == token) ? it->count : 0;
}

std::size_t NgramModel::context_count(std::size_t length) const
{
    return length < tables_.size() ? tables_[length].size() : 0;
}

void NgramModel::probabilities(std::span<const TokenId> history, std::span<double> out) const
{
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(vocab_size_));
    std::size_t max_len = std::min(history.size(), tables_.size() - 1);
    for (std::size_t len = 0; len <= max_len; ++len) {
        const auto* st = stats(history.subspan(history.size() - len));
        if (st == nullptr) {
            // Longer histories contain this one as a suffix, so they are unseen too.
            break;
        }
        const double total = static_cast<double>(st->total);
        const double backoff = discount_ * static_cast<double>(st->next.size()) / total;
        kernels::scale(out, backoff);
        for (const auto& c : st->next) {
            out[c.token] += (static_cast<double>(c.count) - discount_) / total;
        }
    }
}

NgramModel NgramModel::truncated(int new_order) const
{
    if (new_order < 1 || new_order > order_) {
        fail(ErrorCode::invalid_input, "truncated: order out of range");
    }
    NgramModel m = *this;
    m.order_ = new_order;
    m.tables_.resize(static_cast<std::size_t>(new_order));
    return m;
}

std::vector<std::uint8_t> NgramModel::serialize() const
{
    binio::Writer w;
    w.bytes(kMagic);
    w.u32(static_cast<std::uint32_t>(order_));
    w.u32(static_cast<std::uint32_t>(vocab_size_));
    w.f64(discount_);
    for (std::size_t len = 0; len < tables_.size(); ++len) {
        std::vector<const std::pair<const std::string, ContextStats>*> sorted;
        sorted.reserve(tables_[len].size());
        for (const auto& entry : tables_[len]) {
            sorted.push_back(&entry);
        }
        std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });
        w.u64(sorted.size());
        for (const auto* entry : sorted) {
            const auto& key = entry->first;
            for (std::size_t i = 0; i < len; ++i) {
                std::uint32_t t = 0;
                for (std::size_t b = 0; b < sizeof(TokenId); ++b) {
                    t |= static_cast<std::uint32_t>(static_cast<unsigned char>(key[i * sizeof(TokenId) + b])) << (8 * b);
                }
                w.u32(t);
            }
            w.u32(static_cast<std::uint32_t>(entry->second.next.size()));
            for (const auto& c : entry->second.next) {
                w.u32(c.token);
                w.u32(c.count);
            }
        }
    }
    return w.take();
}

NgramModel NgramModel::deserialize(std::span<const std::uint8_t> bytes)
{
    binio::Reader r(bytes, "ngram model");
    r.expect_magic(kMagic);
    NgramModel m;
    m.order_ = static_cast<int>(r.u32());
    m.vocab_size_ = r.u32();
    m.discount_ = r.f64();
    if (m.order_ < 1 || m.order_ > 16 || m.vocab_size_ == 0 || !(m.discount_ > 0.0 && m.discount_ < 1.0)) {
        r.corrupt("bad header");
    }
    m.tables_.resize(static_cast<std::size_t>(m.order_));
    for (std::size_t len = 0; len < m.tables_.size(); ++len) {
        auto n = r.u64();
        if (n > r.remaining()) {
            r.corrupt("context count exceeds stream size");
        }
        for (std::uint64_t i = 0; i < n; ++i) {
            std::vector<TokenId> ctx(len);
            for (auto& t : ctx) {
                t = r.u32();
                if (t >= m.vocab_size_) {
                    r.corrupt("context token out of vocabulary");
                }
            }
            auto k = r.u32();
            if (k == 0 || k > r.remaining() / 8) {
                r.corrupt("bad continuation count");
            }
            ContextStats st;
            for (std::uint32_t j = 0; j < k; ++j) {
                Continuation c{r.u32(), r.u32()};
                if (c.token >= m.vocab_size_ || c.count == 0 || (j > 0 && c.token <= st.next.back().token)) {
                    r.corrupt("bad continuation entry");
                }
                st.total += c.count;
                st.next.push_back(c);
            }
            if (!m.tables_[len].emplace(key_of(ctx), std::move(st)).second) {
                r.corrupt("duplicate context");
            }
        }
    }
    if (!r.at_end()) {
        r.corrupt("trailing bytes");
    }
    return m;
}

void NgramModel::save(const std::filesystem::path& path) const { binio::write_file(path, serialize()); }

NgramModel NgramModel::load(const std::filesystem::path& path) { return deserialize(binio::read_file(path)); }

NgramScorer::NgramScorer(std::shared_ptr<const NgramModel> global, ScorerContext ctx)
    : global_(std::move(global)), ctx_(std::move(ctx))
{
    if (!global_) {
        fail(ErrorCode::invalid_input, "NgramScorer: missing global model");
    }
    if (ctx_.doc_model && ctx_.doc_model->vocab_size() != global_->vocab_size()) {
        fail(ErrorCode::invalid_input, "NgramScorer: document model vocabulary differs from global model");
    }
    if (!(ctx_.lambda >= 0.0 && ctx_.lambda <= 1.0)) {
        fail(ErrorCode::invalid_input, "NgramScorer: lambda must lie in [0, 1]");
    }
}

void NgramScorer::log_probs(std::span<const TokenId> beam_tokens, std::span<double> out) const
{
    global_->probabilities(beam_tokens, out);
    const double lambda = ctx_.effective_lambda();
    if (lambda <= 0.0) {
        kernels::log_inplace(out);
        return;
    }
    thread_local std::vector<TokenId> history;
    thread_local std::vector<double> doc;
    history.clear();
    for (TokenId t : beam_tokens) {
        if (t != kSepSplit) {
            history.push_back(t);
        }
    }
    doc.resize(out.size());
    ctx_.doc_model->probabilities(history, doc);
    kernels::log_mix(out, doc, out, lambda);
}

std::vector<double> logits(const NgramModel& model, const ScorerContext& ctx, std::span<const TokenId> beam_tokens)
{
    std::shared_ptr<const NgramModel> alias(std::shared_ptr<const NgramModel>{}, &model);
    NgramScorer scorer(alias, ctx);
    std::vector<double> out(model.vocab_size());
    scorer.log_probs(beam_tokens, out);
    return out;
}

}  // namespace qac
