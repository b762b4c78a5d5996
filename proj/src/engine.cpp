#include "qac/engine.hpp"

#include <chrono>
#include <cmath>
#include <map>

#include "qac/error.hpp"
#include "qac/rng.hpp"
#include "qac/text.hpp"

namespace qac {

std::string_view to_string(CompletionMode m)
{
    switch (m) {
    case CompletionMode::mpc: return "mpc";
    case CompletionMode::lm: return "lm";
    case CompletionMode::guided: return "guided";
    }
    return "?";
}

CompletionMode parse_completion_mode(std::string_view s)
{
    const std::string n = text::normalize(s);
    if (n == "mpc") {
        return CompletionMode::mpc;
    }
    if (n == "lm" || n == "unguided") {
        return CompletionMode::lm;
    }
    if (n == "guided") {
        return CompletionMode::guided;
    }
    fail(ErrorCode::invalid_input, "unknown mode '" + std::string(s) + "' (expected mpc, lm or guided)");
}

std::string_view to_string(TrieKind k)
{
    switch (k) {
    case TrieKind::docq: return "docq";
    case TrieKind::docc: return "docc";
    case TrieKind::global: return "global";
    }
    return "?";
}

TrieKind parse_trie_kind(std::string_view s)
{
    const std::string n = text::normalize(s);
    if (n == "docq") {
        return TrieKind::docq;
    }
    if (n == "docc") {
        return TrieKind::docc;
    }
    if (n == "global") {
        return TrieKind::global;
    }
    fail(ErrorCode::invalid_input, "unknown trie '" + std::string(s) + "' (expected docq, docc or global)");
}

std::vector<WeightedQuery> aggregate_queries(std::span<const QueryDocPair> pairs)
{
    std::map<std::string, double> sums;
    for (const auto& p : pairs) {
        sums[p.query.text] += p.query.clicks;
    }
    std::vector<WeightedQuery> out;
    out.reserve(sums.size());
    for (const auto& [q, c] : sums) {
        out.push_back({q, c});
    }
    return out;
}

std::vector<std::vector<TokenId>> lm_training_sequences(std::span<const WeightedQuery> queries, const Tokenizer& tok,
                                                        const LmTrainOptions& options)
{
    Rng rng(options.seed);
    std::vector<std::vector<TokenId>> seqs;
    auto emit = [&](std::string_view q, std::size_t cut_bytes) {
        auto ids = tok.encode_split(q.substr(0, cut_bytes), q.substr(cut_bytes));
        ids.push_back(kEos);
        seqs.push_back(std::move(ids));
    };
    for (const auto& wq : queries) {
        const auto offsets = text::codepoint_offsets(wq.text);
        const std::size_t n = offsets.size() - 1;
        if (n < kMinQueryChars) {
            continue;
        }
        if (options.sampling == SplitSampling::all) {
            for (std::size_t cut = 1; cut < n; ++cut) {
                emit(wq.text, offsets[cut]);
            }
            continue;
        }
        const auto draws = std::min<std::size_t>(
            options.max_draws, 1 + static_cast<std::size_t>(std::floor(std::log2(1.0 + std::max(0.0, wq.clicks)))));
        for (std::size_t d = 0; d < draws; ++d) {
            emit(wq.text, offsets[1 + rng.below(n - 1)]);
        }
    }
    return seqs;
}

NgramModel train_global_model(std::span<const WeightedQuery> queries, const Tokenizer& tok,
                              const LmTrainOptions& options)
{
    const auto seqs = lm_training_sequences(queries, tok, options);
    return NgramModel::train(seqs, options.order, tok.vocab_size(), options.discount);
}

GlobalModels load_global_models(const ModelPaths& paths)
{
    GlobalModels m;
    m.tokenizer = std::make_shared<const Tokenizer>(Tokenizer::load(paths.tokenizer()));
    if (std::filesystem::exists(paths.model())) {
        m.model = std::make_shared<const NgramModel>(NgramModel::load(paths.model()));
        if (m.model->vocab_size() != m.tokenizer->vocab_size()) {
            fail(ErrorCode::invalid_input, "n-gram model vocabulary (" + std::to_string(m.model->vocab_size()) +
                                               ") does not match the tokenizer (" +
                                               std::to_string(m.tokenizer->vocab_size()) + ")");
        }
    }
    if (std::filesystem::exists(paths.trie())) {
        m.trie = std::make_shared<const CompletionTrie>(CompletionTrie::load(paths.trie()));
    }
    if (std::filesystem::exists(paths.guide())) {
        m.guide = std::make_shared<const GuidanceTrie>(GuidanceTrie::load(paths.guide()));
    }
    return m;
}

GlobalModels build_global_models(std::span<const QueryDocPair> train, std::size_t vocab_size,
                                 const LmTrainOptions& options)
{
    const auto queries = aggregate_queries(train);
    std::vector<std::string> corpus;
    corpus.reserve(queries.size());
    for (const auto& q : queries) {
        corpus.push_back(q.text);
    }
    GlobalModels m;
    auto tok = std::make_shared<const Tokenizer>(Tokenizer::train(corpus, vocab_size));
    m.model = std::make_shared<const NgramModel>(train_global_model(queries, *tok, options));
    m.trie = std::make_shared<const CompletionTrie>(CompletionTrie::build(queries));
    m.guide = std::make_shared<const GuidanceTrie>(GuidanceTrie::build(queries, *tok));
    m.tokenizer = std::move(tok);
    return m;
}

void save_global_models(const GlobalModels& models, const ModelPaths& paths)
{
    std::filesystem::create_directories(paths.dir);
    if (models.tokenizer) {
        models.tokenizer->save(paths.tokenizer());
    }
    if (models.model) {
        models.model->save(paths.model());
    }
    if (models.trie) {
        models.trie->save(paths.trie());
    }
    if (models.guide) {
        models.guide->save(paths.guide());
    }
}

std::shared_ptr<const DocumentIndex> build_document_index(DocumentRecord record, const GlobalModels& models)
{
    if (record.doc_id.empty()) {
        fail(ErrorCode::invalid_input, "doc_id must be non-empty");
    }
    auto idx = std::make_shared<DocumentIndex>();
    idx->docq = CompletionTrie::build(record.queries);
    idx->docc = CompletionTrie::build_docc(record.body);
    idx->bm25 = Bm25Index(record.body);
    idx->keyphrases = extract_keyphrases(record.body);
    if (models.tokenizer) {
        const Tokenizer& tok = *models.tokenizer;
        idx->docq_guide = GuidanceTrie::build(record.queries, tok);
        const int order = models.model ? models.model->order() : kDefaultOrder;
        const double discount = models.model ? models.model->discount() : kDefaultDiscount;
        ContextSources sources;
        sources.bm25 = &idx->bm25;
        sources.keyphrases = &idx->keyphrases;
        for (ContextMode mode : {ContextMode::P_TU, ContextMode::P_TUD, ContextMode::P_TUK}) {
            const auto bundle = assemble_context(record, mode, "", tok, sources);
            idx->context_models[mode] = build_context_model(bundle, tok, order, discount);
        }
    }
    idx->record = std::move(record);
    return idx;
}

Engine::Engine(GlobalModels models)
{
    auto s = std::make_shared<Snapshot>();
    s->models = std::move(models);
    state_ = std::move(s);
}

std::shared_ptr<const Engine::Snapshot> Engine::snapshot() const
{
    std::lock_guard lock(read_mu_);
    return state_;
}

void Engine::publish(std::shared_ptr<const Snapshot> next)
{
    std::lock_guard lock(read_mu_);
    state_ = std::move(next);
}

namespace {

IngestStats stats_of(const DocumentIndex& idx, bool replaced, double ms)
{
    IngestStats st;
    st.doc_id = idx.record.doc_id;
    st.docq_terminals = idx.docq.terminal_count();
    st.docc_terminals = idx.docc.terminal_count();
    st.guidance_sequences = idx.docq_guide.sequence_count();
    st.sentences = idx.bm25.size();
    st.keyphrases = idx.keyphrases.size();
    st.replaced = replaced;
    st.build_ms = ms;
    return st;
}

}  // namespace

IngestStats Engine::ingest(DocumentRecord record)
{
    std::vector<DocumentRecord> one;
    one.push_back(std::move(record));
    return ingest_all(std::move(one)).front();
}

std::vector<IngestStats> Engine::ingest_all(std::vector<DocumentRecord> records)
{
    std::lock_guard writer(write_mu_);
    const auto current = snapshot();
    auto next = std::make_shared<Snapshot>(*current);
    next->epoch = current->epoch + 1;
    std::vector<IngestStats> stats;
    for (auto& rec : records) {
        const auto t0 = std::chrono::steady_clock::now();
        auto idx = build_document_index(std::move(rec), next->models);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        const bool replaced = next->docs.count(idx->record.doc_id) != 0;
        stats.push_back(stats_of(*idx, replaced, ms));
        next->docs[idx->record.doc_id] = std::move(idx);
    }
    publish(std::move(next));
    return stats;
}

std::vector<Suggestion> Engine::complete(std::string_view doc_id, std::string_view prefix,
                                         const CompleteOptions& options) const
{
    const auto snap = snapshot();
    return complete_in(*snap, doc_id, prefix, options);
}

std::vector<DocumentSummary> Engine::documents() const
{
    const auto snap = snapshot();
    std::vector<DocumentSummary> out;
    for (const auto& [id, idx] : snap->docs) {
        out.push_back({id, idx->record.title, idx->record.url, idx->record.queries.size()});
    }
    return out;
}

namespace {

const DocumentIndex* find_doc(const Engine::Snapshot& snap, std::string_view doc_id, bool required)
{
    if (doc_id.empty()) {
        if (required) {
            fail(ErrorCode::invalid_input, "doc_id is required for this mode");
        }
        return nullptr;
    }
    const auto it = snap.docs.find(doc_id);
    if (it == snap.docs.end()) {
        fail(ErrorCode::not_found, "unknown doc_id '" + std::string(doc_id) + "'");
    }
    return it->second.get();
}

std::vector<Suggestion> complete_mpc(const Engine::Snapshot& snap, const DocumentIndex* doc, TrieKind kind,
                                     std::string_view prefix, std::size_t k)
{
    const CompletionTrie* trie = nullptr;
    switch (kind) {
    case TrieKind::docq: trie = &doc->docq; break;
    case TrieKind::docc: trie = &doc->docc; break;
    case TrieKind::global:
        if (!snap.models.trie) {
            fail(ErrorCode::unavailable, "no global completion trie loaded");
        }
        trie = snap.models.trie.get();
        break;
    }
    std::vector<Suggestion> out;
    for (const auto& c : trie->mpc(prefix, k)) {
        Suggestion s;
        s.text = c.text;
        s.score = c.weight;
        s.rank = out.size() + 1;
        s.source = SuggestionSource::mpc;
        s.trie_conforming = true;
        out.push_back(std::move(s));
    }
    return out;
}

const GuidanceTrie* resolve_guide(const Engine::Snapshot& snap, const DocumentIndex* doc, TrieKind kind)
{
    switch (kind) {
    case TrieKind::global:
        if (!snap.models.guide) {
            fail(ErrorCode::unavailable, "no global guidance trie loaded");
        }
        return snap.models.guide.get();
    case TrieKind::docq:
        return &doc->docq_guide;
    case TrieKind::docc:
        break;
    }
    fail(ErrorCode::invalid_input, "guided decoding supports the docq and global tries only");
}

std::shared_ptr<const NgramModel> context_model(const Engine::Snapshot& snap, const DocumentIndex* doc,
                                                ContextMode mode, std::string_view prefix)
{
    if (mode == ContextMode::P) {
        return nullptr;
    }
    if (doc == nullptr) {
        fail(ErrorCode::invalid_input, "context mode " + std::string(to_string(mode)) + " requires a doc_id");
    }
    if (const auto it = doc->context_models.find(mode); it != doc->context_models.end()) {
        return it->second;
    }
    const Tokenizer& tok = *snap.models.tokenizer;
    std::vector<const DocumentRecord*> pool;
    if (mode == ContextMode::REL_DENSE_RAG) {
        pool.reserve(snap.docs.size());
        for (const auto& [_, other] : snap.docs) {
            pool.push_back(&other->record);
        }
    }
    ContextSources sources;
    sources.bm25 = &doc->bm25;
    sources.keyphrases = &doc->keyphrases;
    sources.vectors = snap.models.vectors.get();
    sources.related_pool = pool;
    const auto bundle = assemble_context(doc->record, mode, prefix, tok, sources);
    return build_context_model(bundle, tok, snap.models.model->order(), snap.models.model->discount());
}

}  // namespace

std::vector<Suggestion> complete_in(const Engine::Snapshot& snap, std::string_view doc_id, std::string_view raw_prefix,
                                    const CompleteOptions& options)
{
    if (options.k == 0) {
        fail(ErrorCode::invalid_input, "k must be positive");
    }
    const std::string prefix = text::normalize_prefix(raw_prefix);
    if (prefix.empty() || prefix == " ") {
        fail(ErrorCode::invalid_input, "prefix must contain a non-space character");
    }

    if (options.mode == CompletionMode::mpc) {
        const TrieKind kind = options.trie.value_or(TrieKind::docq);
        const DocumentIndex* doc = find_doc(snap, doc_id, kind != TrieKind::global);
        return complete_mpc(snap, doc, kind, prefix, options.k);
    }

    if (!snap.models.tokenizer || !snap.models.model) {
        fail(ErrorCode::unavailable, "language-model modes need a tokenizer and an n-gram model");
    }
    if (options.lambda < 0.0 || options.lambda > 1.0 || !std::isfinite(options.lambda)) {
        fail(ErrorCode::invalid_input, "lambda must lie in [0, 1]");
    }
    const TrieKind kind = options.trie.value_or(TrieKind::global);
    const bool need_doc = kind != TrieKind::global || options.context != ContextMode::P;
    const DocumentIndex* doc = find_doc(snap, doc_id, need_doc);

    ScorerContext ctx;
    ctx.doc_model = context_model(snap, doc, options.context, prefix);
    ctx.lambda = ctx.doc_model ? options.lambda : 0.0;
    const NgramScorer scorer(snap.models.model, ctx);

    DecodeConfig cfg = options.decode;
    cfg.top_k_out = options.k;
    cfg.validate();

    const Tokenizer& tok = *snap.models.tokenizer;
    if (options.mode == CompletionMode::guided) {
        return guided_beam_search(scorer, tok, resolve_guide(snap, doc, kind), prefix, cfg);
    }
    auto out = guided_beam_search(scorer, tok, nullptr, prefix, cfg);
    // Unguided output is still checked against the trie guided mode would use.
    const GuidanceTrie* reference = nullptr;
    if (kind == TrieKind::global) {
        reference = snap.models.guide.get();
    } else if (kind == TrieKind::docq && doc != nullptr) {
        reference = &doc->docq_guide;
    }
    for (auto& s : out) {
        s.trie_conforming = reference != nullptr && reference->contains(s.tokens);
    }
    return out;
}

EvalResult evaluate_engine(const Engine& engine, std::span<const EvalExample> examples,
                           const CompleteOptions& options, const EvalOptions& eval)
{
    const auto snap = engine.snapshot();
    const EvalSystem system = [&](const EvalExample& ex, std::string_view prefix) {
        std::vector<std::string> texts;
        for (auto& s : complete_in(*snap, ex.doc_id, prefix, options)) {
            texts.push_back(std::move(s.text));
        }
        return texts;
    };
    EvalOptions opts = eval;
    if (opts.vectors == nullptr) {
        opts.vectors = snap->models.vectors.get();
    }
    return evaluate_run(examples, system, opts);
}

std::vector<SweepCell> sweep_grid()
{
    std::vector<SweepCell> cells;
    for (double a : {0.05, 0.1, 0.2, 0.5}) {
        for (double b : {0.05, 0.1, 0.2, 0.5}) {
            for (double bias : {20.0, 30.0, 40.0}) {
                cells.push_back({a, b, bias});
            }
        }
    }
    return cells;
}

}  // namespace qac
