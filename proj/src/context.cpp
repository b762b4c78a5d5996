#include "qac/context.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "binio.hpp"
#include "qac/error.hpp"
#include "qac/kernels.hpp"
#include "qac/text.hpp"

namespace qac {

namespace {

std::string upper_ascii(std::string_view s)
{
    std::string out(s);
    for (char& c : out) {
        if (c >= 'a' && c <= 'z') {
            c = static_cast<char>(c - 'a' + 'A');
        } else if (c == '+' || c == '-') {
            c = '_';
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(ContextMode mode)
{
    switch (mode) {
    case ContextMode::P: return "P";
    case ContextMode::P_TU: return "P_TU";
    case ContextMode::P_TUD: return "P_TUD";
    case ContextMode::P_TUK: return "P_TUK";
    case ContextMode::P_TUS: return "P_TUS";
    case ContextMode::SPARSE_RAG: return "SPARSE_RAG";
    case ContextMode::DENSE_RAG: return "DENSE_RAG";
    case ContextMode::REL_DENSE_RAG: return "REL_DENSE_RAG";
    }
    return "?";
}

ContextMode parse_context_mode(std::string_view name)
{
    static const std::pair<std::string_view, ContextMode> kNames[] = {
        {"P", ContextMode::P},
        {"P_TU", ContextMode::P_TU},
        {"P_TUD", ContextMode::P_TUD},
        {"P_TUK", ContextMode::P_TUK},
        {"P_TUS", ContextMode::P_TUS},
        {"SPARSE_RAG", ContextMode::SPARSE_RAG},
        {"DENSE_RAG", ContextMode::DENSE_RAG},
        {"REL_DENSE_RAG", ContextMode::REL_DENSE_RAG},
    };
    const std::string key = upper_ascii(name);
    for (const auto& [n, m] : kNames) {
        if (key == n) {
            return m;
        }
    }
    fail(ErrorCode::invalid_input, "unknown context mode '" + std::string(name) + "'");
}

std::vector<Keyphrase> extract_keyphrases(std::string_view body, std::size_t max_n, std::size_t limit)
{
    if (max_n == 0) {
        return {};
    }
    const auto sentences = text::split_sentences(body);
    std::vector<std::vector<std::string>> sentence_words;
    std::unordered_map<std::string, std::size_t> tf;
    for (const auto& s : sentences) {
        auto w = text::words(s);
        for (const auto& word : w) {
            if (!text::is_stopword(word)) {
                ++tf[word];
            }
        }
        sentence_words.push_back(std::move(w));
    }

    std::map<std::string, Keyphrase> best;
    for (std::size_t si = 0; si < sentence_words.size(); ++si) {
        const auto& w = sentence_words[si];
        std::size_t i = 0;
        while (i < w.size()) {
            if (text::is_stopword(w[i])) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < w.size() && !text::is_stopword(w[j])) {
                ++j;
            }
            for (std::size_t a = i; a < j; ++a) {
                std::string phrase;
                double freq = 1.0;
                for (std::size_t b = a; b < j && b - a < max_n; ++b) {
                    if (b > a) {
                        phrase += ' ';
                    }
                    phrase += w[b];
                    freq *= static_cast<double>(tf[w[b]]);
                    const double score = freq / (1.0 + static_cast<double>(si));
                    // Sentences are visited in order, so the first sighting
                    // carries the earliest sentence index.
                    best.try_emplace(phrase, Keyphrase{phrase, score});
                }
            }
            i = j;
        }
    }

    std::vector<Keyphrase> out;
    out.reserve(best.size());
    for (auto& [_, kp] : best) {
        out.push_back(std::move(kp));
    }
    std::stable_sort(out.begin(), out.end(), [](const Keyphrase& a, const Keyphrase& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.phrase < b.phrase;
    });
    if (out.size() > limit) {
        out.resize(limit);
    }
    return out;
}

Bm25Index::Bm25Index(std::string_view body) : sentences_(text::split_sentences(body))
{
    std::size_t total = 0;
    for (const auto& s : sentences_) {
        std::unordered_map<std::string, std::size_t> counts;
        const auto w = text::words(s);
        for (const auto& word : w) {
            ++counts[word];
        }
        for (const auto& [word, _] : counts) {
            ++df_[word];
        }
        lengths_.push_back(w.size());
        total += w.size();
        tf_.push_back(std::move(counts));
    }
    avg_len_ = sentences_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(sentences_.size());
}

double Bm25Index::score(std::size_t sentence, std::span<const std::string> terms) const
{
    const double n_docs = static_cast<double>(sentences_.size());
    const double len_norm = avg_len_ > 0.0 ? static_cast<double>(lengths_[sentence]) / avg_len_ : 0.0;
    double total = 0.0;
    for (const auto& t : terms) {
        const auto it = tf_[sentence].find(t);
        if (it == tf_[sentence].end()) {
            continue;
        }
        const double n = static_cast<double>(df_.at(t));
        const double idf = std::log(1.0 + (n_docs - n + 0.5) / (n + 0.5));
        const double f = static_cast<double>(it->second);
        total += idf * f * (kK1 + 1.0) / (f + kK1 * (1.0 - kB + kB * len_norm));
    }
    return total;
}

std::vector<ScoredSentence> Bm25Index::retrieve(std::string_view prefix, std::size_t k) const
{
    auto terms = text::words(prefix);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    std::vector<ScoredSentence> scored;
    scored.reserve(sentences_.size());
    for (std::size_t i = 0; i < sentences_.size(); ++i) {
        scored.push_back({i, sentences_[i], score(i, terms)});
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const ScoredSentence& a, const ScoredSentence& b) { return a.score > b.score; });
    if (scored.size() > k) {
        scored.resize(k);
    }
    return scored;
}

EmbeddingTable EmbeddingTable::parse(std::string_view contents)
{
    const auto lines = text::split(contents, '\n');
    if (lines.empty() || !text::starts_with(lines[0], "QVEC1 ")) {
        fail(ErrorCode::parse, "embedding file: missing QVEC1 header");
    }
    std::size_t dim = 0;
    const std::string_view dim_text = std::string_view(lines[0]).substr(6);
    const auto [ptr, ec] = std::from_chars(dim_text.data(), dim_text.data() + dim_text.size(), dim);
    if (ec != std::errc() || dim == 0) {
        fail(ErrorCode::parse, "embedding file: bad dimension '" + std::string(dim_text) + "'");
    }
    EmbeddingTable table(dim);
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        std::string_view line = lines[ln];
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos) {
            fail(ErrorCode::parse, "embedding file line " + std::to_string(ln + 1) + ": missing tab");
        }
        std::vector<float> vec;
        for (const auto& field : text::split(line.substr(tab + 1), ',')) {
            float v = 0.0F;
            const auto r = std::from_chars(field.data(), field.data() + field.size(), v);
            if (r.ec != std::errc() || r.ptr != field.data() + field.size()) {
                fail(ErrorCode::parse, "embedding file line " + std::to_string(ln + 1) + ": bad value '" + field + "'");
            }
            vec.push_back(v);
        }
        if (vec.size() != dim) {
            fail(ErrorCode::parse, "embedding file line " + std::to_string(ln + 1) + ": expected " +
                                       std::to_string(dim) + " values, got " + std::to_string(vec.size()));
        }
        table.insert(text::unescape_field(line.substr(0, tab)), std::move(vec));
    }
    return table;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path)
{
    return parse(binio::read_text(path));
}

std::string EmbeddingTable::to_text() const
{
    std::string out = "QVEC1 " + std::to_string(dim_) + "\n";
    char buf[32];
    for (const auto& key : order_) {
        out += text::escape_field(key);
        out += '\t';
        const auto& vec = rows_.at(key);
        for (std::size_t i = 0; i < vec.size(); ++i) {
            if (i > 0) {
                out += ',';
            }
            const auto r = std::to_chars(buf, buf + sizeof buf, vec[i]);
            out.append(buf, r.ptr);
        }
        out += '\n';
    }
    return out;
}

void EmbeddingTable::insert(std::string key, std::vector<float> vec)
{
    if (dim_ == 0) {
        dim_ = vec.size();
    }
    if (vec.size() != dim_) {
        fail(ErrorCode::invalid_input, "embedding for '" + key + "' has wrong dimension");
    }
    auto [it, inserted] = rows_.insert_or_assign(key, std::move(vec));
    if (inserted) {
        order_.push_back(std::move(key));
    }
}

std::optional<std::span<const float>> EmbeddingTable::find(std::string_view key) const
{
    const auto it = rows_.find(std::string(key));
    if (it == rows_.end()) {
        return std::nullopt;
    }
    return std::span<const float>(it->second);
}

std::vector<Chunk> chunk_document(std::string_view body)
{
    const auto offsets = text::codepoint_offsets(body);
    const std::size_t n = offsets.size() - 1;
    const std::size_t stride = kChunkChars - kChunkOverlap;
    std::vector<Chunk> out;
    for (std::size_t start = 0; start < n; start += stride) {
        const std::size_t end = std::min(n, start + kChunkChars);
        out.push_back({out.size(), start, std::string(body.substr(offsets[start], offsets[end] - offsets[start]))});
        if (end == n) {
            break;
        }
    }
    return out;
}

namespace {

std::span<const float> require_vector(const EmbeddingTable& vectors, const std::string& key)
{
    const auto v = vectors.find(key);
    if (!v) {
        fail(ErrorCode::unavailable, "no embedding for '" + key + "'");
    }
    return *v;
}

void append_chunks(const DocumentRecord& doc, const EmbeddingTable& vectors, std::span<const float> query,
                   std::vector<ScoredChunk>& out)
{
    for (auto& chunk : chunk_document(doc.body)) {
        const auto v = require_vector(vectors, doc.doc_id + "#" + std::to_string(chunk.index));
        out.push_back({doc.doc_id, std::move(chunk), kernels::cosine(query, v)});
    }
}

void keep_top(std::vector<ScoredChunk>& chunks, std::size_t k)
{
    std::stable_sort(chunks.begin(), chunks.end(),
                     [](const ScoredChunk& a, const ScoredChunk& b) { return a.similarity > b.similarity; });
    if (chunks.size() > k) {
        chunks.resize(k);
    }
}

}  // namespace

std::vector<ScoredChunk> dense_retrieve(const DocumentRecord& doc, const EmbeddingTable& vectors,
                                        std::span<const float> prefix_vector, std::size_t k)
{
    if (prefix_vector.size() != vectors.dim()) {
        fail(ErrorCode::unavailable, "prefix embedding dimension does not match the embedding table");
    }
    std::vector<ScoredChunk> out;
    append_chunks(doc, vectors, prefix_vector, out);
    keep_top(out, k);
    return out;
}

namespace {

std::vector<ScoredChunk> related_dense_retrieve(const DocumentRecord& doc, const ContextSources& sources,
                                                std::span<const float> query)
{
    const EmbeddingTable& vectors = *sources.vectors;
    const auto doc_vec = require_vector(vectors, doc.doc_id);
    struct Related {
        const DocumentRecord* doc;
        double sim;
    };
    std::vector<Related> related;
    for (const DocumentRecord* other : sources.related_pool) {
        if (other == nullptr || other->doc_id == doc.doc_id) {
            continue;
        }
        if (const auto v = vectors.find(other->doc_id)) {
            related.push_back({other, kernels::cosine(doc_vec, *v)});
        }
    }
    std::stable_sort(related.begin(), related.end(), [](const Related& a, const Related& b) {
        if (a.sim != b.sim) {
            return a.sim > b.sim;
        }
        return a.doc->doc_id < b.doc->doc_id;
    });
    if (related.size() > kRelatedDocs) {
        related.resize(kRelatedDocs);
    }

    std::vector<ScoredChunk> pool;
    append_chunks(doc, vectors, query, pool);
    for (const auto& r : related) {
        append_chunks(*r.doc, vectors, query, pool);
    }
    keep_top(pool, kRetrieveK);
    return pool;
}

class BudgetWriter {
  public:
    BudgetWriter(const Tokenizer& tok, ContextBundle& bundle) : tok_(tok), bundle_(bundle) {}

    /// Appends as much of `segment` as fits in `remaining` tokens and returns
    /// the number of tokens consumed.
    std::size_t add(std::string_view raw, std::size_t remaining)
    {
        const std::string segment = text::normalize(raw);
        if (segment.empty() || remaining == 0) {
            return 0;
        }
        auto ids = tok_.encode(segment);
        if (ids.size() <= remaining) {
            bundle_.segments.push_back(segment);
            return ids.size();
        }
        // Re-encoding a decoded prefix can differ from the kept ids, so
        // shrink until the round trip fits.
        for (std::size_t keep = remaining; keep > 0; --keep) {
            std::string cut = tok_.decode(std::span<const TokenId>(ids.data(), keep));
            const std::size_t n = tok_.encode(cut).size();
            if (n <= remaining && !cut.empty()) {
                bundle_.segments.push_back(std::move(cut));
                return n;
            }
        }
        return 0;
    }

    std::size_t add_all(std::span<const std::string> parts, std::size_t budget)
    {
        std::size_t used = 0;
        for (const auto& part : parts) {
            if (used >= budget) {
                break;
            }
            used += add(part, budget - used);
        }
        return used;
    }

  private:
    const Tokenizer& tok_;
    ContextBundle& bundle_;
};

std::span<const float> prefix_vector(const EmbeddingTable& vectors, std::string_view prefix)
{
    const std::string key = text::normalize_prefix(prefix);
    auto v = vectors.find(key);
    if (!v) {
        v = vectors.find(prefix);
    }
    if (!v) {
        fail(ErrorCode::unavailable, "no embedding for prefix '" + key + "'");
    }
    if (v->size() != vectors.dim()) {
        fail(ErrorCode::unavailable, "prefix embedding dimension mismatch");
    }
    return *v;
}

}  // namespace

ContextBundle assemble_context(const DocumentRecord& doc, ContextMode mode, std::string_view prefix,
                               const Tokenizer& tok, const ContextSources& sources)
{
    if (mode == ContextMode::P_TUS) {
        fail(ErrorCode::invalid_input, "P_TUS needs document summaries from a generative model; not supported");
    }
    ContextBundle bundle;
    bundle.mode = mode;
    if (mode == ContextMode::P) {
        return bundle;
    }

    BudgetWriter writer(tok, bundle);
    bundle.used.title = writer.add(doc.title, kTitleBudget);
    bundle.used.url = writer.add(doc.url, kUrlBudget);

    std::vector<std::string> parts;
    switch (mode) {
    case ContextMode::P_TU:
        break;
    case ContextMode::P_TUD:
        parts = text::split_sentences(doc.body);
        break;
    case ContextMode::P_TUK: {
        std::vector<Keyphrase> local;
        const auto* kps = sources.keyphrases;
        if (kps == nullptr) {
            local = extract_keyphrases(doc.body);
            kps = &local;
        }
        for (const auto& kp : *kps) {
            parts.push_back(kp.phrase);
        }
        break;
    }
    case ContextMode::SPARSE_RAG: {
        std::optional<Bm25Index> local;
        const Bm25Index* index = sources.bm25;
        if (index == nullptr) {
            local.emplace(doc.body);
            index = &*local;
        }
        for (auto& s : index->retrieve(prefix, kRetrieveK)) {
            parts.push_back(std::move(s.text));
        }
        break;
    }
    case ContextMode::DENSE_RAG:
    case ContextMode::REL_DENSE_RAG: {
        if (sources.vectors == nullptr) {
            fail(ErrorCode::unavailable, std::string(to_string(mode)) + " requires an embedding table");
        }
        const auto query = prefix_vector(*sources.vectors, prefix);
        const auto chunks = mode == ContextMode::DENSE_RAG ? dense_retrieve(doc, *sources.vectors, query)
                                                           : related_dense_retrieve(doc, sources, query);
        for (const auto& c : chunks) {
            parts.push_back(c.chunk.text);
        }
        break;
    }
    case ContextMode::P:
    case ContextMode::P_TUS:
        break;
    }
    bundle.used.document = writer.add_all(parts, kDocumentBudget);
    bundle.text = text::join(bundle.segments, "\n");
    return bundle;
}

std::shared_ptr<const NgramModel> build_context_model(const ContextBundle& bundle, const Tokenizer& tok, int order,
                                                      double discount)
{
    std::vector<std::vector<TokenId>> seqs;
    for (const auto& seg : bundle.segments) {
        auto ids = tok.encode(seg);
        if (ids.empty()) {
            continue;
        }
        ids.push_back(kEos);
        seqs.push_back(std::move(ids));
    }
    if (seqs.empty()) {
        return nullptr;
    }
    return std::make_shared<const NgramModel>(NgramModel::train(seqs, order, tok.vocab_size(), discount));
}

}  // namespace qac
