#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qac/scorer.hpp"
#include "qac/tokenizer.hpp"
#include "qac/trie.hpp"

namespace qac {

struct DocumentRecord {
    std::string doc_id;
    std::string url;
    std::string title;
    std::string body;
    std::vector<WeightedQuery> queries;
};

enum class ContextMode { P, P_TU, P_TUD, P_TUK, P_TUS, SPARSE_RAG, DENSE_RAG, REL_DENSE_RAG };

std::string_view to_string(ContextMode mode);
/// Accepts the enum names case-insensitively plus "p+tu"-style spellings.
ContextMode parse_context_mode(std::string_view name);

inline constexpr std::size_t kTitleBudget = 32;
inline constexpr std::size_t kUrlBudget = 32;
inline constexpr std::size_t kDocumentBudget = 352;
inline constexpr std::size_t kRetrieveK = 20;
inline constexpr std::size_t kRelatedDocs = 10;
inline constexpr std::size_t kChunkChars = 200;
inline constexpr std::size_t kChunkOverlap = 30;

struct Keyphrase {
    std::string phrase;
    double score = 0.0;
};

/// Simplified statistical keyphrase extractor: candidates are n-grams
/// (n <= max_n) inside maximal stopword-free word runs; score is the product
/// of the constituent words' term frequencies divided by
/// (1 + index of the earliest sentence containing the phrase).
std::vector<Keyphrase> extract_keyphrases(std::string_view body, std::size_t max_n = 3, std::size_t limit = 50);

struct ScoredSentence {
    std::size_t index = 0;  // position in the document
    std::string text;
    double score = 0.0;
};

/// Okapi BM25 over one document's sentences (k1 = 1.2, b = 0.75,
/// idf = ln(1 + (N - n + 0.5) / (n + 0.5))).
class Bm25Index {
  public:
    static constexpr double kK1 = 1.2;
    static constexpr double kB = 0.75;

    Bm25Index() = default;
    explicit Bm25Index(std::string_view body);

    std::size_t size() const { return sentences_.size(); }
    const std::vector<std::string>& sentences() const { return sentences_; }

    /// Query terms are the whitespace tokens of the prefix (lowercased,
    /// punctuation stripped, deduplicated). Score desc, document order on ties.
    std::vector<ScoredSentence> retrieve(std::string_view prefix, std::size_t k = kRetrieveK) const;

    double score(std::size_t sentence, std::span<const std::string> terms) const;

  private:
    std::vector<std::string> sentences_;
    std::vector<std::unordered_map<std::string, std::size_t>> tf_;
    std::vector<std::size_t> lengths_;
    std::unordered_map<std::string, std::size_t> df_;
    double avg_len_ = 0.0;
};

/// Externally supplied embeddings: header `QVEC1 <dim>`, then
/// `key<TAB>f32,f32,...` lines. Keys are `doc_id#chunk`, `doc_id`, or a
/// literal prefix string.
class EmbeddingTable {
  public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

    static EmbeddingTable parse(std::string_view contents);
    static EmbeddingTable load(const std::filesystem::path& path);
    std::string to_text() const;

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return rows_.size(); }
    void insert(std::string key, std::vector<float> vec);
    std::optional<std::span<const float>> find(std::string_view key) const;

  private:
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::vector<float>> rows_;
    std::vector<std::string> order_;
};

struct Chunk {
    std::size_t index = 0;
    std::size_t offset = 0;  // code points
    std::string text;
};

/// 200-code-point windows with stride 170; stops once a window reaches the end.
std::vector<Chunk> chunk_document(std::string_view body);

struct ScoredChunk {
    std::string doc_id;
    Chunk chunk;
    double similarity = 0.0;
};

/// Top-k chunks of `doc` by cosine to prefix_vector. Missing chunk vectors or
/// a dimension mismatch raise ErrorCode::unavailable.
std::vector<ScoredChunk> dense_retrieve(const DocumentRecord& doc, const EmbeddingTable& vectors,
                                        std::span<const float> prefix_vector, std::size_t k = kRetrieveK);

struct BudgetUsage {
    std::size_t title = 0;
    std::size_t url = 0;
    std::size_t document = 0;

    std::size_t total() const { return title + url + document; }
};

struct ContextBundle {
    ContextMode mode = ContextMode::P;
    std::string text;
    std::vector<std::string> segments;  // title, url, then document-derived pieces
    BudgetUsage used;
};

/// Optional precomputed structures and external inputs for assembly.
struct ContextSources {
    const Bm25Index* bm25 = nullptr;
    const std::vector<Keyphrase>* keyphrases = nullptr;
    const EmbeddingTable* vectors = nullptr;
    /// Candidate pool for REL_DENSE_RAG (training documents).
    std::span<const DocumentRecord* const> related_pool;
};

ContextBundle assemble_context(const DocumentRecord& doc, ContextMode mode, std::string_view prefix,
                               const Tokenizer& tok, const ContextSources& sources = {});

/// Document model for the scorer: each segment encoded and EOS-terminated.
/// nullptr when the bundle has no segments.
std::shared_ptr<const NgramModel> build_context_model(const ContextBundle& bundle, const Tokenizer& tok,
                                                      int order = kDefaultOrder,
                                                      double discount = kDefaultDiscount);

}  // namespace qac
