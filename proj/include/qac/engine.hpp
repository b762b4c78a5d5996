#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qac/context.hpp"
#include "qac/dataset.hpp"
#include "qac/decoder.hpp"
#include "qac/metrics.hpp"
#include "qac/scorer.hpp"
#include "qac/tokenizer.hpp"
#include "qac/trie.hpp"

namespace qac {

enum class CompletionMode { mpc, lm, guided };
enum class TrieKind { docq, docc, global };

std::string_view to_string(CompletionMode m);
CompletionMode parse_completion_mode(std::string_view s);
std::string_view to_string(TrieKind k);
TrieKind parse_trie_kind(std::string_view s);

// ---- model building -----------------------------------------------------

enum class SplitSampling {
    dynamic,  // seeded random split points, more draws for popular queries
    all,      // every split point once
};

struct LmTrainOptions {
    int order = kDefaultOrder;
    double discount = kDefaultDiscount;
    std::uint64_t seed = 13;
    SplitSampling sampling = SplitSampling::dynamic;
    std::size_t max_draws = 8;
};

/// Training queries aggregated over documents (clicks summed, sorted by text).
std::vector<WeightedQuery> aggregate_queries(std::span<const QueryDocPair> pairs);

/// encode_split(prefix, suffix) ++ EOS for sampled split points of each query.
/// A query with c clicks gets min(max_draws, 1 + floor(log2(1 + c))) draws.
std::vector<std::vector<TokenId>> lm_training_sequences(std::span<const WeightedQuery> queries, const Tokenizer& tok,
                                                        const LmTrainOptions& options);

NgramModel train_global_model(std::span<const WeightedQuery> queries, const Tokenizer& tok,
                              const LmTrainOptions& options);

/// Query-independent state shared by every document.
struct GlobalModels {
    std::shared_ptr<const Tokenizer> tokenizer;
    std::shared_ptr<const NgramModel> model;
    std::shared_ptr<const CompletionTrie> trie;
    std::shared_ptr<const GuidanceTrie> guide;
    std::shared_ptr<const EmbeddingTable> vectors;  // optional, for dense modes and SBMRR
};

/// Standard file names inside a model directory.
struct ModelPaths {
    std::filesystem::path dir;

    std::filesystem::path tokenizer() const { return dir / "tokenizer.qtok"; }
    std::filesystem::path model() const { return dir / "global.qngram"; }
    std::filesystem::path trie() const { return dir / "global.qtrie"; }
    std::filesystem::path guide() const { return dir / "global.gtrie"; }
};

/// Loads whatever exists in the directory; the tokenizer is required.
GlobalModels load_global_models(const ModelPaths& paths);

/// Trains tokenizer, n-gram model and both global tries from training pairs.
GlobalModels build_global_models(std::span<const QueryDocPair> train, std::size_t vocab_size,
                                 const LmTrainOptions& options);

void save_global_models(const GlobalModels& models, const ModelPaths& paths);

// ---- per-document index -------------------------------------------------

struct DocumentIndex {
    DocumentRecord record;
    CompletionTrie docq;
    CompletionTrie docc;
    GuidanceTrie docq_guide;  // empty when no tokenizer was available
    Bm25Index bm25;
    std::vector<Keyphrase> keyphrases;
    /// Context models for the prefix-independent modes P_TU, P_TUD, P_TUK.
    std::map<ContextMode, std::shared_ptr<const NgramModel>> context_models;
};

struct IngestStats {
    std::string doc_id;
    std::size_t docq_terminals = 0;
    std::size_t docc_terminals = 0;
    std::size_t guidance_sequences = 0;
    std::size_t sentences = 0;
    std::size_t keyphrases = 0;
    bool replaced = false;
    double build_ms = 0.0;
};

std::shared_ptr<const DocumentIndex> build_document_index(DocumentRecord record, const GlobalModels& models);

// ---- engine -------------------------------------------------------------

struct CompleteOptions {
    CompletionMode mode = CompletionMode::guided;
    std::size_t k = 10;
    /// Defaults: docq for mpc, global for guided.
    std::optional<TrieKind> trie;
    ContextMode context = ContextMode::P;
    double lambda = kDefaultLambda;
    DecodeConfig decode;
};

struct DocumentSummary {
    std::string doc_id;
    std::string title;
    std::string url;
    std::size_t queries = 0;
};

class Engine {
  public:
    struct Snapshot {
        std::uint64_t epoch = 0;
        GlobalModels models;
        std::map<std::string, std::shared_ptr<const DocumentIndex>, std::less<>> docs;
    };

    explicit Engine(GlobalModels models = {});

    /// Builds aside, then swaps in a new snapshot. Re-ingesting a doc_id replaces it.
    IngestStats ingest(DocumentRecord record);
    std::vector<IngestStats> ingest_all(std::vector<DocumentRecord> records);

    /// Readers hold the returned snapshot; later ingestions never mutate it.
    std::shared_ptr<const Snapshot> snapshot() const;

    std::vector<Suggestion> complete(std::string_view doc_id, std::string_view prefix,
                                     const CompleteOptions& options) const;

    std::vector<DocumentSummary> documents() const;
    std::size_t size() const { return snapshot()->docs.size(); }

  private:
    void publish(std::shared_ptr<const Snapshot> next);

    mutable std::mutex read_mu_;   // guards state_ pointer only
    std::mutex write_mu_;          // serializes ingestions
    std::shared_ptr<const Snapshot> state_;
};

/// complete() against a given snapshot; the engine forwards here.
std::vector<Suggestion> complete_in(const Engine::Snapshot& snap, std::string_view doc_id, std::string_view prefix,
                                    const CompleteOptions& options);

// ---- evaluation ---------------------------------------------------------

/// evaluate_run with the engine as the system; every prefix (including the
/// TES keystroke simulation) goes through complete() with `options`.
EvalResult evaluate_engine(const Engine& engine, std::span<const EvalExample> examples,
                           const CompleteOptions& options, const EvalOptions& eval = {});

struct SweepCell {
    double alpha = 0.0;
    double beta = 0.0;
    double bias = 0.0;
};

/// The tuning grid: alpha in {0.05, 0.1, 0.2, 0.5} x beta in {0.05, 0.1,
/// 0.2, 0.5} x bias in {20, 30, 40}, alpha outermost, bias innermost.
std::vector<SweepCell> sweep_grid();

}  // namespace qac
