#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qac/context.hpp"
#include "qac/metrics.hpp"
#include "qac/rng.hpp"
#include "qac/trie.hpp"

namespace qac {

enum class Origin { clicked, augmented };

std::string_view to_string(Origin o);
Origin parse_origin(std::string_view s);

struct QueryDocPair {
    WeightedQuery query;
    std::string doc_id;
    Origin origin = Origin::clicked;

    bool operator==(const QueryDocPair&) const = default;
};

// ---- file formats -------------------------------------------------------

/// `doc_id<TAB>url<TAB>title<TAB>body`, fields backslash-escaped.
std::vector<DocumentRecord> read_corpus_tsv(const std::filesystem::path& path);
std::vector<DocumentRecord> parse_corpus_tsv(std::string_view contents);
void write_corpus_tsv(const std::filesystem::path& path, std::span<const DocumentRecord> docs);

/// `query<TAB>doc_id<TAB>clicks<TAB>origin`; origin may be omitted (clicked).
std::vector<QueryDocPair> read_pairs_tsv(const std::filesystem::path& path);
std::vector<QueryDocPair> parse_pairs_tsv(std::string_view contents);
std::string pairs_to_tsv(std::span<const QueryDocPair> pairs);
void write_pairs_tsv(const std::filesystem::path& path, std::span<const QueryDocPair> pairs);

/// Attaches pairs to their documents as DocumentRecord::queries (clicks summed).
void attach_queries(std::vector<DocumentRecord>& docs, std::span<const QueryDocPair> pairs);

// ---- preprocessing ------------------------------------------------------

struct PreprocessOptions {
    std::size_t min_doc_queries = 10;   // exclusive
    std::size_t max_doc_queries = 500;  // exclusive
};

struct PreprocessReport {
    std::size_t input = 0;
    std::size_t dropped_short = 0;
    std::size_t merged_duplicates = 0;
    std::size_t dropped_missing_doc = 0;
    std::size_t dropped_doc_size = 0;
    std::size_t docs_dropped = 0;
    std::size_t kept = 0;
};

struct PreprocessResult {
    std::vector<QueryDocPair> pairs;  // sorted by (doc_id, query)
    PreprocessReport report;
};

PreprocessResult preprocess(std::span<const QueryDocPair> pairs, std::span<const DocumentRecord> docs,
                            const PreprocessOptions& options = {});

// ---- splits -------------------------------------------------------------

struct SplitFractions {
    double seen_docs = 0.8;
    double seen_queries = 0.8;
    double holdout = 0.1;     // seen-seen pairs held out of train as test candidates
    double validation = 0.05;  // seen-seen pairs held out as validation
    std::size_t test_cap = 500;
};

struct SplitManifest {
    std::uint64_t seed = 0;
    SplitFractions fractions;
    std::vector<QueryDocPair> train;
    std::vector<QueryDocPair> validation;
    std::array<std::vector<QueryDocPair>, 4> test;  // indexed by Quadrant
    std::vector<std::string> warnings;

    const std::vector<QueryDocPair>& quadrant(Quadrant q) const { return test[static_cast<std::size_t>(q)]; }
};

SplitManifest make_splits(std::span<const QueryDocPair> pairs, std::uint64_t seed, const SplitFractions& fractions = {});

/// Quadrant of (query, doc) relative to the training pairs.
Quadrant classify_pair(const QueryDocPair& pair, std::span<const QueryDocPair> train);

/// Re-checks the four membership predicates and train/test disjointness.
/// Returns one message per violation; empty when sound.
std::vector<std::string> check_manifest(const SplitManifest& manifest);

void write_manifest(const SplitManifest& manifest, const std::filesystem::path& dir);
SplitManifest read_manifest(const std::filesystem::path& dir);

/// Test pairs as evaluation examples with a seeded dynamic prefix per pair.
std::vector<EvalExample> make_eval_examples(const SplitManifest& manifest, std::uint64_t seed,
                                            std::span<const Quadrant> quadrants);

// ---- prefixes, clicks, near duplicates ----------------------------------

/// Split point uniform over [1, |query| - 1] code points.
std::pair<std::string, std::string> dynamic_prefix_split(std::string_view query, Rng& rng);

using Similarity = std::function<double(std::string_view, std::string_view)>;

/// Cosine over character-trigram count vectors of the normalized strings.
double trigram_cosine(std::string_view a, std::string_view b);

/// Similarity-weighted average clicks of the `top` most similar pool entries.
double estimate_clicks(std::string_view aug_query, std::span<const WeightedQuery> pool,
                       const Similarity& sim = trigram_cosine, std::size_t top = 5);

std::size_t levenshtein(std::string_view a, std::string_view b);
bool near_duplicate(std::string_view a, std::string_view b);

struct AugmentReport {
    std::size_t candidates = 0;
    std::size_t dropped_verbatim = 0;
    std::size_t dropped_near_duplicate = 0;
    std::size_t dropped_already_clicked = 0;
    std::size_t dropped_missing_doc = 0;
    std::size_t kept = 0;
};

/// Applies the augmentation filters to pre-mined candidates and assigns each
/// survivor a pseudo-count estimated from its document's clicked queries.
std::vector<QueryDocPair> filter_augmented(std::span<const QueryDocPair> candidates,
                                           std::span<const QueryDocPair> clicked,
                                           std::span<const DocumentRecord> docs, AugmentReport* report = nullptr,
                                           const Similarity& sim = trigram_cosine);

// ---- relevance labelling client -----------------------------------------

enum class Relevance { relevant, not_relevant, unavailable };

std::string relevance_prompt(std::string_view body, std::string_view query, std::string_view id,
                             std::string_view doc_id);

/// Parses a relevance judgement from either a bare JSON object or a
/// chat-completion envelope whose message content holds that object.
/// Raises ErrorCode::parse on malformed payloads.
bool parse_relevance_response(std::string_view payload);

class RelevanceClient {
  public:
    struct Options {
        std::string endpoint;  // http://host[:port]/path; empty = unavailable
        std::string model = "gpt-4";
        std::chrono::milliseconds timeout{10000};
        std::size_t max_concurrency = 4;
    };

    explicit RelevanceClient(Options options) : options_(std::move(options)) {}

    bool configured() const { return !options_.endpoint.empty(); }

    Relevance classify(const DocumentRecord& doc, std::string_view query, std::string_view id) const;

    /// Fans out up to max_concurrency requests; result i answers pairs[i].
    std::vector<Relevance> classify_all(std::span<const QueryDocPair> pairs,
                                        const std::unordered_map<std::string, const DocumentRecord*>& docs) const;

  private:
    Options options_;
};

}  // namespace qac
