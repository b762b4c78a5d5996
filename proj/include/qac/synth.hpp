#pragma once

#include <cstdint>
#include <vector>

#include "qac/context.hpp"
#include "qac/dataset.hpp"

namespace qac {

struct SynthOptions {
    std::uint64_t seed = 2024;
    std::size_t documents = 200;
    std::size_t min_queries = 14;  // per document, before preprocessing
    std::size_t max_queries = 36;
    std::size_t sentences_min = 8;
    std::size_t sentences_max = 16;
};

struct SyntheticCorpus {
    std::vector<DocumentRecord> docs;  // queries left empty
    std::vector<QueryDocPair> pairs;
};

/// Topic-structured documents and click-weighted queries. Queries are drawn
/// mostly from per-topic pools shared by every document of that topic, so
/// the same query text recurs across documents.
SyntheticCorpus generate_synthetic(const SynthOptions& options = {});

}  // namespace qac
