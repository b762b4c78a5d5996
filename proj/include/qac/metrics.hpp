#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qac/context.hpp"

namespace qac {

enum class Quadrant { SS, SU, US, UU };

std::string_view to_string(Quadrant q);
Quadrant parse_quadrant(std::string_view name);

struct EvalExample {
    std::string target;
    std::string doc_id;
    std::string prefix;
    Quadrant quadrant = Quadrant::SS;
};

/// Lowercase + whitespace collapse, then whitespace tokens.
std::vector<std::string> metric_tokens(std::string_view s);

double mrr(std::span<const std::string> suggestions, std::string_view target, std::size_t depth = 10);

using CompletionCallback = std::function<std::vector<std::string>(std::string_view prefix)>;

/// Typing Effort Saved: simulated keystrokes until target appears in the top_n.
double tes(const CompletionCallback& system, std::string_view target, std::size_t top_n = 10);

/// Nuggets are the distinct non-stopword tokens of the target.
double alpha_ndcg(std::span<const std::string> suggestions, std::string_view target, double alpha = 0.5,
                  std::size_t depth = 10);

/// Word-level sentence BLEU up to 4-grams, add-one smoothing for n >= 2,
/// standard brevity penalty.
double sentence_bleu(std::string_view candidate, std::string_view reference);

enum class BleuRrNorm { harmonic, max };

double bleu_rr(std::span<const std::string> suggestions, std::string_view target, std::size_t depth = 10,
               BleuRrNorm norm = BleuRrNorm::harmonic);

enum class PartialKind { precision, recall };

double partial_ndcg(std::span<const std::string> suggestions, std::string_view target, PartialKind kind,
                    std::size_t depth = 10);

/// nullopt when the target or any considered suggestion lacks a vector.
std::optional<double> sbmrr(std::span<const std::string> suggestions, std::string_view target,
                            const EmbeddingTable& vectors, double threshold = 0.9, std::size_t depth = 10);

struct MetricReport {
    Quadrant quadrant = Quadrant::SS;
    std::string mode;
    std::size_t n_examples = 0;
    double mrr = 0.0;
    double alpha_ndcg = 0.0;
    double bleu_rr = 0.0;
    std::optional<double> sbmrr;
    std::size_t sbmrr_skipped = 0;
    double ppn = 0.0;
    double prn = 0.0;
    double tes = 0.0;
};

struct EvalOptions {
    std::string mode_label = "guided";
    std::size_t top_n = 10;
    double alpha = 0.5;
    BleuRrNorm bleu_norm = BleuRrNorm::harmonic;
    bool compute_tes = true;
    const EmbeddingTable* vectors = nullptr;  // enables SBMRR
};

using EvalSystem = std::function<std::vector<std::string>(const EvalExample& example, std::string_view prefix)>;

struct EvalResult {
    std::vector<MetricReport> reports;  // SS, SU, US, UU order; empty quadrants omitted
    std::vector<std::string> warnings;
};

EvalResult evaluate_run(std::span<const EvalExample> examples, const EvalSystem& system,
                        const EvalOptions& options = {});

std::string report_tsv_header();
std::string report_tsv_row(const MetricReport& r);
std::string report_table(std::span<const MetricReport> reports);

}  // namespace qac
