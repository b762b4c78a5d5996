#include "qac/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "qac/error.hpp"
#include "qac/kernels.hpp"
#include "qac/text.hpp"

namespace qac {

std::string_view to_string(Quadrant q)
{
    switch (q) {
    case Quadrant::SS: return "SS";
    case Quadrant::SU: return "SU";
    case Quadrant::US: return "US";
    case Quadrant::UU: return "UU";
    }
    return "?";
}

Quadrant parse_quadrant(std::string_view name)
{
    for (Quadrant q : {Quadrant::SS, Quadrant::SU, Quadrant::US, Quadrant::UU}) {
        if (text::normalize(name) == text::normalize(to_string(q))) {
            return q;
        }
    }
    fail(ErrorCode::invalid_input, "unknown quadrant '" + std::string(name) + "'");
}

std::vector<std::string> metric_tokens(std::string_view s)
{
    return text::split_whitespace(text::normalize(s));
}

namespace {

std::set<std::string> token_set(std::string_view s)
{
    auto toks = metric_tokens(s);
    return {toks.begin(), toks.end()};
}

std::size_t capped(std::size_t n, std::size_t depth)
{
    return std::min(n, depth);
}

constexpr std::size_t kExactIdealLimit = 16;  // beyond this the ideal is greedy

double discount(std::size_t rank)  // rank is 1-based
{
    return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

}  // namespace

double mrr(std::span<const std::string> suggestions, std::string_view target, std::size_t depth)
{
    const std::string t = text::normalize(target);
    for (std::size_t i = 0; i < capped(suggestions.size(), depth); ++i) {
        if (text::normalize(suggestions[i]) == t) {
            return 1.0 / static_cast<double>(i + 1);
        }
    }
    return 0.0;
}

double tes(const CompletionCallback& system, std::string_view target, std::size_t top_n)
{
    const std::string t = text::normalize(target);
    const auto offsets = text::codepoint_offsets(t);
    const std::size_t len = offsets.size() - 1;
    if (len == 0) {
        return 0.0;
    }
    // Finding the target only after typing all of it saves nothing.
    for (std::size_t c = 1; c < len; ++c) {
        const auto list = system(std::string_view(t).substr(0, offsets[c]));
        for (std::size_t i = 0; i < capped(list.size(), top_n); ++i) {
            if (text::normalize(list[i]) == t) {
                return 1.0 - static_cast<double>(c) / static_cast<double>(len);
            }
        }
    }
    return 0.0;
}

double alpha_ndcg(std::span<const std::string> suggestions, std::string_view target, double alpha,
                  std::size_t depth)
{
    std::vector<std::string> nuggets;
    for (const auto& tok : token_set(target)) {
        if (!text::is_stopword(tok)) {
            nuggets.push_back(tok);
        }
    }
    const std::size_t n = capped(suggestions.size(), depth);
    if (nuggets.empty() || n == 0) {
        return 0.0;
    }
    // covers[i] is a bitmask over nuggets.
    std::vector<std::uint64_t> covers(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto toks = token_set(suggestions[i]);
        for (std::size_t j = 0; j < nuggets.size() && j < 64; ++j) {
            if (toks.count(nuggets[j]) != 0) {
                covers[i] |= std::uint64_t{1} << j;
            }
        }
    }
    const std::size_t m = std::min<std::size_t>(nuggets.size(), 64);
    auto gain = [&](std::uint64_t mask, const std::vector<int>& seen) {
        double g = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if ((mask >> j) & 1U) {
                g += std::pow(1.0 - alpha, seen[j]);
            }
        }
        return g;
    };

    double dcg = 0.0;
    {
        std::vector<int> seen(m, 0);
        for (std::size_t i = 0; i < n; ++i) {
            dcg += gain(covers[i], seen) * discount(i + 1);
            for (std::size_t j = 0; j < m; ++j) {
                seen[j] += static_cast<int>((covers[i] >> j) & 1U);
            }
        }
    }

    if (n > kExactIdealLimit) {
        std::vector<int> seen(m, 0);
        std::vector<bool> used(n, false);
        double idcg = 0.0;
        for (std::size_t rank = 1; rank <= n; ++rank) {
            std::size_t pick = 0;
            double best_gain = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!used[i] && gain(covers[i], seen) > best_gain) {
                    best_gain = gain(covers[i], seen);
                    pick = i;
                }
            }
            used[pick] = true;
            idcg += best_gain * discount(rank);
            for (std::size_t j = 0; j < m; ++j) {
                seen[j] += static_cast<int>((covers[pick] >> j) & 1U);
            }
        }
        return idcg > 0.0 ? std::min(1.0, dcg / idcg) : 0.0;
    }

    // Ideal: best ordering of the same list. The gain of the next item
    // depends only on which items precede it, so a DP over subsets is exact.
    const std::size_t states = std::size_t{1} << n;
    std::vector<double> best(states, -1.0);
    best[0] = 0.0;
    std::vector<int> seen(m);
    for (std::size_t s = 0; s < states; ++s) {
        if (best[s] < 0.0) {
            continue;
        }
        std::fill(seen.begin(), seen.end(), 0);
        std::size_t placed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if ((s >> i) & 1U) {
                ++placed;
                for (std::size_t j = 0; j < m; ++j) {
                    seen[j] += static_cast<int>((covers[i] >> j) & 1U);
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            if ((s >> i) & 1U) {
                continue;
            }
            const std::size_t next = s | (std::size_t{1} << i);
            best[next] = std::max(best[next], best[s] + gain(covers[i], seen) * discount(placed + 1));
        }
    }
    const double idcg = best[states - 1];
    if (idcg <= 0.0) {
        return 0.0;
    }
    return std::min(1.0, dcg / idcg);
}

double sentence_bleu(std::string_view candidate, std::string_view reference)
{
    const auto cand = metric_tokens(candidate);
    const auto ref = metric_tokens(reference);
    if (cand.empty() || ref.empty()) {
        return 0.0;
    }
    double log_sum = 0.0;
    for (std::size_t order = 1; order <= 4; ++order) {
        std::map<std::vector<std::string>, int> ref_counts;
        for (std::size_t i = 0; i + order <= ref.size(); ++i) {
            ++ref_counts[{ref.begin() + static_cast<std::ptrdiff_t>(i),
                          ref.begin() + static_cast<std::ptrdiff_t>(i + order)}];
        }
        std::map<std::vector<std::string>, int> cand_counts;
        std::size_t total = 0;
        for (std::size_t i = 0; i + order <= cand.size(); ++i) {
            ++cand_counts[{cand.begin() + static_cast<std::ptrdiff_t>(i),
                           cand.begin() + static_cast<std::ptrdiff_t>(i + order)}];
            ++total;
        }
        std::size_t matched = 0;
        for (const auto& [gram, c] : cand_counts) {
            const auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) {
                matched += static_cast<std::size_t>(std::min(c, it->second));
            }
        }
        double p = 0.0;
        if (order == 1) {
            if (matched == 0) {
                return 0.0;
            }
            p = static_cast<double>(matched) / static_cast<double>(total);
        } else {
            p = (static_cast<double>(matched) + 1.0) / (static_cast<double>(total) + 1.0);
        }
        log_sum += std::log(p) / 4.0;
    }
    const double c = static_cast<double>(cand.size());
    const double r = static_cast<double>(ref.size());
    const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
    return std::min(1.0, bp * std::exp(log_sum));
}

double bleu_rr(std::span<const std::string> suggestions, std::string_view target, std::size_t depth,
               BleuRrNorm norm)
{
    const std::size_t n = capped(suggestions.size(), depth);
    if (n == 0 || depth == 0) {
        return 0.0;
    }
    if (norm == BleuRrNorm::max) {
        double best = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            best = std::max(best, sentence_bleu(suggestions[k], target) / static_cast<double>(k + 1));
        }
        return best;
    }
    double num = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        num += sentence_bleu(suggestions[k], target) / static_cast<double>(k + 1);
    }
    double harmonic = 0.0;
    for (std::size_t k = 1; k <= depth; ++k) {
        harmonic += 1.0 / static_cast<double>(k);
    }
    return num / harmonic;
}

double partial_ndcg(std::span<const std::string> suggestions, std::string_view target, PartialKind kind,
                    std::size_t depth)
{
    const auto t = token_set(target);
    const std::size_t n = capped(suggestions.size(), depth);
    if (t.empty() || n == 0) {
        return 0.0;
    }
    double dcg = 0.0;
    double ideal = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const auto s = token_set(suggestions[k]);
        std::size_t shared = 0;
        for (const auto& tok : s) {
            shared += t.count(tok);
        }
        const double denom = static_cast<double>(kind == PartialKind::precision ? s.size() : t.size());
        const double g = denom > 0.0 ? static_cast<double>(shared) / denom : 0.0;
        dcg += g * discount(k + 1);
        // The ideal list holds a perfect suggestion at every rank.
        ideal += discount(k + 1);
    }
    return dcg / ideal;
}

std::optional<double> sbmrr(std::span<const std::string> suggestions, std::string_view target,
                            const EmbeddingTable& vectors, double threshold, std::size_t depth)
{
    const auto tv = vectors.find(text::normalize(target));
    if (!tv) {
        return std::nullopt;
    }
    const std::size_t n = capped(suggestions.size(), depth);
    std::vector<std::span<const float>> sv;
    for (std::size_t k = 0; k < n; ++k) {
        const auto v = vectors.find(text::normalize(suggestions[k]));
        if (!v) {
            return std::nullopt;
        }
        sv.push_back(*v);
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (kernels::cosine(*tv, sv[k]) >= threshold) {
            return 1.0 / static_cast<double>(k + 1);
        }
    }
    return 0.0;
}

EvalResult evaluate_run(std::span<const EvalExample> examples, const EvalSystem& system, const EvalOptions& options)
{
    struct Acc {
        MetricReport r;
        double sbmrr_sum = 0.0;
        std::size_t sbmrr_n = 0;
    };
    std::array<Acc, 4> acc;
    for (std::size_t q = 0; q < 4; ++q) {
        acc[q].r.quadrant = static_cast<Quadrant>(q);
        acc[q].r.mode = options.mode_label;
    }
    for (const auto& ex : examples) {
        Acc& a = acc[static_cast<std::size_t>(ex.quadrant)];
        auto list = system(ex, ex.prefix);
        if (list.size() > options.top_n) {
            list.resize(options.top_n);
        }
        ++a.r.n_examples;
        a.r.mrr += mrr(list, ex.target, options.top_n);
        a.r.alpha_ndcg += alpha_ndcg(list, ex.target, options.alpha, options.top_n);
        a.r.bleu_rr += bleu_rr(list, ex.target, options.top_n, options.bleu_norm);
        a.r.ppn += partial_ndcg(list, ex.target, PartialKind::precision, options.top_n);
        a.r.prn += partial_ndcg(list, ex.target, PartialKind::recall, options.top_n);
        if (options.compute_tes) {
            a.r.tes += tes([&](std::string_view p) { return system(ex, p); }, ex.target, options.top_n);
        }
        if (options.vectors != nullptr) {
            if (const auto s = sbmrr(list, ex.target, *options.vectors, 0.9, options.top_n)) {
                a.sbmrr_sum += *s;
                ++a.sbmrr_n;
            } else {
                ++a.r.sbmrr_skipped;
            }
        }
    }

    EvalResult out;
    for (auto& a : acc) {
        if (a.r.n_examples == 0) {
            out.warnings.push_back("quadrant " + std::string(to_string(a.r.quadrant)) +
                                   " has no examples; row omitted");
            continue;
        }
        const double n = static_cast<double>(a.r.n_examples);
        a.r.mrr /= n;
        a.r.alpha_ndcg /= n;
        a.r.bleu_rr /= n;
        a.r.ppn /= n;
        a.r.prn /= n;
        a.r.tes /= n;
        if (a.sbmrr_n > 0) {
            a.r.sbmrr = a.sbmrr_sum / static_cast<double>(a.sbmrr_n);
        }
        if (a.r.sbmrr_skipped > 0) {
            out.warnings.push_back("quadrant " + std::string(to_string(a.r.quadrant)) + ": SBMRR skipped " +
                                   std::to_string(a.r.sbmrr_skipped) + " examples with missing vectors");
        }
        out.reports.push_back(a.r);
    }
    return out;
}

namespace {

std::string fixed4(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::vector<std::string> row_cells(const MetricReport& r)
{
    return {std::string(to_string(r.quadrant)),
            r.mode,
            std::to_string(r.n_examples),
            fixed4(r.mrr),
            fixed4(r.alpha_ndcg),
            fixed4(r.bleu_rr),
            r.sbmrr ? fixed4(*r.sbmrr) : std::string("-"),
            fixed4(r.ppn),
            fixed4(r.prn),
            fixed4(r.tes)};
}

const std::vector<std::string>& header_cells()
{
    static const std::vector<std::string> h = {"quadrant", "mode", "n",   "MRR", "aNDCG",
                                               "BLEU_RR",  "SBMRR", "PPN", "PRN", "TES"};
    return h;
}

}  // namespace

std::string report_tsv_header()
{
    return text::join(header_cells(), "\t");
}

std::string report_tsv_row(const MetricReport& r)
{
    return text::join(row_cells(r), "\t");
}

std::string report_table(std::span<const MetricReport> reports)
{
    std::vector<std::vector<std::string>> rows = {header_cells()};
    for (const auto& r : reports) {
        rows.push_back(row_cells(r));
    }
    std::vector<std::size_t> width(rows[0].size(), 0);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            width[i] = std::max(width[i], row[i].size());
        }
    }
    std::string out;
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
        for (std::size_t i = 0; i < rows[ri].size(); ++i) {
            const auto& cell = rows[ri][i];
            out += i == 0 ? "" : "  ";
            if (i < 2) {
                out += cell + std::string(width[i] - cell.size(), ' ');
            } else {
                out += std::string(width[i] - cell.size(), ' ') + cell;
            }
        }
        out += '\n';
        if (ri == 0) {
            std::size_t total = 0;
            for (std::size_t w : width) {
                total += w + 2;
            }
            out += std::string(total - 2, '-') + '\n';
        }
    }
    return out;
}

}  // namespace qac
