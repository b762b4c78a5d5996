#include "qac/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <unordered_set>

#include "json.hpp"

#include "binio.hpp"
#include "qac/error.hpp"
#include "qac/text.hpp"

namespace qac {

std::string_view to_string(Origin o)
{
    return o == Origin::clicked ? "clicked" : "augmented";
}

Origin parse_origin(std::string_view s)
{
    if (s.empty() || s == "clicked") {
        return Origin::clicked;
    }
    if (s == "augmented") {
        return Origin::augmented;
    }
    fail(ErrorCode::parse, "unknown origin '" + std::string(s) + "'");
}

namespace {

std::vector<std::string_view> tsv_lines(std::string_view contents)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < contents.size()) {
        std::size_t end = contents.find('\n', start);
        if (end == std::string_view::npos) {
            end = contents.size();
        }
        std::string_view line = contents.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        out.push_back(line);
        start = end + 1;
    }
    return out;
}

double parse_clicks(std::string_view s, std::size_t line)
{
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v) || v < 0.0) {
        fail(ErrorCode::parse, "pairs line " + std::to_string(line) + ": bad clicks '" + std::string(s) + "'");
    }
    return v;
}

std::string format_clicks(double v)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

bool pair_less(const QueryDocPair& a, const QueryDocPair& b)
{
    if (a.doc_id != b.doc_id) {
        return a.doc_id < b.doc_id;
    }
    return a.query.text < b.query.text;
}

using PairKey = std::pair<std::string, std::string>;  // (query, doc_id)

PairKey key_of(const QueryDocPair& p)
{
    return {p.query.text, p.doc_id};
}

}  // namespace

std::vector<DocumentRecord> parse_corpus_tsv(std::string_view contents)
{
    std::vector<DocumentRecord> docs;
    std::set<std::string> seen;
    const auto lines = tsv_lines(contents);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) {
            continue;
        }
        const auto f = text::split(lines[i], '\t');
        if (f.size() != 4) {
            fail(ErrorCode::parse, "corpus line " + std::to_string(i + 1) + ": expected 4 fields, got " +
                                       std::to_string(f.size()));
        }
        DocumentRecord d;
        d.doc_id = text::unescape_field(f[0]);
        d.url = text::unescape_field(f[1]);
        d.title = text::unescape_field(f[2]);
        d.body = text::unescape_field(f[3]);
        if (d.doc_id.empty()) {
            fail(ErrorCode::parse, "corpus line " + std::to_string(i + 1) + ": empty doc_id");
        }
        if (!seen.insert(d.doc_id).second) {
            fail(ErrorCode::parse, "corpus line " + std::to_string(i + 1) + ": duplicate doc_id '" + d.doc_id + "'");
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

std::vector<DocumentRecord> read_corpus_tsv(const std::filesystem::path& path)
{
    return parse_corpus_tsv(binio::read_text(path));
}

void write_corpus_tsv(const std::filesystem::path& path, std::span<const DocumentRecord> docs)
{
    std::string out;
    for (const auto& d : docs) {
        out += text::escape_field(d.doc_id) + '\t' + text::escape_field(d.url) + '\t' + text::escape_field(d.title) +
               '\t' + text::escape_field(d.body) + '\n';
    }
    binio::write_text(path, out);
}

std::vector<QueryDocPair> parse_pairs_tsv(std::string_view contents)
{
    std::vector<QueryDocPair> pairs;
    const auto lines = tsv_lines(contents);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) {
            continue;
        }
        const auto f = text::split(lines[i], '\t');
        if (f.size() != 3 && f.size() != 4) {
            fail(ErrorCode::parse, "pairs line " + std::to_string(i + 1) + ": expected 3 or 4 fields, got " +
                                       std::to_string(f.size()));
        }
        QueryDocPair p;
        p.query.text = text::unescape_field(f[0]);
        p.doc_id = text::unescape_field(f[1]);
        p.query.clicks = parse_clicks(f[2], i + 1);
        p.origin = f.size() == 4 ? parse_origin(f[3]) : Origin::clicked;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::vector<QueryDocPair> read_pairs_tsv(const std::filesystem::path& path)
{
    return parse_pairs_tsv(binio::read_text(path));
}

std::string pairs_to_tsv(std::span<const QueryDocPair> pairs)
{
    std::string out;
    for (const auto& p : pairs) {
        out += text::escape_field(p.query.text) + '\t' + text::escape_field(p.doc_id) + '\t' +
               format_clicks(p.query.clicks) + '\t' + std::string(to_string(p.origin)) + '\n';
    }
    return out;
}

void write_pairs_tsv(const std::filesystem::path& path, std::span<const QueryDocPair> pairs)
{
    binio::write_text(path, pairs_to_tsv(pairs));
}

void attach_queries(std::vector<DocumentRecord>& docs, std::span<const QueryDocPair> pairs)
{
    std::unordered_map<std::string, std::map<std::string, double>> by_doc;
    for (const auto& p : pairs) {
        by_doc[p.doc_id][p.query.text] += p.query.clicks;
    }
    for (auto& d : docs) {
        d.queries.clear();
        const auto it = by_doc.find(d.doc_id);
        if (it == by_doc.end()) {
            continue;
        }
        for (const auto& [q, c] : it->second) {
            d.queries.push_back({q, c});
        }
    }
}

PreprocessResult preprocess(std::span<const QueryDocPair> pairs, std::span<const DocumentRecord> docs,
                            const PreprocessOptions& options)
{
    PreprocessResult res;
    auto& rep = res.report;
    rep.input = pairs.size();

    std::unordered_set<std::string> doc_ids;
    for (const auto& d : docs) {
        doc_ids.insert(d.doc_id);
    }

    std::map<PairKey, QueryDocPair> merged;
    for (const auto& p : pairs) {
        auto q = make_query(p.query.text, p.query.clicks);
        if (!q) {
            ++rep.dropped_short;
            continue;
        }
        if (doc_ids.count(p.doc_id) == 0) {
            ++rep.dropped_missing_doc;
            continue;
        }
        QueryDocPair np{*q, p.doc_id, p.origin};
        auto [it, inserted] = merged.try_emplace(key_of(np), np);
        if (!inserted) {
            ++rep.merged_duplicates;
            it->second.query.clicks += np.query.clicks;
            if (np.origin == Origin::clicked) {
                it->second.origin = Origin::clicked;
            }
        }
    }

    std::map<std::string, std::size_t> per_doc;
    for (const auto& [_, p] : merged) {
        ++per_doc[p.doc_id];
    }
    for (const auto& [_, n] : per_doc) {
        if (n <= options.min_doc_queries || n >= options.max_doc_queries) {
            ++rep.docs_dropped;
        }
    }
    for (auto& [_, p] : merged) {
        const std::size_t n = per_doc[p.doc_id];
        if (n <= options.min_doc_queries || n >= options.max_doc_queries) {
            ++rep.dropped_doc_size;
            continue;
        }
        res.pairs.push_back(std::move(p));
    }
    std::sort(res.pairs.begin(), res.pairs.end(), pair_less);
    rep.kept = res.pairs.size();
    return res;
}

namespace {

struct Membership {
    std::unordered_set<std::string> queries;
    std::unordered_set<std::string> docs;

    explicit Membership(std::span<const QueryDocPair> train)
    {
        for (const auto& p : train) {
            queries.insert(p.query.text);
            docs.insert(p.doc_id);
        }
    }

    Quadrant classify(const QueryDocPair& p) const
    {
        const bool q = queries.count(p.query.text) != 0;
        const bool d = docs.count(p.doc_id) != 0;
        if (q) {
            return d ? Quadrant::SS : Quadrant::SU;
        }
        return d ? Quadrant::US : Quadrant::UU;
    }
};

std::size_t fraction_of(std::size_t n, double f)
{
    return static_cast<std::size_t>(std::llround(static_cast<double>(n) * std::clamp(f, 0.0, 1.0)));
}

}  // namespace

Quadrant classify_pair(const QueryDocPair& pair, std::span<const QueryDocPair> train)
{
    return Membership(train).classify(pair);
}

SplitManifest make_splits(std::span<const QueryDocPair> pairs, std::uint64_t seed, const SplitFractions& fractions)
{
    SplitManifest m;
    m.seed = seed;
    m.fractions = fractions;
    Rng rng(seed);

    std::vector<QueryDocPair> sorted(pairs.begin(), pairs.end());
    std::sort(sorted.begin(), sorted.end(), pair_less);

    std::set<std::string> doc_set;
    std::set<std::string> query_set;
    for (const auto& p : sorted) {
        doc_set.insert(p.doc_id);
        query_set.insert(p.query.text);
    }
    std::vector<std::string> doc_list(doc_set.begin(), doc_set.end());
    std::vector<std::string> query_list(query_set.begin(), query_set.end());
    rng.shuffle(doc_list);
    rng.shuffle(query_list);
    const std::unordered_set<std::string> seen_docs(
        doc_list.begin(), doc_list.begin() + static_cast<std::ptrdiff_t>(fraction_of(doc_list.size(), fractions.seen_docs)));
    const std::unordered_set<std::string> seen_queries(
        query_list.begin(),
        query_list.begin() + static_cast<std::ptrdiff_t>(fraction_of(query_list.size(), fractions.seen_queries)));

    std::vector<QueryDocPair> seen_seen;
    std::vector<QueryDocPair> candidates;
    for (const auto& p : sorted) {
        if (seen_docs.count(p.doc_id) != 0 && seen_queries.count(p.query.text) != 0) {
            seen_seen.push_back(p);
        } else {
            candidates.push_back(p);
        }
    }
    rng.shuffle(seen_seen);
    const std::size_t n_hold = fraction_of(seen_seen.size(), fractions.holdout);
    const std::size_t n_val = std::min(seen_seen.size() - n_hold, fraction_of(seen_seen.size(), fractions.validation));
    for (std::size_t i = 0; i < seen_seen.size(); ++i) {
        if (i < n_hold) {
            candidates.push_back(seen_seen[i]);
        } else if (i < n_hold + n_val) {
            m.validation.push_back(seen_seen[i]);
        } else {
            m.train.push_back(seen_seen[i]);
        }
    }
    std::sort(m.train.begin(), m.train.end(), pair_less);
    std::sort(m.validation.begin(), m.validation.end(), pair_less);
    std::sort(candidates.begin(), candidates.end(), pair_less);

    // Quadrants follow actual membership in the training pairs: a held-out
    // pair whose query only occurred there is unseen, not SS.
    const Membership mem(m.train);
    for (const auto& p : candidates) {
        m.test[static_cast<std::size_t>(mem.classify(p))].push_back(p);
    }
    for (std::size_t q = 0; q < 4; ++q) {
        auto& list = m.test[q];
        const std::string name(to_string(static_cast<Quadrant>(q)));
        if (list.size() > fractions.test_cap) {
            rng.shuffle(list);
            list.resize(fractions.test_cap);
            std::sort(list.begin(), list.end(), pair_less);
        } else if (list.size() < fractions.test_cap) {
            m.warnings.push_back("quadrant " + name + " has " + std::to_string(list.size()) +
                                 " pairs, fewer than the requested " + std::to_string(fractions.test_cap));
        }
    }
    return m;
}

std::vector<std::string> check_manifest(const SplitManifest& manifest)
{
    std::vector<std::string> problems;
    const Membership mem(manifest.train);
    std::set<PairKey> train_keys;
    for (const auto& p : manifest.train) {
        train_keys.insert(key_of(p));
    }
    for (std::size_t q = 0; q < 4; ++q) {
        const auto quad = static_cast<Quadrant>(q);
        for (const auto& p : manifest.test[q]) {
            const std::string where = std::string(to_string(quad)) + " pair (" + p.query.text + ", " + p.doc_id + ")";
            if (mem.classify(p) != quad) {
                problems.push_back(where + " violates its membership predicate");
            }
            if (train_keys.count(key_of(p)) != 0) {
                problems.push_back(where + " also appears in train");
            }
        }
    }
    return problems;
}

void write_manifest(const SplitManifest& m, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    write_pairs_tsv(dir / "train.tsv", m.train);
    write_pairs_tsv(dir / "val.tsv", m.validation);
    static constexpr const char* kNames[4] = {"test_ss.tsv", "test_su.tsv", "test_us.tsv", "test_uu.tsv"};
    for (std::size_t q = 0; q < 4; ++q) {
        write_pairs_tsv(dir / kNames[q], m.test[q]);
    }

    std::size_t all = 0;
    std::size_t clicked = 0;
    auto tally = [&](const std::vector<QueryDocPair>& v) {
        for (const auto& p : v) {
            ++all;
            clicked += p.origin == Origin::clicked ? 1 : 0;
        }
    };
    tally(m.train);
    tally(m.validation);
    for (const auto& t : m.test) {
        tally(t);
    }

    nlohmann::ordered_json j;
    j["seed"] = m.seed;
    j["fractions"] = {{"seen_docs", m.fractions.seen_docs},
                      {"seen_queries", m.fractions.seen_queries},
                      {"holdout", m.fractions.holdout},
                      {"validation", m.fractions.validation},
                      {"test_cap", m.fractions.test_cap}};
    j["counts"] = {{"train", m.train.size()},   {"val", m.validation.size()}, {"SS", m.test[0].size()},
                   {"SU", m.test[1].size()},    {"US", m.test[2].size()},     {"UU", m.test[3].size()}};
    j["clicked_ratio"] = all == 0 ? 0.0 : static_cast<double>(clicked) / static_cast<double>(all);
    j["warnings"] = m.warnings;
    binio::write_text(dir / "manifest.json", j.dump(2) + "\n");
}

SplitManifest read_manifest(const std::filesystem::path& dir)
{
    SplitManifest m;
    const auto j = nlohmann::json::parse(binio::read_text(dir / "manifest.json"), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        fail(ErrorCode::parse, "malformed " + (dir / "manifest.json").string());
    }
    m.seed = j.value("seed", std::uint64_t{0});
    if (const auto f = j.find("fractions"); f != j.end() && f->is_object()) {
        m.fractions.seen_docs = f->value("seen_docs", m.fractions.seen_docs);
        m.fractions.seen_queries = f->value("seen_queries", m.fractions.seen_queries);
        m.fractions.holdout = f->value("holdout", m.fractions.holdout);
        m.fractions.validation = f->value("validation", m.fractions.validation);
        m.fractions.test_cap = f->value("test_cap", m.fractions.test_cap);
    }
    m.train = read_pairs_tsv(dir / "train.tsv");
    m.validation = read_pairs_tsv(dir / "val.tsv");
    static constexpr const char* kNames[4] = {"test_ss.tsv", "test_su.tsv", "test_us.tsv", "test_uu.tsv"};
    for (std::size_t q = 0; q < 4; ++q) {
        m.test[q] = read_pairs_tsv(dir / kNames[q]);
    }
    return m;
}

std::vector<EvalExample> make_eval_examples(const SplitManifest& manifest, std::uint64_t seed,
                                            std::span<const Quadrant> quadrants)
{
    Rng rng(seed);
    std::vector<EvalExample> out;
    for (Quadrant q : quadrants) {
        for (const auto& p : manifest.quadrant(q)) {
            auto [prefix, suffix] = dynamic_prefix_split(p.query.text, rng);
            out.push_back({p.query.text, p.doc_id, std::move(prefix), q});
        }
    }
    return out;
}

std::pair<std::string, std::string> dynamic_prefix_split(std::string_view query, Rng& rng)
{
    const auto offsets = text::codepoint_offsets(query);
    const std::size_t n = offsets.size() - 1;
    if (n < kMinQueryChars) {
        fail(ErrorCode::invalid_input, "query '" + std::string(query) + "' is too short to split");
    }
    const std::size_t cut = 1 + static_cast<std::size_t>(rng.below(n - 1));
    return {std::string(query.substr(0, offsets[cut])), std::string(query.substr(offsets[cut]))};
}

double trigram_cosine(std::string_view a, std::string_view b)
{
    auto grams = [](std::string_view s) {
        const auto cps = text::split_codepoints(" " + text::normalize(s) + " ");
        std::map<std::string, double> counts;
        for (std::size_t i = 0; i + 3 <= cps.size(); ++i) {
            counts[cps[i] + cps[i + 1] + cps[i + 2]] += 1.0;
        }
        return counts;
    };
    const auto ga = grams(a);
    const auto gb = grams(b);
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (const auto& [g, c] : ga) {
        na += c * c;
        if (const auto it = gb.find(g); it != gb.end()) {
            dot += c * it->second;
        }
    }
    for (const auto& [_, c] : gb) {
        nb += c * c;
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

double estimate_clicks(std::string_view aug_query, std::span<const WeightedQuery> pool, const Similarity& sim,
                       std::size_t top)
{
    if (pool.empty()) {
        fail(ErrorCode::invalid_input, "estimate_clicks needs a non-empty pool");
    }
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        scored.emplace_back(sim(aug_query, pool[i].text), i);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < std::min(top, scored.size()); ++i) {
        num += scored[i].first * pool[scored[i].second].clicks;
        den += scored[i].first;
    }
    return den > 0.0 ? num / den : 0.0;
}

std::size_t levenshtein(std::string_view a, std::string_view b)
{
    const auto x = text::split_codepoints(a);
    const auto y = text::split_codepoints(b);
    std::vector<std::size_t> prev(y.size() + 1);
    std::vector<std::size_t> cur(y.size() + 1);
    for (std::size_t j = 0; j <= y.size(); ++j) {
        prev[j] = j;
    }
    for (std::size_t i = 1; i <= x.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= y.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[y.size()];
}

bool near_duplicate(std::string_view a, std::string_view b)
{
    const std::size_t la = text::codepoint_count(a);
    const std::size_t lb = text::codepoint_count(b);
    if ((la > lb ? la - lb : lb - la) > 1) {
        return false;
    }
    return levenshtein(a, b) <= 1;
}

std::vector<QueryDocPair> filter_augmented(std::span<const QueryDocPair> candidates,
                                           std::span<const QueryDocPair> clicked,
                                           std::span<const DocumentRecord> docs, AugmentReport* report,
                                           const Similarity& sim)
{
    AugmentReport rep;
    rep.candidates = candidates.size();
    std::unordered_map<std::string, std::string> bodies;
    for (const auto& d : docs) {
        bodies[d.doc_id] = text::normalize(d.body);
    }
    std::unordered_map<std::string, std::vector<WeightedQuery>> clicked_by_doc;
    std::vector<WeightedQuery> all_clicked;
    for (const auto& p : clicked) {
        clicked_by_doc[p.doc_id].push_back(p.query);
        all_clicked.push_back(p.query);
    }

    std::vector<QueryDocPair> kept;
    std::set<PairKey> emitted;
    for (const auto& c : candidates) {
        const std::string q = text::normalize(c.query.text);
        const auto body = bodies.find(c.doc_id);
        if (body == bodies.end()) {
            ++rep.dropped_missing_doc;
            continue;
        }
        const auto& own = clicked_by_doc[c.doc_id];
        if (std::any_of(own.begin(), own.end(), [&](const WeightedQuery& w) { return w.text == q; }) ||
            emitted.count({q, c.doc_id}) != 0) {
            ++rep.dropped_already_clicked;
            continue;
        }
        if (std::any_of(own.begin(), own.end(), [&](const WeightedQuery& w) { return near_duplicate(w.text, q); })) {
            ++rep.dropped_near_duplicate;
            continue;
        }
        if (body->second.find(q) != std::string::npos) {
            ++rep.dropped_verbatim;
            continue;
        }
        const auto& pool = own.empty() ? all_clicked : own;
        const double clicks = pool.empty() ? 0.0 : estimate_clicks(q, pool, sim);
        kept.push_back({{q, clicks}, c.doc_id, Origin::augmented});
        emitted.insert({q, c.doc_id});
    }
    rep.kept = kept.size();
    if (report != nullptr) {
        *report = rep;
    }
    return kept;
}

}  // namespace qac
