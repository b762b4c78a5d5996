#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <functional>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "qac/dataset.hpp"
#include "qac/error.hpp"
#include "qac/synth.hpp"
#include "qac/text.hpp"

using namespace qac;

namespace {

QueryDocPair pair_of(std::string q, std::string d, double clicks = 1)
{
    return {{std::move(q), clicks}, std::move(d), Origin::clicked};
}

std::vector<QueryDocPair> doc_with(const std::string& doc, std::size_t n)
{
    std::vector<QueryDocPair> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(pair_of("query " + doc + " " + std::to_string(i), doc));
    }
    return out;
}

// Plain recursion over the edit-distance definition.
std::size_t ref_edit(const std::string& a, const std::string& b)
{
    if (a.empty()) {
        return b.size();
    }
    if (b.empty()) {
        return a.size();
    }
    const std::string ra = a.substr(1), rb = b.substr(1);
    if (a[0] == b[0]) {
        return ref_edit(ra, rb);
    }
    return 1 + std::min({ref_edit(ra, b), ref_edit(a, rb), ref_edit(ra, rb)});
}

std::filesystem::path temp_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("qac_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("tsv round trips with escapes")
{
    std::vector<DocumentRecord> docs = {{"D1", "http://x.org", "Tab\there", "line one\nline two \\ end", {}}};
    const auto dir = temp_dir("tsv");
    write_corpus_tsv(dir / "c.tsv", docs);
    const auto back = read_corpus_tsv(dir / "c.tsv");
    REQUIRE(back.size() == 1);
    CHECK(back[0].title == docs[0].title);
    CHECK(back[0].body == docs[0].body);

    const std::vector<QueryDocPair> pairs = {pair_of("paris tourism", "D1", 3),
                                             {{"paris info", 0.25}, "D1", Origin::augmented}};
    write_pairs_tsv(dir / "p.tsv", pairs);
    CHECK(read_pairs_tsv(dir / "p.tsv") == pairs);
    CHECK(parse_pairs_tsv("abc\tD1\t2\n")[0].origin == Origin::clicked);
    CHECK_THROWS_AS(parse_pairs_tsv("abc\tD1\tmany\n"), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("preprocess: length, document size, duplicates, missing docs")
{
    std::vector<DocumentRecord> docs = {{"D10", "", "", "", {}}, {"D11", "", "", "", {}}, {"D500", "", "", "", {}}};
    auto pairs = doc_with("D10", 10);
    auto d11 = doc_with("D11", 11);
    pairs.insert(pairs.end(), d11.begin(), d11.end());
    auto d500 = doc_with("D500", 500);
    pairs.insert(pairs.end(), d500.begin(), d500.end());
    pairs.push_back(pair_of("ab", "D11"));
    pairs.push_back(pair_of("Query  D11 0", "D11", 4));
    pairs.push_back(pair_of("orphan query", "NOPE"));

    const auto r = preprocess(pairs, docs);
    CHECK(r.report.dropped_short == 1);
    CHECK(r.report.merged_duplicates == 1);
    CHECK(r.report.dropped_missing_doc == 1);
    CHECK(r.report.docs_dropped == 2);
    REQUIRE(r.pairs.size() == 11);
    for (const auto& p : r.pairs) {
        CHECK(p.doc_id == "D11");
    }
    const auto merged = std::find_if(r.pairs.begin(), r.pairs.end(),
                                     [](const QueryDocPair& p) { return p.query.text == "query d11 0"; });
    REQUIRE(merged != r.pairs.end());
    CHECK(merged->query.clicks == 5.0);
    CHECK(std::is_sorted(r.pairs.begin(), r.pairs.end(), [](const QueryDocPair& a, const QueryDocPair& b) {
        return std::tie(a.doc_id, a.query.text) < std::tie(b.doc_id, b.query.text);
    }));
}

TEST_CASE("classify_pair definitional cases")
{
    const std::vector<QueryDocPair> train = {pair_of("qqq1", "d1")};
    CHECK(classify_pair(pair_of("qqq1", "d1"), train) == Quadrant::SS);
    CHECK(classify_pair(pair_of("qqq1", "d2"), train) == Quadrant::SU);
    CHECK(classify_pair(pair_of("qqq2", "d1"), train) == Quadrant::US);
    CHECK(classify_pair(pair_of("qqq2", "d2"), train) == Quadrant::UU);
}

TEST_CASE("make_splits: invariants and determinism on the synthetic corpus")
{
    SynthOptions so;
    so.documents = 60;
    const auto corpus = generate_synthetic(so);
    const auto pre = preprocess(corpus.pairs, corpus.docs);
    const auto a = make_splits(pre.pairs, 7);
    const auto b = make_splits(pre.pairs, 7);
    CHECK(check_manifest(a).empty());
    CHECK(a.train == b.train);
    for (std::size_t q = 0; q < 4; ++q) {
        CHECK(a.test[q] == b.test[q]);
        CHECK(a.test[q].size() <= a.fractions.test_cap);
    }
    std::set<std::string> tq, td;
    std::set<std::pair<std::string, std::string>> tp;
    for (const auto& p : a.train) {
        tq.insert(p.query.text);
        td.insert(p.doc_id);
        tp.insert({p.query.text, p.doc_id});
    }
    for (auto q : {Quadrant::SS, Quadrant::SU, Quadrant::US, Quadrant::UU}) {
        for (const auto& p : a.quadrant(q)) {
            const bool qs = tq.count(p.query.text) != 0;
            const bool ds = td.count(p.doc_id) != 0;
            CHECK(classify_pair(p, a.train) == q);
            CHECK(qs == (q == Quadrant::SS || q == Quadrant::SU));
            CHECK(ds == (q == Quadrant::SS || q == Quadrant::US));
            CHECK(tp.count({p.query.text, p.doc_id}) == 0);
        }
    }
    const auto c = make_splits(pre.pairs, 8);
    CHECK_FALSE(c.train == a.train);

    const auto dir1 = temp_dir("m1");
    const auto dir2 = temp_dir("m2");
    write_manifest(a, dir1);
    write_manifest(b, dir2);
    for (const auto* name : {"train.tsv", "val.tsv", "test_ss.tsv", "test_uu.tsv", "manifest.json"}) {
        CHECK(pairs_to_tsv(read_pairs_tsv(dir1 / "train.tsv")) == pairs_to_tsv(read_pairs_tsv(dir2 / "train.tsv")));
        std::ifstream f1(dir1 / name), f2(dir2 / name);
        const std::string s1((std::istreambuf_iterator<char>(f1)), {});
        const std::string s2((std::istreambuf_iterator<char>(f2)), {});
        CHECK(s1 == s2);
    }
    const auto back = read_manifest(dir1);
    CHECK(back.seed == 7);
    CHECK(back.train.size() == a.train.size());
    CHECK(back.quadrant(Quadrant::UU).size() == a.quadrant(Quadrant::UU).size());
    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir2);

    const std::vector<Quadrant> qs = {Quadrant::SS, Quadrant::UU};
    const auto e1 = make_eval_examples(a, 3, qs);
    const auto e2 = make_eval_examples(a, 3, qs);
    REQUIRE(e1.size() == a.quadrant(Quadrant::SS).size() + a.quadrant(Quadrant::UU).size());
    for (std::size_t i = 0; i < e1.size(); ++i) {
        CHECK(e1[i].prefix == e2[i].prefix);
        CHECK(text::starts_with(e1[i].target, e1[i].prefix));
        CHECK(e1[i].prefix.size() < e1[i].target.size());
    }
}

TEST_CASE("dynamic prefix split")
{
    Rng rng(1);
    std::set<std::string> seen;
    for (int i = 0; i < 200; ++i) {
        const auto [p, s] = dynamic_prefix_split("abc", rng);
        CHECK(p + s == "abc");
        seen.insert(p);
    }
    CHECK(seen == std::set<std::string>{"a", "ab"});
    CHECK_THROWS_AS(dynamic_prefix_split("ab", rng), Error);
    Rng r1(9), r2(9);
    for (int i = 0; i < 20; ++i) {
        CHECK(dynamic_prefix_split("machine learning", r1) == dynamic_prefix_split("machine learning", r2));
    }
}

TEST_CASE("estimate_clicks")
{
    const std::map<std::string, double> sims = {{"n1", 0.9}, {"n2", 0.6}, {"n3", 0.0}};
    const Similarity sim = [&](std::string_view, std::string_view b) { return sims.at(std::string(b)); };
    const std::vector<WeightedQuery> two = {{"n1", 10}, {"n2", 20}};
    CHECK(estimate_clicks("q", two, sim) == doctest::Approx(14.0));
    const Similarity one_sim = [](std::string_view, std::string_view) { return 1.0; };
    const std::vector<WeightedQuery> one = {{"n1", 7}};
    CHECK(estimate_clicks("q", one, one_sim) == 7.0);
    const std::vector<WeightedQuery> zero = {{"n3", 7}};
    CHECK(estimate_clicks("q", zero, sim) == 0.0);
    CHECK_THROWS_AS(estimate_clicks("q", std::vector<WeightedQuery>{}, sim), Error);
    CHECK(trigram_cosine("paris", "paris") == doctest::Approx(1.0));
    CHECK(trigram_cosine("abc", "xyz") == 0.0);
}

TEST_CASE("levenshtein and near duplicates")
{
    CHECK(near_duplicate("abc", "abc"));
    CHECK(near_duplicate("abc", "abd"));
    CHECK_FALSE(near_duplicate("abc", "xyz"));
    CHECK(levenshtein("abc", "xyz") == 3);
    std::mt19937_64 g(6);
    for (int i = 0; i < 300; ++i) {
        std::string a, b;
        for (std::size_t j = 0; j < g() % 7; ++j) {
            a += static_cast<char>('a' + g() % 3);
        }
        for (std::size_t j = 0; j < g() % 7; ++j) {
            b += static_cast<char>('a' + g() % 3);
        }
        CHECK(levenshtein(a, b) == ref_edit(a, b));
        CHECK(near_duplicate(a, b) == (ref_edit(a, b) <= 1));
    }
    CHECK(levenshtein("caf\xC3\xA9", "cafe") == 1);
}

TEST_CASE("augmentation filters")
{
    const std::vector<DocumentRecord> docs = {{"D1", "", "", "Paris has many museums and parks.", {}}};
    const std::vector<QueryDocPair> clicked = {pair_of("paris museums", "D1", 10)};
    const std::vector<QueryDocPair> cands = {
        {{"paris museums", 0}, "D1", Origin::augmented},      // already clicked
        {{"paris museum", 0}, "D1", Origin::augmented},       // near duplicate
        {{"many museums", 0}, "D1", Origin::augmented},       // verbatim in body
        {{"louvre tickets", 0}, "D1", Origin::augmented},     // kept
        {{"louvre tickets", 0}, "D1", Origin::augmented},     // repeat
        {{"eiffel tower", 0}, "D9", Origin::augmented},       // unknown doc
    };
    AugmentReport rep;
    const auto kept = filter_augmented(cands, clicked, docs, &rep);
    CHECK(rep.candidates == 6);
    CHECK(rep.dropped_already_clicked == 2);
    CHECK(rep.dropped_near_duplicate == 1);
    CHECK(rep.dropped_verbatim == 1);
    CHECK(rep.dropped_missing_doc == 1);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].query.text == "louvre tickets");
    CHECK(kept[0].origin == Origin::augmented);
    CHECK(kept[0].query.clicks >= 0.0);
}

TEST_CASE("relevance response parsing and unconfigured client")
{
    CHECK(parse_relevance_response(R"({"query_relevance": true, "id":"1","Query":"q","docid":"d"})"));
    CHECK_FALSE(parse_relevance_response(R"({"query_relevance": false})"));
    CHECK(parse_relevance_response(
        R"({"choices":[{"message":{"content":"Sure: {\"query_relevance\": true, \"id\": \"1\"}"}}]})"));
    for (const auto* bad : {R"({"id":"1"})", "not json", R"({"query_relevance":"yes"})"}) {
        try {
            parse_relevance_response(bad);
            FAIL("expected parse error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::parse);
        }
    }
    const RelevanceClient client({});
    CHECK_FALSE(client.configured());
    const DocumentRecord doc{"D1", "", "", "body", {}};
    CHECK(client.classify(doc, "query", "1") == Relevance::unavailable);
    const auto prompt = relevance_prompt("body text", "the query", "7", "D1");
    CHECK(prompt.find("the query") != std::string::npos);
    CHECK(prompt.find("query_relevance") != std::string::npos);
}

TEST_CASE("rng")
{
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next() == b.next());
    }
    Rng r(1);
    std::vector<int> hits(5);
    for (int i = 0; i < 5000; ++i) {
        const auto v = r.below(5);
        REQUIRE(v < 5);
        ++hits[v];
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int h : hits) {
        CHECK(h > 850);
    }
    std::vector<int> v = {1, 2, 3, 4, 5, 6};
    r.shuffle(v);
    std::sort(v.begin(), v.end());
    CHECK(v == std::vector<int>{1, 2, 3, 4, 5, 6});
}
