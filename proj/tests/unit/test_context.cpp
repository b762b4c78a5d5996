#include <cmath>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "qac/context.hpp"
#include "qac/error.hpp"
#include "qac/text.hpp"

using namespace qac;

namespace {

double ref_bm25(const std::vector<std::string>& sentences, std::size_t which, const std::vector<std::string>& terms)
{
    std::vector<std::vector<std::string>> toks;
    double total = 0;
    for (const auto& s : sentences) {
        toks.push_back(text::words(s));
        total += static_cast<double>(toks.back().size());
    }
    const double n_docs = static_cast<double>(sentences.size());
    const double avg = total / n_docs;
    std::set<std::string> uniq(terms.begin(), terms.end());
    double score = 0;
    for (const auto& t : uniq) {
        double df = 0;
        for (const auto& ws : toks) {
            df += std::count(ws.begin(), ws.end(), t) > 0 ? 1 : 0;
        }
        const double idf = std::log(1 + (n_docs - df + 0.5) / (df + 0.5));
        const double tf = static_cast<double>(std::count(toks[which].begin(), toks[which].end(), t));
        const double len = static_cast<double>(toks[which].size());
        score += idf * tf * 2.2 / (tf + 1.2 * (1 - 0.75 + 0.75 * len / avg));
    }
    return score;
}

Tokenizer char_tokenizer()
{
    std::string all;
    for (char c = 'a'; c <= 'z'; ++c) {
        all += c;
    }
    const std::vector<std::string> corpus = {all + " .:/0123456789-"};
    return Tokenizer::train(corpus, 200);
}

Tokenizer merged_tokenizer()
{
    const std::vector<std::string> corpus = {"the quick brown fox jumps over the lazy dog",
                                             "pack my box with five dozen liquor jugs",
                                             "https://example.org/a-b 0123456789 . :",
                                             "the the the quick quick brown"};
    return Tokenizer::train(corpus, 90);
}

std::string words_body(std::size_t sentences, std::mt19937_64& g)
{
    static const std::vector<std::string> vocab = {"alpha", "beta", "gamma", "delta", "river", "stone",
                                                   "cloud", "market", "engine", "forest", "the", "of"};
    std::string body;
    for (std::size_t s = 0; s < sentences; ++s) {
        const std::size_t n = 3 + g() % 9;
        for (std::size_t i = 0; i < n; ++i) {
            body += (i ? " " : "") + vocab[g() % vocab.size()];
        }
        body += ". ";
    }
    return body;
}

}  // namespace

TEST_CASE("context mode names")
{
    CHECK(parse_context_mode("p+tu") == ContextMode::P_TU);
    CHECK(parse_context_mode("REL_DENSE_RAG") == ContextMode::REL_DENSE_RAG);
    CHECK(parse_context_mode("sparse-rag") == ContextMode::SPARSE_RAG);
    CHECK_THROWS_AS(parse_context_mode("nope"), Error);
    for (auto m : {ContextMode::P, ContextMode::P_TU, ContextMode::P_TUD, ContextMode::P_TUK, ContextMode::SPARSE_RAG,
                   ContextMode::DENSE_RAG, ContextMode::REL_DENSE_RAG}) {
        CHECK(parse_context_mode(to_string(m)) == m);
    }
}

TEST_CASE("keyphrases")
{
    const auto kp = extract_keyphrases("alpha beta. alpha gamma.");
    REQUIRE_FALSE(kp.empty());
    CHECK(kp[0].phrase == "alpha");
    CHECK(kp[0].score == 2.0);
    CHECK(extract_keyphrases("").empty());
    CHECK(extract_keyphrases("alpha beta. alpha gamma.", 3, 1).size() == 1);

    // Brute-force scoring of every candidate.
    std::mt19937_64 g(4);
    const auto body = words_body(12, g);
    const auto got = extract_keyphrases(body, 3, 1000);
    std::map<std::string, std::size_t> tf;
    const auto sentences = text::split_sentences(body);
    for (const auto& s : sentences) {
        for (const auto& w : text::words(s)) {
            if (!text::is_stopword(w)) {
                ++tf[w];
            }
        }
    }
    std::map<std::string, double> expect;
    for (std::size_t si = 0; si < sentences.size(); ++si) {
        const auto w = text::words(sentences[si]);
        for (std::size_t a = 0; a < w.size(); ++a) {
            for (std::size_t n = 1; n <= 3 && a + n <= w.size(); ++n) {
                bool clean = true;
                std::string phrase;
                double prod = 1;
                for (std::size_t b = a; b < a + n; ++b) {
                    clean = clean && !text::is_stopword(w[b]);
                    phrase += (b > a ? " " : "") + w[b];
                    prod *= static_cast<double>(tf[w[b]]);
                }
                if (clean && !expect.count(phrase)) {
                    expect[phrase] = prod / (1.0 + static_cast<double>(si));
                }
            }
        }
    }
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].score == doctest::Approx(expect.at(got[i].phrase)));
        if (i > 0) {
            const bool ordered = got[i - 1].score > got[i].score ||
                                 (got[i - 1].score == got[i].score && got[i - 1].phrase < got[i].phrase);
            CHECK(ordered);
        }
    }
    const auto again = extract_keyphrases(body, 3, 1000);
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(again[i].phrase == got[i].phrase);
    }
}

TEST_CASE("bm25: two-sentence closed form and ties")
{
    const Bm25Index idx("river stone. cloud forest.");
    const auto r = idx.retrieve("river", 20);
    REQUIRE(r.size() == 2);
    CHECK(r[0].index == 0);
    CHECK(r[0].score == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(r[1].score == 0.0);

    const auto none = idx.retrieve("zebra", 20);
    CHECK(none[0].index == 0);
    CHECK(none[1].index == 1);
    CHECK(idx.retrieve("river", 1).size() == 1);
}

TEST_CASE("bm25 matches the direct formula")
{
    std::mt19937_64 g(8);
    for (int trial = 0; trial < 20; ++trial) {
        const auto body = words_body(2 + g() % 10, g);
        const Bm25Index idx(body);
        const auto sentences = text::split_sentences(body);
        const std::string prefix = trial % 2 ? "alpha river of" : "stone stone cloud";
        const auto terms = text::words(prefix);
        const auto got = idx.retrieve(prefix, 100);
        REQUIRE(got.size() == sentences.size());
        for (const auto& s : got) {
            CHECK(std::abs(s.score - ref_bm25(sentences, s.index, terms)) < 1e-9);
        }
        for (std::size_t i = 1; i < got.size(); ++i) {
            CHECK((got[i - 1].score > got[i].score ||
                   (got[i - 1].score == got[i].score && got[i - 1].index < got[i].index)));
        }
    }
}

TEST_CASE("chunking window arithmetic")
{
    const std::string body(450, 'x');
    const auto chunks = chunk_document(body);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].offset == 0);
    CHECK(chunks[1].offset == 170);
    CHECK(chunks[2].offset == 340);
    CHECK(chunks[2].text.size() == 110);
    CHECK(chunk_document("").empty());
    CHECK(chunk_document(std::string(200, 'y')).size() == 1);
    // Multi-byte characters count once.
    std::string wide;
    for (int i = 0; i < 210; ++i) {
        wide += "\xC3\xA9";
    }
    const auto w = chunk_document(wide);
    REQUIRE(w.size() == 2);
    CHECK(text::codepoint_count(w[0].text) == 200);
    CHECK(w[1].offset == 170);
}

TEST_CASE("embedding table parse and dense retrieval")
{
    const auto table = EmbeddingTable::parse("QVEC1 2\nD1#0\t1,0\nD1#1\t0,1\nq\t1,0\n");
    CHECK(table.dim() == 2);
    CHECK(table.size() == 3);
    CHECK(EmbeddingTable::parse(table.to_text()).size() == 3);
    CHECK_THROWS_AS(EmbeddingTable::parse("QVEC1 2\nk\t1,2,3\n"), Error);
    CHECK_THROWS_AS(EmbeddingTable::parse("nope"), Error);

    DocumentRecord doc{"D1", "u", "t", std::string(300, 'z'), {}};
    const auto q = *table.find("q");
    const auto r = dense_retrieve(doc, table, q, 20);
    REQUIRE(r.size() == 2);
    CHECK(r[0].chunk.index == 0);
    CHECK(r[0].similarity == doctest::Approx(1.0));
    CHECK(r[1].similarity == doctest::Approx(0.0));

    DocumentRecord other{"D2", "u", "t", "body", {}};
    try {
        dense_retrieve(other, table, q, 20);
        FAIL("expected unavailable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::unavailable);
    }
}

TEST_CASE("assemble: per-mode content and budgets")
{
    const auto tok = char_tokenizer();
    DocumentRecord doc{"D1", "ab.org", "hi", "", {}};
    std::mt19937_64 g(2);
    doc.body = words_body(200, g);

    const auto p = assemble_context(doc, ContextMode::P, "alp", tok);
    CHECK(p.text.empty());
    CHECK(p.used.total() == 0);
    CHECK(build_context_model(p, tok) == nullptr);

    const auto tu = assemble_context(doc, ContextMode::P_TU, "alp", tok);
    CHECK(tu.used.title == 2);
    CHECK(tu.used.url == 6);
    CHECK(tu.used.document == 0);
    CHECK(build_context_model(tu, tok) != nullptr);

    const auto tud = assemble_context(doc, ContextMode::P_TUD, "alp", tok);
    CHECK(tok.encode(doc.body).size() > 1000);
    CHECK(tud.used.document == kDocumentBudget);

    CHECK_THROWS_AS(assemble_context(doc, ContextMode::P_TUS, "alp", tok), Error);
    for (auto m : {ContextMode::DENSE_RAG, ContextMode::REL_DENSE_RAG}) {
        try {
            assemble_context(doc, m, "alp", tok);
            FAIL("expected unavailable");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::unavailable);
        }
    }
}

TEST_CASE("assemble: budget ceiling holds for every mode and random input")
{
    const auto tok = merged_tokenizer();
    std::mt19937_64 g(12);
    std::vector<DocumentRecord> docs;
    EmbeddingTable vectors(4);
    auto rv = [&] {
        std::vector<float> v(4);
        for (auto& x : v) {
            x = static_cast<float>(static_cast<int>(g() % 200) - 100) / 100.0F;
        }
        return v;
    };
    for (int i = 0; i < 14; ++i) {
        DocumentRecord d;
        d.doc_id = "D" + std::to_string(i);
        d.title = words_body(1 + g() % 8, g);
        d.url = "https://example.org/" + words_body(1 + g() % 5, g);
        d.body = words_body(g() % 120, g);
        vectors.insert(d.doc_id, rv());
        for (const auto& c : chunk_document(d.body)) {
            vectors.insert(d.doc_id + "#" + std::to_string(c.index), rv());
        }
        docs.push_back(std::move(d));
    }
    vectors.insert("alpha be", rv());
    std::vector<const DocumentRecord*> pool;
    for (const auto& d : docs) {
        pool.push_back(&d);
    }
    ContextSources src;
    src.vectors = &vectors;
    src.related_pool = pool;
    for (const auto& d : docs) {
        for (auto m : {ContextMode::P, ContextMode::P_TU, ContextMode::P_TUD, ContextMode::P_TUK,
                       ContextMode::SPARSE_RAG, ContextMode::DENSE_RAG, ContextMode::REL_DENSE_RAG}) {
            const auto b = assemble_context(d, m, "Alpha  be", tok, src);
            CHECK(b.used.title <= kTitleBudget);
            CHECK(b.used.url <= kUrlBudget);
            CHECK(b.used.document <= kDocumentBudget);
            std::size_t recount = 0;
            for (const auto& s : b.segments) {
                recount += tok.encode(s).size();
            }
            CHECK(recount == b.used.total());
            CHECK(recount <= 416);
        }
    }
}

TEST_CASE("assemble: related dense retrieval searches similar documents")
{
    const auto tok = char_tokenizer();
    DocumentRecord self{"A", "a.org", "self", std::string(150, 'a'), {}};
    DocumentRecord near{"B", "b.org", "near", "bbbb bbbb", {}};
    DocumentRecord far{"C", "c.org", "far", "cccc cccc", {}};
    EmbeddingTable v(2);
    v.insert("A", {1, 0});
    v.insert("B", {1, 0.1F});
    v.insert("C", {0, 1});
    v.insert("A#0", {0, 1});
    v.insert("B#0", {1, 0});
    v.insert("C#0", {0.5F, 0.5F});
    v.insert("q", {1, 0});
    const std::vector<const DocumentRecord*> pool = {&self, &near, &far};
    ContextSources src;
    src.vectors = &v;
    src.related_pool = pool;
    const auto dense = assemble_context(self, ContextMode::DENSE_RAG, "q", tok, src);
    REQUIRE(dense.segments.size() == 3);
    CHECK(dense.segments[2] == std::string(150, 'a'));
    const auto rel = assemble_context(self, ContextMode::REL_DENSE_RAG, "q", tok, src);
    REQUIRE(rel.segments.size() == 5);
    CHECK(rel.segments[2] == "bbbb bbbb");
    CHECK(rel.segments[3] == "cccc cccc");
}
