#include <atomic>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "qac/engine.hpp"
#include "qac/error.hpp"
#include "qac/service.hpp"
#include "qac/text.hpp"

using namespace qac;
using json = nlohmann::json;

namespace {

std::vector<QueryDocPair> training_pairs()
{
    std::vector<QueryDocPair> out;
    const std::vector<std::pair<std::string, double>> qs = {
        {"paris tourism", 5}, {"paris history", 3}, {"python", 7},       {"python tutorial", 4},
        {"pandas tips", 2},   {"party ideas", 1},   {"pasta recipes", 2}, {"paris museums", 2}};
    for (std::size_t i = 0; i < qs.size(); ++i) {
        out.push_back({{qs[i].first, qs[i].second}, "T" + std::to_string(i % 3), Origin::clicked});
    }
    return out;
}

const GlobalModels& shared_models()
{
    static const GlobalModels models = [] {
        LmTrainOptions opts;
        opts.sampling = SplitSampling::all;
        return build_global_models(training_pairs(), 64, opts);
    }();
    return models;
}

DocumentRecord paris_doc()
{
    return {"D1", "https://paris.example", "Paris guide", "Paris has museums. Paris has history and parks.",
            {{"paris tourism", 5}, {"paris history", 3}, {"python", 7}}};
}

}  // namespace

TEST_CASE("mode and trie names")
{
    CHECK(parse_completion_mode("unguided") == CompletionMode::lm);
    CHECK(parse_completion_mode("GUIDED") == CompletionMode::guided);
    CHECK_THROWS_AS(parse_completion_mode("beam"), Error);
    CHECK(parse_trie_kind("docc") == TrieKind::docc);
    CHECK_THROWS_AS(parse_trie_kind("local"), Error);
}

TEST_CASE("sweep grid order")
{
    const auto grid = sweep_grid();
    REQUIRE(grid.size() == 48);
    CHECK(grid.front().alpha == 0.05);
    CHECK(grid.front().beta == 0.05);
    CHECK(grid.front().bias == 20);
    CHECK(grid[1].bias == 30);
    CHECK(grid[3].beta == 0.1);
    CHECK(grid.back().alpha == 0.5);
    CHECK(grid.back().bias == 40);
}

TEST_CASE("lm training sequences")
{
    const auto& m = shared_models();
    const std::vector<WeightedQuery> q = {{"pasta", 0}};
    LmTrainOptions all;
    all.sampling = SplitSampling::all;
    CHECK(lm_training_sequences(q, *m.tokenizer, all).size() == 4);
    LmTrainOptions dyn;
    const std::vector<WeightedQuery> popular = {{"pasta", 1000}};
    CHECK(lm_training_sequences(popular, *m.tokenizer, dyn).size() == 8);
    CHECK(lm_training_sequences(q, *m.tokenizer, dyn).size() == 1);
    for (const auto& s : lm_training_sequences(popular, *m.tokenizer, dyn)) {
        CHECK(s.back() == kEos);
        CHECK(std::count(s.begin(), s.end(), kSepSplit) == 1);
    }
    const auto agg = aggregate_queries(training_pairs());
    CHECK(agg.size() == 8);
    CHECK(std::is_sorted(agg.begin(), agg.end(),
                         [](const WeightedQuery& a, const WeightedQuery& b) { return a.text < b.text; }));
}

TEST_CASE("engine: ingest, replace and complete")
{
    Engine engine(shared_models());
    CHECK(engine.size() == 0);
    const auto st = engine.ingest(paris_doc());
    CHECK(st.docq_terminals == 3);
    CHECK_FALSE(st.replaced);
    CHECK(st.docc_terminals > 0);
    CHECK(engine.ingest(paris_doc()).replaced);
    CHECK(engine.size() == 1);

    DocumentRecord empty{"D2", "", "Empty", "", {{"pasta recipes", 1}}};
    const auto st2 = engine.ingest(empty);
    CHECK(st2.docc_terminals == 0);
    CHECK(engine.documents().size() == 2);

    CompleteOptions mpc;
    mpc.mode = CompletionMode::mpc;
    const auto got = engine.complete("D1", "par", mpc);
    const auto direct = CompletionTrie::build(paris_doc().queries).mpc("par", 10);
    REQUIRE(got.size() == 2);
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].text == direct[i].text);
        CHECK(got[i].source == SuggestionSource::mpc);
        CHECK(got[i].rank == i + 1);
    }

    CompleteOptions guided;
    guided.decode.initial_bias = 0;
    CompleteOptions lm;
    lm.mode = CompletionMode::lm;
    const auto a = engine.complete("D1", "pa", guided);
    const auto b = engine.complete("D1", "pa", lm);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].text == b[i].text);
    }

    CompleteOptions strong;
    strong.decode.initial_bias = 1e4;
    strong.decode.alpha = 0;
    strong.decode.beta = 0;
    for (const auto& s : engine.complete("D1", "pari", strong)) {
        CHECK(text::starts_with(s.text, "pari"));
    }

    try {
        engine.complete("NOPE", "pa", mpc);
        FAIL("expected not_found");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::not_found);
    }
    CompleteOptions zero = mpc;
    zero.k = 0;
    CHECK_THROWS_AS(engine.complete("D1", "pa", zero), Error);
    CompleteOptions docc_guided;
    docc_guided.trie = TrieKind::docc;
    CHECK_THROWS_AS(engine.complete("D1", "pa", docc_guided), Error);
    CompleteOptions tus;
    tus.context = ContextMode::P_TUS;
    CHECK_THROWS_AS(engine.complete("D1", "pa", tus), Error);

    for (auto ctx : {ContextMode::P_TU, ContextMode::P_TUD, ContextMode::P_TUK, ContextMode::SPARSE_RAG}) {
        CompleteOptions o;
        o.context = ctx;
        CHECK_FALSE(engine.complete("D1", "pa", o).empty());
    }
}

TEST_CASE("engine: snapshots are immutable under ingestion")
{
    Engine engine(shared_models());
    engine.ingest(paris_doc());
    const auto before = engine.snapshot();
    std::atomic<bool> done{false};
    std::thread writer([&] {
        for (int i = 0; i < 20; ++i) {
            auto d = paris_doc();
            d.doc_id = "W" + std::to_string(i);
            engine.ingest(std::move(d));
        }
        done = true;
    });
    CompleteOptions mpc;
    mpc.mode = CompletionMode::mpc;
    while (!done) {
        const auto snap = engine.snapshot();
        const auto n = snap->docs.size();
        CHECK(complete_in(*snap, "D1", "par", mpc).size() == 2);
        CHECK(snap->docs.size() == n);
    }
    writer.join();
    CHECK(before->docs.size() == 1);
    CHECK(engine.size() == 21);
    CHECK(engine.snapshot()->epoch > before->epoch);
}

TEST_CASE("document json parsing")
{
    const auto rec = parse_document_json(
        R"({"doc_id":"D9","title":"T","queries":["Paris  Tourism",{"text":"python","clicks":4},"ab"]})");
    CHECK(rec.doc_id == "D9");
    REQUIRE(rec.queries.size() == 2);
    CHECK(rec.queries[0].text == "paris tourism");
    CHECK(rec.queries[1].clicks == 4.0);
    auto msg = [](const char* body) {
        try {
            parse_document_json(body);
        } catch (const Error& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(msg(R"({"title":"x"})").find("doc_id") != std::string::npos);
    CHECK(msg(R"({"doc_id":"x","queries":[1]})").find("queries[0]") != std::string::npos);
    CHECK(msg(R"({"doc_id":"x","body":5})").find("body") != std::string::npos);
    CHECK_FALSE(msg("[1,2").empty());
}

TEST_CASE("service: HTTP contract")
{
    Engine engine(shared_models());
    ServiceOptions opts;
    opts.host = "127.0.0.1";
    opts.port = 0;
    Service service(engine, opts);
    const int port = service.bind();
    std::thread server([&] { service.serve(); });
    httplib::Client cli("127.0.0.1", port);

    auto health = cli.Get("/v1/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    const auto h = json::parse(health->body);
    CHECK(h["status"] == "ok");
    CHECK(h["corpus"] == 0);
    CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");

    auto listed = cli.Get("/v1/documents");
    REQUIRE(listed);
    CHECK(json::parse(listed->body)["documents"].empty());

    const std::string doc =
        R"({"doc_id":"D1","title":"Paris guide","url":"https://paris.example","body":"Paris has museums.",)"
        R"("queries":[{"text":"paris tourism","clicks":5},{"text":"paris history","clicks":3},{"text":"python","clicks":7}]})";
    auto created = cli.Post("/v1/documents", doc, "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    CHECK(json::parse(created->body)["docq_terminals"] == 3);
    auto replaced = cli.Post("/v1/documents", doc, "application/json");
    REQUIRE(replaced);
    CHECK(replaced->status == 200);
    CHECK(json::parse(replaced->body)["replaced"] == true);
    auto second = cli.Post("/v1/documents", R"({"doc_id":"D2","title":"Other"})", "application/json");
    REQUIRE(second);
    CHECK(json::parse(cli.Get("/v1/documents")->body)["documents"].size() == 2);

    auto bad_doc = cli.Post("/v1/documents", R"({"title":"x"})", "application/json");
    REQUIRE(bad_doc);
    CHECK(bad_doc->status == 400);
    CHECK(json::parse(bad_doc->body)["error"]["message"].get<std::string>().find("doc_id") != std::string::npos);

    auto mpc = cli.Get("/v1/complete?doc_id=D1&prefix=par&mode=mpc");
    REQUIRE(mpc);
    CHECK(mpc->status == 200);
    const auto body = json::parse(mpc->body);
    REQUIRE(body["suggestions"].size() == 2);
    CHECK(body["suggestions"][0]["text"] == "paris tourism");
    CHECK(body["suggestions"][0]["rank"] == 1);
    CHECK(body["suggestions"][0]["source"] == "mpc");
    CHECK(body.contains("latency_ms"));

    auto guided0 = json::parse(cli.Get("/v1/complete?doc_id=D1&prefix=pa&mode=guided&bias=0")->body);
    auto lm = json::parse(cli.Get("/v1/complete?doc_id=D1&prefix=pa&mode=lm")->body);
    REQUIRE(guided0["suggestions"].size() == lm["suggestions"].size());
    for (std::size_t i = 0; i < lm["suggestions"].size(); ++i) {
        CHECK(guided0["suggestions"][i]["text"] == lm["suggestions"][i]["text"]);
    }
    CompleteOptions direct;
    direct.mode = CompletionMode::guided;
    const auto lib = engine.complete("D1", "pa", direct);
    auto svc = json::parse(cli.Get("/v1/complete?doc_id=D1&prefix=pa&mode=guided")->body)["suggestions"];
    REQUIRE(svc.size() == lib.size());
    for (std::size_t i = 0; i < lib.size(); ++i) {
        CHECK(svc[i]["text"] == lib[i].text);
    }

    auto k0 = cli.Get("/v1/complete?doc_id=D1&prefix=pa&k=0");
    REQUIRE(k0);
    CHECK(k0->status == 400);
    CHECK(json::parse(k0->body)["error"]["code"] == "invalid_input");
    auto missing = cli.Get("/v1/complete?doc_id=ZZ&prefix=pa");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    auto bad_mode = cli.Get("/v1/complete?doc_id=D1&prefix=pa&mode=fast");
    REQUIRE(bad_mode);
    CHECK(bad_mode->status == 400);
    auto bad_alpha = cli.Get("/v1/complete?doc_id=D1&prefix=pa&alpha=abc");
    REQUIRE(bad_alpha);
    CHECK(bad_alpha->status == 400);
    auto no_route = cli.Get("/v1/nothing");
    REQUIRE(no_route);
    CHECK(no_route->status == 404);
    auto preflight = cli.Options("/v1/complete");
    REQUIRE(preflight);
    CHECK(preflight->status == 204);

    service.stop();
    server.join();
}
