// qac: command-line driver for every pipeline stage.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qac/dataset.hpp"
#include "qac/engine.hpp"
#include "qac/error.hpp"
#include "qac/kernels.hpp"
#include "qac/service.hpp"
#include "qac/synth.hpp"
#include "qac/text.hpp"
#include "qac/version.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace qac;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct DecodeFlags {
    std::string mode = "guided";
    std::string trie;
    std::string context = "P";
    std::size_t k = 10;
    std::size_t beam = 25;
    std::size_t steps = 48;
    double alpha = 0.1;
    double beta = 0.05;
    double bias = 40.0;
    double lambda = kDefaultLambda;
    double length_penalty = 1.0;
    std::string bias_length = "beam";

    void add_to(CLI::App* app)
    {
        app->add_option("--mode", mode, "mpc, lm or guided")->capture_default_str();
        app->add_option("--trie", trie, "docq, docc or global (default: docq for mpc, global for guided)");
        app->add_option("--context", context, "P, P_TU, P_TUD, P_TUK, SPARSE_RAG, DENSE_RAG, REL_DENSE_RAG")
            ->capture_default_str();
        app->add_option("-k,--k", k, "suggestions per prefix")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--beam", beam, "beam size K")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--steps", steps, "maximum decoding steps T")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--alpha", alpha, "bias decay per token of length")->capture_default_str();
        app->add_option("--beta", beta, "bias decay per beam rank")->capture_default_str();
        app->add_option("--bias", bias, "initial bias b0")->capture_default_str();
        app->add_option("--lambda", lambda, "document-model interpolation weight")->capture_default_str();
        app->add_option("--length-penalty", length_penalty, "score = logprob / len^p")->capture_default_str();
        app->add_option("--bias-length", bias_length, "beam or prefix")->capture_default_str();
    }

    CompleteOptions resolve() const
    {
        CompleteOptions o;
        o.mode = parse_completion_mode(mode);
        if (!trie.empty()) {
            o.trie = parse_trie_kind(trie);
        }
        o.context = parse_context_mode(context);
        o.k = k;
        o.lambda = lambda;
        o.decode.beam_size = beam;
        o.decode.max_steps = steps;
        o.decode.alpha = alpha;
        o.decode.beta = beta;
        o.decode.initial_bias = bias;
        o.decode.length_penalty = length_penalty;
        if (bias_length == "beam") {
            o.decode.bias_length_source = BiasLengthSource::beam;
        } else if (bias_length == "prefix") {
            o.decode.bias_length_source = BiasLengthSource::prefix;
        } else {
            fail(ErrorCode::invalid_input, "--bias-length must be beam or prefix");
        }
        o.decode.top_k_out = k;
        o.decode.validate();
        return o;
    }

    ordered_json to_json() const
    {
        return {{"mode", mode},   {"trie", trie.empty() ? "default" : trie},
                {"context", context}, {"k", k},
                {"beam", beam},   {"steps", steps},
                {"alpha", alpha}, {"beta", beta},
                {"bias", bias},   {"lambda", lambda},
                {"length_penalty", length_penalty}, {"bias_length", bias_length}};
    }
};

struct EngineFlags {
    std::string models = "models";
    std::string corpus;
    std::string pairs;
    std::string vectors;

    void add_to(CLI::App* app, bool corpus_required)
    {
        app->add_option("--models", models, "directory with tokenizer/model/trie files")->capture_default_str();
        auto* c = app->add_option("--corpus", corpus, "corpus TSV (doc_id, url, title, body)");
        if (corpus_required) {
            c->required();
        }
        app->add_option("--pairs", pairs, "pairs TSV whose queries populate DocQ tries (usually train.tsv)");
        app->add_option("--vectors", vectors, "embedding table for dense context modes and SBMRR");
    }

    ordered_json to_json() const
    {
        return {{"models", models}, {"corpus", corpus}, {"pairs", pairs}, {"vectors", vectors}};
    }
};

void log_config(std::string_view command, const ordered_json& cfg)
{
    ordered_json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["kernels"] = kernels::active().name;
    j["config"] = cfg;
    std::cerr << "config " << j.dump() << "\n";
}

std::unique_ptr<Engine> load_engine(const EngineFlags& f, std::span<const QueryDocPair> doc_pairs)
{
    GlobalModels models = load_global_models(ModelPaths{f.models});
    if (!f.vectors.empty()) {
        models.vectors = std::make_shared<const EmbeddingTable>(EmbeddingTable::load(f.vectors));
    }
    auto engine = std::make_unique<Engine>(std::move(models));
    if (!f.corpus.empty()) {
        auto docs = read_corpus_tsv(f.corpus);
        attach_queries(docs, doc_pairs);
        engine->ingest_all(std::move(docs));
    }
    return engine;
}

std::vector<QueryDocPair> maybe_pairs(const std::string& path)
{
    return path.empty() ? std::vector<QueryDocPair>{} : read_pairs_tsv(path);
}

std::vector<Quadrant> parse_quadrants(const std::string& list)
{
    std::vector<Quadrant> out;
    for (const auto& part : text::split(list, ',')) {
        if (!part.empty()) {
            out.push_back(parse_quadrant(part));
        }
    }
    if (out.empty()) {
        fail(ErrorCode::invalid_input, "--quadrants is empty");
    }
    return out;
}

std::vector<EvalExample> load_examples(const std::string& splits, const std::string& quadrants, std::uint64_t seed,
                                       std::size_t limit)
{
    const SplitManifest m = read_manifest(splits);
    const auto qs = parse_quadrants(quadrants);
    auto all = make_eval_examples(m, seed, qs);
    if (limit == 0) {
        return all;
    }
    // Keep the first `limit` examples of each quadrant.
    std::vector<EvalExample> out;
    std::array<std::size_t, 4> taken{};
    for (auto& ex : all) {
        auto& n = taken[static_cast<std::size_t>(ex.quadrant)];
        if (n < limit) {
            ++n;
            out.push_back(std::move(ex));
        }
    }
    return out;
}

std::atomic<Service*> g_service{nullptr};

void on_signal(int)
{
    if (Service* s = g_service.load()) {
        s->stop();
    }
}

std::string env_or(const char* name, std::string fallback)
{
    const char* v = std::getenv(name);
    return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Document-scoped query auto-completion: tries, soft trie-guided beam search, evaluation"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "write the synthetic corpus and click pairs");
    SynthOptions synth;
    std::string gen_out = "data";
    gen->add_option("--out-dir", gen_out, "output directory")->capture_default_str();
    gen->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
    gen->add_option("--docs", synth.documents, "number of documents")->capture_default_str();

    // prepare
    auto* prep = app.add_subcommand("prepare", "filter raw pairs (length, duplicates, per-document query counts)");
    std::string prep_corpus;
    std::string prep_pairs;
    std::string prep_aug;
    std::string prep_out;
    std::string prep_endpoint = env_or("QAC_RELEVANCE_ENDPOINT", "");
    prep->add_option("--corpus", prep_corpus, "corpus TSV")->required();
    prep->add_option("--pairs", prep_pairs, "raw clicked pairs TSV")->required();
    prep->add_option("--augmented", prep_aug, "pre-mined augmentation candidates TSV");
    prep->add_option("--relevance-endpoint", prep_endpoint, "chat-completion URL for relevance labels");
    prep->add_option("--out", prep_out, "filtered pairs TSV")->required();

    // make-splits
    auto* splits = app.add_subcommand("make-splits", "build train/val and SS/SU/US/UU test splits");
    std::string sp_pairs;
    std::string sp_out = "splits";
    std::uint64_t sp_seed = 7;
    SplitFractions fr;
    splits->add_option("--pairs", sp_pairs, "preprocessed pairs TSV")->required();
    splits->add_option("--out-dir", sp_out, "manifest directory")->capture_default_str();
    splits->add_option("--seed", sp_seed, "split seed")->capture_default_str();
    splits->add_option("--seen-docs", fr.seen_docs, "fraction of documents in the seen pool")->capture_default_str();
    splits->add_option("--seen-queries", fr.seen_queries, "fraction of queries in the seen pool")->capture_default_str();
    splits->add_option("--holdout", fr.holdout, "seen/seen pairs held out as test candidates")->capture_default_str();
    splits->add_option("--validation", fr.validation, "seen/seen pairs held out for validation")->capture_default_str();
    splits->add_option("--test-cap", fr.test_cap, "maximum pairs per quadrant")->capture_default_str();

    // train-tokenizer
    auto* ttok = app.add_subcommand("train-tokenizer", "train the BPE tokenizer on training queries");
    std::string tt_pairs;
    std::string tt_out;
    std::size_t tt_vocab = kDefaultVocabSize;
    ttok->add_option("--pairs", tt_pairs, "training pairs TSV")->required();
    ttok->add_option("--vocab", tt_vocab, "vocabulary size")->capture_default_str();
    ttok->add_option("--out", tt_out, "tokenizer file (default: <models>/tokenizer.qtok)");
    std::string tt_models = "models";
    ttok->add_option("--models", tt_models, "model directory")->capture_default_str();

    // train-lm
    auto* tlm = app.add_subcommand("train-lm", "train the global n-gram model on split training queries");
    std::string lm_pairs;
    std::string lm_models = "models";
    std::string lm_out;
    std::string lm_sampling = "dynamic";
    LmTrainOptions lm;
    tlm->add_option("--pairs", lm_pairs, "training pairs TSV")->required();
    tlm->add_option("--models", lm_models, "model directory holding tokenizer.qtok")->capture_default_str();
    tlm->add_option("--out", lm_out, "model file (default: <models>/global.qngram)");
    tlm->add_option("--order", lm.order, "n-gram order")->capture_default_str();
    tlm->add_option("--discount", lm.discount, "absolute discount")->capture_default_str();
    tlm->add_option("--seed", lm.seed, "split sampling seed")->capture_default_str();
    tlm->add_option("--sampling", lm_sampling, "dynamic or all")->capture_default_str();

    // build-trie
    auto* btrie = app.add_subcommand("build-trie", "build a completion or guidance trie");
    std::string bt_kind = "global";
    std::string bt_pairs;
    std::string bt_corpus;
    std::string bt_doc;
    std::string bt_models = "models";
    std::string bt_out;
    btrie->add_option("--kind", bt_kind, "global, guidance, docq or docc")->capture_default_str();
    btrie->add_option("--pairs", bt_pairs, "pairs TSV (global, guidance, docq)");
    btrie->add_option("--corpus", bt_corpus, "corpus TSV (docc)");
    btrie->add_option("--doc-id", bt_doc, "document for docq/docc");
    btrie->add_option("--models", bt_models, "model directory (tokenizer for guidance)")->capture_default_str();
    btrie->add_option("--out", bt_out, "output file (default: <models>/global.qtrie or global.gtrie)");

    // complete
    auto* comp = app.add_subcommand("complete", "print completions for one prefix");
    EngineFlags c_engine;
    DecodeFlags c_decode;
    std::string c_doc;
    std::string c_prefix;
    c_engine.add_to(comp, false);
    c_decode.add_to(comp);
    comp->add_option("--doc-id", c_doc, "document id");
    comp->add_option("--prefix", c_prefix, "typed prefix")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate modes over test quadrants");
    EngineFlags e_engine;
    DecodeFlags e_decode;
    std::string e_splits = "splits";
    std::string e_quadrants = "SS,SU,US,UU";
    std::string e_modes;
    std::uint64_t e_seed = 1;
    std::size_t e_limit = 0;
    bool e_no_tes = false;
    bool e_bleu_max = false;
    std::string e_format = "both";
    e_engine.add_to(ev, true);
    e_decode.add_to(ev);
    ev->add_option("--splits", e_splits, "manifest directory")->capture_default_str();
    ev->add_option("--quadrants", e_quadrants, "comma-separated quadrants")->capture_default_str();
    ev->add_option("--modes", e_modes, "comma-separated modes (default: --mode)");
    ev->add_option("--seed", e_seed, "prefix sampling seed")->capture_default_str();
    ev->add_option("--limit", e_limit, "examples per quadrant (0 = all)")->capture_default_str();
    ev->add_flag("--no-tes", e_no_tes, "skip the keystroke simulation");
    ev->add_flag("--bleu-max", e_bleu_max, "BLEU_RR as max_k BLEU/k instead of the harmonic-normalized sum");
    ev->add_option("--format", e_format, "tsv, table or both")->capture_default_str();

    // sweep
    auto* sw = app.add_subcommand("sweep", "alpha x beta x bias grid, one report row per cell");
    EngineFlags s_engine;
    DecodeFlags s_decode;
    std::string s_splits = "splits";
    std::string s_quadrant = "SS";
    std::uint64_t s_seed = 1;
    std::size_t s_limit = 100;
    bool s_no_tes = false;
    s_engine.add_to(sw, true);
    s_decode.add_to(sw);
    sw->add_option("--splits", s_splits, "manifest directory")->capture_default_str();
    sw->add_option("--quadrant", s_quadrant, "quadrant to evaluate")->capture_default_str();
    sw->add_option("--seed", s_seed, "prefix sampling seed")->capture_default_str();
    sw->add_option("--limit", s_limit, "examples (0 = all)")->capture_default_str();
    sw->add_flag("--no-tes", s_no_tes, "skip the keystroke simulation");

    // serve
    auto* srv = app.add_subcommand("serve", "run the HTTP service");
    EngineFlags v_engine;
    DecodeFlags v_decode;
    int v_port = std::atoi(env_or("QAC_PORT", "8080").c_str());
    std::string v_host = "0.0.0.0";
    std::string v_ui;
    std::size_t v_vocab = kDefaultVocabSize;
    v_engine.corpus = env_or("QAC_CORPUS", "");
    v_engine.add_to(srv, false);
    v_decode.add_to(srv);
    srv->add_option("--port", v_port, "listen port (env QAC_PORT)")->capture_default_str();
    srv->add_option("--host", v_host, "listen address")->capture_default_str();
    srv->add_option("--ui-dir", v_ui, "static files served at /");
    srv->add_option("--vocab", v_vocab, "vocabulary size when models are trained at startup")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (gen->parsed()) {
            log_config("gen-corpus", {{"out_dir", gen_out}, {"seed", synth.seed}, {"docs", synth.documents}});
            const auto corpus = generate_synthetic(synth);
            fs::create_directories(gen_out);
            write_corpus_tsv(fs::path(gen_out) / "corpus.tsv", corpus.docs);
            write_pairs_tsv(fs::path(gen_out) / "pairs.tsv", corpus.pairs);
            std::cout << "documents\t" << corpus.docs.size() << "\npairs\t" << corpus.pairs.size() << "\n";
        } else if (prep->parsed()) {
            log_config("prepare", {{"corpus", prep_corpus},
                                   {"pairs", prep_pairs},
                                   {"augmented", prep_aug},
                                   {"relevance_endpoint", prep_endpoint},
                                   {"out", prep_out}});
            const auto docs = read_corpus_tsv(prep_corpus);
            auto raw = read_pairs_tsv(prep_pairs);
            AugmentReport aug;
            if (!prep_aug.empty()) {
                const auto cands = read_pairs_tsv(prep_aug);
                auto kept = filter_augmented(cands, raw, docs, &aug);
                RelevanceClient client({prep_endpoint});
                if (client.configured()) {
                    std::unordered_map<std::string, const DocumentRecord*> by_id;
                    for (const auto& d : docs) {
                        by_id[d.doc_id] = &d;
                    }
                    const auto verdicts = client.classify_all(kept, by_id);
                    std::vector<QueryDocPair> relevant;
                    std::size_t unavailable = 0;
                    for (std::size_t i = 0; i < kept.size(); ++i) {
                        unavailable += verdicts[i] == Relevance::unavailable ? 1 : 0;
                        // Pairs without a verdict are kept.
                        if (verdicts[i] != Relevance::not_relevant) {
                            relevant.push_back(kept[i]);
                        }
                    }
                    std::cout << "relevance_rejected\t" << kept.size() - relevant.size()
                              << "\nrelevance_unavailable\t" << unavailable << "\n";
                    kept = std::move(relevant);
                }
                raw.insert(raw.end(), kept.begin(), kept.end());
            }
            const auto res = preprocess(raw, docs);
            write_pairs_tsv(prep_out, res.pairs);
            const auto& r = res.report;
            std::size_t clicked = 0;
            for (const auto& p : res.pairs) {
                clicked += p.origin == Origin::clicked ? 1 : 0;
            }
            std::cout << "input\t" << r.input << "\ndropped_short\t" << r.dropped_short << "\nmerged_duplicates\t"
                      << r.merged_duplicates << "\ndropped_missing_doc\t" << r.dropped_missing_doc
                      << "\ndropped_doc_size\t" << r.dropped_doc_size << "\ndocs_dropped\t" << r.docs_dropped
                      << "\naugmented_candidates\t" << aug.candidates << "\naugmented_kept\t" << aug.kept
                      << "\nkept\t" << r.kept << "\nclicked_ratio\t"
                      << (res.pairs.empty() ? 0.0 : static_cast<double>(clicked) / static_cast<double>(res.pairs.size()))
                      << "\n";
        } else if (splits->parsed()) {
            log_config("make-splits", {{"pairs", sp_pairs},
                                       {"out_dir", sp_out},
                                       {"seed", sp_seed},
                                       {"seen_docs", fr.seen_docs},
                                       {"seen_queries", fr.seen_queries},
                                       {"holdout", fr.holdout},
                                       {"validation", fr.validation},
                                       {"test_cap", fr.test_cap}});
            const auto pairs = read_pairs_tsv(sp_pairs);
            const auto m = make_splits(pairs, sp_seed, fr);
            for (const auto& w : m.warnings) {
                std::cerr << "warning: " << w << "\n";
            }
            const auto problems = check_manifest(m);
            for (const auto& p : problems) {
                std::cerr << "error: " << p << "\n";
            }
            if (!problems.empty()) {
                return kExitData;
            }
            write_manifest(m, sp_out);
            std::cout << "train\t" << m.train.size() << "\nval\t" << m.validation.size();
            for (Quadrant q : {Quadrant::SS, Quadrant::SU, Quadrant::US, Quadrant::UU}) {
                std::cout << "\n" << to_string(q) << "\t" << m.quadrant(q).size();
            }
            std::cout << "\n";
        } else if (ttok->parsed()) {
            const std::string out = tt_out.empty() ? ModelPaths{tt_models}.tokenizer().string() : tt_out;
            log_config("train-tokenizer", {{"pairs", tt_pairs}, {"vocab", tt_vocab}, {"out", out}});
            const auto queries = aggregate_queries(read_pairs_tsv(tt_pairs));
            std::vector<std::string> corpus;
            for (const auto& q : queries) {
                corpus.push_back(q.text);
            }
            const auto tok = Tokenizer::train(corpus, tt_vocab);
            fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
            tok.save(out);
            std::cout << "vocab_size\t" << tok.vocab_size() << "\nmerges\t" << tok.merges().size() << "\n";
        } else if (tlm->parsed()) {
            const ModelPaths paths{lm_models};
            const std::string out = lm_out.empty() ? paths.model().string() : lm_out;
            if (lm_sampling == "dynamic") {
                lm.sampling = SplitSampling::dynamic;
            } else if (lm_sampling == "all") {
                lm.sampling = SplitSampling::all;
            } else {
                fail(ErrorCode::invalid_input, "--sampling must be dynamic or all");
            }
            log_config("train-lm", {{"pairs", lm_pairs},
                                    {"tokenizer", paths.tokenizer().string()},
                                    {"order", lm.order},
                                    {"discount", lm.discount},
                                    {"seed", lm.seed},
                                    {"sampling", lm_sampling},
                                    {"out", out}});
            const auto tok = Tokenizer::load(paths.tokenizer());
            const auto queries = aggregate_queries(read_pairs_tsv(lm_pairs));
            const auto model = train_global_model(queries, tok, lm);
            model.save(out);
            std::cout << "order\t" << model.order() << "\nvocab_size\t" << model.vocab_size() << "\ncontexts\t"
                      << model.context_count(static_cast<std::size_t>(model.order() - 1)) << "\n";
        } else if (btrie->parsed()) {
            const ModelPaths paths{bt_models};
            log_config("build-trie", {{"kind", bt_kind},
                                      {"pairs", bt_pairs},
                                      {"corpus", bt_corpus},
                                      {"doc_id", bt_doc},
                                      {"models", bt_models},
                                      {"out", bt_out}});
            auto need = [](const std::string& v, const char* flag) {
                if (v.empty()) {
                    fail(ErrorCode::invalid_input, std::string(flag) + " is required for this kind");
                }
            };
            if (bt_kind == "global" || bt_kind == "docq") {
                need(bt_pairs, "--pairs");
                auto pairs = read_pairs_tsv(bt_pairs);
                if (bt_kind == "docq") {
                    need(bt_doc, "--doc-id");
                    need(bt_out, "--out");
                    std::erase_if(pairs, [&](const QueryDocPair& p) { return p.doc_id != bt_doc; });
                }
                const auto trie = CompletionTrie::build(aggregate_queries(pairs));
                const std::string out = bt_out.empty() ? paths.trie().string() : bt_out;
                trie.save(out);
                std::cout << "terminals\t" << trie.terminal_count() << "\nnodes\t" << trie.node_count() << "\n";
            } else if (bt_kind == "guidance") {
                need(bt_pairs, "--pairs");
                const auto tok = Tokenizer::load(paths.tokenizer());
                auto pairs = read_pairs_tsv(bt_pairs);
                if (!bt_doc.empty()) {
                    std::erase_if(pairs, [&](const QueryDocPair& p) { return p.doc_id != bt_doc; });
                }
                const auto trie = GuidanceTrie::build(aggregate_queries(pairs), tok);
                const std::string out = bt_out.empty() ? paths.guide().string() : bt_out;
                trie.save(out);
                std::cout << "sequences\t" << trie.sequence_count() << "\nnodes\t" << trie.node_count() << "\n";
            } else if (bt_kind == "docc") {
                need(bt_corpus, "--corpus");
                need(bt_doc, "--doc-id");
                need(bt_out, "--out");
                const auto docs = read_corpus_tsv(bt_corpus);
                const auto it = std::find_if(docs.begin(), docs.end(),
                                             [&](const DocumentRecord& d) { return d.doc_id == bt_doc; });
                if (it == docs.end()) {
                    fail(ErrorCode::not_found, "unknown doc_id '" + bt_doc + "'");
                }
                const auto trie = CompletionTrie::build_docc(it->body);
                trie.save(bt_out);
                std::cout << "terminals\t" << trie.terminal_count() << "\nnodes\t" << trie.node_count() << "\n";
            } else {
                fail(ErrorCode::invalid_input, "--kind must be global, guidance, docq or docc");
            }
        } else if (comp->parsed()) {
            ordered_json cfg = c_decode.to_json();
            cfg["engine"] = c_engine.to_json();
            cfg["doc_id"] = c_doc;
            cfg["prefix"] = c_prefix;
            log_config("complete", cfg);
            const auto opts = c_decode.resolve();
            const auto pairs = maybe_pairs(c_engine.pairs);
            const auto engine = load_engine(c_engine, pairs);
            for (const auto& s : engine->complete(c_doc, c_prefix, opts)) {
                std::printf("%zu\t%.6f\t%s\n", s.rank, s.score, s.text.c_str());
            }
        } else if (ev->parsed()) {
            ordered_json cfg = e_decode.to_json();
            cfg["engine"] = e_engine.to_json();
            cfg["splits"] = e_splits;
            cfg["quadrants"] = e_quadrants;
            cfg["modes"] = e_modes.empty() ? e_decode.mode : e_modes;
            cfg["seed"] = e_seed;
            cfg["limit"] = e_limit;
            cfg["tes"] = !e_no_tes;
            cfg["bleu_rr"] = e_bleu_max ? "max" : "harmonic";
            log_config("eval", cfg);
            if (e_format != "tsv" && e_format != "table" && e_format != "both") {
                fail(ErrorCode::invalid_input, "--format must be tsv, table or both");
            }
            const auto base = e_decode.resolve();
            const SplitManifest manifest = read_manifest(e_splits);
            const auto engine =
                load_engine(e_engine, e_engine.pairs.empty() ? manifest.train : read_pairs_tsv(e_engine.pairs));
            const auto examples = load_examples(e_splits, e_quadrants, e_seed, e_limit);
            std::vector<MetricReport> all;
            for (const auto& mode : text::split(e_modes.empty() ? e_decode.mode : e_modes, ',')) {
                CompleteOptions opts = base;
                opts.mode = parse_completion_mode(mode);
                EvalOptions eo;
                eo.mode_label = std::string(to_string(opts.mode));
                eo.top_n = opts.k;
                eo.compute_tes = !e_no_tes;
                eo.bleu_norm = e_bleu_max ? BleuRrNorm::max : BleuRrNorm::harmonic;
                const auto res = evaluate_engine(*engine, examples, opts, eo);
                for (const auto& w : res.warnings) {
                    std::cerr << "warning: " << w << "\n";
                }
                all.insert(all.end(), res.reports.begin(), res.reports.end());
            }
            std::stable_sort(all.begin(), all.end(), [](const MetricReport& a, const MetricReport& b) {
                return a.quadrant < b.quadrant;
            });
            if (e_format != "table") {
                std::cout << report_tsv_header() << "\n";
                for (const auto& r : all) {
                    std::cout << report_tsv_row(r) << "\n";
                }
            }
            if (e_format == "both") {
                std::cout << "\n";
            }
            if (e_format != "tsv") {
                std::cout << report_table(all);
            }
        } else if (sw->parsed()) {
            ordered_json cfg = s_decode.to_json();
            cfg["engine"] = s_engine.to_json();
            cfg["splits"] = s_splits;
            cfg["quadrant"] = s_quadrant;
            cfg["seed"] = s_seed;
            cfg["limit"] = s_limit;
            cfg["tes"] = !s_no_tes;
            log_config("sweep", cfg);
            const auto base = s_decode.resolve();
            const SplitManifest manifest = read_manifest(s_splits);
            const auto engine =
                load_engine(s_engine, s_engine.pairs.empty() ? manifest.train : read_pairs_tsv(s_engine.pairs));
            const auto examples = load_examples(s_splits, s_quadrant, s_seed, s_limit);
            std::cout << "alpha\tbeta\tbias\t" << report_tsv_header() << "\n";
            for (const auto& cell : sweep_grid()) {
                CompleteOptions opts = base;
                opts.decode.alpha = cell.alpha;
                opts.decode.beta = cell.beta;
                opts.decode.initial_bias = cell.bias;
                EvalOptions eo;
                eo.mode_label = std::string(to_string(opts.mode));
                eo.top_n = opts.k;
                eo.compute_tes = !s_no_tes;
                const auto res = evaluate_engine(*engine, examples, opts, eo);
                char head[64];
                std::snprintf(head, sizeof head, "%g\t%g\t%g\t", cell.alpha, cell.beta, cell.bias);
                if (res.reports.empty()) {
                    MetricReport empty;
                    empty.quadrant = parse_quadrant(s_quadrant);
                    empty.mode = eo.mode_label;
                    std::cout << head << report_tsv_row(empty) << "\n";
                } else {
                    std::cout << head << report_tsv_row(res.reports.front()) << "\n";
                }
                std::cout.flush();
            }
        } else if (srv->parsed()) {
            ordered_json cfg = v_decode.to_json();
            cfg["engine"] = v_engine.to_json();
            cfg["host"] = v_host;
            cfg["port"] = v_port;
            cfg["ui_dir"] = v_ui;
            log_config("serve", cfg);
            ServiceOptions so;
            so.host = v_host;
            so.port = v_port;
            so.defaults = v_decode.resolve();
            if (!v_ui.empty()) {
                so.ui_dir = v_ui;
            }
            const auto pairs = maybe_pairs(v_engine.pairs);
            GlobalModels models;
            if (fs::exists(ModelPaths{v_engine.models}.tokenizer())) {
                models = load_global_models(ModelPaths{v_engine.models});
            } else if (!pairs.empty()) {
                std::cerr << "no models in " << v_engine.models << "; training from --pairs\n";
                models = build_global_models(pairs, v_vocab, {});
            } else {
                std::cerr << "warning: no models and no pairs; only mpc completion is available\n";
            }
            if (!v_engine.vectors.empty()) {
                models.vectors = std::make_shared<const EmbeddingTable>(EmbeddingTable::load(v_engine.vectors));
            }
            Engine engine(std::move(models));
            if (!v_engine.corpus.empty()) {
                auto docs = read_corpus_tsv(v_engine.corpus);
                attach_queries(docs, pairs);
                engine.ingest_all(std::move(docs));
            }
            Service service(engine, so);
            const int port = service.bind();
            std::cerr << "listening on " << v_host << ":" << port << " with " << engine.size() << " documents\n";
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            service.serve();
            g_service = nullptr;
        }
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
        return e.code() == ErrorCode::invalid_input ? kExitUsage : kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
