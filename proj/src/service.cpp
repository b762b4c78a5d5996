#include "qac/service.hpp"

#include <chrono>
#include <charconv>

#include "httplib.h"
#include "json.hpp"
#include "qac/error.hpp"
#include "qac/kernels.hpp"
#include "qac/text.hpp"
#include "qac/version.hpp"

namespace qac {

using nlohmann::json;

namespace {

int http_status(ErrorCode code)
{
    switch (code) {
    case ErrorCode::invalid_input:
    case ErrorCode::parse: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::unavailable: return 503;
    case ErrorCode::corrupt_file:
    case ErrorCode::io: return 500;
    }
    return 500;
}

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message)
{
    send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

double double_param(const httplib::Request& req, const char* name, double fallback)
{
    if (!req.has_param(name)) {
        return fallback;
    }
    const std::string v = req.get_param_value(name);
    double out = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out)) {
        fail(ErrorCode::invalid_input, std::string("parameter '") + name + "' must be a finite number");
    }
    return out;
}

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback)
{
    if (!req.has_param(name)) {
        return fallback;
    }
    const std::string v = req.get_param_value(name);
    std::size_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || out == 0) {
        fail(ErrorCode::invalid_input, std::string("parameter '") + name + "' must be a positive integer");
    }
    return out;
}

json suggestion_json(const Suggestion& s)
{
    return {{"text", s.text},
            {"score", s.score},
            {"rank", s.rank},
            {"source", to_string(s.source)},
            {"trie_conforming", s.trie_conforming}};
}

json stats_json(const IngestStats& st)
{
    return {{"doc_id", st.doc_id},
            {"docq_terminals", st.docq_terminals},
            {"docc_terminals", st.docc_terminals},
            {"guidance_sequences", st.guidance_sequences},
            {"sentences", st.sentences},
            {"keyphrases", st.keyphrases},
            {"replaced", st.replaced},
            {"build_ms", st.build_ms}};
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
    }
}

}  // namespace

DocumentRecord parse_document_json(std::string_view body)
{
    const json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        fail(ErrorCode::invalid_input, "body must be a JSON object");
    }
    auto str_field = [&](const char* name, bool required) {
        const auto it = j.find(name);
        if (it == j.end() || it->is_null()) {
            if (required) {
                fail(ErrorCode::invalid_input, std::string("field '") + name + "' is required");
            }
            return std::string();
        }
        if (!it->is_string()) {
            fail(ErrorCode::invalid_input, std::string("field '") + name + "' must be a string");
        }
        return it->get<std::string>();
    };
    DocumentRecord rec;
    rec.doc_id = str_field("doc_id", true);
    if (rec.doc_id.empty()) {
        fail(ErrorCode::invalid_input, "field 'doc_id' must be non-empty");
    }
    rec.url = str_field("url", false);
    rec.title = str_field("title", false);
    rec.body = str_field("body", false);
    if (const auto it = j.find("queries"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) {
            fail(ErrorCode::invalid_input, "field 'queries' must be an array");
        }
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto& q = (*it)[i];
            const std::string where = "field 'queries[" + std::to_string(i) + "]'";
            std::string textv;
            double clicks = 1.0;
            if (q.is_string()) {
                textv = q.get<std::string>();
            } else if (q.is_object() && q.contains("text") && q["text"].is_string()) {
                textv = q["text"].get<std::string>();
                if (q.contains("clicks")) {
                    if (!q["clicks"].is_number() || q["clicks"].get<double>() < 0.0) {
                        fail(ErrorCode::invalid_input, where + ".clicks must be a non-negative number");
                    }
                    clicks = q["clicks"].get<double>();
                }
            } else {
                fail(ErrorCode::invalid_input, where + " must be a string or {text, clicks}");
            }
            if (auto wq = make_query(textv, clicks)) {
                rec.queries.push_back(std::move(*wq));
            }
        }
    }
    return rec;
}

Service::Service(Engine& engine, ServiceOptions options)
    : engine_(engine), options_(std::move(options)), server_(std::make_unique<httplib::Server>())
{
    install_routes();
}

Service::~Service()
{
    stop();
}

void Service::install_routes()
{
    auto& srv = *server_;
    const std::string origin = options_.cors_origin;
    srv.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
    srv.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    srv.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
        const auto snap = engine_.snapshot();
        send_json(res, 200,
                  {{"status", "ok"},
                   {"version", kVersion},
                   {"corpus", snap->docs.size()},
                   {"epoch", snap->epoch},
                   {"kernels", kernels::active().name},
                   {"language_model", static_cast<bool>(snap->models.model)}});
    });

    srv.Get("/v1/documents", [this](const httplib::Request&, httplib::Response& res) {
        json docs = json::array();
        for (const auto& d : engine_.documents()) {
            docs.push_back({{"doc_id", d.doc_id}, {"title", d.title}, {"url", d.url}, {"queries", d.queries}});
        }
        send_json(res, 200, {{"documents", docs}});
    });

    srv.Post("/v1/documents", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto st = engine_.ingest(parse_document_json(req.body));
            send_json(res, st.replaced ? 200 : 201, stats_json(st));
        });
    });

    srv.Get("/v1/complete", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto t0 = std::chrono::steady_clock::now();
            CompleteOptions opt = options_.defaults;
            if (!req.has_param("prefix")) {
                fail(ErrorCode::invalid_input, "parameter 'prefix' is required");
            }
            const std::string prefix = req.get_param_value("prefix");
            const std::string doc_id = req.has_param("doc_id") ? req.get_param_value("doc_id") : "";
            if (req.has_param("mode")) {
                opt.mode = parse_completion_mode(req.get_param_value("mode"));
            }
            if (req.has_param("trie")) {
                opt.trie = parse_trie_kind(req.get_param_value("trie"));
            }
            if (req.has_param("context")) {
                opt.context = parse_context_mode(req.get_param_value("context"));
            }
            opt.k = size_param(req, "k", opt.k);
            opt.decode.alpha = double_param(req, "alpha", opt.decode.alpha);
            opt.decode.beta = double_param(req, "beta", opt.decode.beta);
            opt.decode.initial_bias = double_param(req, "bias", opt.decode.initial_bias);
            opt.decode.beam_size = size_param(req, "beam", opt.decode.beam_size);
            opt.decode.max_steps = size_param(req, "steps", opt.decode.max_steps);
            opt.lambda = double_param(req, "lambda", opt.lambda);

            const auto snap = engine_.snapshot();
            const auto suggestions = complete_in(*snap, doc_id, prefix, opt);
            json list = json::array();
            for (const auto& s : suggestions) {
                list.push_back(suggestion_json(s));
            }
            const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            send_json(res, 200,
                      {{"doc_id", doc_id},
                       {"prefix", prefix},
                       {"mode", to_string(opt.mode)},
                       {"k", opt.k},
                       {"epoch", snap->epoch},
                       {"config",
                        {{"alpha", opt.decode.alpha},
                         {"beta", opt.decode.beta},
                         {"bias", opt.decode.initial_bias},
                         {"lambda", opt.lambda},
                         {"beam", opt.decode.beam_size},
                         {"context", to_string(opt.context)},
                         {"trie", to_string(opt.trie.value_or(opt.mode == CompletionMode::mpc ? TrieKind::docq
                                                                                              : TrieKind::global))}}},
                       {"suggestions", list},
                       {"latency_ms", ms}});
        });
    });

    if (options_.ui_dir) {
        if (!srv.set_mount_point("/", options_.ui_dir->string())) {
            fail(ErrorCode::io, "UI directory " + options_.ui_dir->string() + " does not exist");
        }
    }
    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            send_error(res, res.status, res.status == 404 ? "not_found" : "http_error",
                       res.status == 404 ? "no such route" : "request failed");
        }
    });
}

int Service::bind()
{
    int port = options_.port;
    if (port == 0) {
        port = server_->bind_to_any_port(options_.host);
    } else if (!server_->bind_to_port(options_.host, port)) {
        port = -1;
    }
    if (port < 0) {
        fail(ErrorCode::io, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    return port;
}

void Service::serve()
{
    server_->listen_after_bind();
}

void Service::stop()
{
    if (server_ && server_->is_running()) {
        server_->stop();
    }
}

bool Service::running() const
{
    return server_->is_running();
}

}  // namespace qac
