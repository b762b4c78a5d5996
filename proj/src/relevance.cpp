#include <atomic>
#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "qac/dataset.hpp"
#include "qac/error.hpp"

namespace qac {

std::string relevance_prompt(std::string_view body, std::string_view query, std::string_view id,
                             std::string_view doc_id)
{
    std::string p;
    p += "<|im_start|>system\n[system](#instructions)\n# Task\n";
    p += "Given a document, the following query was retrieved by an information retrieval (IR) system as a "
         "potential query a user might type for searching for content within the document. Your task is to "
         "accurately classify whether the query is truly relevant to the document or not.\n";
    p += "# Input\n";
    p += "Document: \"" + std::string(body) + "\"\n";
    p += "Query: \"" + std::string(query) + "\"\n";
    p += "id : \"" + std::string(id) + "\"\n";
    p += "docid : \"" + std::string(doc_id) + "\"\n";
    p += "# Output\n";
    p += "Provide your classification judgement of the query relevance for the document STRICTLY in the following "
         "JSON format:\n{\n   \"query_relevance\": bool,\n   \"id\": string,\n   \"Query\": string,\n"
         "   \"docid\": string\n}\n";
    p += "# The query is relevant (true) if:\n"
         "- The document contains specific information that directly answers the query.\n"
         "- The document provides background knowledge, explanations, or context that meaningfully relates to the "
         "query.\n"
         "- The document discusses entities, topics, or events explicitly mentioned in the query.\n"
         "- A user who issued this query would find the document useful or informative in addressing their "
         "information need.\n";
    p += "# The query is not relevant (false) if:\n"
         "- The document does not address the topic, entities, or intent expressed in the query.\n"
         "- The content is too vague, general, or off-topic to satisfy the query's information needs.\n"
         "- There is no logical or semantic connection between the query and the document content.\n"
         "- The document might mention some terms from the query, but in a completely unrelated context.\n";
    p += "<|im_end|>";
    return p;
}

namespace {

[[noreturn]] void bad_payload(std::string_view why, std::string_view payload)
{
    constexpr std::size_t kShown = 500;
    std::string raw(payload.substr(0, kShown));
    if (payload.size() > kShown) {
        raw += "...";
    }
    fail(ErrorCode::parse, "relevance response " + std::string(why) + "; raw payload: " + raw);
}

std::string_view strip_fences(std::string_view s)
{
    const auto open = s.find('{');
    const auto close = s.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        return s;
    }
    return s.substr(open, close - open + 1);
}

}  // namespace

bool parse_relevance_response(std::string_view payload)
{
    auto j = nlohmann::json::parse(payload, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        bad_payload("is not a JSON object", payload);
    }
    if (j.contains("choices")) {
        const auto& choices = j["choices"];
        if (!choices.is_array() || choices.empty() || !choices[0].contains("message") ||
            !choices[0]["message"].contains("content") || !choices[0]["message"]["content"].is_string()) {
            bad_payload("has no choices[0].message.content string", payload);
        }
        const std::string content = choices[0]["message"]["content"].get<std::string>();
        j = nlohmann::json::parse(strip_fences(content), nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            bad_payload("message content is not a JSON object", payload);
        }
    }
    const auto it = j.find("query_relevance");
    if (it == j.end() || !it->is_boolean()) {
        bad_payload("lacks a boolean query_relevance field", payload);
    }
    return it->get<bool>();
}

Relevance RelevanceClient::classify(const DocumentRecord& doc, std::string_view query, std::string_view id) const
{
    if (!configured()) {
        return Relevance::unavailable;
    }
    static const std::regex kUrl(R"(^(http)://([^/:]+)(?::(\d+))?(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(options_.endpoint, m, kUrl)) {
        fail(ErrorCode::invalid_input, "relevance endpoint must be http://host[:port]/path, got '" +
                                           options_.endpoint + "'");
    }
    const std::string host = m[2];
    const int port = m[3].matched ? std::stoi(m[3]) : 80;
    const std::string path = m[4].matched ? std::string(m[4]) : "/";

    nlohmann::json req;
    req["model"] = options_.model;
    req["temperature"] = 0;
    req["messages"] = nlohmann::json::array(
        {{{"role", "system"}, {"content", relevance_prompt(doc.body, query, id, doc.doc_id)}}});

    httplib::Client cli(host, port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    cli.set_connection_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
    cli.set_read_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
    cli.set_write_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
    const auto res = cli.Post(path, req.dump(), "application/json");
    if (!res || res->status != 200) {
        return Relevance::unavailable;
    }
    return parse_relevance_response(res->body) ? Relevance::relevant : Relevance::not_relevant;
}

std::vector<Relevance> RelevanceClient::classify_all(
    std::span<const QueryDocPair> pairs, const std::unordered_map<std::string, const DocumentRecord*>& docs) const
{
    std::vector<Relevance> out(pairs.size(), Relevance::unavailable);
    if (!configured() || pairs.empty()) {
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < pairs.size(); i = next++) {
            const auto it = docs.find(pairs[i].doc_id);
            if (it == docs.end() || it->second == nullptr) {
                continue;
            }
            try {
                out[i] = classify(*it->second, pairs[i].query.text, std::to_string(i));
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!first_error) {
                    first_error = std::current_exception();
                }
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(options_.max_concurrency, pairs.size()));
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n; ++t) {
        threads.emplace_back(worker);
    }
    for (auto& t : threads) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
    return out;
}

}  // namespace qac
