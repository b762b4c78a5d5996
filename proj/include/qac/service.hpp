#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "qac/engine.hpp"

namespace httplib {
class Server;
}

namespace qac {

struct ServiceOptions {
    std::string host = "0.0.0.0";
    int port = 8080;  // 0 binds any free port
    std::optional<std::filesystem::path> ui_dir;
    std::string cors_origin = "*";
    CompleteOptions defaults;
};

/// HTTP/JSON front end over an Engine:
///   POST /v1/documents   GET /v1/documents   GET /v1/complete   GET /v1/health
/// Errors are {"error": {"code", "message"}}.
class Service {
  public:
    Service(Engine& engine, ServiceOptions options);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds the socket and returns the bound port; throws on failure.
    int bind();
    /// Serves until stop(); call bind() first.
    void serve();
    void stop();
    bool running() const;

  private:
    void install_routes();

    Engine& engine_;
    ServiceOptions options_;
    std::unique_ptr<httplib::Server> server_;
};

/// Parses a DocumentRecord JSON body; raises invalid_input naming the bad field.
DocumentRecord parse_document_json(std::string_view body);

}  // namespace qac
