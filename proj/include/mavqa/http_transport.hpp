#pragma once

// Pulls in cpp-httplib; include only where the HTTP transport is actually
// constructed (the CLI). Everything else links against the ChatTransport
// interface in llm_gateway.hpp.

#include <httplib.h>

#include "mavqa/llm_gateway.hpp"

namespace mavqa {

inline ChatResponse HttpTransport::send(const BackendSpec& spec, const std::vector<ChatMessage>& messages) {
    // Split endpoint into origin + path for the client.
    const std::string& url = spec.endpoint;
    size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("backend '" + spec.backend_id + "': endpoint '" + url + "' has no scheme");
    }
    size_t path_start = url.find('/', scheme_end + 3);
    std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(std::chrono::duration<double>(spec.timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(spec.timeout_s));
    client.set_write_timeout(std::chrono::duration<double>(spec.timeout_s));

    httplib::Headers headers;
    if (!spec.api_key_env.empty()) {
        const char* key = std::getenv(spec.api_key_env.c_str());
        if (!key || !*key) {
            throw ConfigError("backend '" + spec.backend_id + "': environment variable '" +
                              spec.api_key_env + "' is not set");
        }
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::string body = build_request_body(spec, messages).dump();
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
        throw TransportError("backend '" + spec.backend_id + "': " + httplib::to_string(res.error()));
    }
    if (res->status >= 200 && res->status < 300) {
        return parse_response_body(res->body);
    }
    std::string detail = res->body.substr(0, 300);
    // 4xx replies other than timeout/rate-limit are well-formed rejections.
    if (res->status == 408 || res->status == 429 || res->status >= 500) {
        throw TransportError("backend '" + spec.backend_id + "': HTTP " + std::to_string(res->status) +
                             ": " + detail);
    }
    throw PermanentBackendError("backend '" + spec.backend_id + "': HTTP " + std::to_string(res->status) +
                                ": " + detail);
}

} // namespace mavqa
