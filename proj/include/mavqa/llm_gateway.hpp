#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mavqa/errors.hpp"
#include "mavqa/util.hpp"

namespace mavqa {

enum class Role { System, User, Assistant, Tool };

inline std::string role_name(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool: return "tool";
    }
    return "user";
}

// Reference to an image payload (a file path or opaque id). The HTTP
// transport inlines the bytes; the mock only fingerprints the count.
struct ImageRef {
    std::string ref;
};

struct ChatMessage {
    Role role = Role::User;
    std::string text;
    std::vector<ImageRef> images;

    static ChatMessage system(std::string text) { return {Role::System, std::move(text), {}}; }
    static ChatMessage user(std::string text) { return {Role::User, std::move(text), {}}; }
    static ChatMessage user(std::string text, std::vector<ImageRef> images) {
        return {Role::User, std::move(text), std::move(images)};
    }
    static ChatMessage assistant(std::string text) { return {Role::Assistant, std::move(text), {}}; }
};

inline void validate_messages(const std::vector<ChatMessage>& messages) {
    if (messages.empty()) throw PreconditionError("message list is empty");
    for (size_t i = 0; i < messages.size(); ++i) {
        const auto& m = messages[i];
        if (!m.images.empty() && m.role != Role::User) {
            throw PreconditionError("message " + std::to_string(i) + ": images allowed on user messages only");
        }
        if (m.text.empty() && m.images.empty()) {
            throw PreconditionError("message " + std::to_string(i) + ": text and images both empty");
        }
    }
}

inline bool messages_carry_images(const std::vector<ChatMessage>& messages) {
    for (const auto& m : messages) {
        if (!m.images.empty()) return true;
    }
    return false;
}

// One remote (or mock) chat service and its generation parameters.
struct BackendSpec {
    std::string backend_id;
    std::string endpoint;            // e.g. https://host/v1/chat/completions
    std::string model_name;          // provider-side model string; backend_id when empty
    std::string api_key_env;         // env var holding the credential
    bool supports_images = false;
    double temperature = 0.0;        // deterministic by default
    int max_output_tokens = 1024;
    double timeout_s = 60.0;
    int max_retries = 2;
    double retry_backoff_s = 0.25;   // doubled per attempt
    int concurrency = 4;
    std::string provider = "openai_chat";

    void validate() const {
        if (backend_id.empty()) throw ConfigError("backend with empty backend_id");
        if (max_retries < 0) throw ConfigError("backend '" + backend_id + "': max_retries must be >= 0");
        if (concurrency < 1) throw ConfigError("backend '" + backend_id + "': concurrency must be >= 1");
        if (retry_backoff_s < 0) throw ConfigError("backend '" + backend_id + "': retry_backoff_s must be >= 0");
    }

    std::string effective_model() const { return model_name.empty() ? backend_id : model_name; }
};

struct TokenUsage {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
};

struct ChatResponse {
    std::string text;
    std::optional<TokenUsage> usage;
    double latency_ms = 0.0;
};

// Canonical serialization of a request: roles, texts and image counts with
// unambiguous separators. Prompts that are identical as strings fingerprint
// identically however the request was assembled.
inline std::string canonical_request(const std::vector<ChatMessage>& messages) {
    std::string out;
    for (const auto& m : messages) {
        out += role_name(m.role);
        out += '\x1f';
        out += m.text;
        out += '\x1f';
        out += std::to_string(m.images.size());
        out += '\x1e';
    }
    return out;
}

inline std::string request_fingerprint(const std::vector<ChatMessage>& messages) {
    return digest_hex(canonical_request(messages));
}

// A single request attempt against one service. Implementations throw
// TransportError for transient failures and PermanentBackendError for
// well-formed error replies.
class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual ChatResponse send(const BackendSpec& spec, const std::vector<ChatMessage>& messages) = 0;
};

// Validates the request, then runs the retry loop: transient transport
// failures are retried up to spec.max_retries with exponential backoff;
// permanent error replies are never retried.
inline ChatResponse complete(ChatTransport& transport, const BackendSpec& spec,
                             const std::vector<ChatMessage>& messages) {
    validate_messages(messages);
    if (messages_carry_images(messages) && !spec.supports_images) {
        throw CapabilityError("backend '" + spec.backend_id + "' does not accept images");
    }
    for (int attempt = 0;; ++attempt) {
        try {
            return transport.send(spec, messages);
        } catch (const TransportError& e) {
            if (attempt >= spec.max_retries) {
                throw TransportError("backend '" + spec.backend_id + "': retries exhausted after " +
                                     std::to_string(attempt + 1) + " attempts: " + e.what());
            }
            double delay = spec.retry_backoff_s * static_cast<double>(1 << attempt);
            if (delay > 0) {
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            }
        }
    }
}

// Deterministic scripted backend for tests and offline runs. The reply is a
// pure function of the request: exact fingerprints first, then ordered
// substring rules against the canonical request text, then the fallback.
// The optional chaos knob garbles a fixed fraction of requests, keyed on the
// request fingerprint so the choice is independent of call order.
class MockTransport : public ChatTransport {
public:
    ChatResponse send(const BackendSpec&, const std::vector<ChatMessage>& messages) override {
        calls_.fetch_add(1, std::memory_order_relaxed);
        std::string canonical = canonical_request(messages);
        if (chaos_percent_ > 0 &&
            fnv1a64(canonical, 0x9e3779b97f4a7c15ULL) % 100 < static_cast<std::uint64_t>(chaos_percent_)) {
            return {chaos_reply_, std::nullopt, 0.0};
        }
        std::string fp = digest_hex(canonical);
        {
            auto it = script_.find(fp);
            if (it != script_.end()) return {it->second, std::nullopt, 0.0};
        }
        for (const auto& [needles, reply] : rules_) {
            bool all = true;
            for (const auto& needle : needles) {
                if (canonical.find(needle) == std::string::npos) {
                    all = false;
                    break;
                }
            }
            if (all) return {reply, std::nullopt, 0.0};
        }
        {
            std::lock_guard<std::mutex> lk(mu_);
            unmatched_.push_back(std::move(canonical));
        }
        return {fallback_, std::nullopt, 0.0};
    }

    void add_script(const std::vector<ChatMessage>& messages, std::string reply) {
        script_[request_fingerprint(messages)] = std::move(reply);
    }
    void add_script_fp(std::string fingerprint, std::string reply) {
        script_[std::move(fingerprint)] = std::move(reply);
    }
    void add_rule(std::string contains, std::string reply) {
        rules_.emplace_back(std::vector<std::string>{std::move(contains)}, std::move(reply));
    }
    // Matches only when every needle appears in the canonical request.
    void add_rule_all(std::vector<std::string> contains_all, std::string reply) {
        rules_.emplace_back(std::move(contains_all), std::move(reply));
    }
    void set_fallback(std::string reply) { fallback_ = std::move(reply); }
    void set_chaos(int percent, std::string reply = "@@garbled@@") {
        chaos_percent_ = percent;
        chaos_reply_ = std::move(reply);
    }

    std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }
    void reset_calls() { calls_.store(0, std::memory_order_relaxed); }

    std::vector<std::string> unmatched() const {
        std::lock_guard<std::mutex> lk(mu_);
        return unmatched_;
    }

private:
    std::map<std::string, std::string> script_;
    std::vector<std::pair<std::vector<std::string>, std::string>> rules_;
    std::string fallback_ = "UNKNOWN";
    int chaos_percent_ = 0;
    std::string chaos_reply_ = "@@garbled@@";
    std::atomic<std::uint64_t> calls_{0};
    mutable std::mutex mu_;
    std::vector<std::string> unmatched_;
};

// Adapter for hosted chat-completion services speaking the common JSON shape
// (role/content message array, image parts as data URLs). Declared here,
// defined in http_transport.hpp to keep httplib out of offline builds.
class HttpTransport : public ChatTransport {
public:
    ChatResponse send(const BackendSpec& spec, const std::vector<ChatMessage>& messages) override;

    static nlohmann::ordered_json build_request_body(const BackendSpec& spec,
                                                     const std::vector<ChatMessage>& messages);
    static ChatResponse parse_response_body(const std::string& body);
};

inline nlohmann::ordered_json HttpTransport::build_request_body(const BackendSpec& spec,
                                                                const std::vector<ChatMessage>& messages) {
    nlohmann::ordered_json body;
    body["model"] = spec.effective_model();
    body["temperature"] = spec.temperature;
    body["max_tokens"] = spec.max_output_tokens;
    nlohmann::ordered_json msgs = nlohmann::ordered_json::array();
    for (const auto& m : messages) {
        nlohmann::ordered_json jm;
        jm["role"] = role_name(m.role);
        if (m.images.empty()) {
            jm["content"] = m.text;
        } else {
            nlohmann::ordered_json parts = nlohmann::ordered_json::array();
            if (!m.text.empty()) {
                parts.push_back({{"type", "text"}, {"text", m.text}});
            }
            for (const auto& img : m.images) {
                std::ifstream in(img.ref, std::ios::binary);
                if (!in) throw IoError("cannot read image '" + img.ref + "'");
                std::ostringstream os;
                os << in.rdbuf();
                parts.push_back({{"type", "image_url"},
                                 {"image_url", {{"url", "data:image/jpeg;base64," + base64_encode(os.str())}}}});
            }
            jm["content"] = std::move(parts);
        }
        msgs.push_back(std::move(jm));
    }
    body["messages"] = std::move(msgs);
    return body;
}

inline ChatResponse HttpTransport::parse_response_body(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const std::exception& e) {
        throw TransportError(std::string("malformed reply body: ") + e.what());
    }
    ChatResponse r;
    try {
        r.text = j.at("choices").at(0).at("message").at("content").is_null()
                     ? std::string()
                     : j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
        throw TransportError(std::string("reply body missing choices[0].message.content: ") + e.what());
    }
    if (j.contains("usage") && j.at("usage").is_object()) {
        TokenUsage u;
        u.input_tokens = j.at("usage").value("prompt_tokens", std::int64_t{0});
        u.output_tokens = j.at("usage").value("completion_tokens", std::int64_t{0});
        r.usage = u;
    }
    return r;
}

// Registry of configured backends. Resolves backend_id, enforces the
// per-backend concurrency limit, and runs the retry loop. Configure all
// backends before issuing requests; the registry itself is then immutable
// and safe to share across workers.
class Gateway {
public:
    void add_backend(BackendSpec spec, std::shared_ptr<ChatTransport> transport) {
        spec.validate();
        auto entry = std::make_unique<Entry>();
        entry->spec = std::move(spec);
        entry->transport = std::move(transport);
        entry->sem = std::make_unique<Semaphore>(entry->spec.concurrency);
        backends_[entry->spec.backend_id] = std::move(entry);
    }

    bool has(const std::string& backend_id) const { return backends_.count(backend_id) > 0; }

    const BackendSpec& spec(const std::string& backend_id) const { return entry(backend_id).spec; }

    ChatResponse complete(const std::string& backend_id, const std::vector<ChatMessage>& messages) const {
        const Entry& e = entry(backend_id);
        SemaphoreGuard guard(*e.sem);
        auto t0 = std::chrono::steady_clock::now();
        ChatResponse r = mavqa::complete(*e.transport, e.spec, messages);
        r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        return r;
    }

    std::vector<std::string> backend_ids() const {
        std::vector<std::string> out;
        for (const auto& [id, _] : backends_) out.push_back(id);
        return out;
    }

private:
    struct Entry {
        BackendSpec spec;
        std::shared_ptr<ChatTransport> transport;
        std::unique_ptr<Semaphore> sem;
    };

    const Entry& entry(const std::string& backend_id) const {
        auto it = backends_.find(backend_id);
        if (it == backends_.end()) throw ConfigError("unknown backend '" + backend_id + "'");
        return *it->second;
    }

    std::map<std::string, std::unique_ptr<Entry>> backends_;
};

} // namespace mavqa
