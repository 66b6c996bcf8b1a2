#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mavqa/errors.hpp"
#include "mavqa/llm_gateway.hpp"
#include "mavqa/prompts.hpp"
#include "mavqa/qa_model.hpp"
#include "mavqa/reply_parse.hpp"
#include "mavqa/toolbox.hpp"

namespace mavqa {

// A dynamically generated expert persona: who answers, and with what system
// prompt.
struct ExpertProfile {
    std::string name;
    std::string domain;
    std::string system_prompt;
    std::string generated_by; // backend_id, or "static" for fixed profiles
};

inline bool operator==(const ExpertProfile& a, const ExpertProfile& b) {
    return a.name == b.name && a.domain == b.domain && a.system_prompt == b.system_prompt &&
           a.generated_by == b.generated_by;
}

// Caption-derived summary handed to the expert generator. Bounded by a
// character budget so prompts stay a predictable size.
struct VideoContext {
    std::string summary;
    size_t budget = 0;
    bool empty_track = false;
    bool truncated = false;
};

// Deterministic digest of a caption track: evenly spaced caption lines, the
// first and last segments always included, total length within the budget.
inline VideoContext build_video_context(const CaptionTrack& track, size_t budget) {
    if (budget < 100) throw PreconditionError("video context budget must be >= 100 characters");
    VideoContext ctx;
    ctx.budget = budget;
    const size_t n = track.segments.size();
    if (n == 0) {
        ctx.empty_track = true;
        return ctx;
    }

    auto render = [&](size_t k) {
        std::ostringstream os;
        size_t prev = static_cast<size_t>(-1);
        for (size_t i = 0; i < k; ++i) {
            size_t idx = k == 1 ? 0
                                : static_cast<size_t>(std::llround(static_cast<double>(i) *
                                                                   static_cast<double>(n - 1) /
                                                                   static_cast<double>(k - 1)));
            if (idx == prev) continue;
            prev = idx;
            if (os.tellp() > 0) os << "\n";
            os << format_segment(track.segments[idx]);
        }
        return os.str();
    };

    for (size_t k = n; k >= 1; --k) {
        std::string text = render(k);
        if (text.size() <= budget) {
            ctx.summary = std::move(text);
            return ctx;
        }
    }
    // Even a single line overflows: keep a truncated head of the first
    // segment so the context is never silently dropped.
    ctx.summary = render(1).substr(0, budget);
    ctx.truncated = true;
    return ctx;
}

inline std::string profiles_to_json(const std::vector<ExpertProfile>& profiles) {
    ojson arr = ojson::array();
    for (const auto& p : profiles) {
        arr.push_back(ojson{{"name", p.name}, {"domain", p.domain}, {"system_prompt", p.system_prompt}});
    }
    return arr.dump(2);
}

// Parses a structured expert reply: a JSON array (optionally fenced) of
// exactly n objects with nonempty name/domain/system_prompt and unique
// names. Returns nullopt on any violation.
inline std::optional<std::vector<ExpertProfile>> parse_expert_profiles(const std::string& text, int n) {
    auto block = extract_json_block(text);
    if (!block) return std::nullopt;
    json arr;
    try {
        arr = json::parse(*block);
    } catch (const std::exception&) {
        return std::nullopt;
    }
    if (!arr.is_array() || static_cast<int>(arr.size()) != n) return std::nullopt;
    std::vector<ExpertProfile> out;
    std::set<std::string> names;
    for (const auto& item : arr) {
        if (!item.is_object()) return std::nullopt;
        ExpertProfile p;
        try {
            p.name = trim(item.at("name").get<std::string>());
            p.domain = trim(item.at("domain").get<std::string>());
            p.system_prompt = trim(item.at("system_prompt").get<std::string>());
        } catch (const std::exception&) {
            return std::nullopt;
        }
        if (p.name.empty() || p.domain.empty() || p.system_prompt.empty()) return std::nullopt;
        if (!names.insert(p.name).second) return std::nullopt;
        out.push_back(std::move(p));
    }
    return out;
}

// n identical generic-assistant profiles with distinct names. Used for the
// uniform-assistant ablation and as the guaranteed fallback when expert
// generation fails twice.
inline std::vector<ExpertProfile> fallback_assistants(int n) {
    if (n < 1) throw PreconditionError("expert count must be >= 1");
    std::vector<ExpertProfile> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 1; i <= n; ++i) {
        out.push_back({"Assistant " + std::to_string(i), "general assistance",
                       prompt_defaults::kFallbackAssistant, "static"});
    }
    return out;
}

// One backend call requesting exactly n experts for this question. Parse
// failure triggers one re-ask; a second failure falls back to generic
// assistants and flags the transcript. Always returns exactly n profiles.
inline std::vector<ExpertProfile> generate_experts(const Gateway& gateway, const std::string& backend_id,
                                                   const VideoQuestion& question, const VideoContext& context,
                                                   int n, const PromptLibrary& prompts,
                                                   Transcript* log = nullptr) {
    if (n < 1) throw PreconditionError("expert count must be >= 1");
    std::string text = prompts.render("dag_experts", {{"question", question.question_text},
                                                      {"options", format_options(question)},
                                                      {"video_context", context.summary},
                                                      {"n", std::to_string(n)}});
    std::vector<ChatMessage> messages{ChatMessage::user(text)};
    detail::log_event(log, "dag.request", text);
    ChatResponse reply = gateway.complete(backend_id, messages);
    detail::log_event(log, "dag.response", reply.text);

    auto profiles = parse_expert_profiles(reply.text, n);
    if (!profiles) {
        std::string reask = prompts.render("reask_experts", {{"n", std::to_string(n)}});
        messages.push_back(ChatMessage::assistant(reply.text));
        messages.push_back(ChatMessage::user(reask));
        detail::log_event(log, "dag.reask", reask);
        reply = gateway.complete(backend_id, messages);
        detail::log_event(log, "dag.response", reply.text);
        profiles = parse_expert_profiles(reply.text, n);
    }
    if (!profiles) {
        detail::log_event(log, "flag", "dag_fallback");
        return fallback_assistants(n);
    }
    for (auto& p : *profiles) p.generated_by = backend_id;
    return *profiles;
}

} // namespace mavqa
