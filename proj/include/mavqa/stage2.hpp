#pragma once

#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mavqa/errors.hpp"
#include "mavqa/llm_gateway.hpp"
#include "mavqa/model_config.hpp"
#include "mavqa/prompts.hpp"
#include "mavqa/qa_model.hpp"
#include "mavqa/reply_parse.hpp"
#include "mavqa/stage1.hpp"
#include "mavqa/toolbox.hpp"

namespace mavqa {

// One expert's single answer: the chosen option, the reasoning text, and
// which tool produced the evidence.
struct ExpertResponse {
    std::string expert_name;
    ChoiceIndex choice{0};
    std::string reasoning;
    std::string tool_used;
    std::string tool_result_digest;
};

// Consolidated final answer with the fraction of experts that agreed.
struct OrganizerVerdict {
    ChoiceIndex choice{0};
    std::string rationale;
    double expert_agreement = 0.0;
    bool fallback_used = false;
};

// Shared, immutable dependencies handed to every pipeline run.
struct PipelineDeps {
    const Gateway* gateway = nullptr;
    const CaptionStore* captions = nullptr;
    const FrameLibrary* frames = nullptr;
    const PromptLibrary* prompts = nullptr;
    size_t context_budget = 2000;
    std::string fallback_tool = kCaptionerId;
    bool experts_concurrent = true;
};

// Outcome of one expert run. An expert that fails to produce a parseable
// answer twice abstains: the abstention is recorded and the expert is
// excluded from the organizer's input, never mapped to a guessed choice.
struct ExpertRun {
    std::optional<ExpertResponse> response;
    bool abstained = false;
    Transcript events;
};

namespace detail {

inline std::vector<ToolDescriptor> descriptors_for(const std::vector<std::string>& tool_ids,
                                                   AnalyzerMode mode) {
    std::vector<ToolDescriptor> all = default_descriptors(mode);
    std::vector<ToolDescriptor> out;
    for (const auto& id : tool_ids) {
        for (const auto& d : all) {
            if (d.tool_id == id) out.push_back(d);
        }
    }
    return out;
}

// Runs the named tool, absorbing missing-data errors into a placeholder
// payload so one bad video asset cannot sink the whole question.
inline ToolResult invoke_tool(const std::string& tool_id, const VideoQuestion& question,
                              const ModelConfig& config, const PipelineDeps& deps, Transcript* log,
                              const std::string& log_prefix) {
    if (tool_id == kCaptionerId) {
        auto track = deps.captions->get(question.video_id);
        if (!track) {
            log_event(log, "flag", log_prefix + ".missing_captions");
            return {kCaptionerId, "(no captions available for this video)", std::nullopt, false};
        }
        double window_end = std::max(question.duration_s, track->end_s());
        ToolResult r = captioner_lookup(*track, 0.0, window_end);
        log_event(log, log_prefix + ".captioner",
                  "window [0.0s-" + format_seconds(window_end) + "s]\n" + r.payload);
        return r;
    }
    auto store = deps.frames->get(question.video_id);
    if (!store) {
        log_event(log, "flag", log_prefix + ".missing_frames");
        return {kVideoAnalyzerId, "(no frames available for this video)", std::nullopt, false};
    }
    try {
        return analyze_video(*deps.gateway, config.analyzer_backend, *store, question, config.analyzer_mode,
                             config.frames, *deps.prompts, log, log_prefix + ".video_analyzer");
    } catch (const MissingFramesError& e) {
        log_event(log, "flag", log_prefix + ".missing_frames");
        return {kVideoAnalyzerId, std::string("(") + e.what() + ")", std::nullopt, false};
    }
}

} // namespace detail

// One expert agent: pick a tool, gather evidence, answer once. The answer
// call carries the expert's generated system prompt.
inline ExpertRun run_expert(const ExpertProfile& profile, const VideoQuestion& question,
                            const std::vector<ToolDescriptor>& tools, const ModelConfig& config,
                            const PipelineDeps& deps, const std::string& log_prefix) {
    if (tools.empty()) throw PreconditionError("expert '" + profile.name + "' offered no tools");
    ExpertRun run;
    Transcript* log = &run.events;
    detail::log_event(log, log_prefix + ".profile", profile.name + " | " + profile.domain);

    std::string tool_id = select_tool(*deps.gateway, config.dag_backend, question, tools, *deps.prompts,
                                      log, deps.fallback_tool, log_prefix + ".route");
    ToolResult tool = detail::invoke_tool(tool_id, question, config, deps, log, log_prefix);

    std::string payload = tool.payload.empty() ? "(the tool returned no output)" : tool.payload;
    std::string text = deps.prompts->render("expert_answer", {{"question", question.question_text},
                                                              {"options", format_options(question)},
                                                              {"tool", tool_id},
                                                              {"tool_payload", payload}});
    std::vector<ChatMessage> messages{ChatMessage::system(profile.system_prompt), ChatMessage::user(text)};
    detail::log_event(log, log_prefix + ".answer.request", text);
    ChatResponse reply = deps.gateway->complete(config.dag_backend, messages);
    detail::log_event(log, log_prefix + ".answer.response", reply.text);

    auto choice = parse_choice(reply.text);
    if (!choice) {
        messages.push_back(ChatMessage::assistant(reply.text));
        messages.push_back(ChatMessage::user(deps.prompts->get("reask_answer")));
        detail::log_event(log, log_prefix + ".answer.reask", deps.prompts->get("reask_answer"));
        reply = deps.gateway->complete(config.dag_backend, messages);
        detail::log_event(log, log_prefix + ".answer.response", reply.text);
        choice = parse_choice(reply.text);
    }
    if (!choice) {
        run.abstained = true;
        detail::log_event(log, "flag", log_prefix + ".abstained");
        return run;
    }

    ExpertResponse resp;
    resp.expert_name = profile.name;
    resp.choice = *choice;
    resp.reasoning = trim(reply.text);
    resp.tool_used = tool_id;
    resp.tool_result_digest = digest_hex(tool.payload);
    run.response = std::move(resp);
    return run;
}

inline std::string format_expert_responses(const std::vector<ExpertResponse>& responses) {
    std::ostringstream os;
    for (size_t i = 0; i < responses.size(); ++i) {
        if (i) os << "\n";
        os << "- " << responses[i].expert_name << " chose option " << responses[i].choice.value()
           << " (tool: " << responses[i].tool_used << "): " << responses[i].reasoning;
    }
    return os.str();
}

// Plurality of expert choices with lowest-index tie-break; the organizer's
// guaranteed fallback when its reply cannot be parsed twice.
inline ChoiceIndex plurality_choice(const std::vector<ExpertResponse>& responses) {
    std::array<int, kNumChoices> counts{};
    for (const auto& r : responses) counts[static_cast<size_t>(r.choice.value())]++;
    int best = 0;
    for (int c = 1; c < kNumChoices; ++c) {
        if (counts[static_cast<size_t>(c)] > counts[static_cast<size_t>(best)]) best = c;
    }
    return ChoiceIndex(best);
}

// The organizer consolidates expert responses into the final choice with one
// backend call. When tools are offered it may run one tool round first. A
// double parse failure falls back to plurality voting, flagged.
inline OrganizerVerdict run_organizer(const VideoQuestion& question,
                                      const std::vector<ExpertResponse>& responses,
                                      OrganizerVariant variant, const std::vector<ToolDescriptor>& tools,
                                      const ModelConfig& config, const PipelineDeps& deps,
                                      Transcript* log = nullptr) {
    if (responses.empty()) throw PreconditionError("organizer needs at least one expert response");

    const char* tmpl = variant == OrganizerVariant::Default ? "organizer_default" : "organizer_concise";
    std::string text = deps.prompts->render(tmpl, {{"question", question.question_text},
                                                   {"options", format_options(question)},
                                                   {"expert_responses", format_expert_responses(responses)}});
    std::vector<std::string> tool_ids;
    if (!tools.empty()) {
        std::ostringstream tool_block;
        for (size_t i = 0; i < tools.size(); ++i) {
            tool_ids.push_back(tools[i].tool_id);
            if (i) tool_block << "\n";
            tool_block << "- " << tools[i].tool_id << ": " << tools[i].description;
        }
        text += "\n" + deps.prompts->render("organizer_tool_offer", {{"tools", tool_block.str()}});
    }

    std::vector<ChatMessage> messages{ChatMessage::user(text)};
    detail::log_event(log, "organizer.request", text);
    ChatResponse reply = deps.gateway->complete(config.dag_backend, messages);
    detail::log_event(log, "organizer.response", reply.text);

    if (!tools.empty()) {
        auto requested = parse_tool_request(reply.text, tool_ids);
        if (requested) {
            ToolResult tool = detail::invoke_tool(*requested, question, config, deps, log, "organizer");
            std::string follow = deps.prompts->render(
                "organizer_tool_result",
                {{"tool", *requested},
                 {"tool_payload", tool.payload.empty() ? "(the tool returned no output)" : tool.payload}});
            messages.push_back(ChatMessage::assistant(reply.text));
            messages.push_back(ChatMessage::user(follow));
            detail::log_event(log, "organizer.tool_round", follow);
            reply = deps.gateway->complete(config.dag_backend, messages);
            detail::log_event(log, "organizer.response", reply.text);
        }
    }

    auto choice = parse_choice(reply.text);
    if (!choice) {
        messages.push_back(ChatMessage::assistant(reply.text));
        messages.push_back(ChatMessage::user(deps.prompts->get("reask_organizer")));
        detail::log_event(log, "organizer.reask", deps.prompts->get("reask_organizer"));
        reply = deps.gateway->complete(config.dag_backend, messages);
        detail::log_event(log, "organizer.response", reply.text);
        choice = parse_choice(reply.text);
    }

    OrganizerVerdict verdict;
    if (choice) {
        verdict.choice = *choice;
        verdict.rationale = trim(reply.text);
    } else {
        verdict.choice = plurality_choice(responses);
        verdict.rationale = "plurality fallback over expert votes";
        verdict.fallback_used = true;
        detail::log_event(log, "flag", "organizer_fallback");
    }
    int agree = 0;
    for (const auto& r : responses) {
        if (r.choice == verdict.choice) ++agree;
    }
    verdict.expert_agreement = static_cast<double>(agree) / static_cast<double>(responses.size());
    return verdict;
}

namespace detail {

inline PredictionRecord run_single_agent(const VideoQuestion& question, const ModelConfig& config,
                                         const PipelineDeps& deps) {
    PredictionRecord record;
    record.question_id = question.question_id;
    record.model_id = config.model_id;
    Transcript* log = &record.transcript;

    auto store = deps.frames->get(question.video_id);
    if (!store) throw MissingFramesError("no frames available for video '" + question.video_id + "'");
    auto resolved = resolve_frames(*store, sample_frames(question.duration_s, config.frames));
    std::vector<ImageRef> images;
    for (const auto& [ts, ref] : resolved) images.push_back({ref});

    std::string text = deps.prompts->render("single_agent", {{"question", question.question_text},
                                                             {"options", format_options(question)}});
    std::vector<ChatMessage> messages{ChatMessage::user(text, images)};
    log_event(log, "single_agent.request",
              text + "\n[" + std::to_string(images.size()) + " frames attached]");
    ChatResponse reply = deps.gateway->complete(config.analyzer_backend, messages);
    log_event(log, "single_agent.response", reply.text);

    auto choice = parse_choice(reply.text);
    if (!choice) {
        messages.push_back(ChatMessage::assistant(reply.text));
        messages.push_back(ChatMessage::user(deps.prompts->get("reask_answer")));
        log_event(log, "single_agent.reask", deps.prompts->get("reask_answer"));
        reply = deps.gateway->complete(config.analyzer_backend, messages);
        log_event(log, "single_agent.response", reply.text);
        choice = parse_choice(reply.text);
    }
    if (choice) {
        record.choice = *choice;
    } else {
        record.flags.push_back("unanswered");
        log_event(log, "flag", "single_agent_parse_failure");
    }
    return record;
}

inline PredictionRecord run_multi_agent(const VideoQuestion& question, const ModelConfig& config,
                                        const PipelineDeps& deps) {
    PredictionRecord record;
    record.question_id = question.question_id;
    record.model_id = config.model_id;
    Transcript* log = &record.transcript;

    auto track = deps.captions->get(question.video_id);
    VideoContext context;
    if (track) {
        context = build_video_context(*track, deps.context_budget);
    } else {
        context.empty_track = true;
    }
    if (context.empty_track) {
        record.flags.push_back("no_video_context");
        context.summary = "(no captions available for this video)";
    }
    log_event(log, "context", context.summary);

    std::vector<ExpertProfile> profiles;
    if (config.profile_source == ProfileSource::Dag) {
        profiles = generate_experts(*deps.gateway, config.dag_backend, question, context, config.n_experts,
                                    *deps.prompts, log);
        if (!profiles.empty() && profiles.front().generated_by == "static") {
            record.flags.push_back("dag_fallback");
        }
    } else {
        profiles = fallback_assistants(config.n_experts);
        log_event(log, "profiles", "uniform AI assistants (" + std::to_string(config.n_experts) + ")");
    }

    auto descriptors = detail::descriptors_for(config.expert_tools, config.analyzer_mode);
    std::vector<ExpertRun> runs(profiles.size());
    auto run_one = [&](size_t i) {
        return run_expert(profiles[i], question, descriptors, config, deps,
                          "expert." + std::to_string(i));
    };
    if (deps.experts_concurrent && profiles.size() > 1) {
        std::vector<std::future<ExpertRun>> futures;
        futures.reserve(profiles.size());
        for (size_t i = 0; i < profiles.size(); ++i) {
            futures.push_back(std::async(std::launch::async, run_one, i));
        }
        for (size_t i = 0; i < futures.size(); ++i) runs[i] = futures[i].get();
    } else {
        for (size_t i = 0; i < profiles.size(); ++i) runs[i] = run_one(i);
    }

    // Merge per-expert transcripts in expert order so output is independent
    // of scheduling.
    std::vector<ExpertResponse> responses;
    for (size_t i = 0; i < runs.size(); ++i) {
        for (auto& e : runs[i].events) record.transcript.push_back(std::move(e));
        if (runs[i].abstained) {
            record.flags.push_back("expert_abstained:" + profiles[i].name);
        } else if (runs[i].response) {
            responses.push_back(std::move(*runs[i].response));
        }
    }

    if (responses.empty()) {
        record.flags.push_back("unanswered");
        record.flags.push_back("all_experts_abstained");
        return record;
    }

    auto organizer_tools = detail::descriptors_for(config.organizer_tools, config.analyzer_mode);
    OrganizerVerdict verdict = run_organizer(question, responses, config.organizer_variant, organizer_tools,
                                             config, deps, log);
    if (verdict.fallback_used) record.flags.push_back("organizer_fallback");
    record.choice = verdict.choice;
    char agreement[32];
    std::snprintf(agreement, sizeof(agreement), "%.3f", verdict.expert_agreement);
    log_event(log, "verdict",
              "choice=" + std::to_string(verdict.choice.value()) + " agreement=" + agreement);
    return record;
}

} // namespace detail

// Runs one (question, model config) pair end to end. Always produces exactly
// one PredictionRecord: unrecoverable backend errors yield an unanswered
// record with the failure in the transcript, never an exception.
inline PredictionRecord run_pipeline(const VideoQuestion& question, const ModelConfig& config,
                                     const PipelineDeps& deps) {
    try {
        question.validate();
        config.validate();
        if (config.topology == Topology::SingleAgent) {
            return detail::run_single_agent(question, config, deps);
        }
        return detail::run_multi_agent(question, config, deps);
    } catch (const std::exception& e) {
        PredictionRecord record;
        record.question_id = question.question_id;
        record.model_id = config.model_id;
        record.flags.push_back("unanswered");
        record.flags.push_back("pipeline_error");
        record.transcript.push_back({"error", e.what()});
        return record;
    }
}

} // namespace mavqa
