#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mavqa/errors.hpp"
#include "mavqa/llm_gateway.hpp"
#include "mavqa/prompts.hpp"
#include "mavqa/qa_model.hpp"
#include "mavqa/reply_parse.hpp"
#include "mavqa/util.hpp"

namespace mavqa {

inline constexpr const char* kCaptionerId = "captioner";
inline constexpr const char* kVideoAnalyzerId = "video_analyzer";

struct CaptionSegment {
    double start_s = 0;
    double end_s = 0;
    std::string text;
};

// Precomputed caption track for one video, sorted by segment start.
struct CaptionTrack {
    std::string video_id;
    std::vector<CaptionSegment> segments;

    void validate() const {
        for (size_t i = 0; i < segments.size(); ++i) {
            const auto& s = segments[i];
            std::string where = "caption track '" + video_id + "' segment " + std::to_string(i);
            if (s.start_s < 0) throw ValidationError(where + ": negative start");
            if (!(s.start_s < s.end_s)) throw ValidationError(where + ": start must be < end");
            if (i > 0 && segments[i - 1].start_s > s.start_s) {
                throw ValidationError(where + ": segments not sorted by start");
            }
        }
    }

    double end_s() const {
        double e = 0;
        for (const auto& s : segments) e = std::max(e, s.end_s);
        return e;
    }

    // Lines of "start<TAB>end<TAB>caption". Blank lines are skipped; segments
    // are sorted by start before validation.
    static CaptionTrack parse(std::istream& in, const std::string& video_id, const std::string& origin) {
        CaptionTrack track;
        track.video_id = video_id;
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            auto fields = split(line, '\t');
            if (fields.size() != 3) {
                throw IoError(origin + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields, got " +
                              std::to_string(fields.size()));
            }
            CaptionSegment seg;
            try {
                seg.start_s = std::stod(fields[0]);
                seg.end_s = std::stod(fields[1]);
            } catch (const std::exception&) {
                throw IoError(origin + ":" + std::to_string(lineno) + ": non-numeric timestamp");
            }
            seg.text = trim(fields[2]);
            track.segments.push_back(std::move(seg));
        }
        std::stable_sort(track.segments.begin(), track.segments.end(),
                         [](const CaptionSegment& a, const CaptionSegment& b) { return a.start_s < b.start_s; });
        track.validate();
        return track;
    }

    static CaptionTrack load(const std::string& path, const std::string& video_id) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open caption file '" + path + "'");
        return parse(in, video_id, path);
    }
};

// Source of caption tracks keyed by video id.
class CaptionStore {
public:
    virtual ~CaptionStore() = default;
    virtual std::optional<CaptionTrack> get(const std::string& video_id) const = 0;
};

class MapCaptionStore : public CaptionStore {
public:
    void put(CaptionTrack track) { tracks_[track.video_id] = std::move(track); }

    std::optional<CaptionTrack> get(const std::string& video_id) const override {
        auto it = tracks_.find(video_id);
        if (it == tracks_.end()) return std::nullopt;
        return it->second;
    }

private:
    std::map<std::string, CaptionTrack> tracks_;
};

// Reads <dir>/<video_id>.txt on demand. Stateless, so safe under concurrent
// lookups.
class DirCaptionStore : public CaptionStore {
public:
    explicit DirCaptionStore(std::string dir) : dir_(std::move(dir)) {}

    std::optional<CaptionTrack> get(const std::string& video_id) const override {
        std::filesystem::path p = std::filesystem::path(dir_) / (video_id + ".txt");
        if (!std::filesystem::is_regular_file(p)) return std::nullopt;
        return CaptionTrack::load(p.string(), video_id);
    }

private:
    std::string dir_;
};

// Pre-extracted frames for one video: timestamp -> image payload reference.
struct FrameStore {
    std::string video_id;
    std::map<double, std::string> frames;
    double fps = 0;
};

class FrameLibrary {
public:
    virtual ~FrameLibrary() = default;
    virtual std::optional<FrameStore> get(const std::string& video_id) const = 0;
};

class MapFrameLibrary : public FrameLibrary {
public:
    void put(FrameStore store) { stores_[store.video_id] = std::move(store); }

    std::optional<FrameStore> get(const std::string& video_id) const override {
        auto it = stores_.find(video_id);
        if (it == stores_.end()) return std::nullopt;
        return it->second;
    }

private:
    std::map<std::string, FrameStore> stores_;
};

// Scans <dir>/<video_id>/ for image files whose stem is the timestamp in
// seconds ("5.0.jpg", "12.jpg"). Files with non-numeric stems are skipped.
class DirFrameLibrary : public FrameLibrary {
public:
    explicit DirFrameLibrary(std::string dir) : dir_(std::move(dir)) {}

    std::optional<FrameStore> get(const std::string& video_id) const override {
        std::filesystem::path p = std::filesystem::path(dir_) / video_id;
        if (!std::filesystem::is_directory(p)) return std::nullopt;
        FrameStore store;
        store.video_id = video_id;
        for (const auto& entry : std::filesystem::directory_iterator(p)) {
            if (!entry.is_regular_file()) continue;
            std::string ext = to_lower(entry.path().extension().string());
            if (ext != ".jpg" && ext != ".jpeg" && ext != ".png") continue;
            try {
                size_t used = 0;
                std::string stem = entry.path().stem().string();
                double ts = std::stod(stem, &used);
                if (used != stem.size() || ts < 0) continue;
                store.frames[ts] = entry.path().string();
            } catch (const std::exception&) {
                continue;
            }
        }
        if (store.frames.empty()) return std::nullopt;
        return store;
    }

private:
    std::string dir_;
};

enum class AnalyzerMode { SingleBest, PerChoiceVerdict };

inline std::string analyzer_mode_name(AnalyzerMode m) {
    return m == AnalyzerMode::SingleBest ? "single_best" : "per_choice_verdict";
}

inline std::optional<AnalyzerMode> parse_analyzer_mode(std::string_view s) {
    std::string l = to_lower(trim(s));
    if (l == "single_best") return AnalyzerMode::SingleBest;
    if (l == "per_choice_verdict") return AnalyzerMode::PerChoiceVerdict;
    return std::nullopt;
}

// Description of a tool as shown to agents when they pick one.
struct ToolDescriptor {
    std::string tool_id;
    std::string description;
    std::optional<AnalyzerMode> analyzer_mode;

    void validate() const {
        if (tool_id != kCaptionerId && tool_id != kVideoAnalyzerId) {
            throw ValidationError("unknown tool_id '" + tool_id + "'");
        }
        if (description.empty()) throw ValidationError("tool '" + tool_id + "' has empty description");
        if (analyzer_mode && tool_id != kVideoAnalyzerId) {
            throw ValidationError("analyzer_mode set on tool '" + tool_id + "'");
        }
    }
};

// The two tools every agent can use. The analyzer description changes with
// the mode: in per-choice mode agents are told it judges each option
// separately instead of naming one best option.
inline std::vector<ToolDescriptor> default_descriptors(AnalyzerMode mode) {
    ToolDescriptor captioner{
        kCaptionerId,
        "Retrieves the precomputed per-second text captions describing what happens in the video, "
        "with timestamps. Best for questions about the overall activity, its purpose, or the order "
        "of events.",
        std::nullopt};
    ToolDescriptor analyzer{
        kVideoAnalyzerId,
        mode == AnalyzerMode::SingleBest
            ? "Sends sampled video frames to a vision model together with the question and returns "
              "the single option best supported by the visual evidence. Best for questions about "
              "visual details, objects, or tools in view."
            : "Sends sampled video frames to a vision model together with the question and returns "
              "a correct-or-incorrect verdict for each of the five options, rather than only the "
              "single most accurate one. Best for questions about visual details, objects, or "
              "tools in view.",
        mode};
    return {std::move(captioner), std::move(analyzer)};
}

// Output of one tool invocation. structured_verdicts is set exactly when the
// analyzer ran in per-choice mode and its reply parsed; a failed parse is
// recorded via parse_failed, never as a partial mapping.
struct ToolResult {
    std::string tool_id;
    std::string payload;
    std::optional<std::array<bool, kNumChoices>> structured_verdicts;
    bool parse_failed = false;
};

inline std::string format_segment(const CaptionSegment& seg) {
    return "[" + format_seconds(seg.start_s) + "s-" + format_seconds(seg.end_s) + "s] " + seg.text;
}

// Concatenated captions of all segments overlapping [start_s, end_s], each
// prefixed with its time range, in temporal order. An empty overlap is an
// empty payload, not an error.
inline ToolResult captioner_lookup(const CaptionTrack& track, double start_s, double end_s) {
    if (start_s < 0 || !(start_s < end_s)) {
        throw PreconditionError("captioner window [" + format_seconds(start_s) + ", " +
                                format_seconds(end_s) + ") is invalid");
    }
    std::ostringstream os;
    bool first = true;
    for (const auto& seg : track.segments) {
        if (seg.start_s < end_s && seg.end_s > start_s) {
            if (!first) os << "\n";
            os << format_segment(seg);
            first = false;
        }
    }
    return {kCaptionerId, os.str(), std::nullopt, false};
}

// Uniform mid-interval sampling: t_i = (i + 0.5) * duration / f. Strictly
// increasing, all inside (0, duration).
inline std::vector<double> sample_frames(double duration_s, int frame_count) {
    if (frame_count < 1) throw PreconditionError("frame count must be >= 1");
    if (!(duration_s > 0)) throw PreconditionError("duration must be > 0");
    std::vector<double> out;
    out.reserve(static_cast<size_t>(frame_count));
    for (int i = 0; i < frame_count; ++i) {
        out.push_back((i + 0.5) * duration_s / frame_count);
    }
    return out;
}

// Resolves sampled timestamps to stored frames by nearest neighbor; ties go
// to the earlier frame. Results follow the input order.
inline std::vector<std::pair<double, std::string>> resolve_frames(const FrameStore& store,
                                                                  const std::vector<double>& timestamps) {
    if (store.frames.empty()) {
        throw MissingFramesError("no frames available for video '" + store.video_id + "'");
    }
    std::vector<std::pair<double, std::string>> out;
    out.reserve(timestamps.size());
    for (double ts : timestamps) {
        auto ge = store.frames.lower_bound(ts);
        if (ge == store.frames.begin()) {
            out.emplace_back(ge->first, ge->second);
            continue;
        }
        auto lt = std::prev(ge);
        if (ge == store.frames.end() || (ts - lt->first) <= (ge->first - ts)) {
            out.emplace_back(lt->first, lt->second);
        } else {
            out.emplace_back(ge->first, ge->second);
        }
    }
    return out;
}

namespace detail {

inline void log_event(Transcript* log, std::string label, std::string text) {
    if (log) log->push_back({std::move(label), std::move(text)});
}

} // namespace detail

// Sends the sampled frames plus question and options to a vision backend.
// SingleBest keeps the reply verbatim; PerChoiceVerdict parses one verdict
// per option, re-asking once before recording a parse failure.
inline ToolResult analyze_video(const Gateway& gateway, const std::string& backend_id,
                                const FrameStore& store, const VideoQuestion& question,
                                AnalyzerMode mode, int frame_count, const PromptLibrary& prompts,
                                Transcript* log = nullptr, const std::string& log_prefix = "tool.video_analyzer") {
    auto timestamps = sample_frames(question.duration_s, frame_count);
    auto resolved = resolve_frames(store, timestamps);

    std::vector<ImageRef> images;
    images.reserve(resolved.size());
    std::ostringstream frame_note;
    for (size_t i = 0; i < resolved.size(); ++i) {
        images.push_back({resolved[i].second});
        if (i) frame_note << ", ";
        frame_note << format_seconds(resolved[i].first) << "s";
    }

    const char* tmpl = mode == AnalyzerMode::SingleBest ? "analyzer_single_best" : "analyzer_per_choice";
    std::string text = prompts.render(tmpl, {{"question", question.question_text},
                                             {"options", format_options(question)}});
    std::vector<ChatMessage> messages{ChatMessage::user(text, images)};
    detail::log_event(log, log_prefix + ".request",
                      text + "\n[" + std::to_string(images.size()) + " frames at " + frame_note.str() + "]");
    ChatResponse reply = gateway.complete(backend_id, messages);
    detail::log_event(log, log_prefix + ".response", reply.text);

    if (mode == AnalyzerMode::SingleBest) {
        return {kVideoAnalyzerId, reply.text, std::nullopt, false};
    }

    auto verdicts = parse_verdicts(reply.text);
    if (!verdicts) {
        messages.push_back(ChatMessage::assistant(reply.text));
        messages.push_back(ChatMessage::user(prompts.get("reask_verdict")));
        detail::log_event(log, log_prefix + ".reask", prompts.get("reask_verdict"));
        reply = gateway.complete(backend_id, messages);
        detail::log_event(log, log_prefix + ".response", reply.text);
        verdicts = parse_verdicts(reply.text);
    }
    if (!verdicts) {
        detail::log_event(log, "flag", "analyzer_parse_error");
        return {kVideoAnalyzerId, reply.text, std::nullopt, true};
    }
    return {kVideoAnalyzerId, reply.text, verdicts, false};
}

// Asks the backend to pick a tool from the descriptors. If the reply names
// no known tool after one re-ask, falls back to fallback_tool and flags the
// transcript. Always resolves.
inline std::string select_tool(const Gateway& gateway, const std::string& backend_id,
                               const VideoQuestion& question, const std::vector<ToolDescriptor>& descriptors,
                               const PromptLibrary& prompts, Transcript* log = nullptr,
                               const std::string& fallback_tool = kCaptionerId,
                               const std::string& log_prefix = "route") {
    if (descriptors.empty()) throw PreconditionError("no tool descriptors offered");
    std::vector<std::string> ids;
    std::ostringstream tool_block;
    for (size_t i = 0; i < descriptors.size(); ++i) {
        descriptors[i].validate();
        ids.push_back(descriptors[i].tool_id);
        if (i) tool_block << "\n";
        tool_block << "- " << descriptors[i].tool_id << ": " << descriptors[i].description;
    }

    std::string text = prompts.render("tool_select", {{"question", question.question_text},
                                                      {"tools", tool_block.str()}});
    std::vector<ChatMessage> messages{ChatMessage::user(text)};
    detail::log_event(log, log_prefix + ".request", text);
    ChatResponse reply = gateway.complete(backend_id, messages);
    detail::log_event(log, log_prefix + ".response", reply.text);

    auto picked = parse_tool_mention(reply.text, ids);
    if (!picked) {
        std::string id_list;
        for (size_t i = 0; i < ids.size(); ++i) id_list += (i ? ", " : "") + ids[i];
        std::string reask = prompts.render("reask_tool", {{"tool_ids", id_list}});
        messages.push_back(ChatMessage::assistant(reply.text));
        messages.push_back(ChatMessage::user(reask));
        detail::log_event(log, log_prefix + ".reask", reask);
        reply = gateway.complete(backend_id, messages);
        detail::log_event(log, log_prefix + ".response", reply.text);
        picked = parse_tool_mention(reply.text, ids);
    }
    if (!picked) {
        detail::log_event(log, "flag", "tool_select_fallback");
        return fallback_tool;
    }
    return *picked;
}

} // namespace mavqa
