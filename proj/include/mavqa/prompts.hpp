#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mavqa/errors.hpp"
#include "mavqa/qa_model.hpp"

namespace mavqa {

// Substitutes {{name}} placeholders. Every placeholder in the template must
// have a value; unused values are fine.
inline std::string render_template(const std::string& tmpl,
                                   const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    size_t pos = 0;
    while (pos < tmpl.size()) {
        size_t open = tmpl.find("{{", pos);
        if (open == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        size_t close = tmpl.find("}}", open + 2);
        if (close == std::string::npos) {
            throw ConfigError("template has unterminated placeholder near offset " + std::to_string(open));
        }
        out.append(tmpl, pos, open - pos);
        std::string name = trim(tmpl.substr(open + 2, close - open - 2));
        auto it = vars.find(name);
        if (it == vars.end()) {
            throw ConfigError("template placeholder '" + name + "' has no value");
        }
        out += it->second;
        pos = close + 2;
    }
    return out;
}

inline std::string format_options(const VideoQuestion& q) {
    std::ostringstream os;
    for (int k = 0; k < kNumChoices; ++k) {
        os << k << ". " << q.options[static_cast<size_t>(k)];
        if (k + 1 < kNumChoices) os << "\n";
    }
    return os.str();
}

namespace prompt_defaults {

inline constexpr const char* kDagExperts =
    "You are assembling a panel of specialists to answer a question about a first-person video.\n"
    "\n"
    "Video context (timestamped captions):\n"
    "{{video_context}}\n"
    "\n"
    "Question:\n"
    "{{question}}\n"
    "\n"
    "Options:\n"
    "{{options}}\n"
    "\n"
    "Identify the {{n}} kinds of specialist best suited to answer this question and write a system\n"
    "prompt for each one. Reply with a fenced JSON array of exactly {{n}} objects, each with keys\n"
    "\"name\", \"domain\" and \"system_prompt\". Names must be unique.\n";

inline constexpr const char* kReaskExperts =
    "Your previous reply could not be parsed. Reply with only a fenced JSON array of exactly {{n}}\n"
    "objects with keys \"name\", \"domain\" and \"system_prompt\". Names must be unique.\n";

inline constexpr const char* kToolSelect =
    "You must answer a question about a video. These tools are available:\n"
    "\n"
    "{{tools}}\n"
    "\n"
    "Question:\n"
    "{{question}}\n"
    "\n"
    "Name the single tool best suited to gather evidence for this question. Reply with the tool\n"
    "name only.\n";

inline constexpr const char* kReaskTool =
    "Reply with exactly one tool name from: {{tool_ids}}.\n";

inline constexpr const char* kExpertAnswer =
    "Question about the video:\n"
    "{{question}}\n"
    "\n"
    "Options:\n"
    "{{options}}\n"
    "\n"
    "Evidence gathered with the {{tool}} tool:\n"
    "{{tool_payload}}\n"
    "\n"
    "Choose the single most plausible option and explain your reasoning. Reply in the form\n"
    "\"Choice: <0-4>\" followed by your reasoning.\n";

inline constexpr const char* kReaskAnswer =
    "Your previous reply did not name a choice. Reply in the form \"Choice: <0-4>\" followed by a\n"
    "short justification.\n";

inline constexpr const char* kOrganizerDefault =
    "You are the organizer of a panel of experts that answered a question about a video.\n"
    "Consolidate their responses and decide the final answer.\n"
    "\n"
    "Question:\n"
    "{{question}}\n"
    "\n"
    "Options:\n"
    "{{options}}\n"
    "\n"
    "Expert responses:\n"
    "{{expert_responses}}\n"
    "\n"
    "Weigh the evidence and reply in the form \"Final: <0-4>\" followed by a brief rationale.\n";

// The concision sentence is what distinguishes this organizer variant.
inline constexpr const char* kOrganizerConcise =
    "You are the organizer of a panel of experts that answered a question about a video.\n"
    "Consolidate their responses and decide the final answer.\n"
    "\n"
    "Question:\n"
    "{{question}}\n"
    "\n"
    "Options:\n"
    "{{options}}\n"
    "\n"
    "Expert responses:\n"
    "{{expert_responses}}\n"
    "\n"
    "When you are unsure of the answer, select the shorter, more concise response among the options.\n"
    "\n"
    "Weigh the evidence and reply in the form \"Final: <0-4>\" followed by a brief rationale.\n";

inline constexpr const char* kOrganizerToolOffer =
    "Before deciding you may use one tool. Available tools:\n"
    "\n"
    "{{tools}}\n"
    "\n"
    "To use a tool, reply with exactly \"TOOL: <tool name>\" and nothing else. Otherwise reply with\n"
    "your final answer now.\n";

inline constexpr const char* kOrganizerToolResult =
    "Tool result from {{tool}}:\n"
    "{{tool_payload}}\n"
    "\n"
    "Now reply in the form \"Final: <0-4>\" followed by a brief rationale.\n";

inline constexpr const char* kReaskOrganizer =
    "Your previous reply did not name a final choice. Reply in the form \"Final: <0-4>\".\n";

inline constexpr const char* kSingleAgent =
    "Watch the attached video frames and answer the question.\n"
    "\n"
    "Question:\n"
    "{{question}}\n"
    "\n"
    "Options:\n"
    "{{options}}\n"
    "\n"
    "Reply in the form \"Answer: <0-4>\" followed by a brief justification.\n";

inline constexpr const char* kAnalyzerSingleBest =
    "The attached frames were sampled uniformly from the video, in temporal order. Using only this\n"
    "visual evidence, determine which option best answers the question.\n"
    "\n"
    "Question:\n"
    "{{question}}\n"
    "\n"
    "Options:\n"
    "{{options}}\n"
    "\n"
    "Reply with the single best option in the form \"Option <0-4>\" and describe the supporting\n"
    "evidence.\n";

inline constexpr const char* kAnalyzerPerChoice =
    "The attached frames were sampled uniformly from the video, in temporal order. Judge every\n"
    "option independently against the visual evidence.\n"
    "\n"
    "Question:\n"
    "{{question}}\n"
    "\n"
    "Options:\n"
    "{{options}}\n"
    "\n"
    "Reply with one line per option, \"<index>: correct\" or \"<index>: incorrect\", covering all\n"
    "five indices 0-4.\n";

inline constexpr const char* kReaskVerdict =
    "Your previous reply did not contain a verdict for every option. Reply with exactly five lines,\n"
    "\"<index>: correct\" or \"<index>: incorrect\", for indices 0-4.\n";

inline constexpr const char* kFallbackAssistant =
    "You are a careful AI assistant. Answer questions about the video strictly from the evidence\n"
    "provided, reasoning step by step before choosing an option.\n";

} // namespace prompt_defaults

// Named prompt templates. Ships with builtin defaults; any template can be
// overridden by a <name>.txt file in a prompt directory.
class PromptLibrary {
public:
    static PromptLibrary builtin() {
        namespace d = prompt_defaults;
        PromptLibrary lib;
        lib.templates_ = {
            {"dag_experts", d::kDagExperts},
            {"reask_experts", d::kReaskExperts},
            {"tool_select", d::kToolSelect},
            {"reask_tool", d::kReaskTool},
            {"expert_answer", d::kExpertAnswer},
            {"reask_answer", d::kReaskAnswer},
            {"organizer_default", d::kOrganizerDefault},
            {"organizer_concise", d::kOrganizerConcise},
            {"organizer_tool_offer", d::kOrganizerToolOffer},
            {"organizer_tool_result", d::kOrganizerToolResult},
            {"reask_organizer", d::kReaskOrganizer},
            {"single_agent", d::kSingleAgent},
            {"analyzer_single_best", d::kAnalyzerSingleBest},
            {"analyzer_per_choice", d::kAnalyzerPerChoice},
            {"reask_verdict", d::kReaskVerdict},
            {"fallback_assistant", d::kFallbackAssistant},
        };
        return lib;
    }

    const std::string& get(const std::string& name) const {
        auto it = templates_.find(name);
        if (it == templates_.end()) throw ConfigError("unknown prompt template '" + name + "'");
        return it->second;
    }

    bool has(const std::string& name) const { return templates_.count(name) > 0; }

    void set(const std::string& name, std::string text) { templates_[name] = std::move(text); }

    // Loads every *.txt in dir, overriding (or adding) by file stem.
    void load_dir(const std::string& dir) {
        namespace fs = std::filesystem;
        if (!fs::is_directory(dir)) throw ConfigError("prompt directory '" + dir + "' does not exist");
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
            std::ifstream in(entry.path());
            if (!in) throw IoError("cannot open prompt file '" + entry.path().string() + "'");
            std::ostringstream os;
            os << in.rdbuf();
            templates_[entry.path().stem().string()] = os.str();
        }
    }

    std::string render(const std::string& name, const std::map<std::string, std::string>& vars) const {
        return render_template(get(name), vars);
    }

    const std::map<std::string, std::string>& all() const { return templates_; }

private:
    std::map<std::string, std::string> templates_;
};

} // namespace mavqa
