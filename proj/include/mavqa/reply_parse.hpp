#pragma once

#include <array>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "mavqa/qa_model.hpp"
#include "mavqa/util.hpp"

namespace mavqa {

// Extracts a choice index from free-form reply text. Accepted forms, tried
// in this order (first matching form wins, case-insensitive):
//   "Choice: k", "Answer: k", "Final: k", "option k", a bare leading integer.
// Out-of-range numbers match no form, so "Choice: 7" is a parse failure.
inline std::optional<ChoiceIndex> parse_choice(const std::string& text) {
    static const std::array<std::regex, 5> patterns = {
        std::regex(R"(choice\s*(?:is)?\s*[:=]?\s*\(?([0-4])\b)", std::regex::icase),
        std::regex(R"(answer\s*(?:is)?\s*[:=]?\s*\(?([0-4])\b)", std::regex::icase),
        std::regex(R"(final(?:\s*answer)?\s*(?:is)?\s*[:=]?\s*\(?([0-4])\b)", std::regex::icase),
        std::regex(R"(option\s*\(?([0-4])\b)", std::regex::icase),
        std::regex(R"(^\s*\(?([0-4])\b)"),
    };
    for (const auto& re : patterns) {
        std::smatch m;
        if (std::regex_search(text, m, re)) {
            return ChoiceIndex(m[1].str()[0] - '0');
        }
    }
    return std::nullopt;
}

// Per-choice verdicts: one correct/incorrect (or yes/no, true/false) token
// per index. All five indices must be covered, otherwise the whole parse
// fails -- a partial mapping is never returned.
inline std::optional<std::array<bool, kNumChoices>> parse_verdicts(const std::string& text) {
    static const std::regex re(
        R"(\b([0-4])\s*[:.)\-]?\s*(incorrect|correct|yes|no|true|false)\b)", std::regex::icase);
    std::array<std::optional<bool>, kNumChoices> seen{};
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
        int idx = (*it)[1].str()[0] - '0';
        if (seen[static_cast<size_t>(idx)]) continue; // first verdict per index wins
        std::string tok = to_lower((*it)[2].str());
        seen[static_cast<size_t>(idx)] = (tok == "correct" || tok == "yes" || tok == "true");
    }
    std::array<bool, kNumChoices> out{};
    for (int i = 0; i < kNumChoices; ++i) {
        if (!seen[static_cast<size_t>(i)]) return std::nullopt;
        out[static_cast<size_t>(i)] = *seen[static_cast<size_t>(i)];
    }
    return out;
}

// Finds the earliest mention of a known tool id in the reply. Underscores in
// ids also match spaces ("video analyzer" selects "video_analyzer"). Ties go
// to the earlier entry in known_ids.
inline std::optional<std::string> parse_tool_mention(const std::string& text,
                                                     const std::vector<std::string>& known_ids) {
    std::string lower = to_lower(text);
    std::optional<std::string> best;
    size_t best_pos = std::string::npos;
    for (const auto& id : known_ids) {
        std::string a = to_lower(id);
        std::string b = a;
        for (auto& c : b) {
            if (c == '_') c = ' ';
        }
        size_t pos = lower.find(a);
        size_t pos_b = lower.find(b);
        if (pos_b < pos) pos = pos_b;
        if (pos < best_pos) {
            best_pos = pos;
            best = id;
        }
    }
    return best;
}

// A tool request must be announced with a leading "TOOL:" marker; replies
// that merely mention a tool while answering are not requests.
inline std::optional<std::string> parse_tool_request(const std::string& text,
                                                     const std::vector<std::string>& known_ids) {
    static const std::regex re(R"(^\s*tool\s*:\s*(.+)$)", std::regex::icase | std::regex::multiline);
    std::smatch m;
    if (!std::regex_search(text, m, re)) return std::nullopt;
    return parse_tool_mention(m[1].str(), known_ids);
}

// Pulls a JSON payload out of a reply: a ```json fenced block, a bare ```
// fence, or the first balanced array/object in the text.
inline std::optional<std::string> extract_json_block(const std::string& text) {
    size_t fence = text.find("```");
    if (fence != std::string::npos) {
        size_t start = text.find('\n', fence);
        if (start != std::string::npos) {
            size_t end = text.find("```", start);
            if (end != std::string::npos) {
                return trim(text.substr(start + 1, end - start - 1));
            }
        }
    }
    for (char open : {'[', '{'}) {
        char close = open == '[' ? ']' : '}';
        size_t start = text.find(open);
        if (start == std::string::npos) continue;
        int depth = 0;
        bool in_string = false;
        for (size_t i = start; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (c == '\\') {
                    ++i;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == open) {
                ++depth;
            } else if (c == close) {
                if (--depth == 0) return text.substr(start, i - start + 1);
            }
        }
    }
    return std::nullopt;
}

} // namespace mavqa
