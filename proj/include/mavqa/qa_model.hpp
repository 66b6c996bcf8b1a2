#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mavqa/errors.hpp"
#include "mavqa/util.hpp"

namespace mavqa {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

inline constexpr int kNumChoices = 5;

// Index of one of the five answer choices. Validated on construction.
class ChoiceIndex {
public:
    explicit ChoiceIndex(int value) : value_(value) {
        if (value < 0 || value >= kNumChoices) {
            throw ValidationError("choice index " + std::to_string(value) + " out of range [0,4]");
        }
    }

    int value() const { return value_; }

    friend bool operator==(const ChoiceIndex& a, const ChoiceIndex& b) { return a.value_ == b.value_; }
    friend bool operator!=(const ChoiceIndex& a, const ChoiceIndex& b) { return a.value_ != b.value_; }
    friend bool operator<(const ChoiceIndex& a, const ChoiceIndex& b) { return a.value_ < b.value_; }

private:
    int value_;
};

enum class QuestionCategory {
    PurposeGoal,
    ToolsMaterials,
    KeyAction,
    ActionSequence,
    CharacterInteraction,
    Unknown,
};

inline constexpr std::array<QuestionCategory, 6> kAllCategories = {
    QuestionCategory::PurposeGoal,     QuestionCategory::ToolsMaterials,
    QuestionCategory::KeyAction,       QuestionCategory::ActionSequence,
    QuestionCategory::CharacterInteraction, QuestionCategory::Unknown,
};

inline std::string category_name(QuestionCategory c) {
    switch (c) {
        case QuestionCategory::PurposeGoal: return "Purpose/Goal Identification";
        case QuestionCategory::ToolsMaterials: return "Tools and Materials Usage";
        case QuestionCategory::KeyAction: return "Key Action/Moment Detection";
        case QuestionCategory::ActionSequence: return "Action Sequence Analysis";
        case QuestionCategory::CharacterInteraction: return "Character Interaction";
        case QuestionCategory::Unknown: return "Unknown";
    }
    return "Unknown";
}

inline std::string category_id(QuestionCategory c) {
    switch (c) {
        case QuestionCategory::PurposeGoal: return "purpose_goal";
        case QuestionCategory::ToolsMaterials: return "tools_materials";
        case QuestionCategory::KeyAction: return "key_action";
        case QuestionCategory::ActionSequence: return "action_sequence";
        case QuestionCategory::CharacterInteraction: return "character_interaction";
        case QuestionCategory::Unknown: return "unknown";
    }
    return "unknown";
}

// Accepts both the compact id and the human-readable label.
inline std::optional<QuestionCategory> parse_category(std::string_view label) {
    std::string l = to_lower(trim(label));
    for (QuestionCategory c : kAllCategories) {
        if (l == to_lower(category_id(c)) || l == to_lower(category_name(c))) return c;
    }
    return std::nullopt;
}

// One 5-choice question bound to a video reference.
struct VideoQuestion {
    std::string question_id;
    std::string video_id;
    std::string question_text;
    std::array<std::string, kNumChoices> options{};
    std::optional<QuestionCategory> category;
    std::optional<ChoiceIndex> ground_truth;
    double duration_s = 180.0;

    void validate() const {
        if (question_id.empty()) throw ValidationError("question has empty question_id");
        if (video_id.empty()) throw ValidationError("question '" + question_id + "' has empty video_id");
        if (question_text.empty()) throw ValidationError("question '" + question_id + "' has empty text");
        for (int i = 0; i < kNumChoices; ++i) {
            if (options[static_cast<size_t>(i)].empty()) {
                throw ValidationError("question '" + question_id + "': option " + std::to_string(i) + " is empty");
            }
        }
        if (!(duration_s > 0)) {
            throw ValidationError("question '" + question_id + "': duration_s must be > 0");
        }
    }
};

inline bool operator==(const VideoQuestion& a, const VideoQuestion& b) {
    auto gt = [](const std::optional<ChoiceIndex>& c) { return c ? c->value() : -1; };
    auto cat = [](const std::optional<QuestionCategory>& c) { return c ? static_cast<int>(*c) : -1; };
    return a.question_id == b.question_id && a.video_id == b.video_id &&
           a.question_text == b.question_text && a.options == b.options &&
           cat(a.category) == cat(b.category) && gt(a.ground_truth) == gt(b.ground_truth) &&
           a.duration_s == b.duration_s;
}

// One labeled event in a pipeline transcript, in order of occurrence.
struct TranscriptEvent {
    std::string label;
    std::string text;
};

inline bool operator==(const TranscriptEvent& a, const TranscriptEvent& b) {
    return a.label == b.label && a.text == b.text;
}

using Transcript = std::vector<TranscriptEvent>;

// The unit consumed by the ensemble and eval modules: one model's answer to
// one question plus the full exchange that produced it. A record with no
// choice is an unanswered prediction; it never votes and scores incorrect.
struct PredictionRecord {
    std::string question_id;
    std::string model_id;
    std::optional<ChoiceIndex> choice;
    std::optional<bool> correct;
    std::vector<std::string> flags;
    Transcript transcript;

    bool answered() const { return choice.has_value(); }

    bool has_flag(std::string_view f) const {
        for (const auto& x : flags) {
            if (x == f) return true;
        }
        return false;
    }

    ojson to_json() const {
        ojson j;
        j["question_id"] = question_id;
        j["model_id"] = model_id;
        j["answered"] = answered();
        if (choice) j["choice"] = choice->value(); else j["choice"] = nullptr;
        if (correct) j["correct"] = *correct; else j["correct"] = nullptr;
        j["flags"] = flags;
        ojson events = ojson::array();
        for (const auto& e : transcript) {
            events.push_back(ojson{{"label", e.label}, {"text", e.text}});
        }
        j["transcript"] = std::move(events);
        return j;
    }

    static PredictionRecord from_json(const json& j) {
        PredictionRecord r;
        r.question_id = j.at("question_id").get<std::string>();
        r.model_id = j.at("model_id").get<std::string>();
        if (j.contains("choice") && !j.at("choice").is_null()) {
            r.choice = ChoiceIndex(j.at("choice").get<int>());
        }
        if (j.contains("correct") && !j.at("correct").is_null()) {
            r.correct = j.at("correct").get<bool>();
        }
        if (j.contains("flags")) r.flags = j.at("flags").get<std::vector<std::string>>();
        if (j.contains("transcript")) {
            for (const auto& e : j.at("transcript")) {
                r.transcript.push_back({e.at("label").get<std::string>(), e.at("text").get<std::string>()});
            }
        }
        return r;
    }
};

// Maps this artifact's canonical record keys onto whatever the dataset file
// uses. Defaults match the documented schema; override to ingest files with
// different field names (e.g. "q_uid" style releases).
struct DatasetFieldMap {
    std::string question_uid = "question_uid";
    std::string video_uid = "video_uid";
    std::string question = "question";
    std::string option_prefix = "option";
    std::string duration = "duration_s";
};

namespace detail {

inline std::string record_label(size_t index, const json& rec, const DatasetFieldMap& fm) {
    std::string label = "record " + std::to_string(index);
    if (rec.is_object() && rec.contains(fm.question_uid) && rec.at(fm.question_uid).is_string()) {
        label += " ('" + rec.at(fm.question_uid).get<std::string>() + "')";
    }
    return label;
}

} // namespace detail

// Parses the dataset file: a JSON array with one self-describing record per
// question. Merges ground-truth labels from answers_path when given.
// Preserves input order.
inline std::vector<VideoQuestion> parse_dataset_json(const json& root,
                                                     const std::map<std::string, int>* answers = nullptr,
                                                     const DatasetFieldMap& fm = {}) {
    if (!root.is_array()) {
        throw IoError("dataset root must be a JSON array of question records");
    }
    std::vector<VideoQuestion> out;
    out.reserve(root.size());
    for (size_t i = 0; i < root.size(); ++i) {
        const json& rec = root[i];
        std::string label = detail::record_label(i, rec, fm);
        if (!rec.is_object()) {
            throw IoError("dataset " + label + ": not an object");
        }
        auto need = [&](const std::string& key) -> const json& {
            if (!rec.contains(key)) {
                throw IoError("dataset " + label + ": missing field '" + key + "'");
            }
            return rec.at(key);
        };
        VideoQuestion q;
        q.question_id = need(fm.question_uid).get<std::string>();
        q.video_id = need(fm.video_uid).get<std::string>();
        q.question_text = need(fm.question).get<std::string>();

        int present = 0;
        while (rec.contains(fm.option_prefix + std::to_string(present))) ++present;
        if (present != kNumChoices) {
            throw ValidationError("dataset " + label + ": expected 5 options, got " + std::to_string(present));
        }
        for (int k = 0; k < kNumChoices; ++k) {
            q.options[static_cast<size_t>(k)] = rec.at(fm.option_prefix + std::to_string(k)).get<std::string>();
        }
        if (rec.contains(fm.duration)) q.duration_s = rec.at(fm.duration).get<double>();
        if (rec.contains("ground_truth") && !rec.at("ground_truth").is_null()) {
            q.ground_truth = ChoiceIndex(rec.at("ground_truth").get<int>());
        }
        if (rec.contains("category") && !rec.at("category").is_null()) {
            auto cat = parse_category(rec.at("category").get<std::string>());
            if (!cat) {
                throw ValidationError("dataset " + label + ": unknown category '" +
                                      rec.at("category").get<std::string>() + "'");
            }
            q.category = *cat;
        }
        if (answers) {
            auto it = answers->find(q.question_id);
            if (it != answers->end()) q.ground_truth = ChoiceIndex(it->second);
        }
        q.validate();
        out.push_back(std::move(q));
    }
    return out;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw IoError("cannot parse '" + path + "': " + e.what());
    }
    return j;
}

// Answers file: JSON object mapping question_uid -> integer choice in [0,4].
inline std::map<std::string, int> load_answers(const std::string& path) {
    json j = read_json_file(path);
    if (!j.is_object()) throw IoError("answers file '" + path + "' must be a JSON object");
    std::map<std::string, int> out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        int v = it.value().is_string() ? std::stoi(it.value().get<std::string>()) : it.value().get<int>();
        if (v < 0 || v >= kNumChoices) {
            throw ValidationError("answers file: '" + it.key() + "' maps to " + std::to_string(v) +
                                  ", outside [0,4]");
        }
        out[it.key()] = v;
    }
    return out;
}

// Categories file: JSON object mapping question_uid -> label or list of
// labels. Multi-label assignments are preserved as-is.
inline std::map<std::string, std::vector<QuestionCategory>> load_categories(const std::string& path) {
    json j = read_json_file(path);
    if (!j.is_object()) throw IoError("categories file '" + path + "' must be a JSON object");
    std::map<std::string, std::vector<QuestionCategory>> out;
    auto one = [&](const std::string& uid, const json& v) {
        auto cat = parse_category(v.get<std::string>());
        if (!cat) {
            throw ValidationError("categories file: unknown category '" + v.get<std::string>() +
                                  "' for '" + uid + "'");
        }
        out[uid].push_back(*cat);
    };
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.value().is_array()) {
            for (const auto& v : it.value()) one(it.key(), v);
        } else {
            one(it.key(), it.value());
        }
    }
    return out;
}

inline std::vector<VideoQuestion> parse_dataset(const std::string& path,
                                                const std::optional<std::string>& answers_path = std::nullopt,
                                                const DatasetFieldMap& fm = {}) {
    std::optional<std::map<std::string, int>> answers;
    if (answers_path) answers = load_answers(*answers_path);
    return parse_dataset_json(read_json_file(path), answers ? &*answers : nullptr, fm);
}

// Serializes with the canonical field names; ground truth and category are
// written when present so a round trip preserves them.
inline ojson serialize_dataset(const std::vector<VideoQuestion>& questions) {
    ojson arr = ojson::array();
    for (const auto& q : questions) {
        ojson rec;
        rec["question_uid"] = q.question_id;
        rec["video_uid"] = q.video_id;
        rec["question"] = q.question_text;
        for (int k = 0; k < kNumChoices; ++k) {
            rec["option" + std::to_string(k)] = q.options[static_cast<size_t>(k)];
        }
        rec["duration_s"] = q.duration_s;
        if (q.ground_truth) rec["ground_truth"] = q.ground_truth->value();
        if (q.category) rec["category"] = category_id(*q.category);
        arr.push_back(std::move(rec));
    }
    return arr;
}

// Seeded deterministic shuffle, first n taken. Same (inputs, seed) -> same
// subset on every platform: the generator and the index draw are both fully
// specified, no distribution involved.
inline std::vector<VideoQuestion> subset_select(const std::vector<VideoQuestion>& questions,
                                                size_t n, std::uint64_t seed) {
    if (n > questions.size()) {
        throw PreconditionError("subset size " + std::to_string(n) + " exceeds dataset size " +
                                std::to_string(questions.size()));
    }
    std::vector<size_t> idx(questions.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (size_t i = idx.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    std::vector<VideoQuestion> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(questions[idx[i]]);
    return out;
}

} // namespace mavqa
