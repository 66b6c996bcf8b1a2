#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mavqa/errors.hpp"
#include "mavqa/llm_gateway.hpp"
#include "mavqa/model_config.hpp"
#include "mavqa/prompts.hpp"
#include "mavqa/qa_model.hpp"

namespace mavqa {

// Everything a run needs: dataset paths, media directories, backends, model
// registry and runtime knobs. Loaded from one JSON file with ${ENV_VAR}
// interpolation in string values so credentials stay out of the file.
struct RunConfig {
    std::string dataset_path;
    std::optional<std::string> answers_path;
    std::optional<std::string> categories_path;
    std::string captions_dir;
    std::string frames_dir;
    std::string results_dir = "results";
    std::optional<std::string> prompt_dir;
    int workers = 4;
    size_t context_budget = 2000;
    std::string fallback_tool = kCaptionerId;
    TieBreakPolicy tie_break = TieBreakPolicy::TiedSetVoters;
    DatasetFieldMap field_map;
    std::vector<BackendSpec> backends;
    std::vector<ModelConfig> models; // builtin_configs() when empty

    std::vector<ModelConfig> registry() const {
        return models.empty() ? builtin_configs() : models;
    }

    std::optional<ModelConfig> find_model(const std::string& model_id) const {
        for (const auto& m : registry()) {
            if (m.model_id == model_id) return m;
        }
        return std::nullopt;
    }
};

namespace detail {

inline std::string interpolate_env(const std::string& value, std::vector<std::string>* errors) {
    std::string out;
    size_t pos = 0;
    while (pos < value.size()) {
        size_t open = value.find("${", pos);
        if (open == std::string::npos) {
            out.append(value, pos, std::string::npos);
            break;
        }
        size_t close = value.find('}', open + 2);
        if (close == std::string::npos) {
            out.append(value, pos, std::string::npos);
            break;
        }
        out.append(value, pos, open - pos);
        std::string name = value.substr(open + 2, close - open - 2);
        const char* v = std::getenv(name.c_str());
        if (!v) {
            if (errors) errors->push_back("environment variable '" + name + "' is not set");
        } else {
            out += v;
        }
        pos = close + 1;
    }
    return out;
}

inline void interpolate_env_json(json& j, std::vector<std::string>* errors) {
    if (j.is_string()) {
        j = interpolate_env(j.get<std::string>(), errors);
    } else if (j.is_object() || j.is_array()) {
        for (auto& item : j) interpolate_env_json(item, errors);
    }
}

} // namespace detail

inline BackendSpec backend_spec_from_json(const json& j) {
    BackendSpec s;
    s.backend_id = j.at("backend_id").get<std::string>();
    s.endpoint = j.value("endpoint", "");
    s.model_name = j.value("model_name", "");
    s.api_key_env = j.value("api_key_env", "");
    s.supports_images = j.value("supports_images", false);
    s.temperature = j.value("temperature", 0.0);
    s.max_output_tokens = j.value("max_output_tokens", 1024);
    s.timeout_s = j.value("timeout_s", 60.0);
    s.max_retries = j.value("max_retries", 2);
    s.retry_backoff_s = j.value("retry_backoff_s", 0.25);
    s.concurrency = j.value("concurrency", 4);
    s.provider = j.value("provider", "openai_chat");
    s.validate();
    return s;
}

inline RunConfig run_config_from_json(json j) {
    std::vector<std::string> env_errors;
    detail::interpolate_env_json(j, &env_errors);
    if (!env_errors.empty()) {
        std::string msg = "config errors:";
        for (const auto& e : env_errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    RunConfig c;
    c.dataset_path = j.value("dataset", "");
    if (j.contains("answers") && !j.at("answers").is_null()) c.answers_path = j.at("answers").get<std::string>();
    if (j.contains("categories") && !j.at("categories").is_null()) {
        c.categories_path = j.at("categories").get<std::string>();
    }
    c.captions_dir = j.value("captions_dir", "");
    c.frames_dir = j.value("frames_dir", "");
    c.results_dir = j.value("results_dir", "results");
    if (j.contains("prompt_dir") && !j.at("prompt_dir").is_null()) {
        c.prompt_dir = j.at("prompt_dir").get<std::string>();
    }
    c.workers = j.value("workers", 4);
    c.context_budget = j.value("context_budget", size_t{2000});
    c.fallback_tool = j.value("fallback_tool", std::string(kCaptionerId));
    if (j.contains("tie_break")) {
        auto p = parse_tie_break(j.at("tie_break").get<std::string>());
        if (!p) throw ConfigError("unknown tie_break policy '" + j.at("tie_break").get<std::string>() + "'");
        c.tie_break = *p;
    }
    if (j.contains("field_map")) {
        const json& fm = j.at("field_map");
        c.field_map.question_uid = fm.value("question_uid", c.field_map.question_uid);
        c.field_map.video_uid = fm.value("video_uid", c.field_map.video_uid);
        c.field_map.question = fm.value("question", c.field_map.question);
        c.field_map.option_prefix = fm.value("option_prefix", c.field_map.option_prefix);
        c.field_map.duration = fm.value("duration", c.field_map.duration);
    }
    if (j.contains("backends")) {
        for (const auto& b : j.at("backends")) c.backends.push_back(backend_spec_from_json(b));
    }
    if (j.contains("models")) {
        for (const auto& m : j.at("models")) c.models.push_back(ModelConfig::from_json(m));
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    return run_config_from_json(read_json_file(path));
}

// Consolidated validation: every problem in one pass, so a bad config is
// fixed in one round trip. mock_mode relaxes backend requirements because
// the scripted mock replaces them all.
inline std::vector<std::string> validate_run_config(const RunConfig& c,
                                                    const std::vector<std::string>& selected_models,
                                                    bool mock_mode = false) {
    namespace fs = std::filesystem;
    std::vector<std::string> errors;

    if (c.dataset_path.empty()) {
        errors.push_back("no dataset path configured");
    } else if (!fs::is_regular_file(c.dataset_path)) {
        errors.push_back("dataset file '" + c.dataset_path + "' does not exist");
    }
    if (c.answers_path && !fs::is_regular_file(*c.answers_path)) {
        errors.push_back("answers file '" + *c.answers_path + "' does not exist");
    }
    if (c.categories_path && !fs::is_regular_file(*c.categories_path)) {
        errors.push_back("categories file '" + *c.categories_path + "' does not exist");
    }
    if (c.prompt_dir && !fs::is_directory(*c.prompt_dir)) {
        errors.push_back("prompt directory '" + *c.prompt_dir + "' does not exist");
    }
    if (c.workers < 1) errors.push_back("workers must be >= 1");
    if (c.context_budget < 100) errors.push_back("context_budget must be >= 100");

    std::set<std::string> backend_ids;
    for (const auto& b : c.backends) {
        try {
            b.validate();
        } catch (const std::exception& e) {
            errors.push_back(e.what());
        }
        if (!backend_ids.insert(b.backend_id).second) {
            errors.push_back("duplicate backend_id '" + b.backend_id + "'");
        }
        if (!mock_mode && b.endpoint.empty()) {
            errors.push_back("backend '" + b.backend_id + "' has no endpoint");
        }
    }

    std::set<std::string> model_ids;
    for (const auto& m : c.registry()) {
        if (!model_ids.insert(m.model_id).second) {
            errors.push_back("duplicate model_id '" + m.model_id + "'");
        }
    }

    for (const auto& id : selected_models) {
        auto m = c.find_model(id);
        if (!m) {
            errors.push_back("unknown model '" + id + "'");
            continue;
        }
        try {
            m->validate();
        } catch (const std::exception& e) {
            errors.push_back(e.what());
            continue;
        }
        bool needs_captions = m->topology == Topology::MultiAgent; // video context + captioner
        if (needs_captions && (c.captions_dir.empty() || !fs::is_directory(c.captions_dir))) {
            errors.push_back("model '" + id + "' uses captions but captions directory '" +
                             c.captions_dir + "' does not exist");
        }
        bool needs_frames = m->topology == Topology::SingleAgent || m->uses_tool(kVideoAnalyzerId);
        if (needs_frames && (c.frames_dir.empty() || !fs::is_directory(c.frames_dir))) {
            errors.push_back("model '" + id + "' uses video frames but frames directory '" +
                             c.frames_dir + "' does not exist");
        }
        if (!mock_mode) {
            std::vector<std::string> needed;
            if (m->topology == Topology::MultiAgent) needed.push_back(m->dag_backend);
            if (m->topology == Topology::SingleAgent || m->uses_tool(kVideoAnalyzerId)) {
                needed.push_back(m->analyzer_backend);
            }
            for (const auto& b : needed) {
                if (!backend_ids.count(b)) {
                    errors.push_back("model '" + id + "' references unknown backend '" + b + "'");
                }
            }
        }
    }
    return errors;
}

// Scripted-mock description: fallback, chaos knob, substring rules and exact
// fingerprint entries.
inline std::shared_ptr<MockTransport> load_mock_script(const std::string& path) {
    json j = read_json_file(path);
    auto mock = std::make_shared<MockTransport>();
    if (j.contains("fallback")) mock->set_fallback(j.at("fallback").get<std::string>());
    if (j.contains("chaos_percent")) {
        mock->set_chaos(j.at("chaos_percent").get<int>(), j.value("chaos_reply", "@@garbled@@"));
    }
    if (j.contains("rules")) {
        for (const auto& r : j.at("rules")) {
            const json& c = r.at("contains");
            if (c.is_array()) {
                mock->add_rule_all(c.get<std::vector<std::string>>(), r.at("reply").get<std::string>());
            } else {
                mock->add_rule(c.get<std::string>(), r.at("reply").get<std::string>());
            }
        }
    }
    if (j.contains("script")) {
        for (auto it = j.at("script").begin(); it != j.at("script").end(); ++it) {
            mock->add_script_fp(it.key(), it.value().get<std::string>());
        }
    }
    return mock;
}

// Registers every configured backend against the given transport (the CLI
// hands in the HTTP transport here).
inline Gateway build_live_gateway(const RunConfig& c, std::shared_ptr<ChatTransport> transport) {
    Gateway gw;
    for (const auto& spec : c.backends) gw.add_backend(spec, transport);
    return gw;
}

// Mock mode: every backend id referenced by the selected models resolves to
// the shared scripted transport; ids missing from the config get a
// synthesized vision-capable spec.
inline Gateway build_mock_gateway(const RunConfig& c, const std::vector<ModelConfig>& selected,
                                  std::shared_ptr<ChatTransport> mock) {
    Gateway gw;
    std::map<std::string, BackendSpec> by_id;
    for (const auto& spec : c.backends) by_id[spec.backend_id] = spec;
    std::set<std::string> needed;
    for (const auto& m : selected) {
        if (m.topology == Topology::MultiAgent) needed.insert(m.dag_backend);
        if (!m.analyzer_backend.empty()) needed.insert(m.analyzer_backend);
    }
    for (const auto& id : needed) {
        BackendSpec spec;
        auto it = by_id.find(id);
        if (it != by_id.end()) {
            spec = it->second;
        } else {
            spec.backend_id = id;
            spec.supports_images = true;
        }
        spec.max_retries = 0;
        spec.retry_backoff_s = 0;
        gw.add_backend(spec, mock);
    }
    return gw;
}

} // namespace mavqa
