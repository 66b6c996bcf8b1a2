#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mavqa/errors.hpp"
#include "mavqa/qa_model.hpp"
#include "mavqa/toolbox.hpp"

namespace mavqa {

enum class Topology { SingleAgent, MultiAgent };

enum class ProfileSource { Dag, AiAssistant };

enum class OrganizerVariant { Default, PreferConcise };

inline std::string organizer_variant_name(OrganizerVariant v) {
    return v == OrganizerVariant::Default ? "default" : "prefer_concise";
}

inline std::optional<OrganizerVariant> parse_organizer_variant(std::string_view s) {
    std::string l = to_lower(trim(s));
    if (l == "default") return OrganizerVariant::Default;
    if (l == "prefer_concise" || l == "modified") return OrganizerVariant::PreferConcise;
    return std::nullopt;
}

// How a tie among top-voted choices is resolved. TiedSetVoters adopts the
// choice of the highest-accuracy model among models that voted for a tied
// choice. GlobalAccuracy adopts the highest-accuracy voter's choice outright.
enum class TieBreakPolicy { TiedSetVoters, GlobalAccuracy };

inline std::optional<TieBreakPolicy> parse_tie_break(std::string_view s) {
    std::string l = to_lower(trim(s));
    if (l == "tied_set" || l == "tied_set_voters") return TieBreakPolicy::TiedSetVoters;
    if (l == "global_accuracy") return TieBreakPolicy::GlobalAccuracy;
    return std::nullopt;
}

// One model configuration: agent topology, which backend generates expert
// prompts and runs the agents, the tools offered, the organizer variant and
// tools, the analyzer backend and mode, and the frame count.
struct ModelConfig {
    std::string model_id;
    Topology topology = Topology::MultiAgent;
    int n_experts = 3;
    ProfileSource profile_source = ProfileSource::Dag;
    std::string dag_backend;                 // also runs the experts and organizer
    std::vector<std::string> expert_tools;
    AnalyzerMode analyzer_mode = AnalyzerMode::SingleBest;
    OrganizerVariant organizer_variant = OrganizerVariant::Default;
    std::vector<std::string> organizer_tools;
    std::string analyzer_backend;
    int frames = 18;
    std::optional<double> reference_accuracy;

    bool uses_tool(const std::string& tool_id) const {
        auto in = [&](const std::vector<std::string>& v) {
            return std::find(v.begin(), v.end(), tool_id) != v.end();
        };
        return topology == Topology::MultiAgent && (in(expert_tools) || in(organizer_tools));
    }

    void validate() const {
        if (model_id.empty()) throw ConfigError("model config with empty model_id");
        std::string where = "model '" + model_id + "': ";
        if (frames < 1) throw ConfigError(where + "frames must be >= 1");
        if (reference_accuracy && (*reference_accuracy < 0 || *reference_accuracy > 100)) {
            throw ConfigError(where + "reference_accuracy outside [0,100]");
        }
        if (topology == Topology::SingleAgent) {
            if (analyzer_backend.empty()) throw ConfigError(where + "single-agent topology needs analyzer_backend");
            return;
        }
        if (n_experts < 1) throw ConfigError(where + "n_experts must be >= 1");
        if (dag_backend.empty()) throw ConfigError(where + "multi-agent topology needs dag_backend");
        if (expert_tools.empty()) throw ConfigError(where + "multi-agent topology needs expert_tools");
        for (const auto& t : expert_tools) {
            if (t != kCaptionerId && t != kVideoAnalyzerId) throw ConfigError(where + "unknown expert tool '" + t + "'");
        }
        for (const auto& t : organizer_tools) {
            if (t != kCaptionerId && t != kVideoAnalyzerId) {
                throw ConfigError(where + "unknown organizer tool '" + t + "'");
            }
        }
        if (uses_tool(kVideoAnalyzerId) && analyzer_backend.empty()) {
            throw ConfigError(where + "video_analyzer tool needs analyzer_backend");
        }
    }

    ojson to_json() const {
        ojson j;
        j["model_id"] = model_id;
        j["topology"] = topology == Topology::SingleAgent ? "single_agent" : "multi_agent";
        j["n_experts"] = n_experts;
        j["profile_source"] = profile_source == ProfileSource::Dag ? "dag" : "ai_assistant";
        j["dag_backend"] = dag_backend;
        j["expert_tools"] = expert_tools;
        j["analyzer_mode"] = analyzer_mode_name(analyzer_mode);
        j["organizer_variant"] = organizer_variant_name(organizer_variant);
        j["organizer_tools"] = organizer_tools;
        j["analyzer_backend"] = analyzer_backend;
        j["frames"] = frames;
        if (reference_accuracy) j["reference_accuracy"] = *reference_accuracy;
        return j;
    }

    static ModelConfig from_json(const json& j) {
        ModelConfig c;
        c.model_id = j.at("model_id").get<std::string>();
        std::string topo = j.value("topology", "multi_agent");
        if (topo == "single_agent") {
            c.topology = Topology::SingleAgent;
        } else if (topo == "multi_agent") {
            c.topology = Topology::MultiAgent;
        } else {
            throw ConfigError("model '" + c.model_id + "': unknown topology '" + topo + "'");
        }
        c.n_experts = j.value("n_experts", 3);
        std::string src = j.value("profile_source", "dag");
        if (src == "dag") {
            c.profile_source = ProfileSource::Dag;
        } else if (src == "ai_assistant") {
            c.profile_source = ProfileSource::AiAssistant;
        } else {
            throw ConfigError("model '" + c.model_id + "': unknown profile_source '" + src + "'");
        }
        c.dag_backend = j.value("dag_backend", "");
        c.expert_tools = j.value("expert_tools", std::vector<std::string>{});
        if (j.contains("analyzer_mode")) {
            auto m = parse_analyzer_mode(j.at("analyzer_mode").get<std::string>());
            if (!m) {
                throw ConfigError("model '" + c.model_id + "': unknown analyzer_mode '" +
                                  j.at("analyzer_mode").get<std::string>() + "'");
            }
            c.analyzer_mode = *m;
        }
        if (j.contains("organizer_variant")) {
            auto v = parse_organizer_variant(j.at("organizer_variant").get<std::string>());
            if (!v) {
                throw ConfigError("model '" + c.model_id + "': unknown organizer_variant '" +
                                  j.at("organizer_variant").get<std::string>() + "'");
            }
            c.organizer_variant = *v;
        }
        c.organizer_tools = j.value("organizer_tools", std::vector<std::string>{});
        c.analyzer_backend = j.value("analyzer_backend", "");
        c.frames = j.value("frames", 18);
        if (j.contains("reference_accuracy") && !j.at("reference_accuracy").is_null()) {
            c.reference_accuracy = j.at("reference_accuracy").get<double>();
        }
        c.validate();
        return c;
    }
};

// The five stock configurations of the ensemble, with their reference
// individual accuracies used for tie-breaking.
inline std::vector<ModelConfig> builtin_configs() {
    std::vector<ModelConfig> out;

    ModelConfig m1;
    m1.model_id = "model1";
    m1.topology = Topology::SingleAgent;
    m1.analyzer_backend = "gpt-4-vision";
    m1.frames = 18;
    m1.reference_accuracy = 62.7;
    out.push_back(m1);

    ModelConfig m2;
    m2.model_id = "model2";
    m2.topology = Topology::MultiAgent;
    m2.n_experts = 2;
    m2.profile_source = ProfileSource::Dag;
    m2.dag_backend = "gpt-4";
    m2.expert_tools = {kCaptionerId, kVideoAnalyzerId};
    m2.analyzer_mode = AnalyzerMode::SingleBest;
    m2.organizer_variant = OrganizerVariant::Default;
    m2.organizer_tools = {kCaptionerId, kVideoAnalyzerId};
    m2.analyzer_backend = "gpt-4-vision";
    m2.frames = 18;
    m2.reference_accuracy = 63.4;
    out.push_back(m2);

    ModelConfig m3 = m2;
    m3.model_id = "model3";
    m3.dag_backend = "gpt-4o";
    m3.analyzer_mode = AnalyzerMode::PerChoiceVerdict;
    m3.organizer_tools = {};
    m3.reference_accuracy = 62.8;
    out.push_back(m3);

    ModelConfig m4 = m3;
    m4.model_id = "model4";
    m4.n_experts = 3;
    m4.analyzer_backend = "gpt-4o";
    m4.reference_accuracy = 68.4;
    out.push_back(m4);

    ModelConfig m5 = m4;
    m5.model_id = "model5";
    m5.organizer_variant = OrganizerVariant::PreferConcise;
    m5.reference_accuracy = 63.5;
    out.push_back(m5);

    return out;
}

} // namespace mavqa
