// Command-line front end: run pipelines over a dataset, ensemble persisted
// predictions, and emit accuracy reports.
//
// Exit codes: 0 success, 1 runtime failure, 2 config/validation failure.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mavqa/http_transport.hpp"
#include "mavqa/mavqa.hpp"

namespace fs = std::filesystem;
using namespace mavqa;

namespace {

std::atomic<bool> g_cancel{false};

void handle_signal(int) {
    g_cancel.store(true);
}

struct CommonArgs {
    std::string config_path;
    std::string mock_script;
    std::string results_dir_override;
    std::vector<std::string> models;
    int workers_override = 0;
    int frames_override = 0;
    long long subset = 0;
    unsigned long long seed = 0;
};

struct LoadedRun {
    RunConfig config;
    std::vector<ModelConfig> selected;
    std::vector<VideoQuestion> questions;
    std::optional<std::map<std::string, int>> truths;
    Gateway gateway;
    PromptLibrary prompts = PromptLibrary::builtin();
    std::unique_ptr<CaptionStore> captions;
    std::unique_ptr<FrameLibrary> frames;
    std::shared_ptr<MockTransport> mock;

    PipelineDeps deps() const {
        PipelineDeps d;
        d.gateway = &gateway;
        d.captions = captions.get();
        d.frames = frames.get();
        d.prompts = &prompts;
        d.context_budget = config.context_budget;
        d.fallback_tool = config.fallback_tool;
        return d;
    }
};

std::vector<std::string> model_ids(const std::vector<ModelConfig>& configs) {
    std::vector<std::string> out;
    for (const auto& c : configs) out.push_back(c.model_id);
    return out;
}

std::vector<std::string> question_ids(const std::vector<VideoQuestion>& questions) {
    std::vector<std::string> out;
    for (const auto& q : questions) out.push_back(q.question_id);
    return out;
}

// Loads config + dataset, validates, and wires the gateway and stores.
// Throws ConfigError on any validation problem.
LoadedRun prepare(const CommonArgs& args, const std::vector<std::string>& wanted_models) {
    LoadedRun run;
    run.config = load_run_config(args.config_path);
    if (!args.results_dir_override.empty()) run.config.results_dir = args.results_dir_override;
    if (args.workers_override > 0) run.config.workers = args.workers_override;

    std::vector<std::string> selected_ids = wanted_models;
    if (selected_ids.empty()) selected_ids = model_ids(run.config.registry());

    bool mock_mode = !args.mock_script.empty();
    auto errors = validate_run_config(run.config, selected_ids, mock_mode);
    if (!errors.empty()) {
        std::string msg = "config validation failed:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }

    for (const auto& id : selected_ids) {
        auto m = run.config.find_model(id);
        ModelConfig config = *m;
        if (args.frames_override > 0) config.frames = args.frames_override;
        run.selected.push_back(std::move(config));
    }

    std::optional<std::string> answers = run.config.answers_path;
    run.questions = parse_dataset(run.config.dataset_path, answers, run.config.field_map);
    if (answers) run.truths = load_answers(*answers);
    if (args.subset > 0) {
        run.questions = subset_select(run.questions, static_cast<size_t>(args.subset), args.seed);
    }

    if (run.config.prompt_dir) run.prompts.load_dir(*run.config.prompt_dir);
    run.captions = std::make_unique<DirCaptionStore>(run.config.captions_dir);
    run.frames = std::make_unique<DirFrameLibrary>(run.config.frames_dir);

    if (mock_mode) {
        run.mock = load_mock_script(args.mock_script);
        run.gateway = build_mock_gateway(run.config, run.selected, run.mock);
    } else {
        run.gateway = build_live_gateway(run.config, std::make_shared<HttpTransport>());
    }
    return run;
}

int cmd_run(const CommonArgs& args) {
    auto run = prepare(args, args.models);
    ResultsStore store(run.config.results_dir);

    // Pending (config, question) pairs; persisted ones are skipped so
    // re-running resumes where the last run stopped.
    std::vector<std::pair<size_t, size_t>> work;
    for (size_t ci = 0; ci < run.selected.size(); ++ci) {
        for (size_t qi = 0; qi < run.questions.size(); ++qi) {
            if (!store.has(run.selected[ci].model_id, run.questions[qi].question_id)) {
                work.emplace_back(ci, qi);
            }
        }
    }
    size_t total = run.selected.size() * run.questions.size();
    std::printf("%zu question/model pairs, %zu already persisted, %zu to run\n", total,
                total - work.size(), work.size());

    auto deps = run.deps();
    std::atomic<size_t> done{0};
    std::mutex print_mu;
    parallel_for(work.size(), run.config.workers, [&](size_t w) {
        auto [ci, qi] = work[w];
        PredictionRecord record = run_pipeline(run.questions[qi], run.selected[ci], deps);
        if (run.truths) {
            auto it = run.truths->find(record.question_id);
            if (it != run.truths->end()) {
                record.correct = record.answered() && record.choice->value() == it->second;
            }
        }
        store.save(record);
        size_t n = done.fetch_add(1) + 1;
        std::lock_guard<std::mutex> lk(print_mu);
        std::printf("[%zu/%zu] %s %s -> %s\n", n, work.size(), record.model_id.c_str(),
                    record.question_id.c_str(),
                    record.answered() ? std::to_string(record.choice->value()).c_str() : "unanswered");
    }, &g_cancel);

    if (g_cancel.load()) {
        std::fprintf(stderr, "interrupted; completed records were persisted\n");
        return 1;
    }

    if (run.truths) {
        for (const auto& config : run.selected) {
            auto records = store.load_model(config.model_id, question_ids(run.questions));
            if (records.empty()) continue;
            std::printf("%s accuracy: %s%% (%zu questions)\n", config.model_id.c_str(),
                        format_pct(accuracy(records, *run.truths)).c_str(), records.size());
        }
    }
    return 0;
}

int cmd_ensemble(const CommonArgs& args, bool execute) {
    auto run = prepare(args, args.models);
    ResultsStore store(run.config.results_dir);

    auto missing = store.missing(model_ids(run.selected), question_ids(run.questions));
    if (!missing.empty() && !execute) {
        std::fprintf(stderr, "missing %zu predictions; re-run with --execute or run them first:\n",
                     missing.size());
        for (const auto& [m, q] : missing) std::fprintf(stderr, "  - %s %s\n", m.c_str(), q.c_str());
        return 1;
    }

    std::map<std::string, int> truths_map;
    if (run.truths) truths_map = *run.truths;
    auto deps = run.deps();
    auto results = run_ensemble(run.questions, run.selected, deps, &store, run.config.workers,
                                run.config.tie_break, run.truths ? &truths_map : nullptr, &g_cancel);
    if (g_cancel.load()) {
        std::fprintf(stderr, "interrupted; completed records were persisted\n");
        return 1;
    }

    // Accuracy table: one row per model, one for the ensemble.
    ojson report;
    report["questions"] = run.questions.size();
    ojson rows = ojson::array();
    if (run.truths) {
        for (const auto& config : run.selected) {
            auto records = store.load_model(config.model_id, question_ids(run.questions));
            double acc = accuracy(records, *run.truths);
            std::printf("%-12s %s\n", config.model_id.c_str(), format_pct(acc).c_str());
            rows.push_back(ojson{{"model", config.model_id}, {"accuracy", round1(acc)}});
        }
        int correct = 0;
        for (const auto& r : results) {
            auto it = run.truths->find(r.question_id);
            if (it != run.truths->end() && r.final_choice && r.final_choice->value() == it->second) {
                ++correct;
            }
        }
        double acc = 100.0 * correct / static_cast<double>(results.size());
        std::printf("%-12s %s\n", "ensemble", format_pct(acc).c_str());
        rows.push_back(ojson{{"model", "ensemble"}, {"accuracy", round1(acc)}});
    } else {
        std::printf("no answers file configured; wrote votes only\n");
    }
    report["accuracy"] = std::move(rows);

    int ties = 0;
    for (const auto& r : results) ties += r.tie_broken ? 1 : 0;
    report["ties_broken"] = ties;
    store.write_json(fs::path(run.config.results_dir) / "reports" / "ensemble_report.json", report);
    std::printf("ensemble results under %s\n", (fs::path(run.config.results_dir) / "ensemble").c_str());
    return 0;
}

int cmd_report(const CommonArgs& args, const std::vector<std::string>& conditions,
               const std::string& format, const std::string& out_path) {
    auto run = prepare(args, args.models.empty() ? std::vector<std::string>{} : args.models);
    if (!run.truths) throw ConfigError("report needs an answers file");
    ResultsStore store(run.config.results_dir);

    std::map<std::string, std::vector<QuestionCategory>> categories;
    if (run.config.categories_path) categories = load_categories(*run.config.categories_path);

    // Conditions are "label=model_id" pairs; a bare model id labels itself.
    std::vector<std::pair<std::string, EvalReport>> reports;
    std::vector<std::string> wanted = conditions;
    if (wanted.empty() && !args.models.empty()) wanted = args.models;
    if (wanted.empty()) throw ConfigError("report needs --model or --condition");

    for (const auto& spec : wanted) {
        // "label=model_id"; the label itself may contain '=' ("F=18=model4").
        auto eq = spec.rfind('=');
        std::string label = eq == std::string::npos ? spec : spec.substr(0, eq);
        std::string model = eq == std::string::npos ? spec : spec.substr(eq + 1);
        auto records = store.load_model(model, question_ids(run.questions));
        if (records.empty()) throw Error("no persisted predictions for model '" + model + "'");
        reports.emplace_back(label, per_category_report(records, *run.truths, categories, label));
    }

    ojson machine;
    std::ostringstream text;
    ojson report_list = ojson::array();
    for (const auto& [label, report] : reports) {
        text << format_report_text(report) << "\n";
        report_list.push_back(report.to_json());
    }
    machine["reports"] = std::move(report_list);
    if (reports.size() >= 2) {
        auto table = compare_conditions(reports);
        text << format_delta_text(table);
        machine["comparison"] = delta_table_to_json(table);
    }

    std::string output = format == "machine" ? machine.dump(2) + "\n" : text.str();
    if (out_path.empty()) {
        std::fputs(output.c_str(), stdout);
    } else {
        std::ofstream out(out_path);
        if (!out) throw IoError("cannot write '" + out_path + "'");
        out << output;
    }
    return 0;
}

int cmd_validate(const CommonArgs& args) {
    auto config = load_run_config(args.config_path);
    if (!args.results_dir_override.empty()) config.results_dir = args.results_dir_override;
    std::vector<std::string> selected = args.models;
    if (selected.empty()) selected = model_ids(config.registry());
    auto errors = validate_run_config(config, selected, !args.mock_script.empty());
    if (errors.empty()) {
        std::printf("config ok (%zu models, %zu backends)\n", selected.size(), config.backends.size());
        return 0;
    }
    std::string msg = "config validation failed:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
}

int cmd_export(const CommonArgs& args, const std::string& source, const std::string& out_path) {
    auto run = prepare(args, {});
    ResultsStore store(run.config.results_dir);

    ojson submission;
    int unanswered = 0;
    for (const auto& q : run.questions) {
        std::optional<int> choice;
        if (source == "ensemble") {
            auto path = fs::path(run.config.results_dir) / "ensemble" / (q.question_id + ".json");
            if (fs::is_regular_file(path)) {
                auto j = read_json_file(path.string());
                if (!j.at("final_choice").is_null()) choice = j.at("final_choice").get<int>();
            }
        } else {
            auto r = store.load(source, q.question_id);
            if (r && r->answered()) choice = r->choice->value();
        }
        if (!choice) {
            ++unanswered;
            choice = 0; // a submission needs a choice for every question
        }
        submission[q.question_id] = *choice;
    }
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write '" + out_path + "'");
    out << submission.dump(2) << "\n";
    if (unanswered > 0) {
        std::fprintf(stderr, "warning: %d unanswered questions exported as choice 0\n", unanswered);
    }
    std::printf("wrote %zu entries to %s\n", run.questions.size(), out_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);

    CLI::App app{"Multi-agent video question answering"};
    app.require_subcommand(1);

    CommonArgs args;
    app.add_option("--config", args.config_path, "Run configuration file")->required();
    app.add_option("--results-dir", args.results_dir_override, "Override the results directory");
    app.add_option("--mock", args.mock_script, "Replace every backend with this scripted mock");
    app.add_option("--workers", args.workers_override, "Override the worker limit");

    auto* run_cmd = app.add_subcommand("run", "Run a model pipeline over the dataset");
    run_cmd->add_option("--model", args.models, "Model id(s) to run")->required();
    run_cmd->add_option("--subset", args.subset, "Evaluate a seeded subset of this size");
    run_cmd->add_option("--seed", args.seed, "Subset selection seed");
    run_cmd->add_option("--frames", args.frames_override, "Override the frame count");

    auto* ens_cmd = app.add_subcommand("ensemble", "Majority-vote persisted predictions");
    ens_cmd->add_option("--model", args.models, "Model ids to ensemble (default: all)");
    ens_cmd->add_option("--subset", args.subset, "Evaluate a seeded subset of this size");
    ens_cmd->add_option("--seed", args.seed, "Subset selection seed");
    bool execute = false;
    ens_cmd->add_flag("--execute", execute, "Run pipelines for missing predictions");

    auto* rep_cmd = app.add_subcommand("report", "Accuracy and per-category reports");
    rep_cmd->add_option("--model", args.models, "Model id(s) to report on");
    std::vector<std::string> conditions;
    rep_cmd->add_option("--condition", conditions, "label=model_id condition (repeatable)");
    std::string format = "text";
    rep_cmd->add_option("--format", format, "Output format: text or machine")
        ->check(CLI::IsMember({"text", "machine"}));
    std::string out_path;
    rep_cmd->add_option("--out", out_path, "Write the report to this file");

    auto* val_cmd = app.add_subcommand("validate", "Validate the configuration");
    val_cmd->add_option("--model", args.models, "Model ids to validate (default: all)");

    auto* exp_cmd = app.add_subcommand("export", "Write a submission file (question_uid -> choice)");
    std::string source = "ensemble";
    exp_cmd->add_option("--source", source, "Model id or 'ensemble'");
    std::string export_path = "submission.json";
    exp_cmd->add_option("--out", export_path, "Output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return cmd_run(args);
        if (ens_cmd->parsed()) return cmd_ensemble(args, execute);
        if (rep_cmd->parsed()) return cmd_report(args, conditions, format, out_path);
        if (val_cmd->parsed()) return cmd_validate(args);
        if (exp_cmd->parsed()) return cmd_export(args, source, export_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
