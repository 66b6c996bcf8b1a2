#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mavqa/errors.hpp"
#include "mavqa/model_config.hpp"
#include "mavqa/qa_model.hpp"
#include "mavqa/runner.hpp"
#include "mavqa/stage2.hpp"
#include "mavqa/store.hpp"

namespace mavqa {

// Vote counts per choice plus the contributing (model_id, choice) pairs,
// sorted by model_id.
struct VoteTally {
    std::array<int, kNumChoices> counts{};
    std::vector<std::pair<std::string, int>> votes;

    int total() const {
        int t = 0;
        for (int c : counts) t += c;
        return t;
    }
};

struct EnsembleResult {
    std::string question_id;
    std::optional<ChoiceIndex> final_choice;
    VoteTally tally;
    bool tie_broken = false;
    std::optional<std::string> tie_breaker_model;
    bool unanswered = false;

    ojson to_json() const {
        ojson j;
        j["question_id"] = question_id;
        if (final_choice) j["final_choice"] = final_choice->value(); else j["final_choice"] = nullptr;
        ojson counts = ojson::array();
        for (int c : tally.counts) counts.push_back(c);
        j["counts"] = std::move(counts);
        ojson votes = ojson::array();
        for (const auto& [m, c] : tally.votes) votes.push_back(ojson{{"model_id", m}, {"choice", c}});
        j["votes"] = std::move(votes);
        j["tie_broken"] = tie_broken;
        if (tie_breaker_model) j["tie_breaker_model"] = *tie_breaker_model; else j["tie_breaker_model"] = nullptr;
        j["unanswered"] = unanswered;
        return j;
    }
};

// Majority vote with accuracy-based tie-breaking. The choice with strictly
// the most votes wins. On a tie among top-voted choices the winner is, under
// TiedSetVoters, the choice of the highest-accuracy model among models that
// voted for a tied choice; under GlobalAccuracy, the choice of the
// highest-accuracy voter outright. Accuracy ties fall back to lexicographic
// model_id, so the result is deterministic and order-independent.
inline EnsembleResult majority_vote(const std::vector<std::pair<std::string, ChoiceIndex>>& predictions,
                                    const std::map<std::string, double>& accuracies,
                                    TieBreakPolicy policy = TieBreakPolicy::TiedSetVoters) {
    if (predictions.empty()) throw PreconditionError("majority_vote needs at least one prediction");

    EnsembleResult result;
    for (const auto& [model_id, choice] : predictions) {
        result.tally.counts[static_cast<size_t>(choice.value())]++;
        result.tally.votes.emplace_back(model_id, choice.value());
    }
    std::sort(result.tally.votes.begin(), result.tally.votes.end());

    int top = *std::max_element(result.tally.counts.begin(), result.tally.counts.end());
    std::vector<int> tied;
    for (int c = 0; c < kNumChoices; ++c) {
        if (result.tally.counts[static_cast<size_t>(c)] == top) tied.push_back(c);
    }

    if (tied.size() == 1) {
        result.final_choice = ChoiceIndex(tied.front());
        return result;
    }

    auto is_tied = [&](int choice) {
        return std::find(tied.begin(), tied.end(), choice) != tied.end();
    };
    const std::pair<std::string, int>* winner = nullptr;
    double winner_acc = 0;
    for (const auto& vote : result.tally.votes) {
        if (policy == TieBreakPolicy::TiedSetVoters && !is_tied(vote.second)) continue;
        auto it = accuracies.find(vote.first);
        if (it == accuracies.end()) {
            throw ConfigError("majority_vote: no accuracy for model '" + vote.first +
                              "' needed for tie-break");
        }
        // votes are sorted by model_id, so on equal accuracy the
        // lexicographically smallest model wins.
        if (!winner || it->second > winner_acc) {
            winner = &vote;
            winner_acc = it->second;
        }
    }
    result.final_choice = ChoiceIndex(winner->second);
    result.tie_broken = true;
    result.tie_breaker_model = winner->first;
    return result;
}

// Runs every (question, config) pair through the pipeline -- reusing
// persisted records and persisting new ones when a store is given -- then
// majority-votes per question. Unanswered predictions do not vote; a
// question all models left unanswered yields a result flagged unanswered.
inline std::vector<EnsembleResult> run_ensemble(const std::vector<VideoQuestion>& questions,
                                                const std::vector<ModelConfig>& configs,
                                                const PipelineDeps& deps, const ResultsStore* store,
                                                int worker_limit = 4,
                                                TieBreakPolicy policy = TieBreakPolicy::TiedSetVoters,
                                                const std::map<std::string, int>* truths = nullptr,
                                                const std::atomic<bool>* cancel = nullptr) {
    if (configs.empty()) throw PreconditionError("run_ensemble needs at least one model config");
    {
        std::set<std::string> ids;
        for (const auto& c : configs) {
            c.validate();
            if (!ids.insert(c.model_id).second) {
                throw ConfigError("duplicate model_id '" + c.model_id + "' in ensemble");
            }
        }
    }

    std::map<std::string, double> accuracies;
    for (const auto& c : configs) {
        if (c.reference_accuracy) accuracies[c.model_id] = *c.reference_accuracy;
    }

    // Records keyed (config index, question index); filled from the store
    // first, computed otherwise.
    std::vector<std::vector<PredictionRecord>> records(configs.size());
    std::vector<std::pair<size_t, size_t>> work;
    for (size_t ci = 0; ci < configs.size(); ++ci) {
        records[ci].resize(questions.size());
        for (size_t qi = 0; qi < questions.size(); ++qi) {
            std::optional<PredictionRecord> cached;
            if (store) cached = store->load(configs[ci].model_id, questions[qi].question_id);
            if (cached) {
                records[ci][qi] = std::move(*cached);
            } else {
                work.emplace_back(ci, qi);
            }
        }
    }

    parallel_for(work.size(), worker_limit, [&](size_t w) {
        auto [ci, qi] = work[w];
        PredictionRecord record = run_pipeline(questions[qi], configs[ci], deps);
        if (truths) {
            auto it = truths->find(record.question_id);
            if (it != truths->end()) {
                record.correct = record.answered() && record.choice->value() == it->second;
            }
        }
        if (store) store->save(record);
        records[ci][qi] = std::move(record);
    }, cancel);

    // A cancelled run keeps whatever was persisted but reports nothing.
    if (cancel && cancel->load(std::memory_order_relaxed)) return {};

    std::vector<EnsembleResult> results;
    results.reserve(questions.size());
    for (size_t qi = 0; qi < questions.size(); ++qi) {
        std::vector<std::pair<std::string, ChoiceIndex>> votes;
        for (size_t ci = 0; ci < configs.size(); ++ci) {
            const PredictionRecord& r = records[ci][qi];
            if (r.answered()) votes.emplace_back(r.model_id, *r.choice);
        }
        if (votes.empty()) {
            EnsembleResult res;
            res.question_id = questions[qi].question_id;
            res.unanswered = true;
            results.push_back(std::move(res));
            continue;
        }
        EnsembleResult res = majority_vote(votes, accuracies, policy);
        res.question_id = questions[qi].question_id;
        results.push_back(std::move(res));
    }
    if (store) {
        for (const auto& res : results) {
            store->write_json(store->root() / "ensemble" / (res.question_id + ".json"), res.to_json());
        }
    }
    return results;
}

} // namespace mavqa
