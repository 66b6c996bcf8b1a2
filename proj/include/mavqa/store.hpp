#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "mavqa/errors.hpp"
#include "mavqa/qa_model.hpp"

namespace mavqa {

// Persisted results, one file per (model_id, question_id):
//   <root>/<model_id>/<question_id>.json
// Ensemble results live under <root>/ensemble/. Writes go through a temp
// file plus rename so a killed run never leaves a half-written record, which
// is what makes re-runs resumable.
class ResultsStore {
public:
    explicit ResultsStore(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const { return root_; }

    std::filesystem::path record_path(const std::string& model_id, const std::string& question_id) const {
        return root_ / model_id / (question_id + ".json");
    }

    bool has(const std::string& model_id, const std::string& question_id) const {
        return std::filesystem::is_regular_file(record_path(model_id, question_id));
    }

    void save(const PredictionRecord& record) const {
        write_json(record_path(record.model_id, record.question_id), record.to_json());
    }

    std::optional<PredictionRecord> load(const std::string& model_id, const std::string& question_id) const {
        auto path = record_path(model_id, question_id);
        if (!std::filesystem::is_regular_file(path)) return std::nullopt;
        return PredictionRecord::from_json(read_json_file(path.string()));
    }

    std::vector<PredictionRecord> load_model(const std::string& model_id,
                                             const std::vector<std::string>& question_ids) const {
        std::vector<PredictionRecord> out;
        for (const auto& qid : question_ids) {
            auto r = load(model_id, qid);
            if (r) out.push_back(std::move(*r));
        }
        return out;
    }

    // (model_id, question_id) pairs with no persisted record yet.
    std::vector<std::pair<std::string, std::string>> missing(
        const std::vector<std::string>& model_ids, const std::vector<std::string>& question_ids) const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& m : model_ids) {
            for (const auto& q : question_ids) {
                if (!has(m, q)) out.emplace_back(m, q);
            }
        }
        return out;
    }

    void write_json(const std::filesystem::path& path, const ojson& j) const {
        std::filesystem::create_directories(path.parent_path());
        std::filesystem::path tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp);
            if (!out) throw IoError("cannot write '" + tmp.string() + "'");
            out << j.dump(2) << "\n";
        }
        std::filesystem::rename(tmp, path);
    }

private:
    std::filesystem::path root_;
};

} // namespace mavqa
