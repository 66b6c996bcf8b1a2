#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mavqa/errors.hpp"
#include "mavqa/qa_model.hpp"

namespace mavqa {

// Display rounding: half-up to one decimal. Comparisons elsewhere always run
// on the full-precision values.
inline double round1(double x) {
    return std::floor(x * 10.0 + 0.5) / 10.0;
}

inline std::string format_pct(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", round1(x));
    return std::string(buf);
}

inline std::string format_delta(double x) {
    char buf[32];
    double r = round1(x);
    std::snprintf(buf, sizeof(buf), "%+.1f", r == 0.0 ? 0.0 : r);
    return std::string(buf);
}

// Percentage of correct predictions; an unanswered prediction counts as
// incorrect. Full precision; round only for display.
inline double accuracy(const std::vector<PredictionRecord>& predictions,
                       const std::map<std::string, int>& truths) {
    if (predictions.empty()) throw PreconditionError("accuracy over zero predictions is undefined");
    int correct = 0;
    for (const auto& p : predictions) {
        auto it = truths.find(p.question_id);
        if (it == truths.end()) {
            throw ConsistencyError("prediction for unknown question '" + p.question_id + "'");
        }
        if (p.answered() && p.choice->value() == it->second) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(predictions.size());
}

struct CategoryRow {
    QuestionCategory category = QuestionCategory::Unknown;
    int count = 0;
    double data_ratio = 0;  // percent of all records carrying this label
    double accuracy = 0;
    int correct = 0;
};

struct EvalReport {
    std::string label;
    double overall = 0;
    int total = 0;
    int answered = 0;
    int unanswered = 0;
    std::vector<CategoryRow> rows;

    ojson to_json() const {
        ojson j;
        j["label"] = label;
        j["overall_accuracy"] = round1(overall);
        j["total"] = total;
        j["answered"] = answered;
        j["unanswered"] = unanswered;
        ojson rows_j = ojson::array();
        for (const auto& r : rows) {
            rows_j.push_back(ojson{{"category", category_name(r.category)},
                                   {"count", r.count},
                                   {"data_ratio", round1(r.data_ratio)},
                                   {"accuracy", round1(r.accuracy)}});
        }
        j["categories"] = std::move(rows_j);
        return j;
    }
};

// Per-category breakdown. Categories may overlap when the label file assigns
// several labels per question; ratios are reported as computed (their sum
// can exceed 100) and never normalized. Unlabeled questions land in the
// Unknown row.
inline EvalReport per_category_report(const std::vector<PredictionRecord>& predictions,
                                      const std::map<std::string, int>& truths,
                                      const std::map<std::string, std::vector<QuestionCategory>>& categories,
                                      std::string label = "") {
    EvalReport report;
    report.label = std::move(label);
    report.overall = accuracy(predictions, truths);
    report.total = static_cast<int>(predictions.size());

    std::map<QuestionCategory, std::pair<int, int>> acc; // category -> (count, correct)
    for (const auto& p : predictions) {
        if (p.answered()) ++report.answered; else ++report.unanswered;
        bool correct = p.answered() && p.choice->value() == truths.at(p.question_id);
        auto it = categories.find(p.question_id);
        std::vector<QuestionCategory> labels;
        if (it != categories.end() && !it->second.empty()) {
            labels = it->second;
        } else {
            labels = {QuestionCategory::Unknown};
        }
        for (QuestionCategory c : labels) {
            auto& slot = acc[c];
            slot.first += 1;
            slot.second += correct ? 1 : 0;
        }
    }
    for (QuestionCategory c : kAllCategories) {
        auto it = acc.find(c);
        if (it == acc.end()) continue;
        CategoryRow row;
        row.category = c;
        row.count = it->second.first;
        row.correct = it->second.second;
        row.data_ratio = 100.0 * static_cast<double>(row.count) / static_cast<double>(predictions.size());
        row.accuracy = 100.0 * static_cast<double>(row.correct) / static_cast<double>(row.count);
        report.rows.push_back(row);
    }
    return report;
}

struct DeltaRow {
    QuestionCategory category = QuestionCategory::Unknown;
    std::vector<double> accuracies; // aligned with the condition labels
    double delta = 0;               // last condition minus first
};

struct DeltaTable {
    std::vector<std::string> labels;
    std::vector<DeltaRow> rows;
    double overall_delta = 0;
};

// Per-category accuracy deltas between named conditions, in the given
// order; the delta column is last minus first. All reports must cover the
// same category set.
inline DeltaTable compare_conditions(const std::vector<std::pair<std::string, EvalReport>>& reports) {
    if (reports.size() < 2) throw PreconditionError("compare_conditions needs at least two conditions");
    std::vector<QuestionCategory> cats;
    for (const auto& row : reports.front().second.rows) cats.push_back(row.category);
    for (const auto& [label, report] : reports) {
        std::vector<QuestionCategory> other;
        for (const auto& row : report.rows) other.push_back(row.category);
        if (other != cats) {
            throw ConsistencyError("condition '" + label + "' covers a different category set");
        }
    }
    DeltaTable table;
    for (const auto& [label, _] : reports) table.labels.push_back(label);
    for (size_t i = 0; i < cats.size(); ++i) {
        DeltaRow row;
        row.category = cats[i];
        for (const auto& [_, report] : reports) row.accuracies.push_back(report.rows[i].accuracy);
        row.delta = row.accuracies.back() - row.accuracies.front();
        table.rows.push_back(std::move(row));
    }
    table.overall_delta = reports.back().second.overall - reports.front().second.overall;
    return table;
}

inline std::string format_report_text(const EvalReport& report) {
    std::ostringstream os;
    if (!report.label.empty()) os << report.label << "\n";
    os << "overall accuracy: " << format_pct(report.overall) << "% (" << report.total << " questions, "
       << report.unanswered << " unanswered)\n";
    if (!report.rows.empty()) {
        os << "\n";
        char line[160];
        std::snprintf(line, sizeof(line), "%-32s %10s %9s\n", "Question Category", "Data Ratio", "Acc. (%)");
        os << line;
        for (const auto& r : report.rows) {
            std::snprintf(line, sizeof(line), "%-32s %10s %9s\n", category_name(r.category).c_str(),
                          format_pct(r.data_ratio).c_str(), format_pct(r.accuracy).c_str());
            os << line;
        }
    }
    return os.str();
}

inline std::string format_delta_text(const DeltaTable& table) {
    std::ostringstream os;
    char line[200];
    std::string header = "Question Category";
    std::snprintf(line, sizeof(line), "%-32s", header.c_str());
    os << line;
    for (const auto& label : table.labels) {
        std::snprintf(line, sizeof(line), " %12s", label.c_str());
        os << line;
    }
    os << "        Delta\n";
    for (const auto& r : table.rows) {
        std::snprintf(line, sizeof(line), "%-32s", category_name(r.category).c_str());
        os << line;
        for (double a : r.accuracies) {
            std::snprintf(line, sizeof(line), " %12s", format_pct(a).c_str());
            os << line;
        }
        std::snprintf(line, sizeof(line), " %12s\n", format_delta(r.delta).c_str());
        os << line;
    }
    std::snprintf(line, sizeof(line), "%-32s", "Total");
    os << line;
    for (size_t i = 0; i < table.labels.size(); ++i) os << std::string(13, ' ');
    std::snprintf(line, sizeof(line), " %12s\n", format_delta(table.overall_delta).c_str());
    os << line;
    return os.str();
}

inline ojson delta_table_to_json(const DeltaTable& table) {
    ojson j;
    j["conditions"] = table.labels;
    ojson rows = ojson::array();
    for (const auto& r : table.rows) {
        ojson row;
        row["category"] = category_name(r.category);
        ojson accs = ojson::array();
        for (double a : r.accuracies) accs.push_back(round1(a));
        row["accuracies"] = std::move(accs);
        row["delta"] = round1(r.delta);
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    j["overall_delta"] = round1(table.overall_delta);
    return j;
}

} // namespace mavqa
