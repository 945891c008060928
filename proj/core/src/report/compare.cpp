#include "driftlab/report/compare.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace driftlab::report {

namespace fs = std::filesystem;

CompareTable build_compare_table(const std::vector<LabeledMatrix>& runs) {
    if (runs.empty()) throw std::invalid_argument("compare: no runs found");
    CompareTable table;
    table.tasks = runs.front().accuracy.tasks();
    std::vector<std::string> order;
    std::map<std::string, std::vector<const AccuracyMatrix*>> groups;
    for (const auto& r : runs) {
        if (r.accuracy.tasks() != table.tasks) {
            throw std::invalid_argument("compare: inconsistent task counts (" + std::to_string(table.tasks) + " vs " +
                                        std::to_string(r.accuracy.tasks()) + " for '" + r.label + "')");
        }
        if (!groups.contains(r.label)) order.push_back(r.label);
        groups[r.label].push_back(&r.accuracy);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& label : order) {
        const auto& mats = groups[label];
        CompareRow row{label, mats.size(), std::vector<double>(table.tasks, nan), std::vector<double>(table.tasks, nan)};
        for (std::size_t k = 1; k <= table.tasks; ++k) {
            std::vector<double> values;
            for (const auto* m : mats) {
                if (m->row_complete(k)) values.push_back(avg_incremental_accuracy(*m, k));
            }
            if (values.empty()) continue;
            double sum = 0.0;
            for (double v : values) sum += v;
            const double mean = sum / static_cast<double>(values.size());
            double ss = 0.0;
            for (double v : values) ss += (v - mean) * (v - mean);
            row.mean[k - 1] = mean;
            row.stddev[k - 1] = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

namespace {

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return buf;
}

}  // namespace

std::string CompareTable::markdown() const {
    std::string out = "| Method | Runs |";
    std::string rule = "|---|---:|";
    for (std::size_t k = 1; k <= tasks; ++k) {
        out += " A_" + std::to_string(k) + " |";
        rule += "---:|";
    }
    out += "\n" + rule + "\n";
    for (const auto& row : rows) {
        out += "| " + row.label + " | " + std::to_string(row.runs) + " |";
        for (std::size_t k = 0; k < tasks; ++k) {
            if (std::isnan(row.mean[k])) {
                out += " - |";
            } else if (row.runs > 1) {
                out += " " + percent(row.mean[k]) + " ± " + percent(row.stddev[k]) + " |";
            } else {
                out += " " + percent(row.mean[k]) + " |";
            }
        }
        out += "\n";
    }
    return out;
}

std::vector<LabeledMatrix> collect_runs(const std::vector<fs::path>& dirs) {
    std::vector<fs::path> files;
    for (const auto& dir : dirs) {
        if (!fs::is_directory(dir)) throw std::runtime_error("compare: not a directory: " + dir.string());
        std::vector<fs::path> found;
        if (fs::exists(dir / "a_matrix.csv")) found.push_back(dir / "a_matrix.csv");
        for (const auto& entry : fs::recursive_directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().filename() == "a_matrix.csv" &&
                entry.path().parent_path() != dir) {
                found.push_back(entry.path());
            }
        }
        std::sort(found.begin(), found.end());
        if (found.empty()) throw std::runtime_error("compare: no a_matrix.csv below " + dir.string());
        files.insert(files.end(), found.begin(), found.end());
    }
    std::vector<LabeledMatrix> runs;
    for (const auto& f : files) {
        const fs::path run_dir = f.parent_path();
        std::string label = fs::absolute(run_dir).parent_path().filename().string();
        if (std::ifstream in(run_dir / "record.json"); in) {
            const auto doc = nlohmann::json::parse(in, nullptr, false);
            if (!doc.is_discarded() && doc.contains("label") && doc["label"].is_string()) label = doc["label"];
        }
        runs.push_back({label, read_a_matrix_csv(f)});
    }
    return runs;
}

}  // namespace driftlab::report
