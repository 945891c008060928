#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "driftlab/record.hpp"

namespace driftlab::report {

/// A_k statistics of one method over its seeds. Entries are NaN where no
/// seed has a complete row k (e.g. Joint before the last task).
struct CompareRow {
    std::string label;
    std::size_t runs = 0;
    std::vector<double> mean;    // per k, as a fraction
    std::vector<double> stddev;  // sample standard deviation; 0 for one run
};

struct CompareTable {
    std::size_t tasks = 0;
    std::vector<CompareRow> rows;

    /// Markdown table, values in percent with two decimals.
    [[nodiscard]] std::string markdown() const;
};

struct LabeledMatrix {
    std::string label;
    AccuracyMatrix accuracy;
};

/// Groups matrices by label (first-appearance order). Throws
/// std::invalid_argument when task counts differ.
[[nodiscard]] CompareTable build_compare_table(const std::vector<LabeledMatrix>& runs);

/// Every a_matrix.csv below the given directories (a run directory itself
/// counts). The label is taken from the sibling record.json when present,
/// else from the name of the directory above the run directory.
[[nodiscard]] std::vector<LabeledMatrix> collect_runs(const std::vector<std::filesystem::path>& dirs);

}  // namespace driftlab::report
