#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "driftlab/nn/tensor.hpp"
#include "driftlab/sdc.hpp"

namespace driftlab {

/// Lower-triangular accuracy matrix a_{k,j} (1-based, j <= k). Cells may be
/// missing (e.g. Joint only fills its final row).
class AccuracyMatrix {
public:
    AccuracyMatrix() = default;
    explicit AccuracyMatrix(std::size_t n_tasks);

    [[nodiscard]] std::size_t tasks() const noexcept { return cells_.size(); }
    void set(std::size_t k, std::size_t j, double value);
    [[nodiscard]] std::optional<double> get(std::size_t k, std::size_t j) const;
    [[nodiscard]] double at(std::size_t k, std::size_t j) const;
    [[nodiscard]] bool row_complete(std::size_t k) const;

    bool operator==(const AccuracyMatrix&) const = default;

private:
    std::vector<std::vector<std::optional<double>>> cells_;
};

/// A_k = (1/k) sum_{j<=k} a_{k,j}. Throws StateError when row k is incomplete.
[[nodiscard]] double avg_incremental_accuracy(const AccuracyMatrix& a, std::size_t k);
/// F_k = 1/(k-1) sum_{j<k} max_{l<k} (a_{l,j} - a_{k,j}). Requires k >= 2 and
/// complete rows j..k for every j < k (throws std::invalid_argument / StateError).
[[nodiscard]] double avg_forgetting(const AccuracyMatrix& a, std::size_t k);

struct ConfusionMatrix {
    std::size_t after_task = 0;
    std::vector<int> classes;                       // row/column order
    std::vector<std::vector<std::size_t>> counts;   // counts[true][predicted]

    [[nodiscard]] std::size_t total() const;
    [[nodiscard]] double accuracy() const;
};

[[nodiscard]] ConfusionMatrix build_confusion(std::size_t after_task, std::vector<int> classes,
                                              const std::vector<int>& truth, const std::vector<int>& predicted);

struct PrototypeDistance {
    std::size_t after_task;
    int class_id;
    double uncompensated;  // |original prototype - true test mean|
    double compensated;    // |drift-compensated prototype - true test mean|
};

struct ClassTransition {
    int class_id;
    Vec before;      // prototype entering this transition
    Vec drift;       // interpolated drift
    Vec after;       // compensated prototype
    Vec true_mean;   // test-set mean under the new model (diagnostic)
    bool degenerate;
};

struct TransitionRecord {
    std::size_t task;  // transition (task-1) -> task
    double field_norm = 0.0;
    std::vector<ClassTransition> classes;
};

struct EmbeddingPoints {
    std::size_t after_task;
    std::vector<int> labels;
    nn::Tensor points;  // [n, 2]
};

struct RunRecord {
    std::string label;
    std::string method;
    bool sdc = false;
    std::uint64_t seed = 0;
    std::size_t embedding_dim = 0;
    std::vector<std::vector<int>> task_classes;
    AccuracyMatrix accuracy;
    std::vector<PrototypeDistance> prototype_distances;
    std::vector<ConfusionMatrix> confusion;
    std::vector<TransitionRecord> transitions;
    std::vector<EmbeddingPoints> embeddings;
    PrototypeBook prototypes;
    double wall_time_seconds = 0.0;

    [[nodiscard]] std::size_t tasks() const noexcept { return accuracy.tasks(); }
};

[[nodiscard]] double avg_incremental_accuracy(const RunRecord& record, std::size_t k);
[[nodiscard]] double avg_forgetting(const RunRecord& record, std::size_t k);
/// Stored confusion matrix after task k. Throws std::out_of_range if absent.
[[nodiscard]] const ConfusionMatrix& confusion_matrix(const RunRecord& record, std::size_t k);

struct DistanceTracePoint {
    std::size_t after_task;
    double uncompensated;
    double compensated;
};
/// Per class: distance between prototype and true mean after every task.
[[nodiscard]] std::map<int, std::vector<DistanceTracePoint>> prototype_distance_trace(const RunRecord& record);
/// Mean over classes learned before `after_task` of the two distances.
[[nodiscard]] DistanceTracePoint mean_old_class_distance(const RunRecord& record, std::size_t after_task);

// --- files -----------------------------------------------------------------

/// `k,j,accuracy` rows, k ascending then j ascending; accuracies use the
/// shortest round-trip decimal form.
[[nodiscard]] std::string a_matrix_csv(const AccuracyMatrix& a);
[[nodiscard]] AccuracyMatrix parse_a_matrix_csv(const std::string& text);
[[nodiscard]] AccuracyMatrix read_a_matrix_csv(const std::filesystem::path& path);

[[nodiscard]] std::string record_json(const RunRecord& record);
[[nodiscard]] std::string prototypes_json(const RunRecord& record);
[[nodiscard]] std::string prototype_book_json(const PrototypeBook& book);
[[nodiscard]] PrototypeBook parse_prototype_book_json(const std::string& text);

/// Writes a_matrix.csv, record.json and prototypes.json into `dir`.
void write_run(const RunRecord& record, const std::filesystem::path& dir);

[[nodiscard]] std::string format_double(double value);

}  // namespace driftlab
