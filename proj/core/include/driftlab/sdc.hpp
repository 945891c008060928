#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "driftlab/models.hpp"
#include "driftlab/nn/tensor.hpp"

namespace driftlab {

using Vec = std::vector<double>;

struct PrototypeEntry {
    Vec vector;            // current (possibly compensated) prototype
    int learned_at = 0;    // 1-based task index
    Vec compensation;      // cumulative drift applied since learned_at
    Vec initial;           // prototype as computed when the class was learned

    [[nodiscard]] const Vec& original() const noexcept { return initial; }
};

/// Class id -> prototype. One entry per seen class.
class PrototypeBook {
public:
    void add(int class_id, Vec prototype, int learned_at);
    [[nodiscard]] bool contains(int class_id) const { return entries_.contains(class_id); }
    [[nodiscard]] const PrototypeEntry& at(int class_id) const;
    [[nodiscard]] PrototypeEntry& at(int class_id);
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
    [[nodiscard]] std::size_t dim() const;
    [[nodiscard]] std::vector<int> class_ids() const;
    [[nodiscard]] const std::map<int, PrototypeEntry>& entries() const noexcept { return entries_; }

    /// Copy in which every prototype is reset to its uncompensated value.
    [[nodiscard]] PrototypeBook uncompensated() const;

private:
    std::map<int, PrototypeEntry> entries_;
};

/// Sparse drift field measured on current-task data between two checkpoints.
struct DriftField {
    nn::Tensor positions;      // z^{t-1}, [n, d]
    nn::Tensor displacements;  // z^t - z^{t-1}, [n, d]
    std::vector<int> labels;   // diagnostic only

    [[nodiscard]] std::size_t size() const { return positions.rank() == 2 ? positions.rows() : 0; }
    [[nodiscard]] double total_norm() const;
};

struct KernelConfig {
    double sigma = 0.3;
    double weight_floor = 1e-12;
};

struct DriftEstimate {
    Vec drift;
    double weight_mass = 0.0;  // sum of unnormalized kernel weights
    bool degenerate = false;   // weight_mass below the floor; drift is zero
};

/// Per-class mean of embeddings (not re-normalized). Classes are the distinct
/// labels present; throws std::invalid_argument if `expected_classes` names a
/// class with no samples.
[[nodiscard]] std::map<int, Vec> compute_prototypes(const nn::Tensor& embeddings, std::span<const int> labels,
                                                    std::span<const int> expected_classes = {});

/// Nearest prototype by Euclidean distance over every class in the book;
/// ties go to the lowest class id. `use_original` ignores compensation.
[[nodiscard]] std::vector<int> ncm_classify(const nn::Tensor& embeddings, const PrototypeBook& book,
                                            bool use_original = false);

/// positions = before.embed(x); displacements = after.embed(x) - positions.
[[nodiscard]] DriftField collect_drift(const EmbeddingModel& before, const EmbeddingModel& after,
                                       const nn::Tensor& task_features, std::span<const int> task_labels = {});
/// Same, from embeddings that were already computed.
[[nodiscard]] DriftField make_drift_field(nn::Tensor before, const nn::Tensor& after, std::vector<int> labels = {});

/// Gaussian-weighted average of the field's displacements at `query`:
/// sum_i w_i delta_i / sum_i w_i, w_i = exp(-|z_i - query|^2 / (2 sigma^2)).
[[nodiscard]] DriftEstimate interpolate_drift(const DriftField& field, std::span<const double> query,
                                              const KernelConfig& cfg);

struct CompensationStep {
    int class_id;
    Vec before;
    Vec drift;
    Vec after;
    bool degenerate;
};

/// Moves every prototype learned before `current_task` by the drift
/// interpolated at its current position. Prototypes with learned_at >=
/// current_task are left untouched. With `renormalize` the moved prototype is
/// projected back onto the unit sphere.
std::vector<CompensationStep> compensate(PrototypeBook& book, const DriftField& field, const KernelConfig& cfg,
                                         int current_task, bool renormalize = false);

/// Actual drift of each class mean: mean of `new_embeddings` per class minus
/// the class's original prototype. Throws std::out_of_range for a class
/// missing from the book or with no samples.
[[nodiscard]] std::map<int, Vec> true_drift(const PrototypeBook& old_book, const nn::Tensor& new_embeddings,
                                            std::span<const int> labels);

[[nodiscard]] double euclidean(std::span<const double> a, std::span<const double> b);

}  // namespace driftlab
