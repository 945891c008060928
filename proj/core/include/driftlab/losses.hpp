#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "driftlab/models.hpp"
#include "driftlab/nn/graph.hpp"

namespace driftlab {

struct Triplet {
    std::size_t anchor;
    std::size_t positive;
    std::size_t negative;
    bool operator==(const Triplet&) const = default;
};

struct TripletBatch {
    std::vector<Triplet> triplets;
    double margin = 0.2;

    [[nodiscard]] bool empty() const noexcept { return triplets.empty(); }
    [[nodiscard]] std::size_t size() const noexcept { return triplets.size(); }
};

enum class Mining { Random, Semihard };

[[nodiscard]] Mining parse_mining(const std::string& name);
[[nodiscard]] std::string to_string(Mining mining);

/// One triplet per ordered anchor-positive pair (anchor != positive, same label).
///  - Random: a uniformly drawn negative.
///  - Semihard: the negative with the smallest d- satisfying d- > d+, falling
///    back to the hardest (smallest d-) negative; ties go to the lowest index.
/// Returns an empty batch when no valid triple exists.
[[nodiscard]] TripletBatch mine_triplets(std::span<const int> labels, const nn::Tensor& embeddings, Mining strategy,
                                         double margin, std::mt19937_64& rng);

/// mean over triplets of max(0, d+ - d- + margin) with Euclidean distances.
/// An empty triplet set yields a constant 0 and logs a warning.
[[nodiscard]] nn::Var triplet_loss(nn::Graph& g, nn::Var embeddings, const TripletBatch& batch);

/// Mean negative log softmax probability of the true class.
[[nodiscard]] nn::Var cross_entropy_loss(nn::Graph& g, nn::Var logits, std::span<const int> labels);

/// Frobenius norm of (z_current - z_previous) over the batch; the previous
/// embeddings come from the frozen snapshot and carry no gradient.
[[nodiscard]] nn::Var lwf_align_loss(nn::Graph& g, EmbeddingModel& model,
                                     const ModelSnapshot<EmbeddingModel>& previous, nn::Var batch);
/// Same, reusing embeddings already computed on this graph.
[[nodiscard]] nn::Var lwf_align_loss(nn::Graph& g, nn::Var current_embeddings,
                                     const ModelSnapshot<EmbeddingModel>& previous, nn::Var batch);

enum class ImportanceKind { Fisher, Mas };

/// Per-parameter nonnegative weights, shape-matched to a model's parameters().
struct ImportanceMap {
    ImportanceKind kind = ImportanceKind::Fisher;
    std::vector<nn::Tensor> weights;

    /// Running-mean merge: this <- this + (other - this) / count.
    void accumulate(const ImportanceMap& other, std::size_t count);
    [[nodiscard]] double total() const;
};

/// sum_p 0.5 * w_p * (theta_p - theta_prev_p)^2, shared by EWC (Fisher) and MAS.
/// The model's parameters are bound trainable; snapshot values are constants.
[[nodiscard]] nn::Var quadratic_penalty(nn::Graph& g, EmbeddingModel& model,
                                        const ModelSnapshot<EmbeddingModel>& previous,
                                        const ImportanceMap& importance);
/// Plain evaluation of the same penalty.
[[nodiscard]] double quadratic_penalty_value(const EmbeddingModel& model, const ModelSnapshot<EmbeddingModel>& previous,
                                             const ImportanceMap& importance);

enum class FisherVariant {
    TripletLoss,  // squared gradients of the training (triplet) loss
    OutputNorm    // squared gradients of ||F(x)||^2 on the pre-normalization output
};

struct FisherOptions {
    std::size_t batch_size = 32;
    double margin = 0.2;
    FisherVariant variant = FisherVariant::TripletLoss;
};

/// Diagonal empirical Fisher. Samples are put in a canonical order (by label,
/// then feature values) and dealt round-robin across classes into mini-batches,
/// so the result does not depend on dataset order. Triplets are mined
/// semihard. Throws TrainingError when no batch has a valid triplet.
[[nodiscard]] ImportanceMap estimate_fisher(EmbeddingModel& model, const nn::Tensor& features,
                                            std::span<const int> labels, const FisherOptions& options = {});

/// Omega_p = mean over samples of |d ||F(x)||^2 / d theta_p| on the
/// pre-normalization output.
[[nodiscard]] ImportanceMap estimate_mas_importance(EmbeddingModel& model, const nn::Tensor& features);

/// L = metric + gamma * regularizer.
[[nodiscard]] nn::Var combined_loss(nn::Graph& g, nn::Var metric_loss, nn::Var regularizer_loss, double gamma);
[[nodiscard]] double combined_loss(double metric_loss, double regularizer_loss, double gamma);

/// Sample order used by the importance estimators (exposed for tests).
[[nodiscard]] std::vector<std::size_t> canonical_batch_order(const nn::Tensor& features, std::span<const int> labels);

}  // namespace driftlab
