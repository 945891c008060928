#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "driftlab/data.hpp"
#include "driftlab/losses.hpp"
#include "driftlab/models.hpp"
#include "driftlab/record.hpp"
#include "driftlab/sdc.hpp"

namespace driftlab {

enum class Method { FT, FTStar, EFT, ELwF, EEWC, EMAS, EFix, EPreSubstitute, Joint };

[[nodiscard]] std::string to_string(Method method);
/// Accepts the display names ("E-FT", "FT*", "E-Pre-substitute", ...).
[[nodiscard]] Method parse_method(const std::string& name);
/// Methods trained with the triplet loss and classified by NCM prototypes.
[[nodiscard]] bool is_embedding_method(Method method);

enum class ImportanceAccumulation { RunningMean, Recompute };

struct MethodConfig {
    Method method = Method::EFT;
    bool sdc = false;
    std::optional<double> gamma;  // unset: 1 (E-LwF), 1e7 (E-EWC), 1e6 (E-MAS), 0 otherwise
    double sigma = 0.3;
    double margin = 0.2;
    double lr = 1e-4;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::size_t embedding_dim = 64;
    std::vector<std::size_t> hidden{256, 256};
    Mining mining = Mining::Semihard;
    ImportanceAccumulation accumulation = ImportanceAccumulation::RunningMean;
    FisherVariant fisher_variant = FisherVariant::TripletLoss;
    bool renormalize_prototypes = false;
    std::size_t pretrain_epochs = 0;  // E-Pre-substitute; 0 means `epochs`
    std::string label;                // display label; empty derives one from method/sdc

    [[nodiscard]] double effective_gamma() const;
    [[nodiscard]] std::string display_label() const;
    /// Throws ConfigError on invalid combinations (e.g. SDC on a softmax method).
    void validate() const;
};

struct Task {
    std::size_t index = 0;  // 1-based
    std::vector<int> classes;
    LabeledDataset train;
    LabeledDataset test;
};

struct TaskSequence {
    std::vector<Task> tasks;
    std::vector<int> class_order;
    LabeledDataset pretrain;  // held-out classes for E-Pre-substitute (may be empty)

    [[nodiscard]] std::size_t size() const noexcept { return tasks.size(); }
    [[nodiscard]] std::size_t input_dim() const { return tasks.at(0).train.dim(); }
};

/// Class groups per task. With first_task_fraction > 0 the first task takes
/// round(fraction * n_classes) classes and the remainder is split evenly over
/// the other n_tasks - 1 tasks. Every split must divide evenly.
[[nodiscard]] std::vector<std::vector<int>> split_classes(std::size_t n_classes, std::size_t n_tasks,
                                                          double first_task_fraction, std::uint64_t seed,
                                                          std::size_t holdout_classes = 0,
                                                          std::vector<int>* holdout = nullptr);

/// Class-disjoint task sequence over a train/test pair sharing a label space.
/// `holdout_classes` classes (taken first from the seeded order) are removed
/// from the sequence and kept as `pretrain` data.
[[nodiscard]] TaskSequence split_tasks(const LabeledDataset& train, const LabeledDataset& test, std::size_t n_tasks,
                                       double first_task_fraction, std::uint64_t seed,
                                       std::size_t holdout_classes = 0);

struct TrainStats {
    std::size_t steps = 0;
    std::size_t skipped_batches = 0;
    double mean_loss_last_epoch = 0.0;
};

/// Trains an embedding model on one task for `epochs` epochs with the
/// triplet loss plus gamma times the method's regularizer against `previous`.
/// E-Fix trains only on task 1; E-Pre-substitute never trains here.
/// Throws TrainingError when no batch of any epoch had a valid triplet.
TrainStats train_task(EmbeddingModel& model, const Task& task, const MethodConfig& config,
                      const ModelSnapshot<EmbeddingModel>* previous, const ImportanceMap* importance,
                      std::mt19937_64& rng);

/// Cross-entropy training of the trunk and head `head` (labels are local to the head).
TrainStats train_softmax_task(SoftmaxModel& model, std::size_t head, const nn::Tensor& features,
                              std::span<const int> local_labels, const MethodConfig& config, std::mt19937_64& rng);

/// Triplet-loss training on a dataset with no regularizer (used for
/// pretraining and joint training).
TrainStats train_embedding(EmbeddingModel& model, const LabeledDataset& data, const MethodConfig& config,
                           std::size_t epochs, std::mt19937_64& rng);

/// Runs the whole class-incremental protocol and evaluates after every task.
[[nodiscard]] RunRecord run_sequence(const MethodConfig& config, const TaskSequence& sequence);

}  // namespace driftlab
