#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "driftlab/nn/tensor.hpp"

namespace driftlab {

/// Features [n, d] with labels in 0..K-1. class_names[k] records the original
/// label that was mapped to k during ingestion.
struct LabeledDataset {
    nn::Tensor features;
    std::vector<int> labels;
    std::vector<std::string> class_names;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    [[nodiscard]] std::size_t dim() const { return features.rank() == 2 ? features.cols() : 0; }
    [[nodiscard]] std::size_t num_classes() const noexcept { return class_names.size(); }

    [[nodiscard]] LabeledDataset subset(std::span<const std::size_t> indices) const;
    /// Samples whose label is in `classes`, original order preserved.
    [[nodiscard]] LabeledDataset filter_classes(std::span<const int> classes) const;
    [[nodiscard]] std::vector<std::size_t> indices_of(int label) const;
};

/// Concatenate datasets that share a label space.
[[nodiscard]] LabeledDataset concat(std::span<const LabeledDataset> parts);

/// Class c is centred at a seeded random point on the unit sphere with
/// isotropic Gaussian noise of standard deviation `spread`. Samples are
/// emitted class by class.
[[nodiscard]] LabeledDataset gen_gaussian_clusters(std::size_t n_classes, std::size_t per_class, std::size_t dim,
                                                   double spread, std::uint64_t seed);
/// Centres used by gen_gaussian_clusters for the same arguments.
[[nodiscard]] std::vector<std::vector<double>> gaussian_cluster_centers(std::size_t n_classes, std::size_t dim,
                                                                        std::uint64_t seed);

/// IDX images (magic 0x00000803, big-endian dims) and labels (0x00000801).
/// gzip-compressed files are accepted transparently. Pixels are divided by
/// 255. Labels are remapped to 0..K-1 in ascending order of the raw values.
/// Errors are ParseError with the offending byte offset.
[[nodiscard]] LabeledDataset read_idx(const std::filesystem::path& images_path,
                                      const std::filesystem::path& labels_path);

/// CSV with header `label,f0,f1,...`. Labels are remapped to 0..K-1 in order of
/// first appearance. Errors are ParseError carrying the 1-based line number.
[[nodiscard]] LabeledDataset read_csv_dataset(const std::filesystem::path& path);
/// Writes the CSV format read by read_csv_dataset (labels as class_names).
void write_csv_dataset(const LabeledDataset& data, const std::filesystem::path& path);

/// Deterministic per-class split: a `test_fraction` share of each class goes
/// to the test set (selected by a seeded shuffle), order otherwise preserved.
struct TrainTestSplit {
    LabeledDataset train;
    LabeledDataset test;
};
[[nodiscard]] TrainTestSplit stratified_split(const LabeledDataset& data, double test_fraction, std::uint64_t seed);

}  // namespace driftlab
