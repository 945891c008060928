#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "driftlab/data.hpp"
#include "driftlab/harness.hpp"

namespace driftlab::report {

struct DatasetSpec {
    std::string source = "synthetic";  // synthetic | idx | csv

    // synthetic
    std::size_t classes = 10;
    std::size_t per_class = 100;
    std::size_t dim = 32;
    double spread = 0.1;
    std::uint64_t data_seed = 0;

    // idx
    std::filesystem::path train_images;
    std::filesystem::path train_labels;
    std::filesystem::path test_images;
    std::filesystem::path test_labels;

    // csv (test_path optional; otherwise test_fraction of every class is held out)
    std::filesystem::path path;
    std::filesystem::path test_path;

    double test_fraction = 0.2;  // synthetic and single-file csv
    std::size_t tasks = 2;
    double first_task_fraction = 0.0;
    std::size_t holdout_classes = 0;
    std::optional<std::uint64_t> split_seed;  // unset: each run splits with its own seed
};

struct ExperimentConfig {
    DatasetSpec dataset;
    std::vector<MethodConfig> methods;
    std::filesystem::path output = "results";
    std::vector<std::uint64_t> seeds{0};
    std::size_t threads = 1;
};

/// Parses the INI-style experiment file. Relative paths are resolved against
/// `base_dir`. Throws ConfigError naming the offending key.
[[nodiscard]] ExperimentConfig parse_experiment_config(std::istream& in, const std::filesystem::path& base_dir = {});
[[nodiscard]] ExperimentConfig parse_experiment_config(const std::string& text,
                                                       const std::filesystem::path& base_dir = {});
/// Reads a config file; relative paths resolve against its directory.
/// DRIFTLAB_SEED_OVERRIDE (comma-separated seeds) replaces `seeds`.
[[nodiscard]] ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Comma-separated unsigned list; throws ConfigError(key) on bad entries.
[[nodiscard]] std::vector<std::uint64_t> parse_seed_list(const std::string& text, const std::string& key);

struct LoadedData {
    LabeledDataset train;
    LabeledDataset test;
};
[[nodiscard]] LoadedData load_dataset(const DatasetSpec& spec);
[[nodiscard]] TaskSequence make_sequence(const DatasetSpec& spec, const LoadedData& data, std::uint64_t run_seed);

/// Directory name used for a method label under the output directory.
[[nodiscard]] std::string label_directory(const std::string& label);

}  // namespace driftlab::report
