#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "driftlab/record.hpp"
#include "driftlab/report/config.hpp"

namespace driftlab::report {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2 };

struct RunOutcome {
    std::string label;
    std::uint64_t seed = 0;
    std::filesystem::path directory;
    bool ok = false;
    std::string error;
    RunRecord record;
};

/// Executes every (method, seed) pair of `config`, `config.threads` at a
/// time. A failing run is reported in its outcome and does not stop others.
/// Results go to <output>/<label>/<seed>/.
[[nodiscard]] std::vector<RunOutcome> run_experiment(const ExperimentConfig& config);

int cli_run(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err);
int cli_plot(const std::filesystem::path& results_dir, const std::string& kind, std::ostream& out, std::ostream& err);
int cli_compare(const std::vector<std::filesystem::path>& dirs, std::ostream& out, std::ostream& err);

/// `driftlab run|plot|compare ...`
int cli_main(int argc, char** argv);

}  // namespace driftlab::report
