#include "driftlab/report/cli.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "driftlab/error.hpp"
#include "driftlab/log.hpp"
#include "driftlab/report/compare.hpp"
#include "driftlab/report/plot.hpp"

namespace driftlab::report {

namespace fs = std::filesystem;

std::vector<RunOutcome> run_experiment(const ExperimentConfig& config) {
    const LoadedData data = load_dataset(config.dataset);
    std::vector<RunOutcome> outcomes;
    std::vector<const MethodConfig*> methods;
    for (const auto& m : config.methods) {
        for (auto seed : config.seeds) {
            RunOutcome o;
            o.label = m.display_label();
            o.seed = seed;
            o.directory = config.output / label_directory(o.label) / std::to_string(seed);
            outcomes.push_back(std::move(o));
            methods.push_back(&m);
        }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < outcomes.size(); i = next++) {
            RunOutcome& o = outcomes[i];
            try {
                MethodConfig m = *methods[i];
                m.seed = o.seed;
                const TaskSequence seq = make_sequence(config.dataset, data, o.seed);
                log::info("starting " + o.label + " seed " + std::to_string(o.seed));
                o.record = run_sequence(m, seq);
                write_run(o.record, o.directory);
                o.ok = true;
            } catch (const std::exception& e) {
                o.error = e.what();
                log::error(o.label + " seed " + std::to_string(o.seed) + " failed: " + o.error);
            }
        }
    };
    const std::size_t n_threads = std::min(config.threads, outcomes.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return outcomes;
}

int cli_run(const fs::path& config_path, std::ostream& out, std::ostream& err) {
    ExperimentConfig config;
    try {
        config = load_experiment_config(config_path);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    std::vector<RunOutcome> outcomes;
    try {
        outcomes = run_experiment(config);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    std::vector<LabeledMatrix> ok;
    bool failed = false;
    for (const auto& o : outcomes) {
        if (o.ok) {
            ok.push_back({o.label, o.record.accuracy});
        } else {
            failed = true;
            err << "run " << o.label << " seed " << o.seed << " failed: " << o.error << "\n";
        }
    }
    if (!ok.empty()) out << build_compare_table(ok).markdown();
    out << "results written to " << config.output.string() << "\n";
    return failed ? kExitFailure : kExitOk;
}

int cli_plot(const fs::path& results_dir, const std::string& kind, std::ostream& out, std::ostream& err) {
    try {
        for (const auto& p : plot_results(results_dir, parse_plot_kind(kind))) out << p.string() << "\n";
        return kExitOk;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

int cli_compare(const std::vector<fs::path>& dirs, std::ostream& out, std::ostream& err) {
    try {
        out << build_compare_table(collect_runs(dirs)).markdown();
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

int cli_main(int argc, char** argv) {
    CLI::App app{"Class-incremental embedding experiments with drift compensation"};
    app.require_subcommand(1);
    int verbosity = 0;
    app.add_flag("-v,--verbose", verbosity, "More log output (repeat for debug)");

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run every method and seed of an experiment config");
    run->add_option("config", config_path, "Experiment config file")->required();

    std::string plot_dir, kind;
    auto* plot = app.add_subcommand("plot", "Write SVG plots for a results directory");
    plot->add_option("dir", plot_dir, "Results directory")->required();
    plot->add_option("--kind", kind, "embedding, curves or confusion")
        ->required()
        ->check(CLI::IsMember({"embedding", "curves", "confusion"}));

    std::vector<std::string> compare_dirs;
    auto* compare = app.add_subcommand("compare", "Markdown table of A_k (mean and std over seeds)");
    compare->add_option("dirs", compare_dirs, "Results directories")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    log::set_level(verbosity >= 2 ? log::Level::Debug : verbosity == 1 ? log::Level::Info : log::Level::Warn);

    if (*run) return cli_run(config_path, std::cout, std::cerr);
    if (*plot) return cli_plot(plot_dir, kind, std::cout, std::cerr);
    std::vector<fs::path> dirs(compare_dirs.begin(), compare_dirs.end());
    return cli_compare(dirs, std::cout, std::cerr);
}

}  // namespace driftlab::report
