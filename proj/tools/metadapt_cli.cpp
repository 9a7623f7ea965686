// Experiment runner: seeded grids, weight-space slices, report aggregation.

#include "metadapt/experiment.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"metadapt: online meta-learning for domain adaptation experiments"};
    app.require_subcommand(1);
    app.fallthrough(); // parent flags (--quiet) may follow the subcommand

    bool quiet = false;
    app.add_flag("--quiet", quiet, "suppress per-run progress output");

    std::string run_config;
    int jobs = 1;
    std::uint64_t seed_offset = 0;
    CLI::App* run = app.add_subcommand("run", "execute an experiment grid from a JSON config");
    run->add_option("config", run_config, "experiment config JSON")->required();
    run->add_option("--jobs", jobs, "number of runs executed concurrently")
        ->check(CLI::PositiveNumber);
    run->add_option("--seed-offset", seed_offset, "offset added to every seed in the config");

    std::string slice_config;
    CLI::App* slice =
        app.add_subcommand("slice", "evaluate metrics on a weight-space plane from a JSON spec");
    slice->add_option("config", slice_config, "slice spec JSON")->required();

    std::string report_dir;
    CLI::App* aggregate =
        app.add_subcommand("aggregate", "summarize stored run reports with paired statistics");
    aggregate->add_option("dir", report_dir, "directory of RunReport JSON files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            metadapt::HarnessOptions opts;
            opts.jobs = jobs;
            opts.seed_offset = seed_offset;
            opts.quiet = quiet;
            return metadapt::run_experiment_file(run_config, opts);
        }
        if (slice->parsed()) return metadapt::run_slice_file(slice_config, quiet);
        if (aggregate->parsed()) {
            const metadapt::AggregateResult agg = metadapt::aggregate_runs(report_dir);
            metadapt::write_summary_csv(agg, std::filesystem::path(report_dir) / "summary.csv");
            metadapt::write_comparisons_csv(agg,
                                            std::filesystem::path(report_dir) / "comparisons.csv");
            for (const auto& w : agg.warnings) std::cerr << "warning: " << w << "\n";
            if (!quiet) {
                std::cout << "method,meta_mode,mean_acc,std_acc,n_seeds\n";
                for (const auto& c : agg.cells)
                    std::cout << c.method << "," << c.meta_mode << "," << c.mean_acc << ","
                              << c.std_acc << "," << c.n_seeds << "\n";
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
