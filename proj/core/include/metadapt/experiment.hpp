#pragma once

#include "metadapt/trainer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace metadapt {

// Benchmark description; "rotated-moons" is the only kind the harness
// accepts.
struct BenchmarkSpec {
    std::string kind = "rotated-moons";
    std::vector<double> source_rotations_deg = {0.0, 15.0, 30.0}; // msda
    double source_rotation_deg = 0.0;                             // ssda
    double target_rotation_deg = 45.0;
    std::size_t n_per_class = 500;
    double noise_sigma = 0.1;
    std::uint64_t data_seed = 7;
    std::size_t k_shot = 3; // ssda only
};

struct ModelSpec {
    std::vector<std::size_t> feature_dims = {64, 32};
    std::vector<std::size_t> discriminator_dims = {16};
    std::string classifier_kind = "auto"; // auto: normalized head for mme, plain otherwise
    double temperature = 0.05;
    InitScheme init{};
};

// A full experiment grid: (methods x meta_modes x seeds) on one benchmark.
struct ExperimentConfig {
    std::string scenario; // "msda" | "ssda"
    BenchmarkSpec benchmark;
    std::vector<DaMethod> methods;
    std::vector<MetaMode> meta_modes;
    MetaConfig meta;
    ModelSpec model;
    RunOptions options;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path output_dir;
};

// Strict parsing: unknown fields are rejected with the offending path named.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

Architecture make_architecture(const ModelSpec& model, const DaMethod& method,
                               std::size_t input_dim, std::size_t num_classes);

struct HarnessOptions {
    int jobs = 1;
    std::uint64_t seed_offset = 0;
    bool quiet = false;
};

// Executes the grid, writing one RunReport JSON, an initial and a final
// ParamSet file per run, a dataset CSV, and summary/comparison CSVs
// recomputed from the report files on disk. Returns a process exit code:
// 0 on success, nonzero when any run failed (failures are recorded in
// failures.json and the remaining runs are unaffected).
int run_experiment(const ExperimentConfig& cfg, const HarnessOptions& opts);
int run_experiment_file(const std::filesystem::path& config_path, const HarnessOptions& opts);

// Executes exactly one grid cell and returns the report without touching the
// filesystem. The report embeds a singleton config that reproduces it.
RunReport run_single(const ExperimentConfig& cfg, const DaMethod& method, MetaMode mode,
                     std::uint64_t seed);

// ----- weight-space slices -----

struct SliceSpec {
    std::filesystem::path theta0, thetaA, thetaB;
    double grid_min = -0.5;
    double grid_max = 1.5;
    std::size_t grid_n = 41;
    std::vector<std::string> metrics = {"test_acc", "sup_loss", "adapt_loss"};
};

// Evaluation data shared by every grid point.
struct SliceEvalData {
    LabeledBatch sup;   // full labeled source data for sup_loss
    UnlabeledBatch tgt; // full unlabeled target data for adapt_loss
    DomainDataset test; // target test split for test_acc
    DaMethod method;
};

struct SliceResult {
    std::vector<std::string> metric_names;
    struct Row {
        double a, b;
        std::vector<double> values;
    };
    std::vector<Row> rows;
};

// Affine plane through (theta0, thetaA, thetaB), evaluated on the
// grid_n x grid_n lattice over [grid_min, grid_max]^2 with barycentric
// weights, so the corners (0,0)/(1,0)/(0,1) evaluate the anchor parameter
// sets exactly.
SliceResult slice_weight_space(const SliceSpec& spec, const SliceEvalData& eval);
void write_slice_csv(const SliceResult& result, const std::filesystem::path& path);

// Full config-driven slice: loads the anchors, rebuilds the benchmark data,
// writes the CSV. The JSON carries the SliceSpec fields plus "scenario",
// "benchmark", "method" and "output_csv".
int run_slice_file(const std::filesystem::path& slice_config_path, bool quiet);

// ----- aggregation over stored reports -----

struct CellSummary {
    std::string method;
    std::string meta_mode;
    double mean_acc = 0.0;
    double std_acc = 0.0;
    std::size_t n_seeds = 0;
    double s_per_outer_iter = 0.0;
};

struct PairedComparison {
    std::string method;
    std::string mode_a, mode_b;
    double mean_diff = 0.0; // mean over paired seeds of final_acc(a) - final_acc(b)
    double std_diff = 0.0;
    int wins_a = 0, wins_b = 0, ties = 0;
    std::size_t n_pairs = 0;
};

struct AggregateResult {
    std::vector<CellSummary> cells;
    std::vector<PairedComparison> comparisons;
    std::vector<std::string> warnings; // e.g. unpaired seeds excluded
};

AggregateResult aggregate_runs(const std::filesystem::path& report_dir);
void write_summary_csv(const AggregateResult& agg, const std::filesystem::path& path);
void write_comparisons_csv(const AggregateResult& agg, const std::filesystem::path& path);

} // namespace metadapt
