#pragma once

#include "metadapt/meta.hpp"

#include "json.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace metadapt {

enum class MetaMode { Online, Sequential, Vanilla, SourceOnly };

// Per-run knobs that sit outside the meta/DA math.
struct RunOptions {
    std::size_t batch_size = 32;
    int eval_interval = 25; // in DA steps
    double momentum = 0.9;
    bool meta_enabled = true; // online/sequential only; off reduces to vanilla
    std::size_t eval_head = 0;
};

// Persisted outcome of one training run. Every numeric field except the
// wall-clock timing is a pure function of (config, seed).
struct RunReport {
    nlohmann::json config; // exact configuration echo
    std::uint64_t seed = 0;
    std::vector<std::pair<std::int64_t, double>> curve; // (DA step, target accuracy)
    std::vector<double> sup_losses;   // per DA step
    std::vector<double> adapt_losses; // per DA step, unweighted adaptation term
    double timing_s_per_outer_iter = 0.0;
    double final_acc = 0.0;
    std::int64_t meta_updates = 0; // UpdateIC calls
    std::int64_t inner_steps = 0;  // meta_updates * J
    std::int64_t da_steps = 0;     // I * S
};

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

// True when every numeric field matches bitwise; wall-clock timing is not
// compared.
bool reports_equal_ignoring_timing(const RunReport& a, const RunReport& b);

// Report plus the trained parameters, for callers that persist or slice the
// final weights.
struct TrainOutcome {
    RunReport report;
    ParamSet final_params;
};

// Multi-source training: sources carry labels, the target train split is
// consumed unlabeled, and the curve is evaluated on the target test split.
// Online interleaves one UpdateIC with S DA steps per outer iteration;
// Sequential spends the same meta budget before any DA step; Vanilla is DA
// only; SourceOnly never touches the target train data.
TrainOutcome train_msda(MetaMode mode, const std::vector<DomainDataset>& sources,
                        const DomainDataset& target_train, const DomainDataset& target_test,
                        const Architecture& arch, const InitScheme& init, const MetaConfig& cfg,
                        const DaMethod& method, std::uint64_t seed, const RunOptions& opts = {});
TrainOutcome train_ssda(MetaMode mode, const DomainDataset& source,
                        const DomainDataset& labeled_tgt, const UnlabeledSet& unlabeled_tgt,
                        const DomainDataset& target_test, const Architecture& arch,
                        const InitScheme& init, const MetaConfig& cfg, const DaMethod& method,
                        std::uint64_t seed, const RunOptions& opts = {});

RunReport train_online_msda(const std::vector<DomainDataset>& sources,
                            const DomainDataset& target_train, const DomainDataset& target_test,
                            const Architecture& arch, const InitScheme& init,
                            const MetaConfig& cfg, const DaMethod& method, std::uint64_t seed,
                            const RunOptions& opts = {});
RunReport train_sequential_msda(const std::vector<DomainDataset>& sources,
                                const DomainDataset& target_train,
                                const DomainDataset& target_test, const Architecture& arch,
                                const InitScheme& init, const MetaConfig& cfg,
                                const DaMethod& method, std::uint64_t seed,
                                const RunOptions& opts = {});
RunReport train_vanilla_msda(const std::vector<DomainDataset>& sources,
                             const DomainDataset& target_train, const DomainDataset& target_test,
                             const Architecture& arch, const InitScheme& init,
                             const MetaConfig& cfg, const DaMethod& method, std::uint64_t seed,
                             const RunOptions& opts = {});
RunReport train_source_only_msda(const std::vector<DomainDataset>& sources,
                                 const DomainDataset& target_train,
                                 const DomainDataset& target_test, const Architecture& arch,
                                 const InitScheme& init, const MetaConfig& cfg,
                                 const DaMethod& method, std::uint64_t seed,
                                 const RunOptions& opts = {});

// Semi-supervised training: a labeled source, a k-shot labeled target set
// (train split), the remaining target data unlabeled, evaluation on the
// held-out target test split only.
RunReport train_online_ssda(const DomainDataset& source, const DomainDataset& labeled_tgt,
                            const UnlabeledSet& unlabeled_tgt, const DomainDataset& target_test,
                            const Architecture& arch, const InitScheme& init,
                            const MetaConfig& cfg, const DaMethod& method, std::uint64_t seed,
                            const RunOptions& opts = {});
RunReport train_sequential_ssda(const DomainDataset& source, const DomainDataset& labeled_tgt,
                                const UnlabeledSet& unlabeled_tgt,
                                const DomainDataset& target_test, const Architecture& arch,
                                const InitScheme& init, const MetaConfig& cfg,
                                const DaMethod& method, std::uint64_t seed,
                                const RunOptions& opts = {});
RunReport train_vanilla_ssda(const DomainDataset& source, const DomainDataset& labeled_tgt,
                             const UnlabeledSet& unlabeled_tgt, const DomainDataset& target_test,
                             const Architecture& arch, const InitScheme& init,
                             const MetaConfig& cfg, const DaMethod& method, std::uint64_t seed,
                             const RunOptions& opts = {});
RunReport train_source_only_ssda(const DomainDataset& source, const DomainDataset& labeled_tgt,
                                 const UnlabeledSet& unlabeled_tgt,
                                 const DomainDataset& target_test, const Architecture& arch,
                                 const InitScheme& init, const MetaConfig& cfg,
                                 const DaMethod& method, std::uint64_t seed,
                                 const RunOptions& opts = {});

std::string to_string(MetaMode mode);
MetaMode meta_mode_from_string(const std::string& s);

} // namespace metadapt
