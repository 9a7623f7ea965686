#pragma once

#include "metadapt/da.hpp"

#include <functional>
#include <random>
#include <vector>

namespace metadapt {

enum class UpdateScope { AllParams, ExcludeAdversarial };

// Knobs of the interleaved meta / DA training loops.
struct MetaConfig {
    int J = 1;               // inner steps per initial-condition update
    int S = 3;               // DA steps per outer iteration
    int iterations = 1000;   // outer iterations I
    double alpha = 0.01;     // shared learning rate (inner rollout + DA phase)
    double meta_alpha = 0.01;
    DaMethod inner_method{};
    UpdateScope update_scope = UpdateScope::AllParams;

    void validate() const; // trainers require J, S, I >= 1 and alpha > 0
};

// One meta episode: the inner rollout consumes pre-sampled batch pairs
// (labeled meta-train side, unlabeled meta-test side), the outer step a
// labeled meta-test batch. Sampling the batches before the update keeps the
// shortest-path and first-order routes on identical data.
struct MetaEpisode {
    std::vector<std::pair<LabeledBatch, UnlabeledBatch>> inner_batches;
    LabeledBatch val;
};

// Initial-condition update via the shortest-path gradient. The inner rollout
// runs J plain SGD steps on uda_loss from a deep copy of the parameters; the
// parameter-space difference start - rolled stands in for the rollout
// gradient, and the outer supervised gradient is evaluated at
// start - shortest_path. Returns the updated parameters; the input is not
// modified.
ParamSet update_ic_spg(const ParamSet& params, const Architecture& arch,
                       const MetaEpisode& episode, const MetaConfig& cfg);

// Oracle form: identical rollout, but the outer gradient is evaluated
// directly at the rolled-out parameters on a fresh tape. Agrees with
// update_ic_spg to within float rounding.
ParamSet update_ic_firstorder(const ParamSet& params, const Architecture& arch,
                              const MetaEpisode& episode, const MetaConfig& cfg);

// Exact (second-order) meta-gradient approximated by central finite
// differences over the starting coordinates: coordinate i is
// [L_val(rollout(theta + e_i*eps)) - L_val(rollout(theta - e_i*eps))] / 2eps.
// Refused above 200 parameters (each coordinate costs two full rollouts).
std::vector<double> update_ic_exact_fd(const ParamSet& params, const Architecture& arch,
                                       const MetaEpisode& episode, const MetaConfig& cfg,
                                       double eps);

// Generic core behind update_ic_exact_fd, usable with any differentiable
// inner/validation losses (e.g. closed-form quadratics in tests).
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>; // step j aware
using InnerGradFn =
    std::function<std::vector<double>(const std::vector<double>&, int /*step*/)>;
using ValueFn = std::function<double(const std::vector<double>&)>;

std::vector<double> meta_gradient_fd(const InnerGradFn& inner_grad, const ValueFn& val_loss,
                                     const std::vector<double>& theta0, double alpha, int J,
                                     double eps);

// The shared inner rollout: J plain SGD steps (no momentum) on
// uda_loss(inner_method) over the episode's batch pairs.
ParamSet inner_rollout(const ParamSet& start, const Architecture& arch,
                       const MetaEpisode& episode, const MetaConfig& cfg);

// Episode samplers. MSDA: one source drawn uniformly as meta-test, the rest
// pooled as meta-train; J batch pairs plus one labeled meta-test batch.
// SSDA: labeled source against unlabeled target in the inner loop, the
// few-shot labeled target set as validation.
MetaEpisode sample_episode_msda(const std::vector<DomainDataset>& sources, int J,
                                std::size_t batch_size, std::mt19937_64& rng);
MetaEpisode sample_episode_ssda(const DomainDataset& source, const UnlabeledSet& unlabeled_tgt,
                                const DomainDataset& labeled_tgt, int J, std::size_t batch_size,
                                std::mt19937_64& rng);

} // namespace metadapt
