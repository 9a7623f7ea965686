#pragma once

#include "metadapt/data.hpp"
#include "metadapt/model.hpp"
#include "metadapt/tape.hpp"

#include <string>
#include <vector>

namespace metadapt {

enum class DaKind { Dann, McdOneStep, McdMultiStep, Mme };

struct DaMethod {
    DaKind kind = DaKind::Dann;
    double lambda = 1.0; // adaptation weight, constant per run
    int n_steps = 4;     // feature-extractor steps for the multi-step variant

    void validate() const;
};

// Momentum SGD state over the flattened parameter vector.
struct SgdState {
    double alpha = 0.01;
    double momentum = 0.9;
    std::vector<double> velocity;

    static SgdState make(double alpha, double momentum, std::size_t n);
};

// A loss built on its own tape, with parameter leaf nodes kept in flatten
// order so adjoints assemble directly into a flat gradient.
struct LossGraph {
    Tape tape;
    NodeId total = 0;
    double sup_value = 0.0;
    double adapt_value = 0.0; // unweighted adaptation term (0 when absent)
    std::vector<NodeId> param_nodes;
};

// Supervised loss: mean cross-entropy, summed over classifier heads.
LossGraph sup_loss(const ParamSet& params, const Architecture& arch, const LabeledBatch& batch);

// L_sup(src) + lambda * L_a(src, tgt). The adaptation term per method:
//   dann: mean binary cross-entropy of the 1-logit discriminator on
//         grad-reversed features, source labeled 1 and target 0;
//   mcd (either variant): minus the L1 discrepancy of the two heads on
//         grad-reversed target features, with L_sup summed over both heads;
//   mme:  entropy of the target logits passed through grad_reverse.
// The multi-step MCD difference is a training procedure (see da_step); its
// loss form coincides with the one-step variant.
LossGraph uda_loss(const DaMethod& method, const ParamSet& params, const Architecture& arch,
                   const LabeledBatch& src, const UnlabeledBatch& tgt);

// L_sup(src) + L_sup(labeled_tgt) + lambda * L_a(src, unlabeled_tgt).
LossGraph ssda_loss(const DaMethod& method, const ParamSet& params, const Architecture& arch,
                    const LabeledBatch& src, const LabeledBatch& labeled_tgt,
                    const UnlabeledBatch& unlabeled_tgt);

// Runs backward and assembles the flat gradient in flatten order.
std::vector<double> loss_gradient(const LossGraph& graph);

using CoordRange = std::pair<std::size_t, std::size_t>;

// One momentum step: v = mu*v + g, theta -= alpha*v. Coordinates outside the
// active ranges are left untouched entirely (velocity included).
void sgd_step(std::vector<double>& theta, SgdState& opt, const std::vector<double>& grad);
void sgd_step_masked(std::vector<double>& theta, SgdState& opt, const std::vector<double>& grad,
                     const std::vector<CoordRange>& active);

struct StepTrace {
    double sup_value = 0.0;
    double adapt_value = 0.0;
};

// One DA training step. For dann / mcd-onestep / mme this is a single
// momentum-SGD step on uda_loss over all parameters. mcd-multistep runs, on
// the same batch pair: (A) one step of L_sup over F and the heads, (B) one
// step of L_sup - lambda*discrepancy over the heads with F frozen, (C)
// n_steps steps of lambda*discrepancy over F with the heads frozen.
StepTrace da_step(const DaMethod& method, ParamSet& params, const Architecture& arch,
                  const LabeledBatch& src, const UnlabeledBatch& tgt, SgdState& opt);

// One momentum-SGD step on ssda_loss over all parameters.
StepTrace ssda_step(const DaMethod& method, ParamSet& params, const Architecture& arch,
                    const LabeledBatch& src, const LabeledBatch& labeled_tgt,
                    const UnlabeledBatch& unlabeled_tgt, SgdState& opt);

std::string to_string(DaKind kind);
DaKind da_kind_from_string(const std::string& s);

} // namespace metadapt
