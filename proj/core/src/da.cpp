#include "metadapt/da.hpp"

#include "metadapt/errors.hpp"

#include <cmath>
#include <utility>

namespace metadapt {

namespace {

// Parameter leaf nodes, emitted in flatten order.
struct ModelNodes {
    std::vector<NodeId> f_w, f_b, c_w, c_b, d_w, d_b;
    std::vector<NodeId> flat_order;
};

ModelNodes emit_params(Tape& tape, const ParamSet& p) {
    ModelNodes n;
    auto emit = [&](const std::vector<Matrix>& ws, const std::vector<Matrix>& bs,
                    std::vector<NodeId>& wn, std::vector<NodeId>& bn) {
        for (std::size_t l = 0; l < ws.size(); ++l) {
            wn.push_back(tape.input(ws[l]));
            n.flat_order.push_back(wn.back());
            bn.push_back(tape.input(bs[l]));
            n.flat_order.push_back(bn.back());
        }
    };
    emit(p.f_weights, p.f_biases, n.f_w, n.f_b);
    emit(p.c_weights, p.c_biases, n.c_w, n.c_b);
    emit(p.d_weights, p.d_biases, n.d_w, n.d_b);
    return n;
}

NodeId features_fwd(Tape& tape, const ModelNodes& nodes, NodeId x) {
    NodeId h = x;
    for (std::size_t l = 0; l < nodes.f_w.size(); ++l)
        h = tape.relu(tape.add_bias(tape.matmul(h, nodes.f_w[l]), nodes.f_b[l]));
    return h;
}

NodeId head_fwd(Tape& tape, const ModelNodes& nodes, const Architecture& arch, NodeId features,
                std::size_t head) {
    if (arch.classifier_kind == ClassifierKind::PlainLinear)
        return tape.add_bias(tape.matmul(features, nodes.c_w[head]), nodes.c_b[head]);
    const NodeId fn = tape.l2_normalize_rows(features);
    const NodeId wn = tape.l2_normalize_cols(nodes.c_w[head]);
    return tape.scale(tape.matmul(fn, wn), 1.0 / arch.temperature);
}

NodeId disc_fwd(Tape& tape, const ModelNodes& nodes, NodeId features) {
    NodeId h = features;
    for (std::size_t l = 0; l < nodes.d_w.size(); ++l) {
        h = tape.add_bias(tape.matmul(h, nodes.d_w[l]), nodes.d_b[l]);
        if (l + 1 < nodes.d_w.size()) h = tape.relu(h);
    }
    return h;
}

// Cross-entropy summed over classifier heads.
NodeId sup_term(Tape& tape, const ModelNodes& nodes, const Architecture& arch, NodeId features,
                const std::vector<int>& labels) {
    NodeId total = tape.softmax_cross_entropy(head_fwd(tape, nodes, arch, features, 0), labels);
    for (std::size_t h = 1; h < arch.num_classifiers; ++h)
        total = tape.add(total,
                         tape.softmax_cross_entropy(head_fwd(tape, nodes, arch, features, h), labels));
    return total;
}

// Adaptation term L_a; returns the unweighted scalar node.
NodeId adapt_term(Tape& tape, const ModelNodes& nodes, const Architecture& arch,
                  const DaMethod& method, NodeId src_features, NodeId tgt_features) {
    switch (method.kind) {
    case DaKind::Dann: {
        const GradReverseCoeff rev{method.lambda};
        const NodeId ds = disc_fwd(tape, nodes, tape.grad_reverse(src_features, rev));
        const NodeId dt = disc_fwd(tape, nodes, tape.grad_reverse(tgt_features, rev));
        const std::size_t ns = tape.value(ds).rows;
        const std::size_t nt = tape.value(dt).rows;
        const NodeId bce_s = tape.binary_cross_entropy(ds, std::vector<int>(ns, 1));
        const NodeId bce_t = tape.binary_cross_entropy(dt, std::vector<int>(nt, 0));
        return tape.scale(tape.add(bce_s, bce_t), 0.5);
    }
    case DaKind::McdOneStep:
    case DaKind::McdMultiStep: {
        const NodeId rev = tape.grad_reverse(tgt_features, GradReverseCoeff{method.lambda});
        const NodeId z1 = head_fwd(tape, nodes, arch, rev, 0);
        const NodeId z2 = head_fwd(tape, nodes, arch, rev, 1);
        return tape.scale(tape.l1_discrepancy(z1, z2), -1.0);
    }
    case DaKind::Mme: {
        const NodeId logits = head_fwd(tape, nodes, arch, tgt_features, 0);
        return tape.entropy(tape.grad_reverse(logits, GradReverseCoeff{method.lambda}));
    }
    }
    throw ContractViolation("adapt_term: unknown method kind");
}

void check_method_arch(const DaMethod& method, const Architecture& arch) {
    method.validate();
    if (method.kind == DaKind::McdOneStep || method.kind == DaKind::McdMultiStep)
        require(arch.num_classifiers == 2,
                "mcd methods require an architecture with two classifier heads");
}

std::vector<double> finite_gradient(const LossGraph& graph, const std::string& tag) {
    std::vector<double> g;
    try {
        g = loss_gradient(graph);
    } catch (const NumericError& e) {
        throw NumericError("da_step(" + tag + "): " + e.what());
    }
    for (double v : g)
        if (!std::isfinite(v)) throw NumericError("da_step(" + tag + "): non-finite gradient");
    return g;
}

} // namespace

void DaMethod::validate() const {
    require(lambda >= 0.0, "DaMethod: lambda must be >= 0");
    require(n_steps >= 1, "DaMethod: n_steps must be >= 1");
}

SgdState SgdState::make(double alpha, double momentum, std::size_t n) {
    require(alpha > 0.0 || alpha == 0.0, "SgdState: negative learning rate");
    require(momentum >= 0.0 && momentum < 1.0, "SgdState: momentum must be in [0, 1)");
    return {alpha, momentum, std::vector<double>(n, 0.0)};
}

LossGraph sup_loss(const ParamSet& params, const Architecture& arch, const LabeledBatch& batch) {
    require(batch.size() > 0, "sup_loss: empty batch");
    LossGraph g;
    const ModelNodes nodes = emit_params(g.tape, params);
    const NodeId x = g.tape.input(batch.x);
    g.total = sup_term(g.tape, nodes, arch, features_fwd(g.tape, nodes, x), batch.y);
    g.sup_value = g.tape.scalar(g.total);
    g.param_nodes = nodes.flat_order;
    if (!std::isfinite(g.sup_value)) throw NumericError("sup_loss: non-finite loss value");
    return g;
}

LossGraph uda_loss(const DaMethod& method, const ParamSet& params, const Architecture& arch,
                   const LabeledBatch& src, const UnlabeledBatch& tgt) {
    check_method_arch(method, arch);
    require(src.size() > 0 && tgt.size() > 0, "uda_loss: empty batch");
    LossGraph g;
    const ModelNodes nodes = emit_params(g.tape, params);
    const NodeId fs = features_fwd(g.tape, nodes, g.tape.input(src.x));
    const NodeId ft = features_fwd(g.tape, nodes, g.tape.input(tgt.x));
    const NodeId sup = sup_term(g.tape, nodes, arch, fs, src.y);
    const NodeId adapt = adapt_term(g.tape, nodes, arch, method, fs, ft);
    g.total = g.tape.add(sup, g.tape.scale(adapt, method.lambda));
    g.sup_value = g.tape.scalar(sup);
    g.adapt_value = g.tape.scalar(adapt);
    g.param_nodes = nodes.flat_order;
    if (!std::isfinite(g.tape.scalar(g.total)))
        throw NumericError("uda_loss(" + to_string(method.kind) + "): non-finite loss value");
    return g;
}

LossGraph ssda_loss(const DaMethod& method, const ParamSet& params, const Architecture& arch,
                    const LabeledBatch& src, const LabeledBatch& labeled_tgt,
                    const UnlabeledBatch& unlabeled_tgt) {
    check_method_arch(method, arch);
    require(src.size() > 0 && unlabeled_tgt.size() > 0, "ssda_loss: empty batch");
    require(labeled_tgt.size() > 0, "ssda_loss: labeled target batch must be nonempty");
    LossGraph g;
    const ModelNodes nodes = emit_params(g.tape, params);
    const NodeId fs = features_fwd(g.tape, nodes, g.tape.input(src.x));
    const NodeId flt = features_fwd(g.tape, nodes, g.tape.input(labeled_tgt.x));
    const NodeId fut = features_fwd(g.tape, nodes, g.tape.input(unlabeled_tgt.x));
    const NodeId sup = g.tape.add(sup_term(g.tape, nodes, arch, fs, src.y),
                                  sup_term(g.tape, nodes, arch, flt, labeled_tgt.y));
    const NodeId adapt = adapt_term(g.tape, nodes, arch, method, fs, fut);
    g.total = g.tape.add(sup, g.tape.scale(adapt, method.lambda));
    g.sup_value = g.tape.scalar(sup);
    g.adapt_value = g.tape.scalar(adapt);
    g.param_nodes = nodes.flat_order;
    if (!std::isfinite(g.tape.scalar(g.total)))
        throw NumericError("ssda_loss(" + to_string(method.kind) + "): non-finite loss value");
    return g;
}

std::vector<double> loss_gradient(const LossGraph& graph) {
    const std::vector<Matrix> adj = graph.tape.backward(graph.total);
    std::vector<double> flat;
    for (NodeId id : graph.param_nodes)
        flat.insert(flat.end(), adj[id].data.begin(), adj[id].data.end());
    return flat;
}

void sgd_step(std::vector<double>& theta, SgdState& opt, const std::vector<double>& grad) {
    sgd_step_masked(theta, opt, grad, {{0, theta.size()}});
}

void sgd_step_masked(std::vector<double>& theta, SgdState& opt, const std::vector<double>& grad,
                     const std::vector<CoordRange>& active) {
    require(theta.size() == grad.size() && theta.size() == opt.velocity.size(),
            "sgd_step: size mismatch between parameters, gradient, and velocity");
    for (const auto& [begin, end] : active) {
        require(end <= theta.size() && begin <= end, "sgd_step: bad coordinate range");
        for (std::size_t i = begin; i < end; ++i) {
            opt.velocity[i] = opt.momentum * opt.velocity[i] + grad[i];
            if (opt.alpha != 0.0) theta[i] -= opt.alpha * opt.velocity[i];
        }
    }
}

StepTrace da_step(const DaMethod& method, ParamSet& params, const Architecture& arch,
                  const LabeledBatch& src, const UnlabeledBatch& tgt, SgdState& opt) {
    check_method_arch(method, arch);
    StepTrace trace;

    if (method.kind != DaKind::McdMultiStep) {
        const LossGraph g = uda_loss(method, params, arch, src, tgt);
        trace.sup_value = g.sup_value;
        trace.adapt_value = g.adapt_value;
        std::vector<double> theta = flatten(params);
        sgd_step(theta, opt, finite_gradient(g, to_string(method.kind)));
        params = unflatten(theta, arch);
        return trace;
    }

    const ParamLayout lay = param_layout(arch);
    const std::vector<CoordRange> f_and_heads = {
        {lay.f_begin, lay.f_end}, {lay.c_ranges.front().first, lay.c_ranges.back().second}};
    const std::vector<CoordRange> heads_only = {
        {lay.c_ranges.front().first, lay.c_ranges.back().second}};
    const std::vector<CoordRange> f_only = {{lay.f_begin, lay.f_end}};

    // (A) supervised step over F and both heads
    {
        const LossGraph g = sup_loss(params, arch, src);
        trace.sup_value = g.sup_value;
        std::vector<double> theta = flatten(params);
        sgd_step_masked(theta, opt, finite_gradient(g, "mcd-multistep/A"), f_and_heads);
        params = unflatten(theta, arch);
    }

    auto head_discrepancy = [&](const ParamSet& p) {
        LossGraph g;
        const ModelNodes nodes = emit_params(g.tape, p);
        const NodeId ft = features_fwd(g.tape, nodes, g.tape.input(tgt.x));
        const NodeId z1 = head_fwd(g.tape, nodes, arch, ft, 0);
        const NodeId z2 = head_fwd(g.tape, nodes, arch, ft, 1);
        g.total = g.tape.l1_discrepancy(z1, z2);
        g.param_nodes = nodes.flat_order;
        return g;
    };

    // (B) heads maximize discrepancy while fitting the source; F frozen
    {
        LossGraph g;
        const ModelNodes nodes = emit_params(g.tape, params);
        const NodeId fs = features_fwd(g.tape, nodes, g.tape.input(src.x));
        const NodeId ft = features_fwd(g.tape, nodes, g.tape.input(tgt.x));
        const NodeId sup = sup_term(g.tape, nodes, arch, fs, src.y);
        const NodeId disc = g.tape.l1_discrepancy(head_fwd(g.tape, nodes, arch, ft, 0),
                                                  head_fwd(g.tape, nodes, arch, ft, 1));
        g.total = g.tape.add(sup, g.tape.scale(disc, -method.lambda));
        g.param_nodes = nodes.flat_order;
        trace.adapt_value = g.tape.scalar(disc);
        std::vector<double> theta = flatten(params);
        sgd_step_masked(theta, opt, finite_gradient(g, "mcd-multistep/B"), heads_only);
        params = unflatten(theta, arch);
    }

    // (C) F minimizes discrepancy for n_steps; heads frozen
    for (int k = 0; k < method.n_steps; ++k) {
        LossGraph g = head_discrepancy(params);
        g.total = g.tape.scale(g.total, method.lambda);
        std::vector<double> theta = flatten(params);
        sgd_step_masked(theta, opt, finite_gradient(g, "mcd-multistep/C"), f_only);
        params = unflatten(theta, arch);
    }
    return trace;
}

StepTrace ssda_step(const DaMethod& method, ParamSet& params, const Architecture& arch,
                    const LabeledBatch& src, const LabeledBatch& labeled_tgt,
                    const UnlabeledBatch& unlabeled_tgt, SgdState& opt) {
    const LossGraph g = ssda_loss(method, params, arch, src, labeled_tgt, unlabeled_tgt);
    std::vector<double> theta = flatten(params);
    sgd_step(theta, opt, finite_gradient(g, to_string(method.kind)));
    params = unflatten(theta, arch);
    return {g.sup_value, g.adapt_value};
}

std::string to_string(DaKind kind) {
    switch (kind) {
    case DaKind::Dann: return "dann";
    case DaKind::McdOneStep: return "mcd-onestep";
    case DaKind::McdMultiStep: return "mcd-multistep";
    case DaKind::Mme: return "mme";
    }
    return "?";
}

DaKind da_kind_from_string(const std::string& s) {
    if (s == "dann") return DaKind::Dann;
    if (s == "mcd-onestep") return DaKind::McdOneStep;
    if (s == "mcd-multistep") return DaKind::McdMultiStep;
    if (s == "mme") return DaKind::Mme;
    throw ContractViolation("unknown DA method: " + s);
}

} // namespace metadapt
