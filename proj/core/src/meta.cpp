#include "metadapt/meta.hpp"

#include "metadapt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace metadapt {

namespace {

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& rng) {
    require(k <= n, "sample_indices: sample larger than population");
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> out;
    out.reserve(k);
    std::sample(all.begin(), all.end(), std::back_inserter(out), k, rng);
    return out;
}

void check_finite(const std::vector<double>& g, const char* what) {
    for (double v : g)
        if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite gradient");
}

// Zeroes gradient coordinates the meta update must not touch.
void apply_scope(std::vector<double>& g, const Architecture& arch, UpdateScope scope) {
    if (scope == UpdateScope::AllParams) return;
    const ParamLayout lay = param_layout(arch);
    auto zero_range = [&](std::size_t b, std::size_t e) {
        std::fill(g.begin() + static_cast<std::ptrdiff_t>(b),
                  g.begin() + static_cast<std::ptrdiff_t>(e), 0.0);
    };
    zero_range(lay.d_begin, lay.d_end);
    if (lay.c_ranges.size() == 2) zero_range(lay.c_ranges[1].first, lay.c_ranges[1].second);
}

std::vector<double> outer_gradient(const ParamSet& at, const Architecture& arch,
                                   const LabeledBatch& val, const MetaConfig& cfg) {
    const LossGraph g = sup_loss(at, arch, val);
    std::vector<double> grad = loss_gradient(g);
    check_finite(grad, "update_ic outer step");
    apply_scope(grad, arch, cfg.update_scope);
    return grad;
}

} // namespace

void MetaConfig::validate() const {
    require(J >= 1, "MetaConfig: J must be >= 1");
    require(S >= 1, "MetaConfig: S must be >= 1");
    require(iterations >= 1, "MetaConfig: iterations must be >= 1");
    require(alpha > 0.0, "MetaConfig: alpha must be positive");
    require(meta_alpha >= 0.0, "MetaConfig: meta_alpha must be >= 0");
    inner_method.validate();
}

ParamSet inner_rollout(const ParamSet& start, const Architecture& arch,
                       const MetaEpisode& episode, const MetaConfig& cfg) {
    require(cfg.J >= 0, "inner_rollout: negative J");
    require(episode.inner_batches.size() >= static_cast<std::size_t>(cfg.J),
            "inner_rollout: episode carries fewer batches than J");
    ParamSet cur = start;
    for (int j = 0; j < cfg.J; ++j) {
        const auto& [src, tgt] = episode.inner_batches[static_cast<std::size_t>(j)];
        const LossGraph g = uda_loss(cfg.inner_method, cur, arch, src, tgt);
        std::vector<double> grad = loss_gradient(g);
        check_finite(grad, "update_ic inner rollout");
        std::vector<double> theta = flatten(cur);
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg.alpha * grad[i];
        cur = unflatten(theta, arch);
    }
    return cur;
}

ParamSet update_ic_spg(const ParamSet& params, const Architecture& arch,
                       const MetaEpisode& episode, const MetaConfig& cfg) {
    require(episode.val.size() > 0, "update_ic: empty validation batch");
    if (cfg.meta_alpha == 0.0) return params;

    const std::vector<double> theta0 = flatten(params);
    const ParamSet rolled = inner_rollout(params, arch, episode, cfg);
    const std::vector<double> rolled_flat = flatten(rolled);

    std::vector<double> short_grad(theta0.size());
    for (std::size_t i = 0; i < theta0.size(); ++i) short_grad[i] = theta0[i] - rolled_flat[i];

    std::vector<double> eval_point(theta0.size());
    for (std::size_t i = 0; i < theta0.size(); ++i) eval_point[i] = theta0[i] - short_grad[i];

    const std::vector<double> g = outer_gradient(unflatten(eval_point, arch), arch, episode.val, cfg);
    std::vector<double> updated(theta0.size());
    for (std::size_t i = 0; i < theta0.size(); ++i) updated[i] = theta0[i] - cfg.meta_alpha * g[i];
    return unflatten(updated, arch);
}

ParamSet update_ic_firstorder(const ParamSet& params, const Architecture& arch,
                              const MetaEpisode& episode, const MetaConfig& cfg) {
    require(episode.val.size() > 0, "update_ic: empty validation batch");
    if (cfg.meta_alpha == 0.0) return params;

    const std::vector<double> theta0 = flatten(params);
    const ParamSet rolled = inner_rollout(params, arch, episode, cfg);
    const std::vector<double> g = outer_gradient(rolled, arch, episode.val, cfg);
    std::vector<double> updated(theta0.size());
    for (std::size_t i = 0; i < theta0.size(); ++i) updated[i] = theta0[i] - cfg.meta_alpha * g[i];
    return unflatten(updated, arch);
}

std::vector<double> meta_gradient_fd(const InnerGradFn& inner_grad, const ValueFn& val_loss,
                                     const std::vector<double>& theta0, double alpha, int J,
                                     double eps) {
    require(eps > 0.0, "meta_gradient_fd: eps must be positive");
    auto rollout_value = [&](std::vector<double> theta) {
        for (int j = 0; j < J; ++j) {
            const std::vector<double> g = inner_grad(theta, j);
            require(g.size() == theta.size(), "meta_gradient_fd: gradient length mismatch");
            for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= alpha * g[i];
        }
        const double v = val_loss(theta);
        if (!std::isfinite(v)) throw NumericError("meta_gradient_fd: non-finite validation loss");
        return v;
    };

    std::vector<double> theta = theta0;
    std::vector<double> out(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + eps;
        const double up = rollout_value(theta);
        theta[i] = saved - eps;
        const double down = rollout_value(theta);
        theta[i] = saved;
        out[i] = (up - down) / (2.0 * eps);
    }
    return out;
}

std::vector<double> update_ic_exact_fd(const ParamSet& params, const Architecture& arch,
                                       const MetaEpisode& episode, const MetaConfig& cfg,
                                       double eps) {
    const std::size_t n = param_count(arch);
    require(n <= 200, "update_ic_exact_fd: refused, parameter count " + std::to_string(n) +
                          " exceeds the 200-coordinate cap (O(params) rollouts)");
    require(episode.val.size() > 0, "update_ic_exact_fd: empty validation batch");
    require(episode.inner_batches.size() >= static_cast<std::size_t>(cfg.J),
            "update_ic_exact_fd: episode carries fewer batches than J");

    const InnerGradFn inner = [&](const std::vector<double>& theta, int j) {
        const auto& [src, tgt] = episode.inner_batches[static_cast<std::size_t>(j)];
        return loss_gradient(uda_loss(cfg.inner_method, unflatten(theta, arch), arch, src, tgt));
    };
    const ValueFn val = [&](const std::vector<double>& theta) {
        return sup_loss(unflatten(theta, arch), arch, episode.val).sup_value;
    };
    return meta_gradient_fd(inner, val, flatten(params), cfg.alpha, cfg.J, eps);
}

MetaEpisode sample_episode_msda(const std::vector<DomainDataset>& sources, int J,
                                std::size_t batch_size, std::mt19937_64& rng) {
    require(J >= 0, "sample_episode_msda: negative J");
    const MetaSplit split = sample_meta_split(sources, rng);
    const DomainDataset pooled = pool_domains(sources, split.mtr_indices);
    const DomainDataset& mte = sources[split.mte_index];
    const UnlabeledSet mte_unlabeled = mte.unlabeled();

    MetaEpisode ep;
    for (int j = 0; j < J; ++j) {
        LabeledBatch src = take_rows(pooled, sample_indices(pooled.size(), batch_size, rng));
        UnlabeledBatch tgt = take_rows(
            mte_unlabeled, sample_indices(mte_unlabeled.size(), batch_size, rng));
        ep.inner_batches.emplace_back(std::move(src), std::move(tgt));
    }
    const std::size_t val_n = std::min(batch_size, mte.size());
    ep.val = take_rows(mte, sample_indices(mte.size(), val_n, rng));
    return ep;
}

MetaEpisode sample_episode_ssda(const DomainDataset& source, const UnlabeledSet& unlabeled_tgt,
                                const DomainDataset& labeled_tgt, int J, std::size_t batch_size,
                                std::mt19937_64& rng) {
    require(J >= 0, "sample_episode_ssda: negative J");
    require(labeled_tgt.size() > 0, "sample_episode_ssda: empty labeled target set");
    MetaEpisode ep;
    for (int j = 0; j < J; ++j) {
        LabeledBatch src = take_rows(source, sample_indices(source.size(), batch_size, rng));
        UnlabeledBatch tgt = take_rows(
            unlabeled_tgt, sample_indices(unlabeled_tgt.size(),
                                          std::min(batch_size, unlabeled_tgt.size()), rng));
        ep.inner_batches.emplace_back(std::move(src), std::move(tgt));
    }
    ep.val = full_batch(labeled_tgt); // the few-shot set is the validation batch
    return ep;
}

} // namespace metadapt
