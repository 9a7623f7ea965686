#include "metadapt/trainer.hpp"

#include "metadapt/errors.hpp"
#include "metadapt/rng.hpp"

#include <chrono>
#include <cmath>
#include <optional>

namespace metadapt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct TraceRecorder {
    RunReport* report;
    const DomainDataset* eval_data;
    const Architecture* arch;
    const ParamSet* params;
    RunOptions opts;
    std::int64_t step = 0;
    double train_seconds = 0.0;
    Clock::time_point segment_start = Clock::now();

    void begin_segment() { segment_start = Clock::now(); }
    void end_segment() { train_seconds += seconds_since(segment_start); }

    void after_da_step(const StepTrace& trace) {
        ++step;
        report->sup_losses.push_back(trace.sup_value);
        report->adapt_losses.push_back(trace.adapt_value);
        if (opts.eval_interval > 0 && step % opts.eval_interval == 0) {
            end_segment(); // evaluation stays outside the timed region
            report->curve.emplace_back(step, accuracy(*params, *arch, *eval_data, opts.eval_head));
            begin_segment();
        }
    }

    void finish(std::int64_t total_steps, int outer_iterations) {
        end_segment();
        if (report->curve.empty() || report->curve.back().first != total_steps)
            report->curve.emplace_back(step, accuracy(*params, *arch, *eval_data, opts.eval_head));
        report->final_acc = report->curve.back().second;
        report->timing_s_per_outer_iter =
            train_seconds / static_cast<double>(std::max(outer_iterations, 1));
    }
};

nlohmann::json base_config_echo(const char* scenario, MetaMode mode, const Architecture& arch,
                                const InitScheme& init, const MetaConfig& cfg,
                                const DaMethod& method, const RunOptions& opts) {
    return nlohmann::json{
        {"scenario", scenario},
        {"meta_mode", to_string(mode)},
        {"method",
         {{"kind", to_string(method.kind)}, {"lambda", method.lambda}, {"n_steps", method.n_steps}}},
        {"meta",
         {{"J", cfg.J},
          {"S", cfg.S},
          {"iterations", cfg.iterations},
          {"alpha", cfg.alpha},
          {"meta_alpha", cfg.meta_alpha},
          {"update_scope",
           cfg.update_scope == UpdateScope::AllParams ? "all-params" : "exclude-adversarial"}}},
        {"model",
         {{"input_dim", arch.input_dim},
          {"feature_dims", arch.feature_dims},
          {"num_classes", arch.num_classes},
          {"num_classifiers", arch.num_classifiers},
          {"discriminator_dims", arch.discriminator_dims},
          {"classifier_kind", to_string(arch.classifier_kind)},
          {"temperature", arch.temperature},
          {"init", {{"kind", to_string(init.kind)}, {"perturb_sigma", init.perturb_sigma}}}}},
        {"options",
         {{"batch_size", opts.batch_size},
          {"eval_interval", opts.eval_interval},
          {"momentum", opts.momentum},
          {"meta_enabled", opts.meta_enabled}}}};
}

} // namespace

TrainOutcome train_msda(MetaMode mode, const std::vector<DomainDataset>& sources,
                        const DomainDataset& target_train, const DomainDataset& target_test,
                        const Architecture& arch, const InitScheme& init, const MetaConfig& cfg,
                        const DaMethod& method, std::uint64_t seed, const RunOptions& opts) {
    cfg.validate();
    method.validate();
    arch.validate();
    require(!sources.empty(), "msda: no source domains");
    require(target_test.size() > 0, "msda: empty target test split");

    const bool do_meta =
        opts.meta_enabled && (mode == MetaMode::Online || mode == MetaMode::Sequential);
    if (do_meta)
        require(sources.size() >= 2,
                "msda meta-training requires >= 2 source domains (the meta split holds one out)");

    ParamSet params = init_params(arch, init, derive_seed(seed, stream::kInit));
    SgdState opt = SgdState::make(cfg.alpha, opts.momentum, param_count(arch));

    std::vector<std::size_t> all_indices(sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i) all_indices[i] = i;
    const DomainDataset pooled = pool_domains(sources, all_indices);
    BatchIterator src_iter(pooled.size(), opts.batch_size, make_rng(seed, stream::kSourceBatches));

    const bool uses_target = mode != MetaMode::SourceOnly;
    std::optional<BatchIterator> tgt_iter;
    UnlabeledSet tgt_unlabeled;
    if (uses_target) {
        require(target_train.size() > 0, "msda: empty target train split");
        tgt_unlabeled = target_train.unlabeled();
        tgt_iter.emplace(target_train.size(), opts.batch_size,
                         make_rng(seed, stream::kTargetBatches));
    }
    std::mt19937_64 rng_episode = make_rng(seed, stream::kEpisode);

    RunReport report;
    report.seed = seed;
    report.config = base_config_echo("msda", mode, arch, init, cfg, method, opts);
    report.da_steps = static_cast<std::int64_t>(cfg.iterations) * cfg.S;

    TraceRecorder rec{&report, &target_test, &arch, &params, opts};
    rec.begin_segment();

    auto meta_update = [&]() {
        const MetaEpisode ep =
            sample_episode_msda(sources, cfg.J, opts.batch_size, rng_episode);
        params = update_ic_spg(params, arch, ep, cfg);
        ++report.meta_updates;
    };

    if (mode == MetaMode::Sequential && do_meta)
        for (int b = 0; b < cfg.iterations; ++b) meta_update();

    for (int i = 0; i < cfg.iterations; ++i) {
        if (mode == MetaMode::Online && do_meta) meta_update();
        for (int s = 0; s < cfg.S; ++s) {
            StepTrace trace;
            const LabeledBatch src_batch = take_rows(pooled, src_iter.next());
            if (mode == MetaMode::SourceOnly) {
                const LossGraph g = sup_loss(params, arch, src_batch);
                std::vector<double> theta = flatten(params);
                sgd_step(theta, opt, loss_gradient(g));
                params = unflatten(theta, arch);
                trace.sup_value = g.sup_value;
            } else {
                const UnlabeledBatch tgt_batch = take_rows(tgt_unlabeled, tgt_iter->next());
                trace = da_step(method, params, arch, src_batch, tgt_batch, opt);
            }
            rec.after_da_step(trace);
        }
    }
    rec.finish(report.da_steps, cfg.iterations);
    report.inner_steps = report.meta_updates * cfg.J;
    return {std::move(report), std::move(params)};
}

TrainOutcome train_ssda(MetaMode mode, const DomainDataset& source,
                        const DomainDataset& labeled_tgt, const UnlabeledSet& unlabeled_tgt,
                        const DomainDataset& target_test, const Architecture& arch,
                        const InitScheme& init, const MetaConfig& cfg, const DaMethod& method,
                        std::uint64_t seed, const RunOptions& opts) {
    cfg.validate();
    method.validate();
    arch.validate();
    require(source.size() > 0, "ssda: empty source");
    require(labeled_tgt.size() > 0, "ssda: empty labeled target set");
    require(target_test.size() > 0, "ssda: empty target test split");
    require(labeled_tgt.split == Split::Train && target_test.split == Split::Test,
            "ssda: labeled target must come from the train split; the test split is "
            "evaluation-only (overlap would leak labels)");
    require(labeled_tgt.domain_tag == target_test.domain_tag &&
                unlabeled_tgt.domain_tag == target_test.domain_tag,
            "ssda: labeled/unlabeled/test sets must belong to the same target domain");
    std::vector<char> seen(arch.num_classes, 0);
    for (int y : labeled_tgt.y)
        if (y >= 0 && static_cast<std::size_t>(y) < arch.num_classes) seen[y] = 1;
    for (std::size_t k = 0; k < arch.num_classes; ++k)
        require(seen[k] == 1, "ssda: labeled target is missing class " + std::to_string(k));

    const bool do_meta =
        opts.meta_enabled && (mode == MetaMode::Online || mode == MetaMode::Sequential);

    ParamSet params = init_params(arch, init, derive_seed(seed, stream::kInit));
    SgdState opt = SgdState::make(cfg.alpha, opts.momentum, param_count(arch));

    BatchIterator src_iter(source.size(), opts.batch_size, make_rng(seed, stream::kSourceBatches));
    const bool uses_target = mode != MetaMode::SourceOnly;
    std::optional<BatchIterator> utgt_iter, ltgt_iter;
    const std::size_t ltgt_batch = std::min(opts.batch_size, labeled_tgt.size());
    if (uses_target) {
        require(unlabeled_tgt.size() > 0, "ssda: empty unlabeled target set");
        utgt_iter.emplace(unlabeled_tgt.size(), std::min(opts.batch_size, unlabeled_tgt.size()),
                          make_rng(seed, stream::kTargetBatches));
        ltgt_iter.emplace(labeled_tgt.size(), ltgt_batch,
                          make_rng(seed, stream::kLabeledTargetBatches));
    }
    std::mt19937_64 rng_episode = make_rng(seed, stream::kEpisode);

    RunReport report;
    report.seed = seed;
    report.config = base_config_echo("ssda", mode, arch, init, cfg, method, opts);
    report.da_steps = static_cast<std::int64_t>(cfg.iterations) * cfg.S;

    TraceRecorder rec{&report, &target_test, &arch, &params, opts};
    rec.begin_segment();

    auto meta_update = [&]() {
        const MetaEpisode ep = sample_episode_ssda(source, unlabeled_tgt, labeled_tgt, cfg.J,
                                                   opts.batch_size, rng_episode);
        params = update_ic_spg(params, arch, ep, cfg);
        ++report.meta_updates;
    };

    if (mode == MetaMode::Sequential && do_meta)
        for (int b = 0; b < cfg.iterations; ++b) meta_update();

    for (int i = 0; i < cfg.iterations; ++i) {
        if (mode == MetaMode::Online && do_meta) meta_update();
        for (int s = 0; s < cfg.S; ++s) {
            StepTrace trace;
            const LabeledBatch src_batch = take_rows(source, src_iter.next());
            if (mode == MetaMode::SourceOnly) {
                const LossGraph g = sup_loss(params, arch, src_batch);
                std::vector<double> theta = flatten(params);
                sgd_step(theta, opt, loss_gradient(g));
                params = unflatten(theta, arch);
                trace.sup_value = g.sup_value;
            } else {
                const LabeledBatch ltgt_b = take_rows(labeled_tgt, ltgt_iter->next());
                const UnlabeledBatch utgt_b = take_rows(unlabeled_tgt, utgt_iter->next());
                trace = ssda_step(method, params, arch, src_batch, ltgt_b, utgt_b, opt);
            }
            rec.after_da_step(trace);
        }
    }
    rec.finish(report.da_steps, cfg.iterations);
    report.inner_steps = report.meta_updates * cfg.J;
    return {std::move(report), std::move(params)};
}

nlohmann::json report_to_json(const RunReport& r) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& [step, acc] : r.curve) curve.push_back({step, acc});
    return nlohmann::json{
        {"config", r.config},
        {"seed", r.seed},
        {"curve", curve},
        {"losses", {{"sup", r.sup_losses}, {"adapt", r.adapt_losses}}},
        {"timing_s_per_outer_iter", r.timing_s_per_outer_iter},
        {"final_acc", r.final_acc},
        {"budget",
         {{"meta_updates", r.meta_updates},
          {"inner_steps", r.inner_steps},
          {"da_steps", r.da_steps}}}};
}

RunReport report_from_json(const nlohmann::json& j) {
    RunReport r;
    r.config = j.at("config");
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& pt : j.at("curve"))
        r.curve.emplace_back(pt.at(0).get<std::int64_t>(), pt.at(1).get<double>());
    r.sup_losses = j.at("losses").at("sup").get<std::vector<double>>();
    r.adapt_losses = j.at("losses").at("adapt").get<std::vector<double>>();
    r.timing_s_per_outer_iter = j.at("timing_s_per_outer_iter").get<double>();
    r.final_acc = j.at("final_acc").get<double>();
    r.meta_updates = j.at("budget").at("meta_updates").get<std::int64_t>();
    r.inner_steps = j.at("budget").at("inner_steps").get<std::int64_t>();
    r.da_steps = j.at("budget").at("da_steps").get<std::int64_t>();
    return r;
}

bool reports_equal_ignoring_timing(const RunReport& a, const RunReport& b) {
    return a.seed == b.seed && a.curve == b.curve && a.sup_losses == b.sup_losses &&
           a.adapt_losses == b.adapt_losses && a.final_acc == b.final_acc &&
           a.meta_updates == b.meta_updates && a.inner_steps == b.inner_steps &&
           a.da_steps == b.da_steps;
}

RunReport train_online_msda(const std::vector<DomainDataset>& sources,
                            const DomainDataset& target_train, const DomainDataset& target_test,
                            const Architecture& arch, const InitScheme& init,
                            const MetaConfig& cfg, const DaMethod& method, std::uint64_t seed,
                            const RunOptions& opts) {
    return train_msda(MetaMode::Online, sources, target_train, target_test, arch, init, cfg,
                      method, seed, opts)
        .report;
}

RunReport train_sequential_msda(const std::vector<DomainDataset>& sources,
                                const DomainDataset& target_train,
                                const DomainDataset& target_test, const Architecture& arch,
                                const InitScheme& init, const MetaConfig& cfg,
                                const DaMethod& method, std::uint64_t seed,
                                const RunOptions& opts) {
    return train_msda(MetaMode::Sequential, sources, target_train, target_test, arch, init, cfg,
                      method, seed, opts)
        .report;
}

RunReport train_vanilla_msda(const std::vector<DomainDataset>& sources,
                             const DomainDataset& target_train, const DomainDataset& target_test,
                             const Architecture& arch, const InitScheme& init,
                             const MetaConfig& cfg, const DaMethod& method, std::uint64_t seed,
                             const RunOptions& opts) {
    return train_msda(MetaMode::Vanilla, sources, target_train, target_test, arch, init, cfg,
                      method, seed, opts)
        .report;
}

RunReport train_source_only_msda(const std::vector<DomainDataset>& sources,
                                 const DomainDataset& target_train,
                                 const DomainDataset& target_test, const Architecture& arch,
                                 const InitScheme& init, const MetaConfig& cfg,
                                 const DaMethod& method, std::uint64_t seed,
                                 const RunOptions& opts) {
    return train_msda(MetaMode::SourceOnly, sources, target_train, target_test, arch, init, cfg,
                      method, seed, opts)
        .report;
}

RunReport train_online_ssda(const DomainDataset& source, const DomainDataset& labeled_tgt,
                            const UnlabeledSet& unlabeled_tgt, const DomainDataset& target_test,
                            const Architecture& arch, const InitScheme& init,
                            const MetaConfig& cfg, const DaMethod& method, std::uint64_t seed,
                            const RunOptions& opts) {
    return train_ssda(MetaMode::Online, source, labeled_tgt, unlabeled_tgt, target_test, arch,
                      init, cfg, method, seed, opts)
        .report;
}

RunReport train_sequential_ssda(const DomainDataset& source, const DomainDataset& labeled_tgt,
                                const UnlabeledSet& unlabeled_tgt,
                                const DomainDataset& target_test, const Architecture& arch,
                                const InitScheme& init, const MetaConfig& cfg,
                                const DaMethod& method, std::uint64_t seed,
                                const RunOptions& opts) {
    return train_ssda(MetaMode::Sequential, source, labeled_tgt, unlabeled_tgt, target_test,
                      arch, init, cfg, method, seed, opts)
        .report;
}

RunReport train_vanilla_ssda(const DomainDataset& source, const DomainDataset& labeled_tgt,
                             const UnlabeledSet& unlabeled_tgt, const DomainDataset& target_test,
                             const Architecture& arch, const InitScheme& init,
                             const MetaConfig& cfg, const DaMethod& method, std::uint64_t seed,
                             const RunOptions& opts) {
    return train_ssda(MetaMode::Vanilla, source, labeled_tgt, unlabeled_tgt, target_test, arch,
                      init, cfg, method, seed, opts)
        .report;
}

RunReport train_source_only_ssda(const DomainDataset& source, const DomainDataset& labeled_tgt,
                                 const UnlabeledSet& unlabeled_tgt,
                                 const DomainDataset& target_test, const Architecture& arch,
                                 const InitScheme& init, const MetaConfig& cfg,
                                 const DaMethod& method, std::uint64_t seed,
                                 const RunOptions& opts) {
    return train_ssda(MetaMode::SourceOnly, source, labeled_tgt, unlabeled_tgt, target_test,
                      arch, init, cfg, method, seed, opts)
        .report;
}

std::string to_string(MetaMode mode) {
    switch (mode) {
    case MetaMode::Online: return "online";
    case MetaMode::Sequential: return "sequential";
    case MetaMode::Vanilla: return "vanilla";
    case MetaMode::SourceOnly: return "source-only";
    }
    return "?";
}

MetaMode meta_mode_from_string(const std::string& s) {
    if (s == "online") return MetaMode::Online;
    if (s == "sequential") return MetaMode::Sequential;
    if (s == "vanilla") return MetaMode::Vanilla;
    if (s == "source-only") return MetaMode::SourceOnly;
    throw ContractViolation("unknown meta mode: " + s);
}

} // namespace metadapt
