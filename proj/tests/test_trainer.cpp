#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "metadapt/errors.hpp"
#include "metadapt/rng.hpp"
#include "metadapt/experiment.hpp"
#include "metadapt/trainer.hpp"

#include <array>
#include <cmath>
#include <future>
#include <iostream>

using namespace metadapt;

namespace {

struct Fixture {
    std::vector<DomainDataset> sources;
    DomainDataset target_train, target_test;
    Architecture arch;
    InitScheme init{InitKind::KaimingUniform, 0.0};
    MetaConfig cfg;
    DaMethod method{DaKind::Dann, 1.0, 4};
    RunOptions opts;

    Fixture() {
        for (double rot : {0.0, 15.0, 30.0})
            sources.push_back(gen_rotated_moons({rot, 40, 0.1, 5}, Split::Train));
        target_train = gen_rotated_moons({45.0, 40, 0.1, 6}, Split::Train);
        target_test = gen_rotated_moons({45.0, 40, 0.1, 6}, Split::Test);
        arch.input_dim = 2;
        arch.feature_dims = {8, 4};
        arch.num_classes = 2;
        arch.discriminator_dims = {4};
        cfg.J = 1;
        cfg.S = 3;
        cfg.iterations = 4;
        cfg.alpha = 0.02;
        cfg.meta_alpha = 0.02;
        cfg.inner_method = method;
        opts.batch_size = 8;
        opts.eval_interval = 5;
    }
};

} // namespace

TEST_CASE("curve length is ceil(I*S / eval_interval)") {
    Fixture f;
    SUBCASE("with a partial tail") {
        // 12 DA steps, eval every 5: points at 5, 10, and the final 12
        const RunReport r = train_vanilla_msda(f.sources, f.target_train, f.target_test, f.arch,
                                               f.init, f.cfg, f.method, 1, f.opts);
        CHECK(r.curve.size() == 3);
        CHECK(r.curve.back().first == 12);
        CHECK(r.final_acc == r.curve.back().second);
    }
    SUBCASE("exact multiple") {
        f.opts.eval_interval = 4;
        const RunReport r = train_vanilla_msda(f.sources, f.target_train, f.target_test, f.arch,
                                               f.init, f.cfg, f.method, 1, f.opts);
        CHECK(r.curve.size() == 3); // 12/4
        CHECK(r.curve.back().first == 12);
    }
    SUBCASE("interval larger than the run") {
        f.opts.eval_interval = 100;
        const RunReport r = train_vanilla_msda(f.sources, f.target_train, f.target_test, f.arch,
                                               f.init, f.cfg, f.method, 1, f.opts);
        CHECK(r.curve.size() == 1);
        CHECK(r.curve[0].first == 12);
    }
}

TEST_CASE("budget accounting is exact") {
    Fixture f;
    const RunReport online = train_online_msda(f.sources, f.target_train, f.target_test, f.arch,
                                               f.init, f.cfg, f.method, 2, f.opts);
    CHECK(online.meta_updates == f.cfg.iterations);
    CHECK(online.inner_steps == f.cfg.iterations * f.cfg.J);
    CHECK(online.da_steps == f.cfg.iterations * f.cfg.S);
    CHECK(online.sup_losses.size() == static_cast<std::size_t>(online.da_steps));
    CHECK(online.adapt_losses.size() == static_cast<std::size_t>(online.da_steps));

    const RunReport seq = train_sequential_msda(f.sources, f.target_train, f.target_test, f.arch,
                                                f.init, f.cfg, f.method, 2, f.opts);
    CHECK(seq.meta_updates == online.meta_updates);
    CHECK(seq.inner_steps == online.inner_steps);
    CHECK(seq.da_steps == online.da_steps);

    const RunReport vanilla = train_vanilla_msda(f.sources, f.target_train, f.target_test,
                                                 f.arch, f.init, f.cfg, f.method, 2, f.opts);
    CHECK(vanilla.meta_updates == 0);
    CHECK(vanilla.inner_steps == 0);
    CHECK(vanilla.da_steps == online.da_steps);
}

TEST_CASE("source-only ignores the target train data entirely") {
    Fixture f;
    const RunReport a = train_source_only_msda(f.sources, f.target_train, f.target_test, f.arch,
                                               f.init, f.cfg, f.method, 3, f.opts);
    // a completely different (even empty) target train split changes nothing
    DomainDataset empty_target;
    empty_target.x = Matrix(0, 2);
    empty_target.domain_tag = f.target_train.domain_tag;
    const RunReport b = train_source_only_msda(f.sources, empty_target, f.target_test, f.arch,
                                               f.init, f.cfg, f.method, 3, f.opts);
    CHECK(reports_equal_ignoring_timing(a, b));
}

TEST_CASE("vanilla with lambda zero walks the source-only trajectory") {
    Fixture f;
    f.method.lambda = 0.0;
    const RunReport vanilla = train_vanilla_msda(f.sources, f.target_train, f.target_test,
                                                 f.arch, f.init, f.cfg, f.method, 4, f.opts);
    const RunReport source_only = train_source_only_msda(
        f.sources, f.target_train, f.target_test, f.arch, f.init, f.cfg, f.method, 4, f.opts);
    CHECK(vanilla.curve == source_only.curve);
    CHECK(vanilla.sup_losses == source_only.sup_losses);
    CHECK(vanilla.final_acc == source_only.final_acc);
}

TEST_CASE("disabling meta updates reproduces the vanilla trainer exactly") {
    Fixture f;
    RunOptions no_meta = f.opts;
    no_meta.meta_enabled = false;
    const RunReport online = train_online_msda(f.sources, f.target_train, f.target_test, f.arch,
                                               f.init, f.cfg, f.method, 5, no_meta);
    const RunReport vanilla = train_vanilla_msda(f.sources, f.target_train, f.target_test,
                                                 f.arch, f.init, f.cfg, f.method, 5, f.opts);
    CHECK(online.meta_updates == 0);
    CHECK(reports_equal_ignoring_timing(online, vanilla));
}

TEST_CASE("meta_alpha zero leaves the online trajectory at vanilla") {
    Fixture f;
    f.cfg.meta_alpha = 0.0;
    const RunReport online = train_online_msda(f.sources, f.target_train, f.target_test, f.arch,
                                               f.init, f.cfg, f.method, 6, f.opts);
    const RunReport vanilla = train_vanilla_msda(f.sources, f.target_train, f.target_test,
                                                 f.arch, f.init, f.cfg, f.method, 6, f.opts);
    CHECK(online.meta_updates == f.cfg.iterations); // calls happen, updates are identity
    CHECK(online.curve == vanilla.curve);
    CHECK(online.sup_losses == vanilla.sup_losses);
}

TEST_CASE("training runs are bitwise deterministic per seed") {
    Fixture f;
    const RunReport a = train_online_msda(f.sources, f.target_train, f.target_test, f.arch,
                                          f.init, f.cfg, f.method, 7, f.opts);
    const RunReport b = train_online_msda(f.sources, f.target_train, f.target_test, f.arch,
                                          f.init, f.cfg, f.method, 7, f.opts);
    CHECK(reports_equal_ignoring_timing(a, b));
    const RunReport c = train_online_msda(f.sources, f.target_train, f.target_test, f.arch,
                                          f.init, f.cfg, f.method, 8, f.opts);
    CHECK(a.sup_losses != c.sup_losses);
}

TEST_CASE("trainers validate the meta configuration") {
    Fixture f;
    SUBCASE("J below one") {
        f.cfg.J = 0;
        CHECK_THROWS_AS((void)train_online_msda(f.sources, f.target_train, f.target_test, f.arch,
                                                f.init, f.cfg, f.method, 1, f.opts),
                        ContractViolation);
    }
    SUBCASE("nonpositive alpha") {
        f.cfg.alpha = 0.0;
        CHECK_THROWS_AS((void)train_vanilla_msda(f.sources, f.target_train, f.target_test,
                                                 f.arch, f.init, f.cfg, f.method, 1, f.opts),
                        ContractViolation);
    }
    SUBCASE("S below one") {
        f.cfg.S = 0;
        CHECK_THROWS_AS((void)train_vanilla_msda(f.sources, f.target_train, f.target_test,
                                                 f.arch, f.init, f.cfg, f.method, 1, f.opts),
                        ContractViolation);
    }
}

TEST_CASE("online meta-training demands at least two source domains") {
    Fixture f;
    const std::vector<DomainDataset> single = {f.sources[0]};
    CHECK_THROWS_WITH_AS((void)train_online_msda(single, f.target_train, f.target_test, f.arch,
                                                 f.init, f.cfg, f.method, 1, f.opts),
                         doctest::Contains("source domains"), ContractViolation);
    // vanilla is fine with one source
    const RunReport r = train_vanilla_msda(single, f.target_train, f.target_test, f.arch, f.init,
                                           f.cfg, f.method, 1, f.opts);
    CHECK(r.da_steps == 12);
}

TEST_CASE("ssda trainer contracts and trajectories") {
    Fixture f;
    const DomainDataset source = gen_rotated_moons({0.0, 40, 0.1, 7}, Split::Train);
    const DomainDataset target_train = gen_rotated_moons({45.0, 40, 0.1, 8}, Split::Train);
    const DomainDataset target_test = gen_rotated_moons({45.0, 40, 0.1, 8}, Split::Test);
    std::mt19937_64 rng(1);
    const KShotSplit shots = select_kshot(target_train, 3, rng);

    SUBCASE("labeled target drawn from the test split is refused") {
        DomainDataset leaked = shots.labeled;
        leaked.split = Split::Test;
        CHECK_THROWS_AS((void)train_online_ssda(source, leaked, shots.unlabeled, target_test,
                                                f.arch, f.init, f.cfg, f.method, 1, f.opts),
                        ContractViolation);
    }
    SUBCASE("a missing class in the labeled set is refused") {
        DomainDataset missing = shots.labeled;
        for (int& y : missing.y) y = 0;
        CHECK_THROWS_WITH_AS((void)train_online_ssda(source, missing, shots.unlabeled,
                                                     target_test, f.arch, f.init, f.cfg, f.method,
                                                     1, f.opts),
                             doctest::Contains("class"), ContractViolation);
    }
    SUBCASE("meta_alpha zero reproduces vanilla ssda") {
        MetaConfig cfg = f.cfg;
        cfg.meta_alpha = 0.0;
        const RunReport online =
            train_online_ssda(source, shots.labeled, shots.unlabeled, target_test, f.arch,
                              f.init, cfg, f.method, 9, f.opts);
        const RunReport vanilla =
            train_vanilla_ssda(source, shots.labeled, shots.unlabeled, target_test, f.arch,
                               f.init, f.cfg, f.method, 9, f.opts);
        CHECK(online.curve == vanilla.curve);
        CHECK(online.sup_losses == vanilla.sup_losses);
    }
    SUBCASE("source-only ssda never touches target training data") {
        UnlabeledSet empty{Matrix(0, 2), target_test.domain_tag};
        const RunReport a =
            train_source_only_ssda(source, shots.labeled, shots.unlabeled, target_test, f.arch,
                                   f.init, f.cfg, f.method, 10, f.opts);
        const RunReport b = train_source_only_ssda(source, shots.labeled, empty, target_test,
                                                   f.arch, f.init, f.cfg, f.method, 10, f.opts);
        CHECK(reports_equal_ignoring_timing(a, b));
    }
}

TEST_CASE("rotated-moons source-only accuracy degrades monotonically with the shift") {
    // establishes that the benchmark actually carries domain shift
    Architecture arch;
    arch.input_dim = 2;
    arch.feature_dims = {64, 32};
    arch.num_classes = 2;
    arch.discriminator_dims = {16};
    MetaConfig cfg;
    cfg.S = 3;
    cfg.iterations = 150;
    cfg.alpha = 0.01;
    cfg.inner_method = {DaKind::Dann, 1.0, 4};
    RunOptions opts;
    opts.eval_interval = 1000;

    const std::vector<DomainDataset> source = {gen_rotated_moons({0.0, 200, 0.1, 40},
                                                                 Split::Train)};
    const DomainDataset dummy_target = gen_rotated_moons({45.0, 200, 0.1, 41}, Split::Train);
    std::vector<DomainDataset> eval_sets;
    for (double delta : {0.0, 15.0, 30.0, 45.0})
        eval_sets.push_back(gen_rotated_moons({delta, 200, 0.1, 40}, Split::Test));

    std::vector<std::future<std::array<double, 4>>> futures;
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
        futures.push_back(std::async(std::launch::async, [&, seed] {
            const TrainOutcome out = train_msda(
                MetaMode::SourceOnly, source, dummy_target, eval_sets[0], arch,
                {InitKind::KaimingUniform, 0.0}, cfg, {DaKind::Dann, 1.0, 4}, seed, opts);
            std::array<double, 4> accs{};
            for (int d = 0; d < 4; ++d)
                accs[d] = accuracy(out.final_params, arch, eval_sets[d], 0);
            return accs;
        }));
    std::array<double, 4> mean{};
    for (auto& f : futures) {
        const auto a = f.get();
        for (int d = 0; d < 4; ++d) mean[d] += a[d] / 10.0;
    }
    std::cout << "[diagnostic] source-only accuracy vs rotation gap: " << mean[0] << " "
              << mean[1] << " " << mean[2] << " " << mean[3] << "\n";
    CHECK(mean[0] >= mean[1]);
    CHECK(mean[1] >= mean[2]);
    CHECK(mean[2] >= mean[3]);
}

TEST_CASE("ssda: meta-mme tracks mme over paired seeds (logged comparison)") {
    const SsdaBenchmark bench = canonical_ssda_moons(9, 3, 0.0, 45.0, 200, 0.1);
    const DaMethod mme{DaKind::Mme, 1.0, 4};
    const Architecture arch = make_architecture(ModelSpec{}, mme, 2, 2);
    MetaConfig cfg;
    cfg.J = 1;
    cfg.S = 3;
    cfg.iterations = 300;
    cfg.alpha = 0.01;
    cfg.meta_alpha = 0.01;
    cfg.inner_method = mme;
    RunOptions opts;
    opts.eval_interval = 200;

    auto run = [&](MetaMode mode, std::uint64_t seed) {
        std::mt19937_64 shot_rng = make_rng(seed, 5);
        const KShotSplit shots = select_kshot(bench.target_train, bench.k_shot, shot_rng);
        return train_ssda(mode, bench.source, shots.labeled, shots.unlabeled, bench.target_test,
                          arch, {InitKind::KaimingUniform, 0.0}, cfg, mme, seed, opts)
            .report.final_acc;
    };
    std::vector<std::future<std::pair<double, double>>> futures;
    for (std::uint64_t seed = 1; seed <= 6; ++seed)
        futures.push_back(std::async(std::launch::async, [&, seed] {
            return std::make_pair(run(MetaMode::Online, seed), run(MetaMode::Vanilla, seed));
        }));
    double meta_mean = 0.0, base_mean = 0.0;
    for (auto& f : futures) {
        const auto [meta, base] = f.get();
        meta_mean += meta / 6.0;
        base_mean += base / 6.0;
    }
    std::cout << "[diagnostic] 3-shot moons: meta-mme " << meta_mean << " vs mme " << base_mean
              << " (paired diff " << meta_mean - base_mean << ")\n";
    CHECK(std::isfinite(meta_mean));
    CHECK(meta_mean > 0.5); // both must at least beat chance
    CHECK(base_mean > 0.5);
}

TEST_CASE("ssda with nearly all target labels approaches supervised behavior (logged)") {
    const SsdaBenchmark bench = canonical_ssda_moons(10, 3, 0.0, 45.0, 200, 0.1);
    const DaMethod mme{DaKind::Mme, 1.0, 4};
    const Architecture arch = make_architecture(ModelSpec{}, mme, 2, 2);
    MetaConfig cfg;
    cfg.S = 3;
    cfg.iterations = 300;
    cfg.alpha = 0.01;
    cfg.inner_method = mme;
    RunOptions opts;
    opts.eval_interval = 200;

    std::mt19937_64 rng(4);
    const KShotSplit generous = select_kshot(bench.target_train, 180, rng); // 180 of 200 per class
    const double heavy = train_vanilla_ssda(bench.source, generous.labeled, generous.unlabeled,
                                            bench.target_test, arch,
                                            {InitKind::KaimingUniform, 0.0}, cfg, mme, 3, opts)
                             .final_acc;
    const double uda_only =
        train_vanilla_msda({bench.source}, bench.target_train, bench.target_test, arch,
                           {InitKind::KaimingUniform, 0.0}, cfg, mme, 3, opts)
            .final_acc;
    std::cout << "[diagnostic] near-fully-labeled ssda " << heavy << " vs uda-only " << uda_only
              << "\n";
    CHECK(heavy >= uda_only - 0.05); // generous labels must not hurt materially
}

TEST_CASE("run reports serialize to json and back without loss") {
    Fixture f;
    RunReport r = train_online_msda(f.sources, f.target_train, f.target_test, f.arch, f.init,
                                    f.cfg, f.method, 11, f.opts);
    const nlohmann::json j = report_to_json(r);
    const RunReport back = report_from_json(j);
    CHECK(reports_equal_ignoring_timing(r, back));
    CHECK(back.timing_s_per_outer_iter == r.timing_s_per_outer_iter);
    CHECK(j.at("losses").at("sup").size() == r.sup_losses.size());
    CHECK(j.at("budget").at("meta_updates").get<int>() == r.meta_updates);
}
