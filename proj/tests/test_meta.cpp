#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "metadapt/errors.hpp"
#include "metadapt/meta.hpp"
#include "metadapt/rng.hpp"

#include <cmath>
#include <iostream>
#include <random>

using namespace metadapt;

namespace {

LabeledBatch random_labeled(std::size_t n, std::size_t d, std::size_t k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> cls(0, static_cast<int>(k) - 1);
    LabeledBatch b;
    b.x = Matrix(n, d);
    for (double& v : b.x.data) v = u(rng);
    b.y.resize(n);
    for (int& y : b.y) y = cls(rng);
    return b;
}

UnlabeledBatch random_unlabeled(std::size_t n, std::size_t d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    UnlabeledBatch b;
    b.x = Matrix(n, d);
    for (double& v : b.x.data) v = u(rng);
    return b;
}

MetaEpisode random_episode(int J, std::size_t d, std::size_t k, std::mt19937_64& rng) {
    MetaEpisode ep;
    for (int j = 0; j < J; ++j)
        ep.inner_batches.emplace_back(random_labeled(8, d, k, rng), random_unlabeled(8, d, rng));
    ep.val = random_labeled(8, d, k, rng);
    return ep;
}

Architecture arch_for(DaKind kind) {
    Architecture a;
    a.input_dim = 2;
    a.feature_dims = {5, 3};
    a.num_classes = 2;
    a.num_classifiers = (kind == DaKind::McdOneStep || kind == DaKind::McdMultiStep) ? 2 : 1;
    a.discriminator_dims = {3};
    a.classifier_kind =
        kind == DaKind::Mme ? ClassifierKind::NormalizedWithTemperature : ClassifierKind::PlainLinear;
    return a;
}

} // namespace

TEST_CASE("keystone: shortest-path and first-order updates agree elementwise") {
    std::mt19937_64 rng(20240601);
    const DaKind kinds[] = {DaKind::Dann, DaKind::McdOneStep, DaKind::McdMultiStep, DaKind::Mme};
    double worst = 0.0;
    for (DaKind kind : kinds) {
        const Architecture arch = arch_for(kind);
        for (int J : {1, 2, 3}) {
            for (int rep = 0; rep < 8; ++rep) {
                const ParamSet theta0 =
                    init_params(arch, {InitKind::KaimingUniform, 0.0}, rng());
                const MetaEpisode ep = random_episode(J, 2, 2, rng);
                MetaConfig cfg;
                cfg.J = J;
                cfg.alpha = 0.05;
                cfg.meta_alpha = 0.05;
                cfg.inner_method = {kind, 1.0, 2};

                const ParamSet spg = update_ic_spg(theta0, arch, ep, cfg);
                const ParamSet fo = update_ic_firstorder(theta0, arch, ep, cfg);
                worst = std::max(worst, max_abs_diff(flatten(spg), flatten(fo)));
            }
        }
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("meta_alpha of zero returns the parameters bitwise unchanged") {
    std::mt19937_64 rng(2);
    const Architecture arch = arch_for(DaKind::Dann);
    const ParamSet theta0 = init_params(arch, {InitKind::KaimingUniform, 0.0}, 5);
    const MetaEpisode ep = random_episode(2, 2, 2, rng);
    MetaConfig cfg;
    cfg.J = 2;
    cfg.meta_alpha = 0.0;
    cfg.inner_method = {DaKind::Dann, 1.0, 4};
    CHECK(update_ic_spg(theta0, arch, ep, cfg) == theta0);
    CHECK(update_ic_firstorder(theta0, arch, ep, cfg) == theta0);
}

TEST_CASE("the starting parameters survive the update untouched") {
    std::mt19937_64 rng(3);
    const Architecture arch = arch_for(DaKind::Mme);
    const ParamSet theta0 = init_params(arch, {InitKind::KaimingUniform, 0.0}, 6);
    const ParamSet snapshot = theta0;
    const MetaEpisode ep = random_episode(1, 2, 2, rng);
    MetaConfig cfg;
    cfg.inner_method = {DaKind::Mme, 1.0, 4};
    const ParamSet updated = update_ic_spg(theta0, arch, ep, cfg);
    CHECK(theta0 == snapshot);
    CHECK(flatten(updated) != flatten(theta0));
}

TEST_CASE("one inner step makes the shortest path exactly alpha times the gradient") {
    std::mt19937_64 rng(4);
    const Architecture arch = arch_for(DaKind::Dann);
    const ParamSet theta0 = init_params(arch, {InitKind::KaimingUniform, 0.0}, 7);
    const MetaEpisode ep = random_episode(1, 2, 2, rng);
    MetaConfig cfg;
    cfg.J = 1;
    cfg.alpha = 0.03;
    cfg.inner_method = {DaKind::Dann, 1.0, 4};

    const ParamSet rolled = inner_rollout(theta0, arch, ep, cfg);
    const std::vector<double> t0 = flatten(theta0);
    const std::vector<double> tj = flatten(rolled);
    const std::vector<double> g1 = loss_gradient(
        uda_loss(cfg.inner_method, theta0, arch, ep.inner_batches[0].first,
                 ep.inner_batches[0].second));
    for (std::size_t i = 0; i < t0.size(); ++i)
        CHECK(t0[i] - tj[i] == doctest::Approx(cfg.alpha * g1[i]).epsilon(1e-12));
}

TEST_CASE("J=0 reduces both updates to one supervised step on the validation batch") {
    std::mt19937_64 rng(5);
    const Architecture arch = arch_for(DaKind::Dann);
    const ParamSet theta0 = init_params(arch, {InitKind::KaimingUniform, 0.0}, 8);
    MetaEpisode ep;
    ep.val = random_labeled(10, 2, 2, rng);
    MetaConfig cfg;
    cfg.J = 0;
    cfg.meta_alpha = 0.02;
    cfg.inner_method = {DaKind::Dann, 1.0, 4};

    const std::vector<double> g = loss_gradient(sup_loss(theta0, arch, ep.val));
    std::vector<double> expected = flatten(theta0);
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] -= cfg.meta_alpha * g[i];
    CHECK(flatten(update_ic_firstorder(theta0, arch, ep, cfg)) == expected);
    CHECK(flatten(update_ic_spg(theta0, arch, ep, cfg)) == expected);
}

TEST_CASE("degenerate finite-difference meta-gradient matches the tape gradient") {
    std::mt19937_64 rng(6);
    Architecture arch;
    arch.input_dim = 2;
    arch.feature_dims = {4};
    arch.num_classes = 2;
    arch.discriminator_dims = {};
    REQUIRE(param_count(arch) <= 200);
    const ParamSet theta0 = init_params(arch, {InitKind::XavierNormal, 0.0}, 9);
    MetaEpisode ep;
    ep.val = random_labeled(12, 2, 2, rng);
    MetaConfig cfg;
    cfg.J = 0;
    cfg.inner_method = {DaKind::Dann, 1.0, 4};

    const std::vector<double> fd = update_ic_exact_fd(theta0, arch, ep, cfg, 1e-5);
    const std::vector<double> ad = loss_gradient(sup_loss(theta0, arch, ep.val));
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const double denom = std::max(1e-8, std::abs(fd[i]) + std::abs(ad[i]));
        CHECK(std::abs(fd[i] - ad[i]) / denom < 1e-4);
    }
}

TEST_CASE("quadratic inner problem: finite differences recover (I - aH) grad L_val") {
    // L_inner = 0.5 t'Ht + b't, L_val = 0.5 t'At + c't, J = 1
    const std::size_t n = 5;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto sym_pd = [&](double ridge) {
        Matrix m(n, n);
        for (double& v : m.data) v = u(rng);
        Matrix s(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t k = 0; k < n; ++k) s(i, j) += m(k, i) * m(k, j);
                if (i == j) s(i, j) += ridge;
            }
        return s;
    };
    const Matrix H = sym_pd(0.3);
    const Matrix A = sym_pd(0.2);
    std::vector<double> b(n), c(n), theta0(n);
    for (auto* v : {&b, &c, &theta0})
        for (double& x : *v) x = u(rng);

    const double alpha = 0.1;
    auto matvec = [&](const Matrix& m, const std::vector<double>& v) {
        std::vector<double> out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) out[i] += m(i, j) * v[j];
        return out;
    };

    const InnerGradFn inner = [&](const std::vector<double>& t, int) {
        std::vector<double> g = matvec(H, t);
        for (std::size_t i = 0; i < n; ++i) g[i] += b[i];
        return g;
    };
    const ValueFn val = [&](const std::vector<double>& t) {
        const std::vector<double> at = matvec(A, t);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += 0.5 * t[i] * at[i] + c[i] * t[i];
        return v;
    };

    const std::vector<double> fd = meta_gradient_fd(inner, val, theta0, alpha, 1, 1e-5);

    // closed form: theta1 = theta0 - alpha (H theta0 + b);
    // meta-grad = (I - alpha H) (A theta1 + c)
    std::vector<double> theta1 = theta0;
    {
        const std::vector<double> g = inner(theta0, 0);
        for (std::size_t i = 0; i < n; ++i) theta1[i] -= alpha * g[i];
    }
    std::vector<double> gv = matvec(A, theta1);
    for (std::size_t i = 0; i < n; ++i) gv[i] += c[i];
    std::vector<double> expected(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            expected[i] += ((i == j ? 1.0 : 0.0) - alpha * H(i, j)) * gv[j];
    }
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(fd[i] - expected[i]) < 1e-5);
}

TEST_CASE("finite-difference oracle refuses large models") {
    Architecture arch;
    arch.input_dim = 2;
    arch.feature_dims = {64, 32};
    arch.num_classes = 2;
    REQUIRE(param_count(arch) > 200);
    const ParamSet theta0 = init_params(arch, {InitKind::KaimingUniform, 0.0}, 10);
    std::mt19937_64 rng(8);
    MetaEpisode ep = random_episode(1, 2, 2, rng);
    MetaConfig cfg;
    CHECK_THROWS_WITH_AS((void)update_ic_exact_fd(theta0, arch, ep, cfg, 1e-5),
                         doctest::Contains("refused"), ContractViolation);
}

TEST_CASE("exact meta-gradient points the same way as the shortest-path update") {
    // logged diagnostic, not a hard pass/fail criterion
    std::mt19937_64 rng(9);
    Architecture arch;
    arch.input_dim = 2;
    arch.feature_dims = {4};
    arch.num_classes = 2;
    arch.discriminator_dims = {2};
    REQUIRE(param_count(arch) <= 200);
    MetaConfig cfg;
    cfg.J = 1;
    cfg.alpha = 0.05;
    cfg.meta_alpha = 0.05;
    cfg.inner_method = {DaKind::Dann, 1.0, 4};

    double mean_cos = 0.0;
    const int reps = 5;
    for (int rep = 0; rep < reps; ++rep) {
        const ParamSet theta0 = init_params(arch, {InitKind::KaimingUniform, 0.0}, rng());
        const MetaEpisode ep = random_episode(1, 2, 2, rng);
        const std::vector<double> exact = update_ic_exact_fd(theta0, arch, ep, cfg, 1e-5);
        const std::vector<double> t0 = flatten(theta0);
        const std::vector<double> t1 = flatten(update_ic_spg(theta0, arch, ep, cfg));
        std::vector<double> spg_dir(t0.size());
        for (std::size_t i = 0; i < t0.size(); ++i)
            spg_dir[i] = (t0[i] - t1[i]) / cfg.meta_alpha;
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t i = 0; i < t0.size(); ++i) {
            dot += exact[i] * spg_dir[i];
            na += exact[i] * exact[i];
            nb += spg_dir[i] * spg_dir[i];
        }
        mean_cos += dot / std::max(1e-12, std::sqrt(na) * std::sqrt(nb));
    }
    mean_cos /= reps;
    std::cout << "[diagnostic] mean cosine(exact FD meta-gradient, SPG direction) = " << mean_cos
              << "\n";
    CHECK(std::isfinite(mean_cos));
}

TEST_CASE("exclude-adversarial scope leaves D and the second head at their start") {
    std::mt19937_64 rng(10);
    const Architecture arch = arch_for(DaKind::McdOneStep);
    const ParamSet theta0 = init_params(arch, {InitKind::KaimingUniform, 0.0}, 11);
    const MetaEpisode ep = random_episode(1, 2, 2, rng);
    MetaConfig cfg;
    cfg.inner_method = {DaKind::McdOneStep, 1.0, 4};
    cfg.update_scope = UpdateScope::ExcludeAdversarial;

    const std::vector<double> before = flatten(theta0);
    const std::vector<double> after = flatten(update_ic_spg(theta0, arch, ep, cfg));
    const ParamLayout lay = param_layout(arch);
    for (std::size_t i = lay.d_begin; i < lay.d_end; ++i) CHECK(before[i] == after[i]);
    for (std::size_t i = lay.c_ranges[1].first; i < lay.c_ranges[1].second; ++i)
        CHECK(before[i] == after[i]);
    double moved = 0.0;
    for (std::size_t i = lay.f_begin; i < lay.f_end; ++i)
        moved = std::max(moved, std::abs(before[i] - after[i]));
    CHECK(moved > 0.0);
}

TEST_CASE("updates are deterministic functions of their inputs") {
    std::mt19937_64 rng(11);
    const Architecture arch = arch_for(DaKind::Mme);
    const ParamSet theta0 = init_params(arch, {InitKind::KaimingUniform, 0.0}, 12);
    const MetaEpisode ep = random_episode(2, 2, 2, rng);
    MetaConfig cfg;
    cfg.J = 2;
    cfg.inner_method = {DaKind::Mme, 1.0, 4};
    CHECK(update_ic_spg(theta0, arch, ep, cfg) == update_ic_spg(theta0, arch, ep, cfg));
}

TEST_CASE("empty validation batch is refused") {
    std::mt19937_64 rng(12);
    const Architecture arch = arch_for(DaKind::Dann);
    const ParamSet theta0 = init_params(arch, {InitKind::KaimingUniform, 0.0}, 13);
    MetaEpisode ep = random_episode(1, 2, 2, rng);
    ep.val = LabeledBatch{Matrix(0, 2), {}};
    MetaConfig cfg;
    cfg.inner_method = {DaKind::Dann, 1.0, 4};
    CHECK_THROWS_AS((void)update_ic_spg(theta0, arch, ep, cfg), ContractViolation);
}

TEST_CASE("msda episode sampler keeps the held-out domain on both sides correctly") {
    // domains are separated by large offsets so membership is readable from x
    std::vector<DomainDataset> sources(3);
    for (std::size_t i = 0; i < 3; ++i) {
        sources[i].x = Matrix(40, 2, 1000.0 * static_cast<double>(i + 1));
        sources[i].y.assign(40, static_cast<int>(i % 2));
        sources[i].domain_tag = "d" + std::to_string(i);
    }
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        const MetaEpisode ep = sample_episode_msda(sources, 2, 8, rng);
        REQUIRE(ep.inner_batches.size() == 2);
        // validation rows all come from one domain
        const double val_domain = ep.val.x(0, 0);
        for (std::size_t i = 0; i < ep.val.x.rows; ++i) CHECK(ep.val.x(i, 0) == val_domain);
        for (const auto& [src, tgt] : ep.inner_batches) {
            for (std::size_t i = 0; i < tgt.x.rows; ++i)
                CHECK(tgt.x(i, 0) == val_domain); // unlabeled side is the held-out domain
            for (std::size_t i = 0; i < src.x.rows; ++i)
                CHECK(src.x(i, 0) != val_domain); // labeled side excludes it
        }
    }
}

TEST_CASE("ssda episode sampler uses the whole few-shot set as validation") {
    DomainDataset source;
    source.x = Matrix(30, 2, 1.0);
    source.y.assign(30, 0);
    for (std::size_t i = 15; i < 30; ++i) source.y[i] = 1;
    UnlabeledSet utgt{Matrix(25, 2, 2.0), "tgt"};
    DomainDataset ltgt;
    ltgt.x = Matrix(6, 2, 3.0);
    ltgt.y = {0, 0, 0, 1, 1, 1};
    ltgt.domain_tag = "tgt";
    std::mt19937_64 rng(14);
    const MetaEpisode ep = sample_episode_ssda(source, utgt, ltgt, 2, 8, rng);
    CHECK(ep.inner_batches.size() == 2);
    CHECK(ep.val.x == ltgt.x);
    CHECK(ep.val.y == ltgt.y);
}
