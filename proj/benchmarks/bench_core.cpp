#include "metadapt/meta.hpp"
#include "metadapt/rng.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace metadapt;

namespace {

struct Setup {
    Architecture arch;
    ParamSet params;
    LabeledBatch src;
    UnlabeledBatch tgt;

    explicit Setup(DaKind kind, std::size_t batch = 32) {
        arch.input_dim = 2;
        arch.feature_dims = {64, 32};
        arch.num_classes = 2;
        arch.num_classifiers =
            (kind == DaKind::McdOneStep || kind == DaKind::McdMultiStep) ? 2 : 1;
        arch.discriminator_dims = {16};
        arch.classifier_kind = kind == DaKind::Mme ? ClassifierKind::NormalizedWithTemperature
                                                   : ClassifierKind::PlainLinear;
        params = init_params(arch, {InitKind::KaimingUniform, 0.0}, 1);
        std::mt19937_64 rng(2);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::uniform_int_distribution<int> cls(0, 1);
        src.x = Matrix(batch, 2);
        tgt.x = Matrix(batch, 2);
        for (double& v : src.x.data) v = u(rng);
        for (double& v : tgt.x.data) v = u(rng);
        src.y.resize(batch);
        for (int& y : src.y) y = cls(rng);
    }
};

DaKind kind_of(int i) {
    switch (i) {
    case 0: return DaKind::Dann;
    case 1: return DaKind::McdOneStep;
    case 2: return DaKind::McdMultiStep;
    default: return DaKind::Mme;
    }
}

void BM_UdaLossGradient(benchmark::State& state) {
    const DaKind kind = kind_of(static_cast<int>(state.range(0)));
    const Setup s(kind);
    const DaMethod method{kind, 1.0, 4};
    for (auto _ : state) {
        const LossGraph g = uda_loss(method, s.params, s.arch, s.src, s.tgt);
        benchmark::DoNotOptimize(loss_gradient(g));
    }
}
BENCHMARK(BM_UdaLossGradient)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

void BM_DaStep(benchmark::State& state) {
    const DaKind kind = kind_of(static_cast<int>(state.range(0)));
    Setup s(kind);
    const DaMethod method{kind, 1.0, 4};
    SgdState opt = SgdState::make(0.01, 0.9, param_count(s.arch));
    for (auto _ : state) benchmark::DoNotOptimize(da_step(method, s.params, s.arch, s.src, s.tgt, opt));
}
BENCHMARK(BM_DaStep)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

void BM_UpdateIc(benchmark::State& state) {
    const bool firstorder = state.range(1) != 0;
    const int J = static_cast<int>(state.range(0));
    const Setup s(DaKind::Dann);
    MetaConfig cfg;
    cfg.J = J;
    cfg.inner_method = {DaKind::Dann, 1.0, 4};
    MetaEpisode ep;
    for (int j = 0; j < J; ++j) ep.inner_batches.emplace_back(s.src, s.tgt);
    ep.val = s.src;
    for (auto _ : state) {
        if (firstorder)
            benchmark::DoNotOptimize(update_ic_firstorder(s.params, s.arch, ep, cfg));
        else
            benchmark::DoNotOptimize(update_ic_spg(s.params, s.arch, ep, cfg));
    }
}
BENCHMARK(BM_UpdateIc)
    ->ArgsProduct({{1, 2, 3}, {0, 1}})
    ->ArgNames({"J", "firstorder"})
    ->Unit(benchmark::kMicrosecond);

void BM_Flatten(benchmark::State& state) {
    const Setup s(DaKind::Dann);
    for (auto _ : state) {
        const std::vector<double> flat = flatten(s.params);
        benchmark::DoNotOptimize(unflatten(flat, s.arch));
    }
}
BENCHMARK(BM_Flatten)->Unit(benchmark::kMicrosecond);

void BM_Accuracy(benchmark::State& state) {
    const Setup s(DaKind::Dann);
    const DomainDataset test = gen_rotated_moons({45.0, 500, 0.1, 3}, Split::Test);
    for (auto _ : state) benchmark::DoNotOptimize(accuracy(s.params, s.arch, test, 0));
}
BENCHMARK(BM_Accuracy)->Unit(benchmark::kMicrosecond);

} // namespace

BENCHMARK_MAIN();
