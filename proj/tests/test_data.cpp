#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "metadapt/data.hpp"
#include "metadapt/errors.hpp"
#include "metadapt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

using namespace metadapt;

TEST_CASE("noise-free moons lie on the canonical half-circle loci") {
    const MoonsSpec spec{0.0, 200, 0.0, 9};
    const DomainDataset d = gen_rotated_moons(spec, Split::Train);
    REQUIRE(d.size() == 400);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double x = d.x(i, 0), y = d.x(i, 1);
        if (d.y[i] == 0) {
            CHECK(std::abs(std::hypot(x, y) - 1.0) < 1e-12);
            CHECK(y >= -1e-12);
        } else {
            CHECK(std::abs(std::hypot(x - 1.0, y - 0.5) - 1.0) < 1e-12);
            CHECK(y <= 0.5 + 1e-12);
        }
    }
}

TEST_CASE("rotating by 360 degrees equals no rotation") {
    const DomainDataset a = gen_rotated_moons({0.0, 100, 0.1, 4}, Split::Train);
    const DomainDataset b = gen_rotated_moons({360.0, 100, 0.1, 4}, Split::Train);
    CHECK(max_abs_diff(a.x, b.x) < 1e-12);
    CHECK(a.y == b.y);
}

TEST_CASE("external rotation of the base dataset matches the generator") {
    const DomainDataset base = gen_rotated_moons({0.0, 150, 0.1, 21}, Split::Train);
    const DomainDataset rotated = gen_rotated_moons({30.0, 150, 0.1, 21}, Split::Train);
    const double phi = 30.0 * std::numbers::pi / 180.0;
    Matrix expected(base.x.rows, 2);
    for (std::size_t i = 0; i < base.x.rows; ++i) {
        expected(i, 0) = std::cos(phi) * base.x(i, 0) - std::sin(phi) * base.x(i, 1);
        expected(i, 1) = std::sin(phi) * base.x(i, 0) + std::cos(phi) * base.x(i, 1);
    }
    CHECK(max_abs_diff(expected, rotated.x) < 1e-12);
    CHECK(base.y == rotated.y);
}

TEST_CASE("train and test splits are deterministic and disjoint streams") {
    const MoonsSpec spec{15.0, 100, 0.1, 33};
    const DomainDataset tr1 = gen_rotated_moons(spec, Split::Train);
    const DomainDataset tr2 = gen_rotated_moons(spec, Split::Train);
    const DomainDataset te = gen_rotated_moons(spec, Split::Test);
    CHECK(tr1.x == tr2.x);
    CHECK(tr1.split == Split::Train);
    CHECK(te.split == Split::Test);
    CHECK(max_abs_diff(tr1.x, te.x) > 1e-6); // different substream
}

TEST_CASE("gaussian shift sample means land near class mean plus offset") {
    GaussShiftSpec spec;
    spec.num_classes = 2;
    spec.class_means = {{0.0, 0.0}, {4.0, 4.0}};
    spec.domain_offset = {1.0, -1.0};
    spec.cov_scale = 0.25; // sigma = 0.5
    spec.n_per_class = 4000;
    spec.seed = 3;
    const DomainDataset d = gen_gaussian_shift(spec, Split::Train);
    const double bound = 3.0 * 0.5 / std::sqrt(4000.0);
    for (std::size_t k = 0; k < 2; ++k) {
        double mx = 0.0, my = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d.y[i] == static_cast<int>(k)) {
                mx += d.x(i, 0);
                my += d.x(i, 1);
                ++n;
            }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        CHECK(std::abs(mx - (spec.class_means[k][0] + 1.0)) < bound);
        CHECK(std::abs(my - (spec.class_means[k][1] - 1.0)) < bound);
    }
}

TEST_CASE("gaussian shift with near-zero covariance pins points to the means") {
    GaussShiftSpec spec;
    spec.num_classes = 2;
    spec.class_means = {{-1.0, 0.0}, {1.0, 0.0}};
    spec.domain_offset = {0.0, 0.0};
    spec.cov_scale = 1e-18;
    spec.n_per_class = 50;
    spec.seed = 8;
    const DomainDataset d = gen_gaussian_shift(spec, Split::Train);
    for (std::size_t i = 0; i < d.size(); ++i)
        CHECK(std::abs(d.x(i, 0) - (d.y[i] == 0 ? -1.0 : 1.0)) < 1e-6);
    const DomainDataset again = gen_gaussian_shift(spec, Split::Train);
    CHECK(d.x == again.x);
}

TEST_CASE("gaussian shift rejects duplicate class means") {
    GaussShiftSpec spec;
    spec.num_classes = 2;
    spec.class_means = {{1.0, 1.0}, {1.0, 1.0}};
    spec.domain_offset = {0.0, 0.0};
    CHECK_THROWS_AS((void)gen_gaussian_shift(spec, Split::Train), ContractViolation);
}

TEST_CASE("meta split holds each domain out roughly uniformly") {
    std::vector<DomainDataset> domains(2);
    for (auto& d : domains) {
        d.x = Matrix(4, 2, 0.0);
        d.y = {0, 0, 1, 1};
    }
    std::mt19937_64 rng(17);
    int first = 0;
    const int draws = 1000;
    for (int i = 0; i < draws; ++i) {
        const MetaSplit s = sample_meta_split(domains, rng);
        CHECK(s.mtr_indices.size() == 1);
        CHECK(s.mtr_indices[0] != s.mte_index);
        if (s.mte_index == 0) ++first;
    }
    CHECK(std::abs(first / 1000.0 - 0.5) < 0.05);
}

TEST_CASE("meta split is a function of the rng state") {
    std::vector<DomainDataset> domains(4);
    for (auto& d : domains) {
        d.x = Matrix(2, 2, 0.0);
        d.y = {0, 1};
    }
    std::mt19937_64 a(5), b(5);
    for (int i = 0; i < 20; ++i)
        CHECK(sample_meta_split(domains, a).mte_index == sample_meta_split(domains, b).mte_index);
    std::vector<DomainDataset> single(1);
    CHECK_THROWS_AS((void)sample_meta_split(single, a), ContractViolation);
}

TEST_CASE("k-shot selection partitions the dataset exactly") {
    DomainDataset d;
    d.x = Matrix(20, 2);
    d.y.resize(20);
    for (std::size_t i = 0; i < 20; ++i) {
        d.x(i, 0) = static_cast<double>(i);
        d.y[i] = i < 12 ? 0 : 1;
    }
    std::mt19937_64 rng(2);
    const KShotSplit s = select_kshot(d, 3, rng);
    CHECK(s.labeled.size() == 6);
    CHECK(s.unlabeled.size() == 14);
    CHECK(std::count(s.labeled.y.begin(), s.labeled.y.end(), 0) == 3);
    CHECK(std::count(s.labeled.y.begin(), s.labeled.y.end(), 1) == 3);

    std::set<std::size_t> all(s.labeled_indices.begin(), s.labeled_indices.end());
    for (std::size_t i : s.unlabeled_indices) CHECK(all.insert(i).second); // disjoint
    CHECK(all.size() == 20);

    SUBCASE("k equal to the class size leaves nothing unlabeled") {
        DomainDataset tiny;
        tiny.x = Matrix(4, 1, 0.0);
        tiny.y = {0, 0, 1, 1};
        std::mt19937_64 r2(3);
        const KShotSplit full = select_kshot(tiny, 2, r2);
        CHECK(full.labeled.size() == 4);
        CHECK(full.unlabeled.size() == 0);
    }
    SUBCASE("a class below k is refused, naming the class") {
        DomainDataset bad;
        bad.x = Matrix(3, 1, 0.0);
        bad.y = {0, 0, 1};
        std::mt19937_64 r3(4);
        CHECK_THROWS_WITH_AS((void)select_kshot(bad, 2, r3),
                             doctest::Contains("class 1"), ContractViolation);
    }
}

TEST_CASE("batch iterator: epoch permutation, no repeats, drop short tail") {
    std::mt19937_64 rng(12);
    BatchIterator it(10, 3, rng);
    std::set<std::size_t> seen;
    for (int b = 0; b < 3; ++b) { // 3 batches of 3 = 9 of 10 indices, tail dropped
        const auto batch = it.next();
        CHECK(batch.size() == 3);
        for (std::size_t i : batch) {
            CHECK(i < 10);
            CHECK(seen.insert(i).second);
        }
    }
    SUBCASE("batch_size == n yields whole-epoch permutations") {
        std::mt19937_64 r2(5);
        BatchIterator whole(6, 6, r2);
        const auto batch = whole.next();
        std::set<std::size_t> s(batch.begin(), batch.end());
        CHECK(s.size() == 6);
    }
    SUBCASE("fixed rng reproduces the stream") {
        BatchIterator a(8, 4, std::mt19937_64(77));
        BatchIterator b(8, 4, std::mt19937_64(77));
        for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
    }
    SUBCASE("oversized batch is refused") {
        CHECK_THROWS_AS(BatchIterator(4, 5, std::mt19937_64(1)), ContractViolation);
    }
}

TEST_CASE("csv export/import round trip") {
    const DomainDataset a = gen_rotated_moons({0.0, 20, 0.1, 2}, Split::Train);
    const DomainDataset b = gen_rotated_moons({45.0, 15, 0.1, 3}, Split::Test);
    const auto path = std::filesystem::temp_directory_path() / "metadapt_data_test.csv";
    export_csv({a, b}, path);
    const std::vector<DomainDataset> loaded = import_csv(path);
    REQUIRE(loaded.size() == 2);
    for (const DomainDataset& d : loaded) {
        const DomainDataset& ref = d.domain_tag == a.domain_tag ? a : b;
        CHECK(d.domain_tag == ref.domain_tag);
        CHECK(d.split == ref.split);
        CHECK(d.y == ref.y);
        CHECK(d.x == ref.x); // %.17g round-trips doubles exactly
    }
    std::filesystem::remove(path);
}

TEST_CASE("pooling concatenates domains in order") {
    const DomainDataset a = gen_rotated_moons({0.0, 5, 0.0, 1}, Split::Train);
    const DomainDataset b = gen_rotated_moons({15.0, 5, 0.0, 2}, Split::Train);
    const DomainDataset pooled = pool_domains({a, b}, {0, 1});
    CHECK(pooled.size() == 20);
    CHECK(pooled.x(0, 0) == a.x(0, 0));
    CHECK(pooled.x(10, 0) == b.x(0, 0));
    CHECK(pooled.y[10] == b.y[0]);
}
