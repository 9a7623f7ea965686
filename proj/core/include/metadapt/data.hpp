#pragma once

#include "metadapt/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace metadapt {

enum class Split { Train, Test };

struct UnlabeledSet {
    Matrix x;
    std::string domain_tag;
    std::size_t size() const { return x.rows; }
};

struct DomainDataset {
    Matrix x; // n x d
    std::vector<int> y;
    std::string domain_tag;
    Split split = Split::Train;

    std::size_t size() const { return x.rows; }
    UnlabeledSet unlabeled() const { return {x, domain_tag}; }
};

// Minibatches materialized from index selections.
struct LabeledBatch {
    Matrix x;
    std::vector<int> y;
    std::size_t size() const { return x.rows; }
};

struct UnlabeledBatch {
    Matrix x;
    std::size_t size() const { return x.rows; }
};

LabeledBatch take_rows(const DomainDataset& data, const std::vector<std::size_t>& idx);
UnlabeledBatch take_rows(const UnlabeledSet& data, const std::vector<std::size_t>& idx);
LabeledBatch full_batch(const DomainDataset& data);

// Two interleaved half circles rotated about the origin. Train and test
// variants draw from disjoint RNG substreams of the same seed.
struct MoonsSpec {
    double rotation_deg = 0.0;
    std::size_t n_per_class = 500;
    double noise_sigma = 0.1;
    std::uint64_t seed = 0;
};

DomainDataset gen_rotated_moons(const MoonsSpec& spec, Split split);

// Class-conditional Gaussians around class_means + domain_offset with
// covariance cov_scale * I.
struct GaussShiftSpec {
    std::size_t num_classes = 2;
    std::vector<std::vector<double>> class_means; // K points in R^d
    std::vector<double> domain_offset;
    double cov_scale = 1.0;
    std::size_t n_per_class = 100;
    std::uint64_t seed = 0;
};

DomainDataset gen_gaussian_shift(const GaussShiftSpec& spec, Split split);

// Uniformly holds out one domain as meta-test; the rest are meta-train.
struct MetaSplit {
    std::vector<std::size_t> mtr_indices;
    std::size_t mte_index = 0;
};

MetaSplit sample_meta_split(const std::vector<DomainDataset>& domains, std::mt19937_64& rng);

// Exactly k labeled samples per class; the remainder becomes an unlabeled
// set. Index vectors record the exact partition of the input rows.
struct KShotSplit {
    DomainDataset labeled;
    UnlabeledSet unlabeled;
    std::vector<std::size_t> labeled_indices;
    std::vector<std::size_t> unlabeled_indices;
};

KShotSplit select_kshot(const DomainDataset& data, std::size_t k, std::mt19937_64& rng);

// Epoch-based minibatch index stream: permute each epoch, yield contiguous
// chunks, drop the final short chunk. Infinite.
class BatchIterator {
public:
    BatchIterator(std::size_t n, std::size_t batch_size, std::mt19937_64 rng);
    std::vector<std::size_t> next();

private:
    std::size_t n_;
    std::size_t batch_size_;
    std::size_t pos_;
    std::vector<std::size_t> order_;
    std::mt19937_64 rng_;
};

// CSV with columns x1..xd,y,domain_tag,split; values printed with 17
// significant digits so a round trip is exact.
void export_csv(const std::vector<DomainDataset>& datasets, const std::filesystem::path& path);
std::vector<DomainDataset> import_csv(const std::filesystem::path& path);

// Canonical desk-scale benchmarks: rotated moons with sources at
// {0, 15, 30} degrees and target at 45 (multi-source), and a 0 -> 45 degree
// pair for the few-shot setting.
struct MsdaBenchmark {
    std::vector<DomainDataset> sources;
    DomainDataset target_train;
    DomainDataset target_test;
};

struct SsdaBenchmark {
    DomainDataset source;
    DomainDataset target_train; // labels retained; trainers split it k-shot
    DomainDataset target_test;
    std::size_t k_shot = 3;
};

MsdaBenchmark canonical_msda_moons(std::uint64_t data_seed,
                                   std::vector<double> source_rotations_deg = {0.0, 15.0, 30.0},
                                   double target_rotation_deg = 45.0,
                                   std::size_t n_per_class = 500, double noise_sigma = 0.1);
SsdaBenchmark canonical_ssda_moons(std::uint64_t data_seed, std::size_t k_shot = 3,
                                   double source_rotation_deg = 0.0,
                                   double target_rotation_deg = 45.0,
                                   std::size_t n_per_class = 500, double noise_sigma = 0.1);

DomainDataset pool_domains(const std::vector<DomainDataset>& domains,
                           const std::vector<std::size_t>& indices);

} // namespace metadapt
