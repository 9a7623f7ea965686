#pragma once

#include "metadapt/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace metadapt {

enum class ClassifierKind { PlainLinear, NormalizedWithTemperature };

// Small MLP stack: feature extractor F, one or two classifier heads C, and a
// 1-logit domain discriminator D. feature_dims/discriminator_dims may be
// empty, which makes the corresponding map linear in its input.
struct Architecture {
    std::size_t input_dim = 2;
    std::vector<std::size_t> feature_dims = {64, 32};
    std::size_t num_classes = 2;
    std::size_t num_classifiers = 1; // 2 for classifier-discrepancy methods
    std::vector<std::size_t> discriminator_dims = {16};
    ClassifierKind classifier_kind = ClassifierKind::PlainLinear;
    double temperature = 0.05; // used by the normalized kind only

    std::size_t feature_dim() const {
        return feature_dims.empty() ? input_dim : feature_dims.back();
    }
    void validate() const;
    bool operator==(const Architecture&) const = default;
};

enum class InitKind { KaimingUniform, KaimingNormal, XavierUniform, XavierNormal };

struct InitScheme {
    InitKind kind = InitKind::KaimingUniform;
    double perturb_sigma = 0.0; // additive N(0, sigma^2) noise on weights after init
};

// Model parameters. Weight matrices are (fan_in x fan_out); biases are row
// vectors. The normalized classifier kind keeps its (zero) bias tensor for a
// uniform layout but does not apply it in the forward pass.
struct ParamSet {
    std::vector<Matrix> f_weights, f_biases;
    std::vector<Matrix> c_weights, c_biases; // per classifier head
    std::vector<Matrix> d_weights, d_biases;

    bool operator==(const ParamSet&) const = default;
};

// Flat-vector coordinate ranges of each parameter block, in flatten order:
// F layers, then classifier heads in index order, then D; within a layer the
// weight precedes the bias.
struct ParamLayout {
    std::size_t total = 0;
    std::size_t f_begin = 0, f_end = 0;
    std::vector<std::pair<std::size_t, std::size_t>> c_ranges; // per head
    std::size_t d_begin = 0, d_end = 0;
};

ParamLayout param_layout(const Architecture& arch);
std::size_t param_count(const Architecture& arch);

ParamSet init_params(const Architecture& arch, const InitScheme& scheme, std::uint64_t seed);

std::vector<double> flatten(const ParamSet& params);
ParamSet unflatten(const std::vector<double>& flat, const Architecture& arch);

// Plain (non-tape) forward passes, shared with the tape ops' kernels so both
// paths produce identical arithmetic.
Matrix features_forward(const ParamSet& params, const Architecture& arch, const Matrix& x);
Matrix predict(const ParamSet& params, const Architecture& arch, const Matrix& x,
               std::size_t head);
Matrix discriminator_forward(const ParamSet& params, const Architecture& arch,
                             const Matrix& features);

struct DomainDataset; // data.hpp

// Fraction of samples whose argmax logit equals the label; ties go to the
// lowest class index.
double accuracy(const ParamSet& params, const Architecture& arch, const DomainDataset& data,
                std::size_t head);

// Flat binary file: magic + architecture description + count, then 64-bit
// little-endian reals in flatten order.
void save_params(const ParamSet& params, const Architecture& arch,
                 const std::filesystem::path& path);
std::pair<ParamSet, Architecture> load_params(const std::filesystem::path& path);

std::string to_string(ClassifierKind kind);
std::string to_string(InitKind kind);
ClassifierKind classifier_kind_from_string(const std::string& s);
InitKind init_kind_from_string(const std::string& s);

} // namespace metadapt
