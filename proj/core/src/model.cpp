#include "metadapt/model.hpp"

#include "metadapt/data.hpp"
#include "metadapt/errors.hpp"
#include "metadapt/rng.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace metadapt {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'P', 'S'};
constexpr std::uint32_t kFormatVersion = 1;

std::vector<std::size_t> f_dims(const Architecture& a) {
    std::vector<std::size_t> d{a.input_dim};
    d.insert(d.end(), a.feature_dims.begin(), a.feature_dims.end());
    return d;
}

std::vector<std::size_t> d_dims(const Architecture& a) {
    std::vector<std::size_t> d{a.feature_dim()};
    d.insert(d.end(), a.discriminator_dims.begin(), a.discriminator_dims.end());
    d.push_back(1);
    return d;
}

template <typename Fn>
void for_each_tensor(const Architecture& arch, Fn&& fn) {
    // flatten order: F layers, then C heads in index order, then D;
    // weight before bias within each layer.
    const auto fd = f_dims(arch);
    for (std::size_t l = 0; l + 1 < fd.size(); ++l) {
        fn('F', l, fd[l], fd[l + 1], true);
        fn('F', l, fd[l], fd[l + 1], false);
    }
    for (std::size_t h = 0; h < arch.num_classifiers; ++h) {
        fn('C', h, arch.feature_dim(), arch.num_classes, true);
        fn('C', h, arch.feature_dim(), arch.num_classes, false);
    }
    const auto dd = d_dims(arch);
    for (std::size_t l = 0; l + 1 < dd.size(); ++l) {
        fn('D', l, dd[l], dd[l + 1], true);
        fn('D', l, dd[l], dd[l + 1], false);
    }
}

void write_le64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_le64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw ContractViolation("param file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_le64(out, bits);
}

double read_f64(std::istream& in) {
    const std::uint64_t bits = read_le64(in);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

} // namespace

void Architecture::validate() const {
    require(input_dim >= 1, "Architecture: input_dim must be >= 1");
    require(num_classes >= 2, "Architecture: num_classes must be >= 2");
    require(num_classifiers == 1 || num_classifiers == 2,
            "Architecture: num_classifiers must be 1 or 2");
    require(temperature > 0.0, "Architecture: temperature must be positive");
    for (std::size_t w : feature_dims) require(w >= 1, "Architecture: zero feature width");
    for (std::size_t w : discriminator_dims)
        require(w >= 1, "Architecture: zero discriminator width");
}

ParamLayout param_layout(const Architecture& arch) {
    arch.validate();
    ParamLayout lay;
    lay.c_ranges.resize(arch.num_classifiers);
    std::size_t pos = 0;
    lay.f_begin = pos;
    for_each_tensor(arch, [&](char block, std::size_t idx, std::size_t fan_in,
                              std::size_t fan_out, bool is_weight) {
        const std::size_t n = is_weight ? fan_in * fan_out : fan_out;
        if (block == 'C' && is_weight) lay.c_ranges[idx].first = pos;
        if (block == 'D' && idx == 0 && is_weight) lay.d_begin = pos;
        pos += n;
        if (block == 'F') lay.f_end = pos;
        if (block == 'C') lay.c_ranges[idx].second = pos;
    });
    lay.d_end = pos;
    lay.total = pos;
    if (arch.feature_dims.empty()) lay.f_begin = lay.f_end = 0;
    return lay;
}

std::size_t param_count(const Architecture& arch) { return param_layout(arch).total; }

ParamSet init_params(const Architecture& arch, const InitScheme& scheme, std::uint64_t seed) {
    arch.validate();
    require(scheme.perturb_sigma >= 0.0, "InitScheme: perturb_sigma must be >= 0");
    std::mt19937_64 rng(splitmix64(seed));

    ParamSet p;
    auto draw = [&](std::size_t fan_in, std::size_t fan_out) {
        Matrix w(fan_in, fan_out);
        switch (scheme.kind) {
        case InitKind::KaimingUniform: {
            const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
            std::uniform_real_distribution<double> u(-a, a);
            for (double& v : w.data) v = u(rng);
            break;
        }
        case InitKind::KaimingNormal: {
            std::normal_distribution<double> g(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
            for (double& v : w.data) v = g(rng);
            break;
        }
        case InitKind::XavierUniform: {
            const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::uniform_real_distribution<double> u(-a, a);
            for (double& v : w.data) v = u(rng);
            break;
        }
        case InitKind::XavierNormal: {
            std::normal_distribution<double> g(
                0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
            for (double& v : w.data) v = g(rng);
            break;
        }
        }
        return w;
    };

    for_each_tensor(arch, [&](char block, std::size_t, std::size_t fan_in, std::size_t fan_out,
                              bool is_weight) {
        auto& ws = block == 'F' ? p.f_weights : (block == 'C' ? p.c_weights : p.d_weights);
        auto& bs = block == 'F' ? p.f_biases : (block == 'C' ? p.c_biases : p.d_biases);
        if (is_weight)
            ws.push_back(draw(fan_in, fan_out));
        else
            bs.push_back(Matrix(1, fan_out)); // biases start at zero
    });

    if (scheme.perturb_sigma > 0.0) {
        std::normal_distribution<double> g(0.0, scheme.perturb_sigma);
        for (auto* block : {&p.f_weights, &p.c_weights, &p.d_weights})
            for (Matrix& w : *block)
                for (double& v : w.data) v += g(rng);
    }
    return p;
}

std::vector<double> flatten(const ParamSet& params) {
    std::vector<double> flat;
    auto emit = [&](const std::vector<Matrix>& ws, const std::vector<Matrix>& bs) {
        for (std::size_t l = 0; l < ws.size(); ++l) {
            flat.insert(flat.end(), ws[l].data.begin(), ws[l].data.end());
            flat.insert(flat.end(), bs[l].data.begin(), bs[l].data.end());
        }
    };
    emit(params.f_weights, params.f_biases);
    emit(params.c_weights, params.c_biases);
    emit(params.d_weights, params.d_biases);
    return flat;
}

ParamSet unflatten(const std::vector<double>& flat, const Architecture& arch) {
    require(flat.size() == param_count(arch),
            "unflatten: vector length does not match architecture parameter count");
    ParamSet p;
    std::size_t pos = 0;
    for_each_tensor(arch, [&](char block, std::size_t, std::size_t fan_in, std::size_t fan_out,
                              bool is_weight) {
        auto& ws = block == 'F' ? p.f_weights : (block == 'C' ? p.c_weights : p.d_weights);
        auto& bs = block == 'F' ? p.f_biases : (block == 'C' ? p.c_biases : p.d_biases);
        Matrix m(is_weight ? fan_in : 1, fan_out);
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + m.size()), m.data.begin());
        pos += m.size();
        (is_weight ? ws : bs).push_back(std::move(m));
    });
    return p;
}

Matrix features_forward(const ParamSet& params, const Architecture& arch, const Matrix& x) {
    require(x.cols == arch.input_dim, "features_forward: input dimension mismatch");
    Matrix h = x;
    for (std::size_t l = 0; l < params.f_weights.size(); ++l)
        h = relu(add_bias_rows(matmul(h, params.f_weights[l]), params.f_biases[l]));
    return h;
}

Matrix predict(const ParamSet& params, const Architecture& arch, const Matrix& x,
               std::size_t head) {
    require(head < arch.num_classifiers, "predict: head index out of range");
    const Matrix f = features_forward(params, arch, x);
    if (arch.classifier_kind == ClassifierKind::PlainLinear)
        return add_bias_rows(matmul(f, params.c_weights[head]), params.c_biases[head]);
    const Matrix fn = l2_normalize_rows(f);
    const Matrix wn = l2_normalize_cols(params.c_weights[head]);
    return scale(matmul(fn, wn), 1.0 / arch.temperature);
}

Matrix discriminator_forward(const ParamSet& params, const Architecture& arch,
                             const Matrix& features) {
    require(features.cols == arch.feature_dim(), "discriminator_forward: dimension mismatch");
    Matrix h = features;
    const std::size_t n_layers = params.d_weights.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        h = add_bias_rows(matmul(h, params.d_weights[l]), params.d_biases[l]);
        if (l + 1 < n_layers) h = relu(h); // last layer is the raw 1-logit output
    }
    return h;
}

double accuracy(const ParamSet& params, const Architecture& arch, const DomainDataset& data,
                std::size_t head) {
    require(data.size() > 0, "accuracy: empty dataset");
    const Matrix logits = predict(params, arch, data.x, head);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < logits.cols; ++k)
            if (logits(i, k) > logits(i, best)) best = k; // ties keep the lowest index
        if (static_cast<int>(best) == data.y[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

void save_params(const ParamSet& params, const Architecture& arch,
                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_params: cannot open " + path.string());
    out.write(kMagic, 4);
    write_le64(out, kFormatVersion);
    write_le64(out, arch.input_dim);
    write_le64(out, arch.feature_dims.size());
    for (std::size_t d : arch.feature_dims) write_le64(out, d);
    write_le64(out, arch.num_classes);
    write_le64(out, arch.num_classifiers);
    write_le64(out, arch.discriminator_dims.size());
    for (std::size_t d : arch.discriminator_dims) write_le64(out, d);
    write_le64(out, arch.classifier_kind == ClassifierKind::PlainLinear ? 0 : 1);
    write_f64(out, arch.temperature);
    const std::vector<double> flat = flatten(params);
    write_le64(out, flat.size());
    for (double v : flat) write_f64(out, v);
    require(out.good(), "save_params: write failed for " + path.string());
}

std::pair<ParamSet, Architecture> load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_params: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    require(in.good() && std::memcmp(magic, kMagic, 4) == 0,
            "load_params: bad magic in " + path.string());
    require(read_le64(in) == kFormatVersion, "load_params: unsupported format version");
    Architecture arch;
    arch.input_dim = read_le64(in);
    arch.feature_dims.resize(read_le64(in));
    for (auto& d : arch.feature_dims) d = read_le64(in);
    arch.num_classes = read_le64(in);
    arch.num_classifiers = read_le64(in);
    arch.discriminator_dims.resize(read_le64(in));
    for (auto& d : arch.discriminator_dims) d = read_le64(in);
    arch.classifier_kind =
        read_le64(in) == 0 ? ClassifierKind::PlainLinear : ClassifierKind::NormalizedWithTemperature;
    arch.temperature = read_f64(in);
    const std::uint64_t n = read_le64(in);
    require(n == param_count(arch), "load_params: parameter count does not match architecture");
    std::vector<double> flat(n);
    for (auto& v : flat) v = read_f64(in);
    return {unflatten(flat, arch), arch};
}

std::string to_string(ClassifierKind kind) {
    return kind == ClassifierKind::PlainLinear ? "plain-linear" : "normalized-with-temperature";
}

std::string to_string(InitKind kind) {
    switch (kind) {
    case InitKind::KaimingUniform: return "kaiming-uniform";
    case InitKind::KaimingNormal: return "kaiming-normal";
    case InitKind::XavierUniform: return "xavier-uniform";
    case InitKind::XavierNormal: return "xavier-normal";
    }
    return "?";
}

ClassifierKind classifier_kind_from_string(const std::string& s) {
    if (s == "plain-linear") return ClassifierKind::PlainLinear;
    if (s == "normalized-with-temperature") return ClassifierKind::NormalizedWithTemperature;
    throw ContractViolation("unknown classifier kind: " + s);
}

InitKind init_kind_from_string(const std::string& s) {
    if (s == "kaiming-uniform") return InitKind::KaimingUniform;
    if (s == "kaiming-normal") return InitKind::KaimingNormal;
    if (s == "xavier-uniform") return InitKind::XavierUniform;
    if (s == "xavier-normal") return InitKind::XavierNormal;
    throw ContractViolation("unknown init kind: " + s);
}

} // namespace metadapt
