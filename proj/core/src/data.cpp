#include "metadapt/data.hpp"

#include "metadapt/errors.hpp"
#include "metadapt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

namespace metadapt {

namespace {

constexpr std::uint64_t kTrainStream = 0x7261696E;
constexpr std::uint64_t kTestStream = 0x74657374;

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

LabeledBatch take_rows(const DomainDataset& data, const std::vector<std::size_t>& idx) {
    LabeledBatch b;
    b.x = Matrix(idx.size(), data.x.cols);
    b.y.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] < data.size(), "take_rows: index out of range");
        for (std::size_t j = 0; j < data.x.cols; ++j) b.x(i, j) = data.x(idx[i], j);
        b.y[i] = data.y[idx[i]];
    }
    return b;
}

UnlabeledBatch take_rows(const UnlabeledSet& data, const std::vector<std::size_t>& idx) {
    UnlabeledBatch b;
    b.x = Matrix(idx.size(), data.x.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] < data.size(), "take_rows: index out of range");
        for (std::size_t j = 0; j < data.x.cols; ++j) b.x(i, j) = data.x(idx[i], j);
    }
    return b;
}

LabeledBatch full_batch(const DomainDataset& data) { return {data.x, data.y}; }

DomainDataset gen_rotated_moons(const MoonsSpec& spec, Split split) {
    require(spec.noise_sigma >= 0.0, "MoonsSpec: noise_sigma must be >= 0");
    std::mt19937_64 rng(
        derive_seed(spec.seed, split == Split::Train ? kTrainStream : kTestStream));
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::normal_distribution<double> noise(0.0, 1.0);

    const std::size_t n = 2 * spec.n_per_class;
    DomainDataset out;
    out.x = Matrix(n, 2);
    out.y.resize(n);
    out.split = split;
    {
        std::ostringstream tag;
        tag << "moons_rot" << spec.rotation_deg;
        out.domain_tag = tag.str();
    }

    const double phi = spec.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i < spec.n_per_class ? 0 : 1;
        const double t = angle(rng);
        double px, py;
        if (label == 0) { // upper half of the unit circle
            px = std::cos(t);
            py = std::sin(t);
        } else { // lower half circle centered at (1, 0.5)
            px = 1.0 - std::cos(t);
            py = 0.5 - std::sin(t);
        }
        if (spec.noise_sigma > 0.0) {
            px += spec.noise_sigma * noise(rng);
            py += spec.noise_sigma * noise(rng);
        }
        out.x(i, 0) = c * px - s * py;
        out.x(i, 1) = s * px + c * py;
        out.y[i] = label;
    }
    return out;
}

DomainDataset gen_gaussian_shift(const GaussShiftSpec& spec, Split split) {
    require(spec.cov_scale > 0.0, "GaussShiftSpec: cov_scale must be positive");
    require(spec.class_means.size() == spec.num_classes,
            "GaussShiftSpec: one mean per class required");
    const std::size_t d = spec.class_means.front().size();
    require(spec.domain_offset.size() == d, "GaussShiftSpec: offset dimension mismatch");
    for (std::size_t a = 0; a < spec.num_classes; ++a) {
        require(spec.class_means[a].size() == d, "GaussShiftSpec: ragged class means");
        for (std::size_t b = a + 1; b < spec.num_classes; ++b)
            require(spec.class_means[a] != spec.class_means[b],
                    "GaussShiftSpec: class means must be pairwise distinct");
    }

    std::mt19937_64 rng(
        derive_seed(spec.seed, split == Split::Train ? kTrainStream : kTestStream));
    std::normal_distribution<double> g(0.0, std::sqrt(spec.cov_scale));

    DomainDataset out;
    out.x = Matrix(spec.num_classes * spec.n_per_class, d);
    out.y.resize(out.x.rows);
    out.split = split;
    out.domain_tag = "gauss_shift";
    std::size_t row = 0;
    for (std::size_t k = 0; k < spec.num_classes; ++k)
        for (std::size_t i = 0; i < spec.n_per_class; ++i, ++row) {
            for (std::size_t j = 0; j < d; ++j)
                out.x(row, j) = spec.class_means[k][j] + spec.domain_offset[j] + g(rng);
            out.y[row] = static_cast<int>(k);
        }
    return out;
}

MetaSplit sample_meta_split(const std::vector<DomainDataset>& domains, std::mt19937_64& rng) {
    require(domains.size() >= 2, "sample_meta_split: needs at least 2 domains");
    std::uniform_int_distribution<std::size_t> pick(0, domains.size() - 1);
    MetaSplit split;
    split.mte_index = pick(rng);
    for (std::size_t i = 0; i < domains.size(); ++i)
        if (i != split.mte_index) split.mtr_indices.push_back(i);
    return split;
}

KShotSplit select_kshot(const DomainDataset& data, std::size_t k, std::mt19937_64& rng) {
    require(k >= 1, "select_kshot: k must be >= 1");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data.y[i]].push_back(i);
    for (auto& [cls, idx] : by_class) {
        require(idx.size() >= k, "select_kshot: class " + std::to_string(cls) +
                                     " has fewer than k samples");
        std::shuffle(idx.begin(), idx.end(), rng);
    }

    KShotSplit out;
    for (auto& [cls, idx] : by_class) {
        out.labeled_indices.insert(out.labeled_indices.end(), idx.begin(), idx.begin() + k);
        out.unlabeled_indices.insert(out.unlabeled_indices.end(), idx.begin() + k, idx.end());
    }
    std::sort(out.labeled_indices.begin(), out.labeled_indices.end());
    std::sort(out.unlabeled_indices.begin(), out.unlabeled_indices.end());

    const LabeledBatch lb = take_rows(data, out.labeled_indices);
    out.labeled = {lb.x, lb.y, data.domain_tag, data.split};
    UnlabeledSet rest;
    rest.x = take_rows(data.unlabeled(), out.unlabeled_indices).x;
    rest.domain_tag = data.domain_tag;
    out.unlabeled = std::move(rest);
    return out;
}

BatchIterator::BatchIterator(std::size_t n, std::size_t batch_size, std::mt19937_64 rng)
    : n_(n), batch_size_(batch_size), pos_(0), rng_(rng) {
    require(batch_size >= 1, "BatchIterator: batch_size must be >= 1");
    require(batch_size <= n, "BatchIterator: batch_size exceeds dataset size");
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
}

std::vector<std::size_t> BatchIterator::next() {
    if (pos_ + batch_size_ > n_) { // drop the short remainder, reshuffle
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
    }
    std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                   order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_size_));
    pos_ += batch_size_;
    return batch;
}

void export_csv(const std::vector<DomainDataset>& datasets, const std::filesystem::path& path) {
    require(!datasets.empty(), "export_csv: nothing to export");
    const std::size_t d = datasets.front().x.cols;
    std::ofstream out(path);
    require(out.good(), "export_csv: cannot open " + path.string());
    for (std::size_t j = 0; j < d; ++j) out << "x" << (j + 1) << ",";
    out << "y,domain_tag,split\n";
    for (const auto& ds : datasets) {
        require(ds.x.cols == d, "export_csv: mixed dimensionality");
        for (std::size_t i = 0; i < ds.size(); ++i) {
            for (std::size_t j = 0; j < d; ++j) out << format_g17(ds.x(i, j)) << ",";
            out << ds.y[i] << "," << ds.domain_tag << ","
                << (ds.split == Split::Train ? "train" : "test") << "\n";
        }
    }
    require(out.good(), "export_csv: write failed");
}

std::vector<DomainDataset> import_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), "import_csv: cannot open " + path.string());
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "import_csv: empty file");
    std::size_t d = 0;
    {
        std::stringstream hdr(line);
        std::string col;
        while (std::getline(hdr, col, ',')) {
            if (col.size() > 1 && col[0] == 'x') ++d;
        }
        require(d >= 1, "import_csv: no feature columns in header");
    }

    struct Key {
        std::string tag;
        std::string split;
        bool operator<(const Key& o) const { return std::tie(tag, split) < std::tie(o.tag, o.split); }
    };
    std::map<Key, std::pair<std::vector<double>, std::vector<int>>> groups;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<double> xs;
        for (std::size_t j = 0; j < d; ++j) {
            require(static_cast<bool>(std::getline(row, cell, ',')),
                    "import_csv: short row at line " + std::to_string(line_no));
            xs.push_back(std::stod(cell));
        }
        require(static_cast<bool>(std::getline(row, cell, ',')),
                "import_csv: missing label at line " + std::to_string(line_no));
        const int y = std::stoi(cell);
        std::string tag, split;
        require(static_cast<bool>(std::getline(row, tag, ',')) &&
                    static_cast<bool>(std::getline(row, split, ',')),
                "import_csv: missing tag/split at line " + std::to_string(line_no));
        auto& g = groups[{tag, split}];
        g.first.insert(g.first.end(), xs.begin(), xs.end());
        g.second.push_back(y);
    }

    std::vector<DomainDataset> out;
    for (auto& [key, g] : groups) {
        DomainDataset ds;
        ds.domain_tag = key.tag;
        require(key.split == "train" || key.split == "test",
                "import_csv: unknown split tag " + key.split);
        ds.split = key.split == "train" ? Split::Train : Split::Test;
        ds.y = std::move(g.second);
        ds.x = Matrix(ds.y.size(), d);
        ds.x.data = std::move(g.first);
        out.push_back(std::move(ds));
    }
    return out;
}

MsdaBenchmark canonical_msda_moons(std::uint64_t data_seed, std::vector<double> rotations,
                                   double target_rotation_deg, std::size_t n_per_class,
                                   double noise_sigma) {
    MsdaBenchmark b;
    std::uint64_t k = 1;
    for (double rot : rotations) {
        MoonsSpec spec{rot, n_per_class, noise_sigma, derive_seed(data_seed, k++)};
        b.sources.push_back(gen_rotated_moons(spec, Split::Train));
    }
    MoonsSpec tgt{target_rotation_deg, n_per_class, noise_sigma, derive_seed(data_seed, 0)};
    b.target_train = gen_rotated_moons(tgt, Split::Train);
    b.target_test = gen_rotated_moons(tgt, Split::Test);
    return b;
}

SsdaBenchmark canonical_ssda_moons(std::uint64_t data_seed, std::size_t k_shot,
                                   double source_rotation_deg, double target_rotation_deg,
                                   std::size_t n_per_class, double noise_sigma) {
    SsdaBenchmark b;
    MoonsSpec src{source_rotation_deg, n_per_class, noise_sigma, derive_seed(data_seed, 1)};
    b.source = gen_rotated_moons(src, Split::Train);
    MoonsSpec tgt{target_rotation_deg, n_per_class, noise_sigma, derive_seed(data_seed, 0)};
    b.target_train = gen_rotated_moons(tgt, Split::Train);
    b.target_test = gen_rotated_moons(tgt, Split::Test);
    b.k_shot = k_shot;
    return b;
}

DomainDataset pool_domains(const std::vector<DomainDataset>& domains,
                           const std::vector<std::size_t>& indices) {
    require(!indices.empty(), "pool_domains: empty selection");
    std::size_t n = 0;
    const std::size_t d = domains[indices.front()].x.cols;
    for (std::size_t i : indices) {
        require(i < domains.size(), "pool_domains: index out of range");
        require(domains[i].x.cols == d, "pool_domains: mixed dimensionality");
        n += domains[i].size();
    }
    DomainDataset out;
    out.x = Matrix(n, d);
    out.y.reserve(n);
    out.domain_tag = "pooled";
    out.split = domains[indices.front()].split;
    std::size_t row = 0;
    for (std::size_t i : indices) {
        const DomainDataset& ds = domains[i];
        std::copy(ds.x.data.begin(), ds.x.data.end(), out.x.data.begin() + row * d);
        out.y.insert(out.y.end(), ds.y.begin(), ds.y.end());
        row += ds.size();
    }
    return out;
}

} // namespace metadapt
