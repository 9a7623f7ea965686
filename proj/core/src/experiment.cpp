#include "metadapt/experiment.hpp"

#include "metadapt/errors.hpp"
#include "metadapt/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

namespace fs = std::filesystem;

namespace metadapt {

namespace {

constexpr std::uint64_t kShotStream = 5;

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void reject_unknown(const nlohmann::json& j, const std::string& path,
                    const std::set<std::string>& allowed) {
    require(j.is_object(), "config: expected an object at " + path);
    for (const auto& [key, _] : j.items())
        require(allowed.count(key) == 1, "config: unknown field \"" + path + key + "\"");
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

DaMethod parse_method(const nlohmann::json& j, const std::string& path) {
    reject_unknown(j, path, {"kind", "lambda", "n_steps"});
    require(j.contains("kind"), "config: missing \"" + path + "kind\"");
    DaMethod m;
    m.kind = da_kind_from_string(j.at("kind").get<std::string>());
    m.lambda = get_or(j, "lambda", 1.0);
    m.n_steps = get_or(j, "n_steps", 4);
    m.validate();
    return m;
}

nlohmann::json method_to_json(const DaMethod& m) {
    return {{"kind", to_string(m.kind)}, {"lambda", m.lambda}, {"n_steps", m.n_steps}};
}

BenchmarkSpec parse_benchmark(const nlohmann::json& j) {
    reject_unknown(j, "benchmark.",
                   {"kind", "source_rotations_deg", "source_rotation_deg", "target_rotation_deg",
                    "n_per_class", "noise_sigma", "data_seed", "k_shot"});
    BenchmarkSpec b;
    b.kind = get_or<std::string>(j, "kind", "rotated-moons");
    require(b.kind == "rotated-moons", "config: unsupported benchmark kind \"" + b.kind + "\"");
    b.source_rotations_deg =
        get_or(j, "source_rotations_deg", std::vector<double>{0.0, 15.0, 30.0});
    b.source_rotation_deg = get_or(j, "source_rotation_deg", 0.0);
    b.target_rotation_deg = get_or(j, "target_rotation_deg", 45.0);
    b.n_per_class = get_or<std::size_t>(j, "n_per_class", 500);
    b.noise_sigma = get_or(j, "noise_sigma", 0.1);
    b.data_seed = get_or<std::uint64_t>(j, "data_seed", 7);
    b.k_shot = get_or<std::size_t>(j, "k_shot", 3);
    require(b.n_per_class >= 1, "config: benchmark.n_per_class must be >= 1");
    require(b.k_shot >= 1, "config: benchmark.k_shot must be >= 1");
    return b;
}

ModelSpec parse_model(const nlohmann::json& j) {
    reject_unknown(j, "model.",
                   {"feature_dims", "discriminator_dims", "classifier_kind", "temperature",
                    "init"});
    ModelSpec m;
    m.feature_dims = get_or(j, "feature_dims", std::vector<std::size_t>{64, 32});
    m.discriminator_dims = get_or(j, "discriminator_dims", std::vector<std::size_t>{16});
    m.classifier_kind = get_or<std::string>(j, "classifier_kind", "auto");
    m.temperature = get_or(j, "temperature", 0.05);
    if (j.contains("init")) {
        reject_unknown(j.at("init"), "model.init.", {"kind", "perturb_sigma"});
        m.init.kind = init_kind_from_string(
            get_or<std::string>(j.at("init"), "kind", "kaiming-uniform"));
        m.init.perturb_sigma = get_or(j.at("init"), "perturb_sigma", 0.0);
        require(m.init.perturb_sigma >= 0.0, "config: model.init.perturb_sigma must be >= 0");
    }
    if (m.classifier_kind != "auto") classifier_kind_from_string(m.classifier_kind);
    return m;
}

MetaConfig parse_meta(const nlohmann::json& j, const std::vector<DaMethod>& methods) {
    reject_unknown(j, "meta.",
                   {"J", "S", "iterations", "alpha", "meta_alpha", "update_scope"});
    MetaConfig m;
    m.J = get_or(j, "J", 1);
    m.S = get_or(j, "S", 3);
    m.iterations = get_or(j, "iterations", 1000);
    m.alpha = get_or(j, "alpha", 0.01);
    m.meta_alpha = get_or(j, "meta_alpha", m.alpha);
    const std::string scope = get_or<std::string>(j, "update_scope", "all-params");
    if (scope == "all-params")
        m.update_scope = UpdateScope::AllParams;
    else if (scope == "exclude-adversarial")
        m.update_scope = UpdateScope::ExcludeAdversarial;
    else
        throw ContractViolation("config: unknown meta.update_scope \"" + scope + "\"");
    // the inner method is bound per grid row; validate with the first one
    if (!methods.empty()) m.inner_method = methods.front();
    m.validate();
    return m;
}

RunOptions parse_options(const nlohmann::json& j) {
    reject_unknown(j, "options.", {"batch_size", "eval_interval", "momentum"});
    RunOptions o;
    o.batch_size = get_or<std::size_t>(j, "batch_size", 32);
    o.eval_interval = get_or(j, "eval_interval", 25);
    o.momentum = get_or(j, "momentum", 0.9);
    require(o.batch_size >= 1, "config: options.batch_size must be >= 1");
    require(o.eval_interval >= 1, "config: options.eval_interval must be >= 1");
    require(o.momentum >= 0.0 && o.momentum < 1.0, "config: options.momentum must be in [0,1)");
    return o;
}

struct BuiltData {
    // msda
    MsdaBenchmark msda;
    // ssda
    SsdaBenchmark ssda;
    bool is_msda = true;
};

BuiltData build_data(const ExperimentConfig& cfg) {
    BuiltData d;
    d.is_msda = cfg.scenario == "msda";
    const BenchmarkSpec& b = cfg.benchmark;
    if (d.is_msda)
        d.msda = canonical_msda_moons(b.data_seed, b.source_rotations_deg,
                                      b.target_rotation_deg, b.n_per_class, b.noise_sigma);
    else
        d.ssda = canonical_ssda_moons(b.data_seed, b.k_shot, b.source_rotation_deg,
                                      b.target_rotation_deg, b.n_per_class, b.noise_sigma);
    return d;
}

nlohmann::json singleton_config_json(const ExperimentConfig& cfg, const DaMethod& method,
                                     MetaMode mode, std::uint64_t seed) {
    ExperimentConfig one = cfg;
    one.methods = {method};
    one.meta_modes = {mode};
    one.seeds = {seed};
    return experiment_config_to_json(one);
}

struct SingleOutcome {
    RunReport report;
    ParamSet initial;
    ParamSet final_params;
    Architecture arch;
};

SingleOutcome run_single_impl(const ExperimentConfig& cfg, const BuiltData& data,
                              const DaMethod& method, MetaMode mode, std::uint64_t seed) {
    SingleOutcome out;
    out.arch = make_architecture(cfg.model, method, 2, 2);
    MetaConfig meta = cfg.meta;
    meta.inner_method = method;

    out.initial = init_params(out.arch, cfg.model.init, derive_seed(seed, stream::kInit));

    if (data.is_msda) {
        const MsdaBenchmark& b = data.msda;
        TrainOutcome t = train_msda(mode, b.sources, b.target_train, b.target_test, out.arch,
                                    cfg.model.init, meta, method, seed, cfg.options);
        out.report = std::move(t.report);
        out.final_params = std::move(t.final_params);
    } else {
        const SsdaBenchmark& b = data.ssda;
        std::mt19937_64 shot_rng = make_rng(seed, kShotStream);
        const KShotSplit shots = select_kshot(b.target_train, b.k_shot, shot_rng);
        TrainOutcome t = train_ssda(mode, b.source, shots.labeled, shots.unlabeled, b.target_test,
                                    out.arch, cfg.model.init, meta, method, seed, cfg.options);
        out.report = std::move(t.report);
        out.final_params = std::move(t.final_params);
    }
    out.report.config = singleton_config_json(cfg, method, mode, seed);
    return out;
}

std::string run_stem(const DaMethod& method, MetaMode mode, std::uint64_t seed) {
    return to_string(method.kind) + "_" + to_string(mode) + "_seed" + std::to_string(seed);
}

void parallel_tasks(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers =
        std::max<std::size_t>(1, std::min<std::size_t>(n, static_cast<std::size_t>(
                                                              std::max(jobs, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                fn(i);
            }
        });
    for (auto& t : pool) t.join();
}

double mean_of(const std::vector<double>& xs) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return xs.empty() ? 0.0 : acc / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

int mode_rank(const std::string& mode) {
    if (mode == "online") return 0;
    if (mode == "sequential") return 1;
    if (mode == "vanilla") return 2;
    if (mode == "source-only") return 3;
    return 4;
}

// Reports may carry either the harness singleton config (methods/meta_modes
// arrays) or a trainer echo (singular method/meta_mode).
std::pair<std::string, std::string> cell_of(const nlohmann::json& config) {
    std::string method, mode;
    if (config.contains("methods"))
        method = config.at("methods").at(0).at("kind").get<std::string>();
    else
        method = config.at("method").at("kind").get<std::string>();
    if (config.contains("meta_modes"))
        mode = config.at("meta_modes").at(0).get<std::string>();
    else
        mode = config.at("meta_mode").get<std::string>();
    return {method, mode};
}

} // namespace

Architecture make_architecture(const ModelSpec& model, const DaMethod& method,
                               std::size_t input_dim, std::size_t num_classes) {
    Architecture arch;
    arch.input_dim = input_dim;
    arch.feature_dims = model.feature_dims;
    arch.num_classes = num_classes;
    arch.num_classifiers =
        (method.kind == DaKind::McdOneStep || method.kind == DaKind::McdMultiStep) ? 2 : 1;
    arch.discriminator_dims = model.discriminator_dims;
    if (model.classifier_kind == "auto")
        arch.classifier_kind = method.kind == DaKind::Mme
                                   ? ClassifierKind::NormalizedWithTemperature
                                   : ClassifierKind::PlainLinear;
    else
        arch.classifier_kind = classifier_kind_from_string(model.classifier_kind);
    arch.temperature = model.temperature;
    arch.validate();
    return arch;
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    reject_unknown(j, "", {"scenario", "benchmark", "methods", "meta_modes", "meta", "model",
                           "options", "seeds", "output_dir"});
    ExperimentConfig cfg;
    require(j.contains("scenario"), "config: missing \"scenario\"");
    cfg.scenario = j.at("scenario").get<std::string>();
    require(cfg.scenario == "msda" || cfg.scenario == "ssda",
            "config: scenario must be \"msda\" or \"ssda\"");
    cfg.benchmark = parse_benchmark(j.value("benchmark", nlohmann::json::object()));

    require(j.contains("methods") && j.at("methods").is_array() && !j.at("methods").empty(),
            "config: \"methods\" must be a nonempty array");
    std::size_t i = 0;
    for (const auto& mj : j.at("methods"))
        cfg.methods.push_back(parse_method(mj, "methods[" + std::to_string(i++) + "]."));

    require(j.contains("meta_modes") && j.at("meta_modes").is_array() &&
                !j.at("meta_modes").empty(),
            "config: \"meta_modes\" must be a nonempty array");
    for (const auto& mj : j.at("meta_modes"))
        cfg.meta_modes.push_back(meta_mode_from_string(mj.get<std::string>()));

    cfg.meta = parse_meta(j.value("meta", nlohmann::json::object()), cfg.methods);
    cfg.model = parse_model(j.value("model", nlohmann::json::object()));
    cfg.options = parse_options(j.value("options", nlohmann::json::object()));

    require(j.contains("seeds") && j.at("seeds").is_array() && !j.at("seeds").empty(),
            "config: \"seeds\" must be a nonempty array");
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.output_dir = get_or<std::string>(j, "output_dir", "out");
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ContractViolation("config parse error in " + path.string() + ": " + e.what());
    }
    return parse_experiment_config(j);
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : cfg.methods) methods.push_back(method_to_json(m));
    nlohmann::json modes = nlohmann::json::array();
    for (const auto& m : cfg.meta_modes) modes.push_back(to_string(m));
    nlohmann::json bench{{"kind", cfg.benchmark.kind},
                         {"source_rotations_deg", cfg.benchmark.source_rotations_deg},
                         {"source_rotation_deg", cfg.benchmark.source_rotation_deg},
                         {"target_rotation_deg", cfg.benchmark.target_rotation_deg},
                         {"n_per_class", cfg.benchmark.n_per_class},
                         {"noise_sigma", cfg.benchmark.noise_sigma},
                         {"data_seed", cfg.benchmark.data_seed},
                         {"k_shot", cfg.benchmark.k_shot}};
    return nlohmann::json{
        {"scenario", cfg.scenario},
        {"benchmark", bench},
        {"methods", methods},
        {"meta_modes", modes},
        {"meta",
         {{"J", cfg.meta.J},
          {"S", cfg.meta.S},
          {"iterations", cfg.meta.iterations},
          {"alpha", cfg.meta.alpha},
          {"meta_alpha", cfg.meta.meta_alpha},
          {"update_scope", cfg.meta.update_scope == UpdateScope::AllParams
                               ? "all-params"
                               : "exclude-adversarial"}}},
        {"model",
         {{"feature_dims", cfg.model.feature_dims},
          {"discriminator_dims", cfg.model.discriminator_dims},
          {"classifier_kind", cfg.model.classifier_kind},
          {"temperature", cfg.model.temperature},
          {"init",
           {{"kind", to_string(cfg.model.init.kind)},
            {"perturb_sigma", cfg.model.init.perturb_sigma}}}}},
        {"options",
         {{"batch_size", cfg.options.batch_size},
          {"eval_interval", cfg.options.eval_interval},
          {"momentum", cfg.options.momentum}}},
        {"seeds", cfg.seeds},
        {"output_dir", cfg.output_dir.string()}};
}

RunReport run_single(const ExperimentConfig& cfg, const DaMethod& method, MetaMode mode,
                     std::uint64_t seed) {
    const BuiltData data = build_data(cfg);
    return run_single_impl(cfg, data, method, mode, seed).report;
}

int run_experiment(const ExperimentConfig& cfg, const HarnessOptions& opts) {
    ExperimentConfig run_cfg = cfg;
    for (auto& s : run_cfg.seeds) s += opts.seed_offset;
    require(!run_cfg.output_dir.empty(), "run_experiment: empty output_dir");
    fs::create_directories(run_cfg.output_dir);

    const BuiltData data = build_data(run_cfg);
    {
        std::vector<DomainDataset> all;
        if (data.is_msda) {
            all = data.msda.sources;
            all.push_back(data.msda.target_train);
            all.push_back(data.msda.target_test);
        } else {
            all = {data.ssda.source, data.ssda.target_train, data.ssda.target_test};
        }
        export_csv(all, run_cfg.output_dir / "datasets.csv");
    }

    struct Task {
        DaMethod method;
        MetaMode mode;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (const auto& m : run_cfg.methods)
        for (const auto& mode : run_cfg.meta_modes)
            for (std::uint64_t s : run_cfg.seeds) tasks.push_back({m, mode, s});

    struct Slot {
        bool ok = false;
        SingleOutcome outcome;
        std::string error;
    };
    std::vector<Slot> slots(tasks.size());
    std::mutex io_mutex;

    parallel_tasks(tasks.size(), opts.jobs, [&](std::size_t i) {
        const Task& t = tasks[i];
        try {
            slots[i].outcome = run_single_impl(run_cfg, data, t.method, t.mode, t.seed);
            slots[i].ok = true;
            if (!opts.quiet) {
                std::lock_guard<std::mutex> lock(io_mutex);
                std::cout << "run " << run_stem(t.method, t.mode, t.seed)
                          << " final_acc=" << slots[i].outcome.report.final_acc << "\n";
            }
        } catch (const std::exception& e) {
            slots[i].error = e.what();
            std::lock_guard<std::mutex> lock(io_mutex);
            std::cerr << "FAILED " << run_stem(t.method, t.mode, t.seed) << ": " << e.what()
                      << "\n";
        }
    });

    nlohmann::json failures = nlohmann::json::array();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const Task& t = tasks[i];
        const std::string stem = run_stem(t.method, t.mode, t.seed);
        if (!slots[i].ok) {
            failures.push_back({{"run", stem},
                                {"method", to_string(t.method.kind)},
                                {"meta_mode", to_string(t.mode)},
                                {"seed", t.seed},
                                {"error", slots[i].error}});
            continue;
        }
        const SingleOutcome& out = slots[i].outcome;
        std::ofstream rf(run_cfg.output_dir / (stem + ".json"));
        rf << report_to_json(out.report).dump(2) << "\n";
        save_params(out.initial, out.arch, run_cfg.output_dir / (stem + "_init.params"));
        save_params(out.final_params, out.arch, run_cfg.output_dir / (stem + "_final.params"));
    }
    if (!failures.empty()) {
        std::ofstream ff(run_cfg.output_dir / "failures.json");
        ff << failures.dump(2) << "\n";
    }

    const AggregateResult agg = aggregate_runs(run_cfg.output_dir);
    write_summary_csv(agg, run_cfg.output_dir / "summary.csv");
    write_comparisons_csv(agg, run_cfg.output_dir / "comparisons.csv");
    if (!opts.quiet)
        for (const auto& w : agg.warnings) std::cerr << "warning: " << w << "\n";
    return failures.empty() ? 0 : 1;
}

int run_experiment_file(const fs::path& config_path, const HarnessOptions& opts) {
    ExperimentConfig cfg;
    try {
        cfg = load_experiment_config(config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return run_experiment(cfg, opts);
}

SliceResult slice_weight_space(const SliceSpec& spec, const SliceEvalData& eval) {
    require(spec.grid_n >= 2, "slice: grid_n must be >= 2");
    require(!spec.metrics.empty(), "slice: no metrics requested");
    for (const auto& m : spec.metrics)
        require(m == "test_acc" || m == "sup_loss" || m == "adapt_loss",
                "slice: unknown metric \"" + m + "\"");

    auto [p0, arch0] = load_params(spec.theta0);
    auto [pa, archA] = load_params(spec.thetaA);
    auto [pb, archB] = load_params(spec.thetaB);
    require(archA == arch0 && archB == arch0,
            "slice: the three parameter sets must share an architecture");

    const std::vector<double> t0 = flatten(p0);
    const std::vector<double> ta = flatten(pa);
    const std::vector<double> tb = flatten(pb);

    SliceResult result;
    result.metric_names = spec.metrics;
    const double step = (spec.grid_max - spec.grid_min) / static_cast<double>(spec.grid_n - 1);

    std::vector<double> theta(t0.size());
    for (std::size_t ia = 0; ia < spec.grid_n; ++ia) {
        const double a = spec.grid_min + static_cast<double>(ia) * step;
        for (std::size_t ib = 0; ib < spec.grid_n; ++ib) {
            const double b = spec.grid_min + static_cast<double>(ib) * step;
            // barycentric weights: at the corners exactly one weight is 1
            const double w0 = 1.0 - a - b;
            for (std::size_t i = 0; i < theta.size(); ++i)
                theta[i] = w0 * t0[i] + a * ta[i] + b * tb[i];
            const ParamSet p = unflatten(theta, arch0);

            SliceResult::Row row{a, b, {}};
            for (const auto& m : spec.metrics) {
                if (m == "test_acc")
                    row.values.push_back(accuracy(p, arch0, eval.test, 0));
                else if (m == "sup_loss")
                    row.values.push_back(sup_loss(p, arch0, eval.sup).sup_value);
                else
                    row.values.push_back(
                        uda_loss(eval.method, p, arch0, eval.sup, eval.tgt).adapt_value);
            }
            result.rows.push_back(std::move(row));
        }
    }
    return result;
}

void write_slice_csv(const SliceResult& result, const fs::path& path) {
    std::ofstream out(path);
    require(out.good(), "write_slice_csv: cannot open " + path.string());
    out << "a,b";
    for (const auto& m : result.metric_names) out << "," << m;
    out << "\n";
    for (const auto& row : result.rows) {
        out << g17(row.a) << "," << g17(row.b);
        for (double v : row.values) out << "," << g17(v);
        out << "\n";
    }
    require(out.good(), "write_slice_csv: write failed");
}

int run_slice_file(const fs::path& slice_config_path, bool quiet) {
    try {
        std::ifstream in(slice_config_path);
        require(in.good(), "cannot open slice config " + slice_config_path.string());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ContractViolation("slice config parse error: " + std::string(e.what()));
        }
        reject_unknown(j, "",
                       {"theta0", "thetaA", "thetaB", "grid_min", "grid_max", "grid_n",
                        "metrics", "scenario", "benchmark", "method", "output_csv"});
        SliceSpec spec;
        require(j.contains("theta0") && j.contains("thetaA") && j.contains("thetaB"),
                "slice config: theta0/thetaA/thetaB are required");
        spec.theta0 = j.at("theta0").get<std::string>();
        spec.thetaA = j.at("thetaA").get<std::string>();
        spec.thetaB = j.at("thetaB").get<std::string>();
        spec.grid_min = get_or(j, "grid_min", -0.5);
        spec.grid_max = get_or(j, "grid_max", 1.5);
        spec.grid_n = get_or<std::size_t>(j, "grid_n", 41);
        spec.metrics = get_or(j, "metrics",
                              std::vector<std::string>{"test_acc", "sup_loss", "adapt_loss"});

        const std::string scenario = get_or<std::string>(j, "scenario", "msda");
        require(scenario == "msda" || scenario == "ssda",
                "slice config: scenario must be msda or ssda");
        const BenchmarkSpec bench = parse_benchmark(j.value("benchmark", nlohmann::json::object()));
        require(j.contains("method"), "slice config: missing \"method\"");
        const DaMethod method = parse_method(j.at("method"), "method.");

        SliceEvalData eval;
        eval.method = method;
        if (scenario == "msda") {
            const MsdaBenchmark b =
                canonical_msda_moons(bench.data_seed, bench.source_rotations_deg,
                                     bench.target_rotation_deg, bench.n_per_class,
                                     bench.noise_sigma);
            std::vector<std::size_t> all(b.sources.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            eval.sup = full_batch(pool_domains(b.sources, all));
            eval.tgt = {b.target_train.x};
            eval.test = b.target_test;
        } else {
            const SsdaBenchmark b =
                canonical_ssda_moons(bench.data_seed, bench.k_shot, bench.source_rotation_deg,
                                     bench.target_rotation_deg, bench.n_per_class,
                                     bench.noise_sigma);
            eval.sup = full_batch(b.source);
            eval.tgt = {b.target_train.x};
            eval.test = b.target_test;
        }

        const SliceResult result = slice_weight_space(spec, eval);
        const std::string out_csv = get_or<std::string>(j, "output_csv", "slice.csv");
        write_slice_csv(result, out_csv);
        if (!quiet)
            std::cout << "slice: wrote " << result.rows.size() << " grid points to " << out_csv
                      << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

AggregateResult aggregate_runs(const fs::path& report_dir) {
    require(fs::is_directory(report_dir), "aggregate_runs: not a directory: " +
                                              report_dir.string());
    struct Run {
        std::uint64_t seed;
        double final_acc;
        double timing;
    };
    std::map<std::pair<std::string, std::string>, std::vector<Run>> cells;

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(report_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    AggregateResult agg;
    for (const auto& f : files) {
        try {
            std::ifstream in(f);
            const nlohmann::json j = nlohmann::json::parse(in);
            const RunReport r = report_from_json(j);
            const auto key = cell_of(r.config);
            cells[key].push_back({r.seed, r.final_acc, r.timing_s_per_outer_iter});
        } catch (const std::exception&) {
            // not a run report (e.g. failures.json); skipped
        }
    }
    require(!cells.empty(), "aggregate_runs: no run reports found in " + report_dir.string());

    for (auto& [key, runs] : cells) {
        std::sort(runs.begin(), runs.end(), [](const Run& a, const Run& b) {
            return a.seed < b.seed;
        });
        std::vector<double> accs, timings;
        for (const Run& r : runs) {
            accs.push_back(r.final_acc);
            timings.push_back(r.timing);
        }
        agg.cells.push_back({key.first, key.second, mean_of(accs), sample_std(accs),
                             runs.size(), mean_of(timings)});
    }

    // paired comparisons across meta modes within each method
    std::map<std::string, std::vector<std::string>> modes_by_method;
    for (const auto& [key, _] : cells) modes_by_method[key.first].push_back(key.second);
    for (auto& [method, modes] : modes_by_method) {
        std::sort(modes.begin(), modes.end(), [](const std::string& a, const std::string& b) {
            return mode_rank(a) < mode_rank(b);
        });
        for (std::size_t i = 0; i < modes.size(); ++i)
            for (std::size_t k = i + 1; k < modes.size(); ++k) {
                const auto& runs_a = cells.at({method, modes[i]});
                const auto& runs_b = cells.at({method, modes[k]});
                std::map<std::uint64_t, double> by_seed_b;
                for (const Run& r : runs_b) by_seed_b[r.seed] = r.final_acc;
                PairedComparison cmp;
                cmp.method = method;
                cmp.mode_a = modes[i];
                cmp.mode_b = modes[k];
                std::vector<double> diffs;
                for (const Run& r : runs_a) {
                    auto it = by_seed_b.find(r.seed);
                    if (it == by_seed_b.end()) {
                        agg.warnings.push_back("unpaired seed " + std::to_string(r.seed) +
                                               " for " + method + " " + modes[i] + " vs " +
                                               modes[k] + "; excluded");
                        continue;
                    }
                    const double d = r.final_acc - it->second;
                    diffs.push_back(d);
                    if (d > 0)
                        ++cmp.wins_a;
                    else if (d < 0)
                        ++cmp.wins_b;
                    else
                        ++cmp.ties;
                }
                cmp.n_pairs = diffs.size();
                cmp.mean_diff = mean_of(diffs);
                cmp.std_diff = sample_std(diffs);
                agg.comparisons.push_back(std::move(cmp));
            }
    }
    return agg;
}

void write_summary_csv(const AggregateResult& agg, const fs::path& path) {
    std::ofstream out(path);
    require(out.good(), "write_summary_csv: cannot open " + path.string());
    out << "method,meta_mode,mean_acc,std_acc,n_seeds,s_per_outer_iter\n";
    for (const auto& c : agg.cells)
        out << c.method << "," << c.meta_mode << "," << g17(c.mean_acc) << ","
            << g17(c.std_acc) << "," << c.n_seeds << "," << g17(c.s_per_outer_iter) << "\n";
    require(out.good(), "write_summary_csv: write failed");
}

void write_comparisons_csv(const AggregateResult& agg, const fs::path& path) {
    std::ofstream out(path);
    require(out.good(), "write_comparisons_csv: cannot open " + path.string());
    out << "method,mode_a,mode_b,mean_diff,std_diff,wins_a,wins_b,ties,n_pairs\n";
    for (const auto& c : agg.comparisons)
        out << c.method << "," << c.mode_a << "," << c.mode_b << "," << g17(c.mean_diff) << ","
            << g17(c.std_diff) << "," << c.wins_a << "," << c.wins_b << "," << c.ties << ","
            << c.n_pairs << "\n";
    require(out.good(), "write_comparisons_csv: write failed");
}

} // namespace metadapt
