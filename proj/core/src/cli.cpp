#include "bilevel/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "bilevel/metio.hpp"
#include "bilevel/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace bilevel::cli {

namespace {

// --- schema ------------------------------------------------------------------

const std::map<std::string, std::set<std::string>>& schema_tree() {
    static const std::map<std::string, std::set<std::string>> tree = {
        {"", {"seed", "out", "threads", "dataset", "degradation", "foe", "tv", "restore",
              "crossover"}},
        {"dataset", {"kind", "source_dir", "count", "size", "patches_per_image", "patch_size",
                     "padding", "test_count"}},
        {"degradation", {"task", "blur", "noise", "decimation", "kernel_width", "kernel_sigma",
                         "motion_angle"}},
        {"foe", {"L", "kappa", "tau", "outer_iters", "init_alpha", "init_kernel_std", "lower",
                 "cg"}},
        {"foe.lower", {"sigma", "beta", "gamma_min", "gamma_max", "gamma0", "tol_inner", "t_max"}},
        {"foe.cg", {"tol", "max_iter", "shift"}},
        {"tv", {"L", "symmetry", "step", "outer_iters", "K", "restore_iters", "lambda", "theta",
                "init_perturb_std"}},
        {"restore", {"model", "preset", "inputs", "ground_truth", "error_maps"}},
        {"crossover", {"models", "tasks"}},
    };
    return tree;
}

void check_keys(const json& node, const std::string& scope) {
    const auto& tree = schema_tree();
    const auto it = tree.find(scope);
    if (it == tree.end()) return;  // leaf object with free-form content (none today)
    if (!node.is_object())
        throw ConfigError("config: '" + (scope.empty() ? std::string("<root>") : scope) +
                          "' must be a JSON object");
    for (const auto& [key, value] : node.items()) {
        if (!it->second.count(key))
            throw ConfigError("config: unknown key '" +
                              (scope.empty() ? key : scope + "." + key) + "'");
        const std::string child = scope.empty() ? key : scope + "." + key;
        if (value.is_object()) check_keys(value, child);
    }
}

void deep_merge(json& base, const json& overlay) {
    if (!overlay.is_object() || !base.is_object()) {
        base = overlay;
        return;
    }
    for (const auto& [key, value] : overlay.items()) {
        if (base.contains(key) && base[key].is_object() && value.is_object())
            deep_merge(base[key], value);
        else
            base[key] = value;
    }
}

template <typename T>
T get_or(const json& node, const std::string& key, T fallback) {
    if (!node.contains(key)) return fallback;
    try {
        return node.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value type for '" + key + "'");
    }
}

std::vector<std::string> get_string_list(const json& node, const std::string& key) {
    std::vector<std::string> out;
    if (!node.contains(key)) return out;
    if (!node.at(key).is_array()) throw ConfigError("config: '" + key + "' must be an array");
    for (const auto& v : node.at(key)) {
        if (!v.is_string()) throw ConfigError("config: '" + key + "' must hold strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

void validate_choice(const std::string& value, std::initializer_list<const char*> choices,
                     const std::string& key) {
    for (const char* c : choices)
        if (value == c) return;
    std::string msg = "config: '" + key + "' must be one of {";
    bool first = true;
    for (const char* c : choices) {
        if (!first) msg += ", ";
        msg += c;
        first = false;
    }
    throw ConfigError(msg + "}, got '" + value + "'");
}

// --- dataset and task plumbing ---------------------------------------------------

data::Padding padding_from_name(const std::string& name) {
    if (name == "periodic") return data::Padding::Periodic;
    if (name == "reflexive_crop") return data::Padding::ReflexiveCrop;
    throw ConfigError("config: unknown padding '" + name + "'");
}

std::string setting_name(const DegradationConfig& deg) {
    std::string s = deg.task == "sr" ? "sr" : deg.blur;
    if (deg.noise > 0.0) s += "-noisy";
    return s;
}

std::uint64_t test_seed(std::uint64_t seed) { return seed * 2654435761ULL + 0x7e57ULL; }

std::vector<Image> load_source_images(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw ConfigError("dataset source directory not found: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".PGM") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw ConfigError("no .pgm images found in: " + dir);
    std::vector<Image> images;
    images.reserve(paths.size());
    for (const std::string& p : paths) images.push_back(metio::read_pgm(p));
    return images;
}

std::vector<TrainSample> build_dataset(const RunConfig& cfg, std::uint64_t seed, int count) {
    const DegradationOp op = make_degradation(cfg.degradation);
    const data::Padding padding = padding_from_name(cfg.dataset.padding);

    if (cfg.dataset.kind == "edges") {
        data::EdgeSetSpec spec;
        spec.count = count;
        spec.size = cfg.dataset.size;
        spec.seed = seed;
        spec.degradation = op;
        spec.noise_sigma = cfg.degradation.noise;
        spec.padding = padding;
        return data::gen_edge_dataset(spec);
    }

    std::vector<Image> cleans;
    if (cfg.dataset.kind == "synthetic") {
        std::vector<Image> sources;
        sources.reserve(count);
        for (int i = 0; i < count; ++i)
            sources.push_back(data::gen_synthetic_image(cfg.dataset.size, seed + 17 * i + 1));
        cleans = data::extract_patches(sources, cfg.dataset.patches_per_image,
                                       cfg.dataset.patch_size, seed);
    } else {  // patches
        cleans = data::extract_patches(load_source_images(cfg.dataset.source_dir),
                                       cfg.dataset.patches_per_image, cfg.dataset.patch_size,
                                       seed);
    }

    std::vector<TrainSample> samples;
    samples.reserve(cleans.size());
    for (std::size_t j = 0; j < cleans.size(); ++j)
        samples.push_back(
            data::degrade_pair(cleans[j], op, cfg.degradation.noise, seed + j + 1, padding));
    return samples;
}

// A named evaluation task: full degradation settings for dataset synthesis.
struct TaskSpec {
    std::string name;
    DegradationConfig degradation;
};

TaskSpec task_by_name(const std::string& name) {
    TaskSpec spec;
    spec.name = name;
    std::string base = name;
    bool noisy = false;
    if (const auto pos = name.rfind("-noisy"); pos != std::string::npos && pos + 6 == name.size()) {
        base = name.substr(0, pos);
        noisy = true;
    }
    if (base == "sr") {
        spec.degradation.task = "sr";
        spec.degradation.blur = "delta";
    } else {
        spec.degradation.task = "deblur";
        validate_choice(base, {"gaussianA", "gaussianB", "gaussianC", "gauss5", "disk5",
                               "motion5", "delta"},
                        "task");
        spec.degradation.blur = base;
    }
    spec.degradation.noise = noisy ? 0.01 : 0.0;
    return spec;
}

// One restorer: either a loaded filter bank or a named preset.
struct Restorer {
    std::string name;
    metio::FilterBank bank;
};

Restorer restorer_from_model(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("model file not found: " + path);
    Restorer r;
    r.bank = metio::read_filter_bank(path);
    r.name = fs::path(path).stem().string();
    return r;
}

Restorer restorer_from_preset(const std::string& preset) {
    validate_choice(preset, {"fd", "cd3", "cd4"}, "restore.preset");
    Restorer r;
    r.bank = metio::FilterBank::from_tv(tvdisc::preset_family(preset));
    r.name = preset;
    return r;
}

Image run_restorer(const Restorer& r, const RunConfig& cfg, const DegradationOp& op,
                   const Image& observed) {
    if (r.bank.kind == metio::FilterBankKind::FoE)
        return foe::restore_foe(observed, op, r.bank.foe_params, cfg.foe_cfg.lower);
    const tvdisc::FilterFamily& fam = r.bank.tv_family;
    tvdisc::PiggybackConfig pb = tvdisc::default_piggyback_config(
        fam, observed.rows() * (op.kind == DegradationKind::DecimatedBlur ? op.factor : 1),
        observed.cols() * (op.kind == DegradationKind::DecimatedBlur ? op.factor : 1),
        cfg.tv_cfg.restore_iters, cfg.tv_cfg.lambda);
    return tvdisc::restore_tv(observed, op, fam, pb);
}

/// Mean PSNR of a restorer over a task's synthesized test set. Shared by
/// restore (task mode), eval, and crossover so their numbers agree exactly.
double evaluate_on_task(const Restorer& r, const RunConfig& cfg, const TaskSpec& task,
                        std::vector<double>* per_image = nullptr) {
    RunConfig task_cfg = cfg;
    task_cfg.degradation = task.degradation;
    const int count = cfg.dataset.test_count > 0 ? cfg.dataset.test_count : cfg.dataset.count;
    const std::vector<TrainSample> samples =
        build_dataset(task_cfg, test_seed(cfg.seed), count);
    const DegradationOp op = make_degradation(task_cfg.degradation);

    std::vector<double> values(samples.size(), 0.0);
    parallel_for(
        static_cast<int>(samples.size()),
        [&](int j) {
            const Image restored = run_restorer(r, task_cfg, op, samples[j].observed);
            values[j] = psnr(restored, samples[j].ground_truth);
        },
        cfg.threads);
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (per_image) *per_image = std::move(values);
    return mean;
}

void ensure_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw ConfigError("cannot create output directory: " + out);
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.out) / name).string();
}

void write_loss_curve(const std::vector<double>& history, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "iteration,loss\n";
    for (std::size_t i = 0; i < history.size(); ++i)
        out << i << ',' << metio::format_float(history[i]) << '\n';
}

json config_echo(const RunConfig& cfg, const std::string& command) {
    json j;
    j["command"] = command;
    j["seed"] = cfg.seed;
    j["task"] = cfg.degradation.task;
    j["setting"] = setting_name(cfg.degradation);
    json doc = json::parse(cfg.document, nullptr, /*allow_exceptions=*/false);
    if (!doc.is_discarded()) j["config"] = std::move(doc);
    return j;
}

void check_model_task(const std::string& model_path, const RunConfig& cfg) {
    const std::string sidecar = metio::read_sidecar(model_path);
    if (sidecar.empty()) return;  // nothing recorded; accept
    json meta = json::parse(sidecar, nullptr, /*allow_exceptions=*/false);
    if (meta.is_discarded() || !meta.is_object()) return;
    if (meta.contains("task") && meta["task"].is_string()) {
        const std::string trained = meta["task"].get<std::string>();
        if (trained != cfg.degradation.task)
            throw ConfigError("model/task mismatch: model '" + model_path + "' was trained for '" +
                              trained + "' but the requested task is '" + cfg.degradation.task +
                              "'");
    }
}

}  // namespace

Kernel blur_by_name(const std::string& name, int width, double sigma, double motion_angle) {
    if (name == "gaussianA") return make_gaussian_kernel(width, 0.5);
    if (name == "gaussianB") return make_gaussian_kernel(width, 1.0);
    if (name == "gaussianC") return make_gaussian_kernel(width, 1.5);
    if (name == "gauss5") return make_gaussian_kernel(5, sigma > 0.0 ? sigma : 1.0);
    if (name == "disk5") return make_disk_kernel(5);
    if (name == "motion5") return make_motion_kernel(5, motion_angle);
    if (name == "delta") return Kernel::delta();
    throw ConfigError("unknown blur setting: " + name);
}

DegradationOp make_degradation(const DegradationConfig& cfg) {
    Kernel k = blur_by_name(cfg.blur, cfg.kernel_width, cfg.kernel_sigma, cfg.motion_angle);
    if (cfg.task == "sr") return DegradationOp::decimated_blur(std::move(k), cfg.decimation);
    if (k.rows == 1 && k.cols == 1) return DegradationOp::identity();
    return DegradationOp::blur(std::move(k));
}

RunConfig parse_config(const std::string& config_json, const std::string& overrides_json) {
    json doc = json::parse(config_json, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) throw ConfigError("config: invalid JSON document");
    json overrides = json::parse(overrides_json, nullptr, /*allow_exceptions=*/false);
    if (overrides.is_discarded()) throw ConfigError("config: invalid override JSON");
    deep_merge(doc, overrides);
    check_keys(doc, "");

    RunConfig cfg;
    cfg.document = doc.dump();
    cfg.seed = get_or<std::uint64_t>(doc, "seed", 0);
    cfg.out = get_or<std::string>(doc, "out", ".");
    cfg.threads = get_or<int>(doc, "threads", 0);

    const json dataset = doc.value("dataset", json::object());
    cfg.dataset.kind = get_or<std::string>(dataset, "kind", cfg.dataset.kind);
    validate_choice(cfg.dataset.kind, {"edges", "patches", "synthetic"}, "dataset.kind");
    cfg.dataset.source_dir = get_or<std::string>(dataset, "source_dir", "");
    cfg.dataset.count = get_or<int>(dataset, "count", cfg.dataset.count);
    cfg.dataset.size = get_or<int>(dataset, "size", cfg.dataset.size);
    cfg.dataset.patches_per_image =
        get_or<int>(dataset, "patches_per_image", cfg.dataset.patches_per_image);
    cfg.dataset.patch_size = get_or<int>(dataset, "patch_size", cfg.dataset.patch_size);
    cfg.dataset.padding = get_or<std::string>(dataset, "padding", cfg.dataset.padding);
    validate_choice(cfg.dataset.padding, {"periodic", "reflexive_crop"}, "dataset.padding");
    cfg.dataset.test_count = get_or<int>(dataset, "test_count", 0);
    if (cfg.dataset.count < 1) throw ConfigError("config: dataset.count must be >= 1");
    if (cfg.dataset.size < 2) throw ConfigError("config: dataset.size must be >= 2");

    const json deg = doc.value("degradation", json::object());
    cfg.degradation.task = get_or<std::string>(deg, "task", cfg.degradation.task);
    validate_choice(cfg.degradation.task, {"deblur", "sr"}, "degradation.task");
    cfg.degradation.blur = get_or<std::string>(deg, "blur", cfg.degradation.blur);
    cfg.degradation.noise = get_or<double>(deg, "noise", cfg.degradation.noise);
    if (cfg.degradation.noise < 0.0) throw ConfigError("config: degradation.noise must be >= 0");
    cfg.degradation.decimation = get_or<int>(deg, "decimation", cfg.degradation.decimation);
    if (cfg.degradation.decimation < 2 && cfg.degradation.task == "sr")
        throw ConfigError("config: degradation.decimation must be >= 2 for sr");
    cfg.degradation.kernel_width = get_or<int>(deg, "kernel_width", cfg.degradation.kernel_width);
    cfg.degradation.kernel_sigma =
        get_or<double>(deg, "kernel_sigma", cfg.degradation.kernel_sigma);
    cfg.degradation.motion_angle =
        get_or<double>(deg, "motion_angle", cfg.degradation.motion_angle);

    const json foe_node = doc.value("foe", json::object());
    cfg.foe_cfg.filter_count = get_or<int>(foe_node, "L", cfg.foe_cfg.filter_count);
    cfg.foe_cfg.filter_size = get_or<int>(foe_node, "kappa", cfg.foe_cfg.filter_size);
    cfg.foe_cfg.tau = get_or<double>(foe_node, "tau", cfg.foe_cfg.tau);
    cfg.foe_cfg.outer_iters = get_or<int>(foe_node, "outer_iters", cfg.foe_cfg.outer_iters);
    cfg.foe_cfg.init_alpha = get_or<double>(foe_node, "init_alpha", cfg.foe_cfg.init_alpha);
    cfg.foe_cfg.init_kernel_std =
        get_or<double>(foe_node, "init_kernel_std", cfg.foe_cfg.init_kernel_std);
    const json lower = foe_node.value("lower", json::object());
    cfg.foe_cfg.lower.sigma_armijo = get_or<double>(lower, "sigma", cfg.foe_cfg.lower.sigma_armijo);
    cfg.foe_cfg.lower.beta = get_or<double>(lower, "beta", cfg.foe_cfg.lower.beta);
    cfg.foe_cfg.lower.gamma_min = get_or<double>(lower, "gamma_min", cfg.foe_cfg.lower.gamma_min);
    cfg.foe_cfg.lower.gamma_max = get_or<double>(lower, "gamma_max", cfg.foe_cfg.lower.gamma_max);
    cfg.foe_cfg.lower.gamma0 = get_or<double>(lower, "gamma0", cfg.foe_cfg.lower.gamma0);
    cfg.foe_cfg.lower.tol_inner = get_or<double>(lower, "tol_inner", cfg.foe_cfg.lower.tol_inner);
    cfg.foe_cfg.lower.t_max = get_or<int>(lower, "t_max", cfg.foe_cfg.lower.t_max);
    const json cg = foe_node.value("cg", json::object());
    cfg.foe_cfg.cg.tol = get_or<double>(cg, "tol", cfg.foe_cfg.cg.tol);
    cfg.foe_cfg.cg.max_iter = get_or<int>(cg, "max_iter", cfg.foe_cfg.cg.max_iter);
    cfg.foe_cfg.cg.shift = get_or<double>(cg, "shift", cfg.foe_cfg.cg.shift);

    const json tv = doc.value("tv", json::object());
    cfg.tv_cfg.filter_count = get_or<int>(tv, "L", cfg.tv_cfg.filter_count);
    cfg.tv_cfg.symmetry = get_or<std::string>(tv, "symmetry", cfg.tv_cfg.symmetry);
    validate_choice(cfg.tv_cfg.symmetry, {"none", "transpose", "rot90"}, "tv.symmetry");
    cfg.tv_cfg.step = get_or<double>(tv, "step", cfg.tv_cfg.step);
    cfg.tv_cfg.outer_iters = get_or<int>(tv, "outer_iters", cfg.tv_cfg.outer_iters);
    cfg.tv_cfg.pb_iters = get_or<int>(tv, "K", cfg.tv_cfg.pb_iters);
    cfg.tv_cfg.restore_iters = get_or<int>(tv, "restore_iters", cfg.tv_cfg.restore_iters);
    cfg.tv_cfg.lambda = get_or<double>(tv, "lambda", cfg.tv_cfg.lambda);
    cfg.tv_cfg.theta = get_or<double>(tv, "theta", cfg.tv_cfg.theta);
    cfg.tv_cfg.init_perturb_std =
        get_or<double>(tv, "init_perturb_std", cfg.tv_cfg.init_perturb_std);

    const json restore = doc.value("restore", json::object());
    cfg.restore.model = get_or<std::string>(restore, "model", "");
    cfg.restore.preset = get_or<std::string>(restore, "preset", "");
    cfg.restore.inputs = get_string_list(restore, "inputs");
    cfg.restore.ground_truth = get_string_list(restore, "ground_truth");
    cfg.restore.error_maps = get_or<bool>(restore, "error_maps", false);

    const json crossover = doc.value("crossover", json::object());
    cfg.crossover.models = get_string_list(crossover, "models");
    cfg.crossover.tasks = get_string_list(crossover, "tasks");

    return cfg;
}

// --- commands -----------------------------------------------------------------

int cmd_train_foe(const RunConfig& cfg) {
    ensure_out_dir(cfg.out);
    const std::vector<TrainSample> dataset = build_dataset(cfg, cfg.seed, cfg.dataset.count);
    const DegradationOp op = make_degradation(cfg.degradation);

    foe::TrainConfigFoE tc;
    tc.filter_count = cfg.foe_cfg.filter_count;
    tc.filter_size = cfg.foe_cfg.filter_size;
    tc.tau = cfg.foe_cfg.tau;
    tc.outer_iterations = cfg.foe_cfg.outer_iters;
    tc.lower = cfg.foe_cfg.lower;
    tc.cg = cfg.foe_cfg.cg;
    tc.seed = cfg.seed;
    tc.init_alpha = cfg.foe_cfg.init_alpha;
    tc.init_kernel_std = cfg.foe_cfg.init_kernel_std;
    tc.threads = cfg.threads;

    const foe::TrainResultFoE result = foe::train_foe(dataset, op, tc);

    const std::string model_path = out_path(cfg, "foe_model.blrf");
    metio::write_filter_bank(metio::FilterBank::from_foe(result.params), model_path);

    json meta = config_echo(cfg, "train-foe");
    meta["L"] = tc.filter_count;
    meta["kappa"] = tc.filter_size;
    meta["loss_history"] = result.loss_history;
    metio::write_sidecar(model_path, meta.dump(2));

    write_loss_curve(result.loss_history, out_path(cfg, "loss_curve.csv"));

    double mean = 0.0;
    for (const TrainSample& sample : dataset)
        mean += psnr(foe::restore_foe(sample.observed, op, result.params, cfg.foe_cfg.lower),
                     sample.ground_truth);
    mean /= static_cast<double>(dataset.size());
    metio::write_metrics_csv({{cfg.degradation.task, setting_name(cfg.degradation),
                               tc.filter_count, "none", "train", mean}},
                             out_path(cfg, "metrics.csv"));
    return 0;
}

int cmd_train_tvdisc(const RunConfig& cfg) {
    ensure_out_dir(cfg.out);
    const std::vector<TrainSample> dataset = build_dataset(cfg, cfg.seed, cfg.dataset.count);
    const DegradationOp op = make_degradation(cfg.degradation);

    tvdisc::TrainConfigTV tc;
    tc.filter_count = cfg.tv_cfg.filter_count;
    tc.symmetry = tvdisc::symmetry_from_name(cfg.tv_cfg.symmetry);
    tc.step = cfg.tv_cfg.step;
    tc.outer_iterations = cfg.tv_cfg.outer_iters;
    tc.pb_iterations = cfg.tv_cfg.pb_iters;
    tc.lambda = cfg.tv_cfg.lambda;
    tc.theta = cfg.tv_cfg.theta;
    tc.init_perturb_std = cfg.tv_cfg.init_perturb_std;
    tc.seed = cfg.seed;
    tc.threads = cfg.threads;

    const tvdisc::TrainResultTV result = tvdisc::train_tv_filters(dataset, op, tc);

    const std::string model_path = out_path(cfg, "tv_model.blrf");
    metio::write_filter_bank(metio::FilterBank::from_tv(result.family), model_path);

    json meta = config_echo(cfg, "train-tvdisc");
    meta["L"] = tc.filter_count;
    meta["symmetry"] = cfg.tv_cfg.symmetry;
    meta["loss_history"] = result.loss_history;
    metio::write_sidecar(model_path, meta.dump(2));

    write_loss_curve(result.loss_history, out_path(cfg, "loss_curve.csv"));

    Restorer r{"learned", metio::FilterBank::from_tv(result.family)};
    std::vector<double> per_image(dataset.size(), 0.0);
    parallel_for(
        static_cast<int>(dataset.size()),
        [&](int j) {
            const Image restored = run_restorer(r, cfg, op, dataset[j].observed);
            per_image[j] = psnr(restored, dataset[j].ground_truth);
        },
        cfg.threads);
    double mean = 0.0;
    for (double v : per_image) mean += v;
    mean /= static_cast<double>(per_image.size());
    metio::write_metrics_csv({{cfg.degradation.task, setting_name(cfg.degradation),
                               tc.filter_count, cfg.tv_cfg.symmetry, "train", mean}},
                             out_path(cfg, "metrics.csv"));
    return 0;
}

namespace {

std::vector<Restorer> gather_restorers(const RunConfig& cfg) {
    std::vector<Restorer> out;
    if (!cfg.restore.model.empty()) {
        check_model_task(cfg.restore.model, cfg);
        out.push_back(restorer_from_model(cfg.restore.model));
    }
    if (!cfg.restore.preset.empty()) out.push_back(restorer_from_preset(cfg.restore.preset));
    if (out.empty()) throw ConfigError("restore: neither 'model' nor 'preset' given");
    return out;
}

}  // namespace

int cmd_restore(const RunConfig& cfg) {
    ensure_out_dir(cfg.out);
    const std::vector<Restorer> restorers = gather_restorers(cfg);
    const DegradationOp op = make_degradation(cfg.degradation);

    std::ofstream csv(out_path(cfg, "restore_psnr.csv"), std::ios::trunc);
    csv << "input,restorer,psnr\n";

    if (cfg.restore.inputs.empty()) {
        // Task mode: synthesize the test set for the configured degradation.
        const TaskSpec task{setting_name(cfg.degradation), cfg.degradation};
        for (const Restorer& r : restorers) {
            std::vector<double> per_image;
            const double mean = evaluate_on_task(r, cfg, task, &per_image);
            for (std::size_t j = 0; j < per_image.size(); ++j)
                csv << task.name << "[" << j << "]," << r.name << ','
                    << metio::format_float(per_image[j]) << '\n';
            csv << task.name << "-mean," << r.name << ',' << metio::format_float(mean) << '\n';
        }
        return 0;
    }

    if (!cfg.restore.ground_truth.empty() &&
        cfg.restore.ground_truth.size() != cfg.restore.inputs.size())
        throw ConfigError("restore: ground_truth list must match inputs list");

    for (std::size_t i = 0; i < cfg.restore.inputs.size(); ++i) {
        const std::string& in_path = cfg.restore.inputs[i];
        if (!fs::exists(in_path)) throw ConfigError("input image not found: " + in_path);
        const Image observed = metio::read_pgm(in_path);
        const std::string stem = fs::path(in_path).stem().string();
        for (const Restorer& r : restorers) {
            const Image restored = run_restorer(r, cfg, op, observed);
            metio::write_pgm(restored, out_path(cfg, "restored_" + stem + "_" + r.name + ".pgm"));
            csv << stem << ',' << r.name << ',';
            if (!cfg.restore.ground_truth.empty()) {
                const Image truth = metio::read_pgm(cfg.restore.ground_truth[i]);
                csv << metio::format_float(psnr(restored, truth));
                if (cfg.restore.error_maps)
                    metio::write_error_map(
                        restored, truth,
                        out_path(cfg, "errmap_" + stem + "_" + r.name + ".ppm"));
            }
            csv << '\n';
        }
    }
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    ensure_out_dir(cfg.out);
    const std::vector<Restorer> restorers = gather_restorers(cfg);
    const TaskSpec task{setting_name(cfg.degradation), cfg.degradation};

    std::vector<metio::MetricsRow> rows;
    for (const Restorer& r : restorers) {
        const double mean = evaluate_on_task(r, cfg, task);
        metio::MetricsRow row;
        row.task = cfg.degradation.task;
        row.setting = task.name;
        row.filter_count = r.bank.kind == metio::FilterBankKind::TVDisc
                               ? r.bank.tv_family.count()
                               : r.bank.foe_params.count();
        row.symmetry = r.bank.kind == metio::FilterBankKind::TVDisc
                           ? tvdisc::symmetry_name(r.bank.tv_family.symmetry)
                           : "none";
        row.split = "test";
        row.psnr_mean = mean;
        rows.push_back(std::move(row));
    }
    metio::write_metrics_csv(rows, out_path(cfg, "metrics.csv"));
    return 0;
}

int cmd_crossover(const RunConfig& cfg) {
    ensure_out_dir(cfg.out);
    if (cfg.crossover.models.empty()) throw ConfigError("crossover: no models given");
    if (cfg.crossover.tasks.empty()) throw ConfigError("crossover: no tasks given");

    std::vector<Restorer> columns;
    for (const std::string& path : cfg.crossover.models) {
        Restorer r = restorer_from_model(path);
        if (r.bank.kind != metio::FilterBankKind::TVDisc)
            throw ConfigError("crossover: '" + path + "' is not a TV filter bank");
        columns.push_back(std::move(r));
    }
    for (const char* preset : {"fd", "cd3", "cd4"}) columns.push_back(restorer_from_preset(preset));

    std::vector<TaskSpec> tasks;
    for (const std::string& name : cfg.crossover.tasks) tasks.push_back(task_by_name(name));

    std::ofstream log(out_path(cfg, "crossover_diagnostics.log"), std::ios::trunc);
    std::ofstream csv(out_path(cfg, "crossover.csv"), std::ios::trunc);
    csv << "evaluation_task";
    for (const Restorer& r : columns) csv << ',' << r.name;
    csv << '\n';

    for (const TaskSpec& task : tasks) {
        csv << task.name;
        for (const Restorer& r : columns) {
            std::string cell;
            try {
                cell = metio::format_float(evaluate_on_task(r, cfg, task));
            } catch (const std::exception& e) {
                // Cell failures are recorded and the sweep continues.
                log << task.name << " x " << r.name << ": " << e.what() << '\n';
            }
            csv << ',' << cell;
        }
        csv << '\n';
    }
    return 0;
}

int run_command(const std::string& name, const RunConfig& cfg) {
    try {
        if (name == "train-foe") return cmd_train_foe(cfg);
        if (name == "train-tvdisc") return cmd_train_tvdisc(cfg);
        if (name == "restore") return cmd_restore(cfg);
        if (name == "eval") return cmd_eval(cfg);
        if (name == "crossover") return cmd_crossover(cfg);
        std::cerr << "unknown command: " << name << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace bilevel::cli
