#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bilevel/data.hpp"
#include "bilevel/foe.hpp"
#include "bilevel/tvdisc.hpp"

namespace bilevel::cli {

/// Configuration, schema, or input-resolution problem; maps to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetConfig {
    std::string kind = "edges";  // edges | patches | synthetic
    std::string source_dir;
    int count = 8;
    int size = 64;
    int patches_per_image = 3;
    int patch_size = 64;
    std::string padding = "periodic";  // periodic | reflexive_crop
    int test_count = 0;                // 0: same as count
};

struct DegradationConfig {
    std::string task = "deblur";  // deblur | sr
    std::string blur = "gaussianA";
    double noise = 0.0;
    int decimation = 2;
    int kernel_width = 5;
    double kernel_sigma = -1.0;  // <= 0: per-name default
    double motion_angle = 0.0;
};

struct FoeCommandConfig {
    int filter_count = 4;
    int filter_size = 5;
    double tau = 1e-3;
    int outer_iters = 100;
    double init_alpha = 0.1;
    double init_kernel_std = 0.1;
    foe::LowerSolveConfig lower;
    foe::CgConfig cg;
};

struct TvCommandConfig {
    int filter_count = 2;
    std::string symmetry = "none";
    double step = 100.0;
    int outer_iters = 500;
    int pb_iters = 2000;
    int restore_iters = 2000;
    double lambda = 1.0;
    double theta = 1.0;
    double init_perturb_std = 1e-3;
};

struct RestoreConfig {
    std::string model;
    std::string preset;
    std::vector<std::string> inputs;
    std::vector<std::string> ground_truth;
    bool error_maps = false;
};

struct CrossoverConfig {
    std::vector<std::string> models;
    std::vector<std::string> tasks;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out = ".";
    int threads = 0;
    DatasetConfig dataset;
    DegradationConfig degradation;
    FoeCommandConfig foe_cfg;
    TvCommandConfig tv_cfg;
    RestoreConfig restore;
    CrossoverConfig crossover;
    std::string document;  // merged, validated JSON; echoed into sidecars
};

/// Parses and validates a JSON config document, with a second JSON document
/// of overrides deep-merged on top (override values win). Unknown keys are
/// rejected.
RunConfig parse_config(const std::string& config_json, const std::string& overrides_json = "{}");

/// Degradation operator described by the config.
DegradationOp make_degradation(const DegradationConfig& cfg);

/// Blur kernel by setting name (gaussianA/B/C, gauss5, disk5, motion5, delta).
Kernel blur_by_name(const std::string& name, int width, double sigma, double motion_angle);

int cmd_train_foe(const RunConfig& cfg);
int cmd_train_tvdisc(const RunConfig& cfg);
int cmd_restore(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);
int cmd_crossover(const RunConfig& cfg);

/// Dispatches a subcommand by name; returns the process exit code and maps
/// ConfigError to 2 and other failures to 1, with diagnostics on stderr.
int run_command(const std::string& name, const RunConfig& cfg);

}  // namespace bilevel::cli
