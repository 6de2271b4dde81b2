#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crsae/encoder.hpp"
#include "crsae/simulator.hpp"
#include "crsae/trainer.hpp"

namespace crsae::cli {

struct SplitSizes {
    // Unset sizes scale the 630/70/20 split to the number of windows.
    std::optional<std::size_t> train, val, test;
};

enum class Arch { crsae, lcsc3 };
enum class InitKind { perturbed, truth, random };

struct FistaOptions {
    std::size_t T = 200;
    bool momentum = true;
    std::optional<double> L;  // estimated from the initial bank when unset
};

struct TrainOptions {
    TrainConfig train;
    Arch arch = Arch::crsae;
    InitKind init = InitKind::perturbed;
    std::pair<double, double> init_err_range{0.4, 0.5};
    bool lr_range_test = false;
    LcscOptions lcsc;
};

struct SweepOptions {
    std::vector<double> snr_db{4, 8, 12, 16, 20};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::size_t max_shift = 0;
};

struct GradcheckOptions {
    // (C, K, W, T)
    std::vector<std::array<std::size_t, 4>> shapes{{1, 3, 12, 1}, {1, 3, 12, 3}, {2, 8, 64, 5}, {3, 8, 64, 10}};
    double step = 1e-6;
    double tolerance = 1e-5;
    double kink_margin = 1e-4;
};

struct ExperimentConfig {
    SimConfig simulation;
    SplitSizes split;
    FistaOptions fista;
    TrainOptions training;
    SweepOptions sweep;
    GradcheckOptions gradcheck;
};

// Unknown keys anywhere in the document are rejected.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical JSON of the fully defaulted config; parse_config(to_json(c))
// reproduces c.
std::string to_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

std::string arch_name(Arch a);
Arch parse_arch(const std::string& s);
std::string init_name(InitKind k);
InitKind parse_init(const std::string& s);

struct Split {
    std::size_t train = 0, val = 0, test = 0;
};
Split resolve_split(const SplitSizes& sizes, std::size_t windows);

}  // namespace crsae::cli
