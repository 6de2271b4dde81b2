#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "crsae/cli/config.hpp"
#include "crsae/matrix.hpp"

namespace crsae::cli {

struct SplitData {
    std::vector<SignalWindow> windows;
    std::vector<CodeMatrix> codes;  // parallel to windows
};

struct Dataset {
    FilterBank truth;
    std::size_t window_length = 0;
    SplitData train, val, test;
    std::vector<double> achieved_snr_db;  // per electrode
    std::vector<double> noise_sigma;
    std::vector<std::size_t> events_per_electrode;
};

// Simulates cfg.simulation and splits the windows with a seeded permutation.
Dataset build_dataset(const ExperimentConfig& cfg);

// Directory layout:
//   manifest.json         config, config hash, seed, achieved SNR, split indices
//   filters_true.tensor   C x K
//   windows_<split>.tensor  n x W per split
//   codes.csv             window,channel,shift,amplitude (nonzeros only)
void save_dataset(const std::filesystem::path& dir, const Dataset& ds, const ExperimentConfig& cfg);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace crsae::cli
