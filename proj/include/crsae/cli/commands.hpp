#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "crsae/cli/config.hpp"
#include "crsae/cli/dataset.hpp"
#include "crsae/metrics.hpp"
#include "crsae/trainer.hpp"

namespace crsae::cli {

// --jobs wins, then CRSAE_JOBS, then 1.
unsigned resolve_jobs(std::optional<unsigned> flag);

// Builds the starting bank named by opts.init. Perturbed and random starts
// draw from seed_seq{train.seed, 3}.
FilterBank initial_filters(const FilterBank& truth, const TrainOptions& opts);

struct RunResult {
    FilterBank init;
    TrainReport report;
    double lambda = 0.0;  // starting lambda
    double L = 0.0;
    double learning_rate = 0.0;
    std::optional<LrRangeResult> lr_range;
};

// Whole training pipeline on an in-memory dataset: init, lambda, L, optional
// lr range test, then train() or the LCSC baseline.
RunResult run_training(const Dataset& ds, const ExperimentConfig& cfg, unsigned threads);

std::string history_csv(const TrainReport& report, std::size_t C);

int cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);

int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& data,
              const std::filesystem::path& out, unsigned jobs, std::ostream& log);

// max_new_cells stops after that many freshly computed cells, leaving the
// sweep resumable (used to test interruption).
int cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out, unsigned jobs,
              std::optional<std::size_t> max_new_cells, std::ostream& log);

struct GradcheckRow {
    std::array<std::size_t, 4> shape{};
    double max_rel_err = 0.0;
    bool pass = false;
};

// corrupt scales the hand gradient by 1 + 1e-3, a negative control.
std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& opts, std::uint64_t seed,
                                        bool corrupt = false);
int cmd_gradcheck(const GradcheckOptions& opts, std::uint64_t seed, bool corrupt, std::ostream& log);

int cmd_eval(const std::filesystem::path& learned, const std::filesystem::path& truth,
             const std::filesystem::path& out, int max_shift, std::ostream& log);

}  // namespace crsae::cli
