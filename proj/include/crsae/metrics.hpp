#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crsae/matrix.hpp"

namespace crsae {

// sqrt(1 - <h, g>^2 / (||h||^2 ||g||^2)): 0 for collinear filters of either
// sign, 1 for orthogonal ones. Throws on zero vectors.
double recovery_err(std::span<const double> h, std::span<const double> h_hat);

struct FilterMatch {
    std::size_t true_index = 0;
    std::size_t learned_index = 0;
    double err = 0.0;      // at the best circular shift in [-max_shift, max_shift]
    double raw_err = 0.0;  // at shift 0
    bool sign_flip = false;
    int shift = 0;
};

struct RecoveryReport {
    std::vector<FilterMatch> filters;  // one per true filter, in true order
    double mean_err = 0.0;
    double max_err = 0.0;
    double raw_mean_err = 0.0;
    double raw_max_err = 0.0;
};

inline constexpr std::size_t kMaxExhaustiveFilters = 6;

// Bijective assignment of learned to true filters minimizing the mean
// (shift-corrected) error. Exhaustive over permutations for C <= 6; larger
// banks need allow_greedy, which assigns the globally closest pairs first.
RecoveryReport match_filters(const FilterBank& truth, const FilterBank& learned,
                             int max_shift = 0, bool allow_greedy = false);

struct SweepEntry {
    double snr_db = 0.0;
    std::uint64_t seed = 0;
    RecoveryReport report;
};

struct SweepAggregate {
    double snr_db = 0.0;
    int filter = -1;  // true filter index, or -1 for all filters pooled
    double mean_err = 0.0;
    double std_err = 0.0;  // sample standard deviation, 0 for a single value
    std::size_t count = 0;
};

// Groups by SNR (ascending) and reports raw errors per filter and pooled.
std::vector<SweepAggregate> sweep_aggregate(std::span<const SweepEntry> entries);

}  // namespace crsae
