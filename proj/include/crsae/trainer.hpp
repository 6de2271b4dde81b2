#pragma once

// Mini-batch projected-ADAM training of the filter bank through the unrolled
// encoder, plus the hyperparameter heuristics used to configure it and the
// untied LCSC baseline.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "crsae/encoder.hpp"
#include "crsae/matrix.hpp"

namespace crsae {

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool operator==(const AdamParams&) const = default;
};

struct AdamState {
    Matrix first_moment;
    Matrix second_moment;
    std::size_t step_count = 0;

    static AdamState zeros(std::size_t rows, std::size_t cols) {
        return {Matrix(rows, cols), Matrix(rows, cols), 0};
    }
};

struct AdamUpdate {
    AdamState state;
    Matrix delta;  // to be added to the parameters
};

// Bias-corrected ADAM step.
AdamUpdate adam_step(const AdamState& state, const Matrix& grad, double lr,
                     const AdamParams& params = {});

// h_c <- h_c / max(1, ||h_c||). Rows inside the ball are returned unchanged.
FilterBank project_unit_ball(const FilterBank& filters);

enum class NoiseConvention {
    per_sample,  // ||n||_2 / N
    rms,         // ||n||_2 / sqrt(N)
};

double noise_std_estimate(std::span<const double> residual,
                          NoiseConvention convention = NoiseConvention::per_sample);

// scale * sigma * sqrt(2 ln(C * N_e))
double lambda_heuristic(double sigma_n, std::size_t C, std::size_t N_e, double scale = 1.0);

struct LambdaPolicy {
    enum class Kind { fixed, heuristic };
    Kind kind = Kind::heuristic;
    double value = 1.0;  // lambda itself (fixed) or the scale factor (heuristic)
    NoiseConvention noise = NoiseConvention::per_sample;
    bool operator==(const LambdaPolicy&) const = default;
};

// Resolves a policy against training data. The heuristic averages the noise
// estimate of n_j = y_j - H_0 x_j over the windows, which needs the
// ground-truth codes x_j.
double resolve_lambda(const LambdaPolicy& policy, std::span<const SignalWindow> windows,
                      std::span<const CodeMatrix> codes, const FilterBank& init);

struct TrainConfig {
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    std::size_t max_epochs = 60;
    std::size_t patience = 5;  // epochs without validation improvement before stopping
    LambdaPolicy lambda_policy;
    std::uint64_t seed = 0;
    AdamParams adam;
    double lambda_decay = 1.0;  // per-epoch multiplier on lambda; 1 keeps it fixed
    bool recompute_lipschitz = false;
    unsigned threads = 1;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 0 is the initial dictionary
    double train_loss = 0.0;
    double val_loss = 0.0;
    std::vector<double> err;  // per true filter, raw, when ground truth is known
    double lambda = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    FilterBank filters;                  // decoder bank at best_epoch (the dictionary for CRsAE)
    std::optional<FilterBank> encoder;   // LCSC only: encoder bank at best_epoch
    FistaConfig fista;                   // lambda and L in effect at best_epoch
    double best_val_loss = 0.0;
};

// Mean 0.5 * ||y - H_dec encode(y; H_enc)||^2 over the windows, forward only.
double evaluate_loss(std::span<const SignalWindow> windows, const FilterBank& encoder,
                     const FilterBank& decoder, const FistaConfig& cfg, unsigned threads = 1);
inline double evaluate_loss(std::span<const SignalWindow> windows, const FilterBank& filters,
                            const FistaConfig& cfg, unsigned threads = 1) {
    return evaluate_loss(windows, filters, filters, cfg, threads);
}

// Seeded Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng);

// CRsAE training. `fista` carries lambda, L and T; lambda stays fixed unless
// lambda_decay != 1. Returns the filters of the best validation epoch.
TrainReport train(std::span<const SignalWindow> train_windows,
                  std::span<const SignalWindow> val_windows, const FilterBank& init,
                  const FistaConfig& fista, const TrainConfig& cfg,
                  const std::optional<FilterBank>& ground_truth = std::nullopt);

struct LrRangeResult {
    std::vector<double> learning_rates;
    std::vector<double> drops;  // val loss after 0 epochs minus after 1; -inf on divergence
    double recommended = 0.0;
};

// Steepest drop wins; ties go to the smaller learning rate. Non-finite drops
// never win; if nothing is finite the smallest rate is returned.
double select_learning_rate(std::span<const double> learning_rates, std::span<const double> drops);

std::vector<double> default_lr_grid();  // 1e-5 .. 1e-1, half-decade steps

LrRangeResult lr_range_test(std::span<const SignalWindow> train_windows,
                            std::span<const SignalWindow> val_windows, const FilterBank& init,
                            const FistaConfig& fista, const TrainConfig& cfg,
                            std::span<const double> grid);

// Same test for any trainer: `run` gets cfg with one epoch at each grid rate.
LrRangeResult lr_range_test(const std::function<TrainReport(const TrainConfig&)>& run,
                            const TrainConfig& cfg, std::span<const double> grid);

// Rotates each true filter away from itself by a random orthogonal direction
// so that its recovery error lands inside [lo, hi]. Rows come back unit-norm.
FilterBank init_perturbed_dictionary(const FilterBank& truth, std::pair<double, double> err_range,
                                     std::mt19937_64& rng);

struct LcscOptions {
    std::size_t iterations = 3;  // ISTA iterations in the encoder
    bool trainable_lambda = true;
    // Shares one bank between encoder and decoder; with trainable_lambda off
    // this is CRsAE without momentum.
    bool tied = false;
};

// LCSC(k) baseline: separate encoder and decoder banks (the decoder is not
// norm-constrained), plain ISTA in the encoder, optionally trainable lambda.
// `fista.T` and `fista.momentum` are overridden by `options`.
TrainReport train_lcsc_baseline(std::span<const SignalWindow> train_windows,
                                std::span<const SignalWindow> val_windows, const FilterBank& init,
                                const FistaConfig& fista, const TrainConfig& cfg,
                                const LcscOptions& options = {},
                                const std::optional<FilterBank>& ground_truth = std::nullopt);

}  // namespace crsae
