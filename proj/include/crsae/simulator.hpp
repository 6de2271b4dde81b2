#pragma once

// Synthetic extracellular recordings: Poisson spike trains with a refractory
// gap, Gaussian amplitudes, action-potential-shaped filters and white noise
// at a configured SNR, cut into non-overlapping windows.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "crsae/matrix.hpp"

namespace crsae {

struct AmplitudeParams {
    double mean = 0.0;    // mV
    double stddev = 0.0;  // mV
    bool operator==(const AmplitudeParams&) const = default;
};

struct SimConfig {
    std::size_t C = 3;
    std::size_t K = 45;          // 1.5 ms at 30 kHz
    double fs = 30000.0;         // Hz
    double T0 = 18.0;            // s
    double rate = 30.0;          // events/s per neuron
    std::vector<AmplitudeParams> amplitudes{{362, 20}, {388, 25}, {360, 30}};
    // Noise is given either as a target SNR in dB (sigma derived from the
    // clean power of each electrode) or as an explicit sigma in mV.
    double snr_db = 16.0;
    std::optional<double> noise_sigma;
    std::size_t window = 3000;   // samples (0.1 s)
    std::size_t electrodes = 4;
    std::uint64_t seed = 1;
    std::pair<double, double> correlation_range{-0.087, 0.455};

    std::size_t samples() const;  // floor(T0 * fs)
    std::size_t windows_per_electrode() const { return samples() / window; }
    void validate() const;
    bool operator==(const SimConfig&) const = default;
};

struct SpikeEvent {
    double tau = 0.0;        // s
    double amplitude = 0.0;  // mV
};

struct SpikeEventSet {
    std::vector<std::vector<SpikeEvent>> neurons;
    double horizon = 0.0;

    std::size_t total() const;
};

// Unit-norm biphasic templates whose pairwise correlations all fall inside
// `correlation_range`, found by rejection sampling. Throws with the tightest
// range achieved when the attempt budget runs out.
FilterBank make_filter_bank(std::size_t C, std::size_t K,
                            std::pair<double, double> correlation_range, std::mt19937_64& rng,
                            std::size_t max_attempts = 200000);

// Per neuron: a homogeneous Poisson process at cfg.rate, thinned so that
// consecutive kept events are at least K / fs apart. Events whose filter
// support would cross a window boundary or leave the last full window are
// discarded, so every window obeys y_j = H x_j + v_j exactly.
SpikeEventSet generate_events(const SimConfig& cfg, std::mt19937_64& rng);

struct Synthesis {
    std::vector<double> clean;      // N samples
    std::vector<double> noisy;      // clean + noise
    std::vector<CodeMatrix> codes;  // ground truth per window, C x (W - K + 1)
    double noise_sigma = 0.0;
};

// Samples events onto the grid (n = floor(tau * fs)), synthesizes the clean
// signal window by window and adds i.i.d. Gaussian noise.
Synthesis discretize_and_synthesize(const SpikeEventSet& events, const FilterBank& filters,
                                    const SimConfig& cfg, std::mt19937_64& rng);

// floor(N / W) non-overlapping windows; the trailing remainder is dropped.
std::vector<SignalWindow> window_signal(std::span<const double> signal, std::size_t window,
                                        std::size_t first_index = 0);

// 10 log10(||clean||^2 / ||noise||^2)
double compute_snr(std::span<const double> clean, std::span<const double> noise);

// All electrodes of one configuration, sharing one filter bank.
struct SimulatedDataset {
    FilterBank filters;
    std::vector<SignalWindow> windows;  // electrode-major, index = position
    std::vector<CodeMatrix> codes;      // parallel to windows
    std::vector<double> achieved_snr_db;
    std::vector<double> noise_sigma;
    std::vector<std::size_t> events_per_electrode;
};

SimulatedDataset simulate_dataset(const SimConfig& cfg);

// Same as simulate_dataset but with a caller-provided filter bank.
SimulatedDataset simulate_dataset(const SimConfig& cfg, const FilterBank& filters);

}  // namespace crsae
