#include "crsae/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "crsae/conv_ops.hpp"

namespace crsae {

std::size_t SimConfig::samples() const {
    return static_cast<std::size_t>(std::floor(T0 * fs));
}

void SimConfig::validate() const {
    if (C < 1) throw std::invalid_argument("simulation needs C >= 1");
    if (K < 4) throw std::invalid_argument("simulation needs K >= 4");
    if (!(fs > 0.0)) throw std::invalid_argument("sampling rate must be > 0");
    if (!(T0 > 0.0)) throw std::invalid_argument("recording length must be > 0");
    if (rate < 0.0) throw std::invalid_argument("spike rate must be >= 0");
    if (rate * (static_cast<double>(K) / fs) >= 1.0) {
        throw std::invalid_argument("rate * K / fs must be < 1 for the refractory gap");
    }
    if (amplitudes.size() != C) {
        throw std::invalid_argument("need one amplitude (mean, stddev) pair per neuron");
    }
    for (const auto& a : amplitudes) {
        if (a.stddev < 0.0) throw std::invalid_argument("amplitude stddev must be >= 0");
    }
    if (noise_sigma && *noise_sigma < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
    if (window <= K) throw std::invalid_argument("window must be longer than the filters");
    if (electrodes < 1) throw std::invalid_argument("need at least one electrode");
    if (samples() < window) throw std::invalid_argument("recording is shorter than one window");
    if (correlation_range.first > correlation_range.second) {
        throw std::invalid_argument("correlation range is empty");
    }
}

std::size_t SpikeEventSet::total() const {
    std::size_t n = 0;
    for (const auto& v : neurons) n += v.size();
    return n;
}

namespace {

std::vector<double> biphasic_template(std::size_t K, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double k = static_cast<double>(K);
    const double trough = (0.15 + 0.3 * u(rng)) * k;
    const double trough_w = (0.03 + 0.06 * u(rng)) * k;
    const double peak = trough + (0.08 + 0.25 * u(rng)) * k;
    const double peak_w = (0.05 + 0.15 * u(rng)) * k;
    const double peak_ratio = 0.2 + 0.7 * u(rng);
    const double pre = trough - (0.05 + 0.1 * u(rng)) * k;
    const double pre_ratio = 0.25 * u(rng);

    auto lobe = [](double t, double mu, double w) {
        const double d = (t - mu) / w;
        return std::exp(-0.5 * d * d);
    };
    std::vector<double> h(K);
    double energy = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        const double t = static_cast<double>(i);
        h[i] = -lobe(t, trough, trough_w) + peak_ratio * lobe(t, peak, peak_w) +
               pre_ratio * lobe(t, pre, trough_w);
        energy += h[i] * h[i];
    }
    const double norm = std::sqrt(energy);
    for (double& v : h) v /= norm;
    return h;
}

}  // namespace

FilterBank make_filter_bank(std::size_t C, std::size_t K,
                            std::pair<double, double> correlation_range, std::mt19937_64& rng,
                            std::size_t max_attempts) {
    if (C < 1 || K < 4) throw std::invalid_argument("make_filter_bank needs C >= 1 and K >= 4");
    const auto [lo, hi] = correlation_range;
    if (lo > hi) throw std::invalid_argument("make_filter_bank: empty correlation range");

    double best_violation = std::numeric_limits<double>::infinity();
    double best_lo = 0.0;
    double best_hi = 0.0;
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        Matrix m(C, K);
        for (std::size_t c = 0; c < C; ++c) {
            const auto h = biphasic_template(K, rng);
            std::copy(h.begin(), h.end(), m.row(c).begin());
        }
        double min_corr = std::numeric_limits<double>::infinity();
        double max_corr = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < C; ++a) {
            for (std::size_t b = a + 1; b < C; ++b) {
                const double r = dot(m.row(a), m.row(b));
                min_corr = std::min(min_corr, r);
                max_corr = std::max(max_corr, r);
            }
        }
        if (C == 1) return FilterBank(std::move(m));
        const double violation = std::max({0.0, lo - min_corr, max_corr - hi});
        if (violation == 0.0) return FilterBank(std::move(m));
        if (violation < best_violation) {
            best_violation = violation;
            best_lo = min_corr;
            best_hi = max_corr;
        }
    }
    std::ostringstream msg;
    msg << "make_filter_bank: no bank with pairwise correlations in [" << lo << ", " << hi
        << "] after " << max_attempts << " attempts; tightest achieved [" << best_lo << ", "
        << best_hi << "]";
    throw std::runtime_error(msg.str());
}

SpikeEventSet generate_events(const SimConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    SpikeEventSet set;
    set.horizon = cfg.T0;
    set.neurons.resize(cfg.C);
    if (cfg.rate == 0.0) return set;

    const double dead = static_cast<double>(cfg.K) / cfg.fs;
    const std::size_t limit = cfg.windows_per_electrode() * cfg.window;
    std::exponential_distribution<double> gap(cfg.rate);
    for (std::size_t c = 0; c < cfg.C; ++c) {
        std::normal_distribution<double> amp(cfg.amplitudes[c].mean, cfg.amplitudes[c].stddev);
        auto& out = set.neurons[c];
        double t = 0.0;
        double last = -std::numeric_limits<double>::infinity();
        while (true) {
            t += gap(rng);
            if (t >= cfg.T0) break;
            if (t - last < dead) continue;  // refractory thinning
            const auto n = static_cast<std::size_t>(std::floor(t * cfg.fs));
            if (n >= limit || (n % cfg.window) + cfg.K > cfg.window) continue;
            out.push_back({t, amp(rng)});
            last = t;
        }
    }
    return set;
}

Synthesis discretize_and_synthesize(const SpikeEventSet& events, const FilterBank& filters,
                                    const SimConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    if (filters.count() != cfg.C || filters.length() != cfg.K) {
        throw std::invalid_argument("filter bank shape does not match the simulation config");
    }
    if (events.neurons.size() != cfg.C) {
        throw std::invalid_argument("event set has the wrong number of neurons");
    }
    const std::size_t N = cfg.samples();
    const std::size_t W = cfg.window;
    const std::size_t nwin = cfg.windows_per_electrode();
    const std::size_t ne = code_length(W, cfg.K);

    Synthesis out;
    out.codes.assign(nwin, CodeMatrix(cfg.C, ne));
    for (std::size_t c = 0; c < cfg.C; ++c) {
        for (const auto& e : events.neurons[c]) {
            if (!(e.tau >= 0.0) || e.tau >= events.horizon) {
                throw std::invalid_argument("event time outside the recording horizon");
            }
            const auto n = static_cast<std::size_t>(std::floor(e.tau * cfg.fs));
            const std::size_t j = n / W;
            const std::size_t offset = n % W;
            if (j >= nwin || offset >= ne) {
                throw std::invalid_argument("event support crosses a window boundary");
            }
            out.codes[j](c, offset) += e.amplitude;
        }
    }

    out.clean.assign(N, 0.0);
    for (std::size_t j = 0; j < nwin; ++j) {
        apply_dictionary(filters, out.codes[j], std::span(out.clean).subspan(j * W, W));
    }

    if (cfg.noise_sigma) {
        out.noise_sigma = *cfg.noise_sigma;
    } else {
        const double power = squared_norm(out.clean) / static_cast<double>(N);
        if (power == 0.0) {
            throw std::invalid_argument(
                "noise given as SNR but the clean signal is zero; set noise_sigma instead");
        }
        out.noise_sigma = std::sqrt(power / std::pow(10.0, cfg.snr_db / 10.0));
    }

    out.noisy = out.clean;
    if (out.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, out.noise_sigma);
        for (double& v : out.noisy) v += noise(rng);
    }
    return out;
}

std::vector<SignalWindow> window_signal(std::span<const double> signal, std::size_t window,
                                        std::size_t first_index) {
    if (window < 1) throw std::invalid_argument("window length must be >= 1");
    std::vector<SignalWindow> out;
    const std::size_t count = signal.size() / window;
    out.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        const auto part = signal.subspan(j * window, window);
        out.push_back({std::vector<double>(part.begin(), part.end()), first_index + j});
    }
    return out;
}

double compute_snr(std::span<const double> clean, std::span<const double> noise) {
    const double pn = squared_norm(noise);
    if (pn == 0.0) throw std::invalid_argument("compute_snr: noise is identically zero");
    return 10.0 * std::log10(squared_norm(clean) / pn);
}

SimulatedDataset simulate_dataset(const SimConfig& cfg, const FilterBank& filters) {
    cfg.validate();
    SimulatedDataset ds{filters, {}, {}, {}, {}, {}};
    const std::size_t nwin = cfg.windows_per_electrode();
    for (std::size_t e = 0; e < cfg.electrodes; ++e) {
        std::seed_seq seq{cfg.seed, std::uint64_t{1}, static_cast<std::uint64_t>(e)};
        std::mt19937_64 rng(seq);
        const auto events = generate_events(cfg, rng);
        auto syn = discretize_and_synthesize(events, filters, cfg, rng);

        std::vector<double> noise(syn.noisy.size());
        for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = syn.noisy[i] - syn.clean[i];
        const bool has_noise = squared_norm(noise) > 0.0;
        ds.achieved_snr_db.push_back(has_noise ? compute_snr(syn.clean, noise)
                                               : std::numeric_limits<double>::infinity());
        ds.noise_sigma.push_back(syn.noise_sigma);
        ds.events_per_electrode.push_back(events.total());

        auto windows = window_signal(syn.noisy, cfg.window, e * nwin);
        for (std::size_t j = 0; j < windows.size(); ++j) {
            ds.windows.push_back(std::move(windows[j]));
            ds.codes.push_back(std::move(syn.codes[j]));
        }
    }
    return ds;
}

SimulatedDataset simulate_dataset(const SimConfig& cfg) {
    cfg.validate();
    std::seed_seq seq{cfg.seed, std::uint64_t{0}};
    std::mt19937_64 rng(seq);
    return simulate_dataset(cfg, make_filter_bank(cfg.C, cfg.K, cfg.correlation_range, rng));
}

}  // namespace crsae
