#include "doctest.h"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "crsae/conv_ops.hpp"
#include "crsae/encoder.hpp"
#include "crsae/simulator.hpp"
#include "crsae/trainer.hpp"

using namespace crsae;

namespace {

SimConfig small_config() {
    SimConfig cfg;
    cfg.T0 = 1.0;
    cfg.window = 1000;
    cfg.electrodes = 1;
    return cfg;
}

double min_gap(const std::vector<SpikeEvent>& events) {
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < events.size(); ++i) {
        gap = std::min(gap, events[i].tau - events[i - 1].tau);
    }
    return gap;
}

}  // namespace

TEST_CASE("SimConfig defaults and validation") {
    SimConfig cfg;
    CHECK(cfg.samples() == 540000);
    CHECK(cfg.windows_per_electrode() == 180);
    CHECK(cfg.windows_per_electrode() * cfg.electrodes == 720);
    CHECK_NOTHROW(cfg.validate());

    auto bad = cfg;
    bad.rate = 700.0;  // 700 * 45 / 30000 > 1
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.window = 45;
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.amplitudes.pop_back();
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.fs = 0.0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("make_filter_bank") {
    std::mt19937_64 rng(3);
    SUBCASE("single filter is unit norm") {
        const auto h = make_filter_bank(1, 45, {-0.087, 0.455}, rng);
        CHECK(h.count() == 1);
        CHECK(h.norm(0) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("pairwise correlations land in range") {
        for (int trial = 0; trial < 5; ++trial) {
            const auto h = make_filter_bank(3, 45, {-0.087, 0.455}, rng);
            for (std::size_t a = 0; a < 3; ++a) {
                CHECK(h.norm(a) == doctest::Approx(1.0).epsilon(1e-12));
                for (std::size_t b = a + 1; b < 3; ++b) {
                    const double r = dot(h.filter(a), h.filter(b));
                    CHECK(r >= -0.087);
                    CHECK(r <= 0.455);
                }
            }
        }
    }
    SUBCASE("same seed same bank") {
        std::mt19937_64 a(11), b(11);
        CHECK(make_filter_bank(3, 45, {-0.087, 0.455}, a) ==
              make_filter_bank(3, 45, {-0.087, 0.455}, b));
    }
    SUBCASE("infeasible range reports what it got") {
        std::string msg;
        try {
            make_filter_bank(3, 45, {0.99, 1.0}, rng, 50);
        } catch (const std::runtime_error& e) {
            msg = e.what();
        }
        CHECK(msg.find("tightest") != std::string::npos);
    }
}

TEST_CASE("generate_events") {
    SUBCASE("rate 0 gives nothing") {
        auto cfg = small_config();
        cfg.rate = 0.0;
        std::mt19937_64 rng(1);
        const auto ev = generate_events(cfg, rng);
        CHECK(ev.neurons.size() == 3);
        CHECK(ev.total() == 0);
    }
    SUBCASE("refractory gap and horizon over many seeds") {
        SimConfig cfg;
        cfg.T0 = 2.0;
        cfg.window = 3000;
        const double dead = static_cast<double>(cfg.K) / cfg.fs;
        std::size_t violations = 0;
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            std::mt19937_64 rng(seed);
            const auto ev = generate_events(cfg, rng);
            for (const auto& n : ev.neurons) {
                if (min_gap(n) < dead) ++violations;
                for (const auto& e : n) {
                    CHECK(e.tau >= 0.0);
                    CHECK(e.tau < cfg.T0);
                    const auto s = static_cast<std::size_t>(std::floor(e.tau * cfg.fs));
                    CHECK(s % cfg.window + cfg.K <= cfg.window);
                }
            }
        }
        CHECK(violations == 0);
    }
    SUBCASE("counts match a dead-time Poisson estimate") {
        // Non-paralyzable dead time d gives rate r / (1 + r d); boundary
        // rejection removes a further (K - 1) / W of positions.
        SimConfig cfg;
        const double r = cfg.rate;
        const double d = static_cast<double>(cfg.K) / cfg.fs;
        const double expected = r * cfg.T0 / (1.0 + r * d) *
                                (1.0 - static_cast<double>(cfg.K - 1) / cfg.window);
        double mean = 0.0;
        const int seeds = 20;
        for (int seed = 0; seed < seeds; ++seed) {
            std::mt19937_64 rng(seed);
            const auto ev = generate_events(cfg, rng);
            for (const auto& n : ev.neurons) {
                CHECK(std::abs(static_cast<double>(n.size()) - expected) <= 4.0 * std::sqrt(540.0));
                mean += static_cast<double>(n.size());
            }
        }
        mean /= 3.0 * seeds;
        // std error of the mean is about sqrt(510 / 60) ~ 3
        CHECK(std::abs(mean - expected) < 12.0);
    }
    SUBCASE("amplitude moments") {
        SimConfig cfg;
        cfg.T0 = 60.0;
        std::mt19937_64 rng(5);
        const auto ev = generate_events(cfg, rng);
        for (std::size_t c = 0; c < 3; ++c) {
            double m = 0.0, v = 0.0;
            for (const auto& e : ev.neurons[c]) m += e.amplitude;
            m /= static_cast<double>(ev.neurons[c].size());
            for (const auto& e : ev.neurons[c]) v += (e.amplitude - m) * (e.amplitude - m);
            v /= static_cast<double>(ev.neurons[c].size() - 1);
            CHECK(m == doctest::Approx(cfg.amplitudes[c].mean).epsilon(0.01));
            CHECK(std::sqrt(v) == doctest::Approx(cfg.amplitudes[c].stddev).epsilon(0.1));
        }
    }
}

TEST_CASE("discretize_and_synthesize") {
    auto cfg = small_config();
    cfg.noise_sigma = 0.0;
    std::mt19937_64 rng(2);
    const auto h = make_filter_bank(3, 45, cfg.correlation_range, rng);

    SUBCASE("single impulse") {
        SpikeEventSet ev;
        ev.horizon = cfg.T0;
        ev.neurons.resize(3);
        ev.neurons[0].push_back({100.0 / cfg.fs + 1e-9, 1.0});
        const auto syn = discretize_and_synthesize(ev, h, cfg, rng);
        REQUIRE(syn.clean.size() == 30000);
        for (std::size_t i = 0; i < syn.clean.size(); ++i) {
            const double want = (i >= 100 && i < 145) ? h.filter(0)[i - 100] : 0.0;
            CHECK(syn.clean[i] == want);
        }
        CHECK(syn.noisy == syn.clean);
        CHECK(syn.codes[0](0, 100) == 1.0);
        CHECK(syn.codes[0].count_nonzero() == 1);
    }
    SUBCASE("codes reproduce each window") {
        cfg.noise_sigma = 5.0;
        const auto ev = generate_events(cfg, rng);
        const auto syn = discretize_and_synthesize(ev, h, cfg, rng);
        const auto windows = window_signal(syn.noisy, cfg.window);
        REQUIRE(windows.size() == syn.codes.size());
        for (std::size_t j = 0; j < windows.size(); ++j) {
            const auto hx = apply_dictionary(h, syn.codes[j]);
            for (std::size_t i = 0; i < cfg.window; ++i) {
                const std::size_t n = j * cfg.window + i;
                const double v = syn.noisy[n] - syn.clean[n];
                CHECK(syn.clean[n] == hx[i]);
                CHECK(std::abs(windows[j].samples[i] - hx[i] - v) <= 1e-12 * (1.0 + std::abs(hx[i])));
            }
        }
    }
    SUBCASE("event straddling a window edge is rejected") {
        SpikeEventSet ev;
        ev.horizon = cfg.T0;
        ev.neurons.resize(3);
        ev.neurons[1].push_back({990.0 / cfg.fs, 1.0});
        CHECK_THROWS(discretize_and_synthesize(ev, h, cfg, rng));
    }
    SUBCASE("zero clean signal needs an explicit sigma") {
        cfg.noise_sigma.reset();
        SpikeEventSet ev;
        ev.horizon = cfg.T0;
        ev.neurons.resize(3);
        CHECK_THROWS(discretize_and_synthesize(ev, h, cfg, rng));
    }
}

TEST_CASE("window_signal") {
    const std::vector<double> x{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto w = window_signal(x, 3);
    REQUIRE(w.size() == 3);
    std::vector<double> joined;
    for (const auto& s : w) joined.insert(joined.end(), s.samples.begin(), s.samples.end());
    CHECK(joined == std::vector<double>(x.begin(), x.begin() + 9));
    CHECK(w[2].index == 2);
    CHECK(window_signal(x, 11).empty());
}

TEST_CASE("compute_snr") {
    const std::vector<double> a{1, -2, 3};
    const std::vector<double> b{3, 1, -2};
    CHECK(compute_snr(a, b) == doctest::Approx(0.0));
    const std::vector<double> small{0.3, 0.1, -0.2};
    CHECK(compute_snr(a, small) == doctest::Approx(20.0));
    CHECK_THROWS(compute_snr(a, std::vector<double>(3, 0.0)));
}

TEST_CASE("full-scale dataset") {
    SimConfig cfg;
    const auto ds = simulate_dataset(cfg);
    CHECK(ds.windows.size() == 720);
    CHECK(ds.codes.size() == 720);
    CHECK(ds.windows.front().samples.size() == 3000);
    CHECK(ds.windows[181].index == 181);
    for (double snr : ds.achieved_snr_db) CHECK(std::abs(snr - 16.0) < 0.1);

    double support = 0.0;
    for (const auto& x : ds.codes) support += static_cast<double>(x.count_nonzero());
    support /= static_cast<double>(ds.codes.size());
    CHECK(std::abs(support - 9.0) <= 0.2 * 9.0);

    SUBCASE("determinism") {
        const auto again = simulate_dataset(cfg);
        CHECK(again.filters == ds.filters);
        for (std::size_t j = 0; j < ds.windows.size(); j += 37) {
            CHECK(again.windows[j].samples == ds.windows[j].samples);
            CHECK(again.codes[j] == ds.codes[j]);
        }
    }
}

TEST_CASE("true filters reconstruct a noiseless window") {
    auto cfg = small_config();
    cfg.T0 = 0.3;
    cfg.window = 3000;
    cfg.noise_sigma = 0.0;
    const auto ds = simulate_dataset(cfg);
    for (const auto& w : ds.windows) {
        const auto& y = w.samples;
        FistaConfig f;
        f.L = estimate_lipschitz(ds.filters, y.size()).value;
        f.lambda = 1e-3 * max_abs(apply_adjoint(ds.filters, y).flat());
        f.T = 200;
        const auto y_hat = decode(ds.filters, fista_encode(y, ds.filters, f).code);
        double err = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) err += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
        CHECK(std::sqrt(err / squared_norm(y)) < 0.05);
    }
}
