#include "doctest.h"

#include <chrono>
#include <cmath>

#include "crsae/gradient.hpp"
#include "dense_oracle.hpp"

using namespace crsae;
using namespace crsae::testing;

namespace {

struct Instance {
    FilterBank h;
    std::vector<double> y;
    FistaConfig cfg;
};

// Random problem whose forward trace keeps every |c_t| at least `margin`
// away from the threshold, so central differences do not straddle a kink.
Instance make_instance(std::size_t C, std::size_t K, std::size_t W, std::size_t T,
                       std::uint64_t seed, double margin = 1e-4) {
    for (std::uint64_t s = seed;; s += 1000) {
        std::mt19937_64 rng(s);
        Instance inst{random_bank(C, K, rng), random_vector(W, rng), {}};
        inst.cfg.lambda = 0.1 * max_abs(apply_adjoint(inst.h, inst.y).flat());
        inst.cfg.L = estimate_lipschitz(inst.h, W).value;
        inst.cfg.T = T;
        const auto enc = fista_encode(inst.y, inst.h, inst.cfg, true);
        if (kink_distance(*enc.trace) > margin) return inst;
    }
}

FilterGradient backprop(const Instance& inst) {
    const auto enc = fista_encode(inst.y, inst.h, inst.cfg, true);
    const auto y_hat = decode(inst.h, enc.code);
    return backprop_filter_gradient(inst.y, inst.h, inst.cfg, *enc.trace, y_hat);
}

double max_relative_error(const Matrix& bp, const Matrix& fd) {
    double worst = 0.0;
    for (std::size_t i = 0; i < bp.size(); ++i) {
        const double denom = std::max(std::abs(fd.flat()[i]), 1e-8);
        worst = std::max(worst, std::abs(bp.flat()[i] - fd.flat()[i]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("shrink_derivative") {
    CHECK(shrink_derivative(Matrix(1, 3, {1.0, -0.3, 0.5}), 0.5) == Matrix(1, 3, {1, 0, 0}));
    CHECK(shrink_derivative(Matrix(1, 4, {0.0, -2.0, 3.0, 0.0}), 0.0) ==
          Matrix(1, 4, {0, 1, 1, 0}));
    CHECK_THROWS(shrink_derivative(Matrix(1, 1), -1.0));

    // Agrees with central differences of shrink away from the kink.
    std::mt19937_64 rng(1);
    const double eps = 0.4;
    const double step = 1e-6;
    for (double v : random_vector(200, rng)) {
        if (std::abs(std::abs(v) - eps) <= 10 * step) continue;
        const double fd = (shrink(v + step, eps) - shrink(v - step, eps)) / (2 * step);
        const double mask = shrink_derivative(Matrix(1, 1, {v}), eps)(0, 0);
        CHECK(fd == doctest::Approx(mask).epsilon(1e-8));
    }
}

TEST_CASE("backprop matches central differences across shapes") {
    struct Shape { std::size_t C, K, W, T; };
    const Shape shapes[] = {{1, 3, 12, 1}, {1, 3, 12, 3}, {1, 3, 12, 10}, {2, 3, 12, 5},
                            {2, 8, 64, 5}, {3, 8, 64, 10}, {3, 8, 12, 3}, {1, 8, 64, 1}};
    std::uint64_t seed = 100;
    for (const auto& s : shapes) {
        CAPTURE(s.C);
        CAPTURE(s.K);
        CAPTURE(s.W);
        CAPTURE(s.T);
        const auto inst = make_instance(s.C, s.K, s.W, s.T, seed++);
        const auto bp = backprop(inst);
        const auto fd = finite_difference_gradient(inst.y, inst.h, inst.cfg, 1e-6);
        CHECK(max_relative_error(bp, fd) <= 1e-5);
    }
}

TEST_CASE("backprop of C=2, K=8, W=64, T=5 runs well under a second") {
    const auto inst = make_instance(2, 8, 64, 5, 7);
    const auto t0 = std::chrono::steady_clock::now();
    const auto bp = backprop(inst);
    const auto fd = finite_difference_gradient(inst.y, inst.h, inst.cfg, 1e-6);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(max_relative_error(bp, fd) <= 1e-5);
    CHECK(secs < 1.0);
}

TEST_CASE("central-difference error shrinks quadratically with the step") {
    const auto inst = make_instance(1, 3, 12, 3, 42, 1e-2);
    const auto bp = backprop(inst);
    double prev = 0.0;
    int quadratic_drops = 0;
    for (double step : {2e-3, 1e-3, 5e-4}) {
        const auto fd = finite_difference_gradient(inst.y, inst.h, inst.cfg, step);
        double err = 0.0;
        for (std::size_t i = 0; i < bp.size(); ++i) {
            err = std::max(err, std::abs(bp.flat()[i] - fd.flat()[i]));
        }
        if (prev > 0.0 && err < prev / 3.0) ++quadratic_drops;
        prev = err;
    }
    CHECK(quadratic_drops == 2);
}

TEST_CASE("gradient vanishes when the code is identically zero") {
    std::mt19937_64 rng(2);
    const auto h = random_bank(2, 4, rng);
    const auto y = random_vector(20, rng);
    FistaConfig cfg;
    cfg.lambda = 1e6;
    cfg.L = estimate_lipschitz(h, 20).value;
    cfg.T = 1;
    const auto bp = backprop(Instance{h, y, cfg});
    CHECK(bp.max_abs() == 0.0);
    const auto fd = finite_difference_gradient(y, h, cfg, 1e-6);
    CHECK(fd.max_abs() == 0.0);

    cfg.T = 6;
    CHECK(backprop(Instance{h, y, cfg}).max_abs() == 0.0);
}

TEST_CASE("gradient scales by alpha^2 when y and lambda scale by alpha") {
    const auto inst = make_instance(2, 5, 30, 8, 9);
    Instance scaled = inst;
    for (double& v : scaled.y) v *= 2.0;
    scaled.cfg.lambda *= 2.0;
    const auto g = backprop(inst);
    const auto g2 = backprop(scaled);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g2.flat()[i] == 4.0 * g.flat()[i]);
}

TEST_CASE("backprop rejects a trace from a different config") {
    const auto inst = make_instance(1, 3, 12, 3, 5);
    const auto enc = fista_encode(inst.y, inst.h, inst.cfg, true);
    const auto y_hat = decode(inst.h, enc.code);
    FistaConfig other = inst.cfg;
    other.T = 4;
    CHECK_THROWS(backprop_filter_gradient(inst.y, inst.h, other, *enc.trace, y_hat));
    std::vector<double> short_hat(y_hat.begin(), y_hat.end() - 1);
    CHECK_THROWS(backprop_filter_gradient(inst.y, inst.h, inst.cfg, *enc.trace, short_hat));
}

TEST_CASE("untied gradients sum to the tied gradient") {
    const auto inst = make_instance(2, 4, 24, 6, 13);
    const auto enc = fista_encode(inst.y, inst.h, inst.cfg, true);
    const auto y_hat = decode(inst.h, enc.code);
    auto parts = backprop_unrolled(inst.y, inst.h, inst.h, inst.cfg, *enc.trace, y_hat);
    parts.encoder += parts.decoder;
    CHECK(parts.encoder == backprop_filter_gradient(inst.y, inst.h, inst.cfg, *enc.trace, y_hat));
}

TEST_CASE("batch_gradient") {
    std::mt19937_64 rng(17);
    const auto h = random_bank(2, 5, rng);
    FistaConfig cfg;
    cfg.lambda = 0.5;
    cfg.L = estimate_lipschitz(h, 40).value;
    cfg.T = 15;
    std::vector<SignalWindow> windows;
    for (std::size_t j = 0; j < 4; ++j) windows.push_back({random_vector(40, rng), j});

    SUBCASE("single window equals the per-window gradient") {
        const auto b = batch_gradient(std::span(windows).first(1), h, cfg);
        CHECK(b.gradient == backprop(Instance{h, windows[0].samples, cfg}));
        CHECK(b.mean_loss == forward_loss(windows[0].samples, h, cfg));
    }
    SUBCASE("duplicated window doubles the gradient") {
        std::vector<SignalWindow> twice{windows[0], windows[0]};
        const auto one = batch_gradient(std::span(windows).first(1), h, cfg);
        const auto two = batch_gradient(twice, h, cfg);
        for (std::size_t i = 0; i < one.gradient.size(); ++i) {
            CHECK(two.gradient.flat()[i] == 2.0 * one.gradient.flat()[i]);
        }
    }
    SUBCASE("four windows equal the sum of four calls, for any thread count") {
        FilterGradient sum = backprop(Instance{h, windows[0].samples, cfg});
        for (std::size_t j = 1; j < 4; ++j) sum += backprop(Instance{h, windows[j].samples, cfg});
        const auto serial = batch_gradient(windows, h, cfg, 1);
        const auto threaded = batch_gradient(windows, h, cfg, 3);
        CHECK(serial.gradient == sum);
        CHECK(threaded.gradient == serial.gradient);
        CHECK(threaded.mean_loss == serial.mean_loss);
    }
    SUBCASE("empty batch is rejected") {
        CHECK_THROWS(batch_gradient(std::span<const SignalWindow>(), h, cfg));
    }
}
