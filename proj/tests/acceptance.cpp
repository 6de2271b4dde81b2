// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Criteria 4-6 train full-size models and take a long time on one core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "crsae/cli/commands.hpp"
#include "crsae/cli/io.hpp"
#include "crsae/conv_ops.hpp"
#include "crsae/encoder.hpp"
#include "crsae/metrics.hpp"
#include "crsae/simulator.hpp"
#include "dense_oracle.hpp"

using namespace crsae;
using namespace crsae::cli;
using namespace crsae::testing;
namespace fs = std::filesystem;

namespace {

int failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int id, const char* name, bool pass, const std::string& detail, double secs) {
    if (!pass) ++failures;
    std::printf("%s [%d] %s: %s (%.1f s)\n", pass ? "PASS" : "FAIL", id, name, detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double dot_vec(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// ---------------------------------------------------------------- 1
void gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    GradcheckOptions opts;  // the four default shapes, step 1e-6, tolerance 1e-5
    const auto rows = run_gradcheck(opts, 1);
    const double secs = seconds_since(t0);
    bool pass = secs < 10.0;
    double worst = 0.0;
    for (const auto& r : rows) {
        pass = pass && r.pass && r.max_rel_err <= 1e-5;
        worst = std::max(worst, r.max_rel_err);
    }
    report(1, "gradient vs central differences", pass && rows.size() == 4,
           fmt("%zu shapes, worst max_rel_err %.3g <= 1e-5, runtime < 10 s", rows.size(), worst), secs);
}

// ---------------------------------------------------------------- 2
void operator_adjointness() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    double worst_adj = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t C = 1 + rng() % 4;
        const std::size_t K = 1 + rng() % 50;
        const std::size_t W = K + rng() % 400;
        const auto h = random_bank(C, K, rng);
        const auto x = random_code(C, code_length(W, K), rng, i % 2 ? 0.05 : 1.0);
        const auto y = random_vector(W, rng);
        const auto hx = apply_dictionary(h, x);
        const auto hty = apply_adjoint(h, y);
        const double a = dot_vec(hx, y);
        const double b = dot_vec(x.flat(), hty.flat());
        const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
        worst_adj = std::max(worst_adj, std::abs(a - b) / scale);
    }

    // Every shape with W <= 64 for C <= 3: H, H^T and H^T H against the
    // explicit block-Toeplitz matrix.
    double worst_dense = 0.0;
    std::size_t shapes = 0;
    for (std::size_t C = 1; C <= 3; ++C) {
        for (std::size_t K = 1; K <= 64; ++K) {
            for (std::size_t W = K; W <= 64; ++W) {
                ++shapes;
                const auto h = random_bank(C, K, rng);
                const std::size_t ne = code_length(W, K);
                const auto D = dense_dictionary(h, W);
                const auto y = random_vector(W, rng);
                for (double density : {1.0, 0.1}) {
                    const auto x = random_code(C, ne, rng, density);
                    const Eigen::VectorXd xv = to_eigen(x.flat());
                    const Eigen::VectorXd hx = D * xv;
                    const Eigen::VectorXd hty = D.transpose() * to_eigen(y);
                    const Eigen::VectorXd gx = D.transpose() * hx;
                    const auto got_hx = apply_dictionary(h, x);
                    const auto got_hty = apply_adjoint(h, y);
                    const auto got_gx = NormalOperator(h, W).apply(x);
                    auto rel = [](const Eigen::VectorXd& want, std::span<const double> got) {
                        const double n = std::max(want.norm(), 1e-300);
                        return (want - to_eigen(got)).norm() / n;
                    };
                    if (xv.norm() > 0.0) {
                        worst_dense = std::max(worst_dense, rel(hx, got_hx));
                        worst_dense = std::max(worst_dense, rel(gx, got_gx.flat()));
                    }
                    worst_dense = std::max(worst_dense, rel(hty, got_hty.flat()));
                }
            }
        }
    }
    const bool pass = worst_adj <= 1e-10 && worst_dense <= 1e-10;
    report(2, "operator adjointness and dense equivalence", pass,
           fmt("100 adjoint pairs worst rel %.3g; %zu shapes (W <= 64) worst rel %.3g; both <= 1e-10",
               worst_adj, shapes, worst_dense),
           seconds_since(t0));
}

// ---------------------------------------------------------------- 3
void encoder_solves_lasso() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(77);
    double worst = 0.0;
    bool zero_ok = true;
    for (int i = 0; i < 20; ++i) {
        const std::size_t C = 1 + rng() % 3;
        const std::size_t K = 3 + rng() % 6;
        const std::size_t W = K + 15 + rng() % 20;
        const auto h = random_bank(C, K, rng);
        const auto y = random_vector(W, rng);
        const double lam_max = max_abs(apply_adjoint(h, y).flat());

        FistaConfig cfg;
        cfg.lambda = 0.1 * lam_max;
        cfg.L = estimate_lipschitz(h, W).value;
        cfg.T = 2000;
        const auto code = fista_encode(y, h, cfg).code;
        const double f_fista = lasso_objective(y, h, code, cfg.lambda);

        const auto D = dense_dictionary(h, W);
        const Eigen::VectorXd yv = to_eigen(y);
        const double L = dense_max_eigenvalue(h, W);
        const auto x = dense_ista(D, yv, cfg.lambda, L, 100000);
        const double f_ista = dense_lasso(D, yv, x, cfg.lambda);
        worst = std::max(worst, std::abs(f_fista - f_ista) / f_ista);

        for (double mult : {1.0, 1.5}) {
            FistaConfig z = cfg;
            z.lambda = mult * lam_max;
            z.T = 50;
            zero_ok = zero_ok && max_abs(fista_encode(y, h, z).code.flat()) == 0.0;
        }
    }
    const double secs = seconds_since(t0);
    report(3, "encoder reaches the lasso minimum", worst <= 1e-6 && zero_ok && secs < 60.0,
           fmt("20 instances, worst rel objective gap %.3g <= 1e-6 vs 1e5-step ISTA; "
               "lambda >= ||H^T y||_inf gives zero code: %s",
               worst, zero_ok ? "yes" : "no"),
           secs);
}

// ---------------------------------------------------------------- 4-6
// One electrode of 180 windows, C=3, K=45, perturbed start with err in
// [0.4, 0.5], T=200, B=16, at most 60 epochs. The learning rate comes from
// the range test (sharpest one-epoch validation drop over 1e-5..1e-1).
ExperimentConfig recovery_config(double snr_db, std::uint64_t seed, std::size_t epochs) {
    ExperimentConfig cfg;
    cfg.simulation.electrodes = 1;
    cfg.simulation.snr_db = snr_db;
    cfg.simulation.seed = seed;
    cfg.fista.T = 200;
    auto& t = cfg.training.train;
    t.batch_size = 16;
    t.max_epochs = epochs;
    t.seed = seed;
    t.patience = 10;
    t.lambda_policy.noise = NoiseConvention::rms;
    t.recompute_lipschitz = true;
    cfg.training.init = InitKind::perturbed;
    cfg.training.init_err_range = {0.4, 0.5};
    cfg.training.lr_range_test = true;
    return cfg;
}

struct Outcome {
    RunResult run;
    RecoveryReport rec;
    RecoveryReport shifted;  // informational only
};

Outcome train_and_score(const Dataset& ds, const ExperimentConfig& cfg) {
    Outcome o{run_training(ds, cfg, 1), {}, {}};
    o.rec = match_filters(ds.truth, o.run.report.filters, 0, true);
    o.shifted = match_filters(ds.truth, o.run.report.filters, 10, true);
    return o;
}

std::string shift_note(const RecoveryReport& r) {
    std::string s = fmt(" [info: err with shifts <= 10 mean %.4f, shifts", r.mean_err);
    for (const auto& f : r.filters) s += fmt(" %d", f.shift);
    return s + "]";
}

// lr picked by the range test at 16 dB, seed 1. Criterion 5 reuses it.
std::optional<double> g_recovery_lr;

void recovery_and_baseline() {
    auto t0 = std::chrono::steady_clock::now();
    const auto cfg = recovery_config(16.0, 1, 60);
    const auto ds = build_dataset(cfg);
    const auto crsae = train_and_score(ds, cfg);
    g_recovery_lr = crsae.run.learning_rate;
    double best = 1.0;
    for (const auto& f : crsae.rec.filters) best = std::min(best, f.raw_err);
    const double mean = crsae.rec.raw_mean_err;
    report(4, "dictionary recovery at 16 dB", mean < 0.1 && best < 0.05,
           fmt("mean raw err %.4f < 0.1, best filter %.4f < 0.05, lr %.3g, %zu epochs, best epoch %zu",
               mean, best, crsae.run.learning_rate, crsae.run.report.history.size() - 1,
               crsae.run.report.best_epoch) +
               shift_note(crsae.shifted),
           seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    auto lcfg = cfg;
    lcfg.training.arch = Arch::lcsc3;
    const auto lcsc = train_and_score(ds, lcfg);
    const double ratio = lcsc.run.report.best_val_loss / crsae.run.report.best_val_loss;
    const bool pass = ratio <= 2.0 && lcsc.rec.raw_max_err > 0.3 && crsae.rec.raw_max_err < 0.1;
    report(6, "LCSC(3) baseline contrast", pass,
           fmt("val loss ratio LCSC/CRsAE %.3f <= 2; LCSC worst err %.4f > 0.3; "
               "CRsAE worst err %.4f < 0.1",
               ratio, lcsc.rec.raw_max_err, crsae.rec.raw_max_err) +
               shift_note(lcsc.shifted),
           seconds_since(t0));
}

// One range test (16 dB, seed 1) fixes the lr for all 15 runs.
void snr_trend() {
    const auto t0 = std::chrono::steady_clock::now();
    if (!g_recovery_lr) {
        const auto cfg = recovery_config(16.0, 1, 1);
        const auto ds = build_dataset(cfg);
        g_recovery_lr = run_training(ds, cfg, 1).learning_rate;
    }
    const std::vector<double> snrs{4, 8, 12, 16, 20};
    std::vector<double> medians;
    std::string detail = "median err by SNR:";
    for (double snr : snrs) {
        std::vector<double> errs;
        for (std::uint64_t seed : {1, 2, 3}) {
            auto cfg = recovery_config(snr, seed, 20);
            cfg.training.lr_range_test = false;
            cfg.training.train.learning_rate = *g_recovery_lr;
            const auto ds = build_dataset(cfg);
            errs.push_back(train_and_score(ds, cfg).rec.raw_mean_err);
        }
        std::sort(errs.begin(), errs.end());
        medians.push_back(errs[1]);
        detail += fmt(" %gdB=%.4f", snr, errs[1]);
    }
    // An increase smaller than kBorderline is flagged but not counted.
    constexpr double kBorderline = 0.01;
    int inversions = 0;
    int borderline = 0;
    for (std::size_t i = 0; i + 1 < medians.size(); ++i) {
        const double rise = medians[i + 1] - medians[i];
        if (rise <= 0.0) continue;
        if (rise < kBorderline) {
            ++borderline;
        } else {
            ++inversions;
        }
    }
    detail += fmt("; inversions %d <= 1; lr %.3g", inversions, *g_recovery_lr);
    if (borderline > 0) detail += fmt("; FLAG %d borderline inversion(s) under %.2g", borderline, kBorderline);
    report(5, "error falls with SNR", inversions <= 1, detail, seconds_since(t0));
}

// ---------------------------------------------------------------- 7
void simulator_statistics() {
    const auto t0 = std::chrono::steady_clock::now();
    SimConfig cfg;  // full-scale defaults
    const double dead = static_cast<double>(cfg.K) / cfg.fs;
    std::size_t violations = 0;
    std::size_t events = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        std::mt19937_64 rng(seed);
        const auto ev = generate_events(cfg, rng);
        for (const auto& n : ev.neurons) {
            events += n.size();
            for (std::size_t i = 1; i < n.size(); ++i) {
                if (n[i].tau - n[i - 1].tau < dead) ++violations;
            }
        }
    }

    const auto ds = simulate_dataset(cfg);
    const std::size_t per = cfg.windows_per_electrode();
    double support = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
        for (double v : ds.codes[j].flat()) support += v != 0.0 ? 1.0 : 0.0;
    }
    support /= static_cast<double>(per);
    double worst_snr = 0.0;
    for (double s : ds.achieved_snr_db) worst_snr = std::max(worst_snr, std::abs(s - cfg.snr_db));

    const bool pass = violations == 0 && std::abs(support - 9.0) <= 0.2 * 9.0 && worst_snr <= 0.1;
    report(7, "simulator statistics", pass,
           fmt("%zu refractory violations in %zu events over 1000 seeds; mean support %.3f "
               "per window over %zu windows (9 +- 20%%); worst |SNR - %g dB| %.3g <= 0.1",
               violations, events, support, per, cfg.snr_db, worst_snr),
           seconds_since(t0));
}

// ---------------------------------------------------------------- 8
void lipschitz_estimate() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(8);
    bool pass = true;
    double worst_over = 0.0;
    double min_ratio = 1e300;
    for (int i = 0; i < 50; ++i) {
        const std::size_t C = 1 + rng() % 3;
        const std::size_t K = 2 + rng() % 12;
        const std::size_t W = K + rng() % 60;
        const auto h = random_bank(C, K, rng);
        const double sigma = dense_max_eigenvalue(h, W);
        const double est = estimate_lipschitz(h, W).value;
        const double ratio = est / sigma;
        min_ratio = std::min(min_ratio, ratio);
        worst_over = std::max(worst_over, ratio - 1.0);
        pass = pass && est >= sigma && ratio - 1.0 <= 0.01;
    }
    report(8, "Lipschitz estimate", pass,
           fmt("50 instances, min est/sigma %.6f >= 1, worst overshoot %.4g <= 0.01", min_ratio,
               worst_over),
           seconds_since(t0));
}

// ---------------------------------------------------------------- 9
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void reproducibility() {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path root = fs::temp_directory_path() / "crsae_acceptance_repro";
    fs::remove_all(root);
    ExperimentConfig cfg;
    cfg.simulation.electrodes = 1;
    cfg.simulation.T0 = 1.2;
    cfg.simulation.seed = 9;
    cfg.fista.T = 30;
    cfg.training.train.max_epochs = 3;
    cfg.training.train.batch_size = 4;
    cfg.training.train.learning_rate = 1e-2;
    cfg.training.train.lambda_policy.noise = NoiseConvention::rms;
    std::ostringstream log;
    bool pass = cmd_simulate(cfg, root / "data", log) == 0;
    pass = pass && cmd_train(cfg, root / "data", root / "a", 1, log) == 0;
    pass = pass && cmd_train(cfg, root / "data", root / "b", 2, log) == 0;
    const bool filters_same = slurp(root / "a/filters.tensor") == slurp(root / "b/filters.tensor");
    const bool history_same = slurp(root / "a/history.csv") == slurp(root / "b/history.csv");
    const bool nonempty = !slurp(root / "a/filters.tensor").empty() && !slurp(root / "a/history.csv").empty();
    pass = pass && filters_same && history_same && nonempty;
    fs::remove_all(root);
    report(9, "reproducible training", pass,
           fmt("two train runs (jobs 1 and 2): filters.tensor %s, history.csv %s",
               filters_same ? "identical" : "DIFFER", history_same ? "identical" : "DIFFER"),
           seconds_since(t0));
}

}  // namespace

// Optional arguments pick steps by id, e.g. `acceptance 1 2 4,6`.
int main(int argc, char** argv) {
    const std::vector<std::string> only(argv + 1, argv + argc);
    const std::vector<std::pair<const char*, std::function<void()>>> steps{
        {"1", gradient_correctness}, {"2", operator_adjointness}, {"3", encoder_solves_lasso},
        {"7", simulator_statistics}, {"8", lipschitz_estimate},   {"9", reproducibility},
        {"4,6", recovery_and_baseline}, {"5", snr_trend},
    };
    for (const auto& [ids, fn] : steps) {
        if (!only.empty() && std::find(only.begin(), only.end(), ids) == only.end()) continue;
        try {
            fn();
        } catch (const std::exception& e) {
            ++failures;
            std::printf("FAIL [%s] threw: %s\n", ids, e.what());
            std::fflush(stdout);
        }
    }
    std::printf("%s: %d criterion failure(s)\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
