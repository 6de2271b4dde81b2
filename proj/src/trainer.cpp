#include "crsae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "crsae/conv_ops.hpp"
#include "crsae/errors.hpp"
#include "crsae/gradient.hpp"
#include "crsae/metrics.hpp"
#include "crsae/parallel.hpp"

namespace crsae {

AdamUpdate adam_step(const AdamState& state, const Matrix& grad, double lr,
                     const AdamParams& params) {
    if (!state.first_moment.same_shape(grad) || !state.second_moment.same_shape(grad)) {
        throw DimensionError("adam_step: state " + state.first_moment.shape_string() +
                             " vs gradient " + grad.shape_string());
    }
    AdamUpdate up{state, Matrix(grad.rows(), grad.cols())};
    up.state.step_count += 1;
    const double t = static_cast<double>(up.state.step_count);
    const double bc1 = 1.0 - std::pow(params.beta1, t);
    const double bc2 = 1.0 - std::pow(params.beta2, t);
    auto m = up.state.first_moment.flat();
    auto v = up.state.second_moment.flat();
    auto d = up.delta.flat();
    const auto g = grad.flat();
    for (std::size_t i = 0; i < g.size(); ++i) {
        m[i] = params.beta1 * m[i] + (1.0 - params.beta1) * g[i];
        v[i] = params.beta2 * v[i] + (1.0 - params.beta2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        d[i] = -lr * m_hat / (std::sqrt(v_hat) + params.eps);
    }
    return up;
}

FilterBank project_unit_ball(const FilterBank& filters) {
    Matrix m = filters.matrix();
    for (std::size_t c = 0; c < m.rows(); ++c) {
        const double n = std::sqrt(squared_norm(m.row(c)));
        if (n > 1.0) {
            for (double& v : m.row(c)) v /= n;
            // rounding can leave the norm an ulp above 1, which would break idempotence
            while (std::sqrt(squared_norm(m.row(c))) > 1.0) {
                for (double& v : m.row(c)) v *= 1.0 - 0x1p-52;
            }
        }
    }
    return FilterBank(std::move(m));
}

double noise_std_estimate(std::span<const double> residual, NoiseConvention convention) {
    if (residual.empty()) throw std::invalid_argument("noise_std_estimate: empty residual");
    const double norm = std::sqrt(squared_norm(residual));
    const auto n = static_cast<double>(residual.size());
    return convention == NoiseConvention::per_sample ? norm / n : norm / std::sqrt(n);
}

double lambda_heuristic(double sigma_n, std::size_t C, std::size_t N_e, double scale) {
    if (sigma_n < 0.0) throw std::invalid_argument("lambda_heuristic: sigma must be >= 0");
    if (!(scale > 0.0)) throw std::invalid_argument("lambda_heuristic: scale must be > 0");
    return scale * sigma_n * std::sqrt(2.0 * std::log(static_cast<double>(C * N_e)));
}

double resolve_lambda(const LambdaPolicy& policy, std::span<const SignalWindow> windows,
                      std::span<const CodeMatrix> codes, const FilterBank& init) {
    if (policy.kind == LambdaPolicy::Kind::fixed) return policy.value;
    if (windows.empty() || windows.size() != codes.size()) {
        throw std::invalid_argument("lambda heuristic needs one ground-truth code per window");
    }
    double sigma = 0.0;
    std::vector<double> residual;
    for (std::size_t j = 0; j < windows.size(); ++j) {
        residual = apply_dictionary(init, codes[j]);
        const auto& y = windows[j].samples;
        for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - residual[i];
        sigma += noise_std_estimate(residual, policy.noise);
    }
    sigma /= static_cast<double>(windows.size());
    const std::size_t ne = code_length(windows.front().size(), init.length());
    return lambda_heuristic(sigma, init.count(), ne, policy.value);
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("learning_rate must be finite and >= 0");
    }
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (!(lambda_decay > 0.0)) throw std::invalid_argument("lambda_decay must be > 0");
}

double evaluate_loss(std::span<const SignalWindow> windows, const FilterBank& encoder,
                     const FilterBank& decoder, const FistaConfig& cfg, unsigned threads) {
    if (windows.empty()) throw std::invalid_argument("evaluate_loss: no windows");
    std::vector<double> losses(windows.size());
    parallel_for(windows.size(), threads, [&](std::size_t j) {
        const auto& y = windows[j].samples;
        const auto code = fista_encode(y, encoder, cfg, false).code;
        losses[j] = reconstruction_loss(y, decode(decoder, code));
    });
    double total = 0.0;
    for (double l : losses) total += l;
    return total / static_cast<double>(windows.size());
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(idx[i - 1], idx[pick(rng)]);
    }
    return idx;
}

namespace {

struct LoopSpec {
    bool tied = true;
    bool trainable_lambda = false;
};

std::vector<double> filter_errors(const std::optional<FilterBank>& truth,
                                  const FilterBank& learned) {
    if (!truth) return {};
    for (std::size_t c = 0; c < learned.count(); ++c) {
        if (squared_norm(learned.filter(c)) == 0.0) return std::vector<double>(truth->count(), 1.0);
    }
    const auto report = match_filters(*truth, learned, 0, true);
    std::vector<double> err;
    for (const auto& f : report.filters) err.push_back(f.raw_err);
    return err;
}

FilterBank add_delta(const FilterBank& bank, const Matrix& delta) {
    Matrix m = bank.matrix();
    auto dst = m.flat();
    const auto d = delta.flat();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += d[i];
    return FilterBank(std::move(m));
}

TrainReport run_training(std::span<const SignalWindow> train_windows,
                         std::span<const SignalWindow> val_windows, const FilterBank& init,
                         const FistaConfig& fista, const TrainConfig& cfg, const LoopSpec& spec,
                         const std::optional<FilterBank>& truth) {
    cfg.validate();
    fista.validate();
    if (train_windows.empty() || val_windows.empty()) {
        throw std::invalid_argument("training needs non-empty train and validation sets");
    }
    if (truth && (truth->count() != init.count() || truth->length() != init.length())) {
        throw DimensionError("ground-truth bank does not match the initial bank");
    }
    const std::size_t W = train_windows.front().size();
    for (const auto& w : train_windows) {
        if (w.size() != W) throw DimensionError("training windows differ in length");
    }
    for (const auto& w : val_windows) {
        if (w.size() != W) throw DimensionError("validation window length differs from training");
    }

    FilterBank encoder = project_unit_ball(init);
    FilterBank decoder = encoder;
    FistaConfig fcfg = fista;
    if (cfg.recompute_lipschitz) fcfg.L = estimate_lipschitz(encoder, W).value;

    const std::size_t C = init.count();
    const std::size_t K = init.length();
    AdamState enc_state = AdamState::zeros(C, K);
    AdamState dec_state = AdamState::zeros(C, K);
    AdamState lam_state = AdamState::zeros(1, 1);
    const double lambda_floor = 1e-6 * fista.lambda;

    TrainReport report;
    auto record = [&](std::size_t epoch, double train_loss) {
        const double val = evaluate_loss(val_windows, encoder, decoder, fcfg, cfg.threads);
        if (!std::isfinite(val)) {
            throw DivergenceError("validation loss is not finite at epoch " +
                                      std::to_string(epoch),
                                  epoch);
        }
        report.history.push_back({epoch, train_loss, val, filter_errors(truth, decoder),
                                  fcfg.lambda});
        if (epoch == 0 || val < report.best_val_loss) {
            report.best_epoch = epoch;
            report.best_val_loss = val;
            report.filters = decoder;
            if (!spec.tied) report.encoder = encoder;
            report.fista = fcfg;
        }
    };

    record(0, evaluate_loss(train_windows, encoder, decoder, fcfg, cfg.threads));

    std::mt19937_64 rng(cfg.seed);
    std::vector<SignalWindow> batch;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto order = shuffled_indices(train_windows.size(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch_size, ++b) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(train_windows[order[i]]);

            double batch_loss = 0.0;
            if (spec.tied && !spec.trainable_lambda) {
                const auto g = batch_gradient(batch, decoder, fcfg, cfg.threads);
                batch_loss = g.mean_loss;
                if (!std::isfinite(batch_loss)) {
                    throw DivergenceError("training loss is not finite at epoch " +
                                              std::to_string(epoch) + ", batch " +
                                              std::to_string(b),
                                          epoch);
                }
                auto up = adam_step(dec_state, g.gradient, cfg.learning_rate, cfg.adam);
                dec_state = std::move(up.state);
                decoder = project_unit_ball(add_delta(decoder, up.delta));
                encoder = decoder;
            } else {
                auto g = batch_gradient_unrolled(batch, encoder, decoder, fcfg, cfg.threads);
                batch_loss = g.mean_loss;
                if (!std::isfinite(batch_loss)) {
                    throw DivergenceError("training loss is not finite at epoch " +
                                              std::to_string(epoch) + ", batch " +
                                              std::to_string(b),
                                          epoch);
                }
                if (spec.tied) {
                    g.gradient.encoder += g.gradient.decoder;
                    auto up = adam_step(dec_state, g.gradient.encoder, cfg.learning_rate, cfg.adam);
                    dec_state = std::move(up.state);
                    decoder = project_unit_ball(add_delta(decoder, up.delta));
                    encoder = decoder;
                } else {
                    auto ue = adam_step(enc_state, g.gradient.encoder, cfg.learning_rate, cfg.adam);
                    enc_state = std::move(ue.state);
                    encoder = project_unit_ball(add_delta(encoder, ue.delta));
                    auto ud = adam_step(dec_state, g.gradient.decoder, cfg.learning_rate, cfg.adam);
                    dec_state = std::move(ud.state);
                    decoder = add_delta(decoder, ud.delta);
                }
                if (spec.trainable_lambda) {
                    auto ul = adam_step(lam_state, Matrix(1, 1, g.gradient.lambda),
                                        cfg.learning_rate, cfg.adam);
                    lam_state = std::move(ul.state);
                    fcfg.lambda = std::max(lambda_floor, fcfg.lambda + ul.delta(0, 0));
                }
            }
            loss_sum += batch_loss * static_cast<double>(stop - start);
        }

        fcfg.lambda *= cfg.lambda_decay;
        if (cfg.recompute_lipschitz) fcfg.L = estimate_lipschitz(encoder, W).value;
        record(epoch, loss_sum / static_cast<double>(train_windows.size()));
        if (epoch - report.best_epoch >= cfg.patience) break;
    }
    return report;
}

}  // namespace

TrainReport train(std::span<const SignalWindow> train_windows,
                  std::span<const SignalWindow> val_windows, const FilterBank& init,
                  const FistaConfig& fista, const TrainConfig& cfg,
                  const std::optional<FilterBank>& ground_truth) {
    return run_training(train_windows, val_windows, init, fista, cfg, LoopSpec{true, false},
                        ground_truth);
}

double select_learning_rate(std::span<const double> learning_rates, std::span<const double> drops) {
    if (learning_rates.size() != drops.size() || learning_rates.empty()) {
        throw std::invalid_argument("select_learning_rate: need one drop per learning rate");
    }
    std::vector<std::size_t> idx(learning_rates.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return learning_rates[a] < learning_rates[b]; });
    std::size_t best = idx.front();
    bool found = false;
    for (std::size_t i : idx) {
        if (!std::isfinite(drops[i])) continue;
        if (!found || drops[i] > drops[best]) {
            best = i;
            found = true;
        }
    }
    return learning_rates[best];
}

std::vector<double> default_lr_grid() {
    std::vector<double> grid;
    for (int e = -10; e <= -2; ++e) grid.push_back(std::pow(10.0, e / 2.0));
    return grid;
}

LrRangeResult lr_range_test(const std::function<TrainReport(const TrainConfig&)>& run,
                            const TrainConfig& cfg, std::span<const double> grid) {
    if (grid.size() < 2) throw std::invalid_argument("lr_range_test needs at least 2 grid points");
    LrRangeResult out;
    for (double lr : grid) {
        TrainConfig one = cfg;
        one.learning_rate = lr;
        one.max_epochs = 1;
        one.patience = 1;
        double drop = -std::numeric_limits<double>::infinity();
        try {
            const auto rep = run(one);
            drop = rep.history.at(0).val_loss - rep.history.at(1).val_loss;
        } catch (const DivergenceError&) {
        }
        out.learning_rates.push_back(lr);
        out.drops.push_back(drop);
    }
    out.recommended = select_learning_rate(out.learning_rates, out.drops);
    return out;
}

LrRangeResult lr_range_test(std::span<const SignalWindow> train_windows,
                            std::span<const SignalWindow> val_windows, const FilterBank& init,
                            const FistaConfig& fista, const TrainConfig& cfg,
                            std::span<const double> grid) {
    return lr_range_test(
        [&](const TrainConfig& one) { return train(train_windows, val_windows, init, fista, one); },
        cfg, grid);
}

FilterBank init_perturbed_dictionary(const FilterBank& truth, std::pair<double, double> err_range,
                                     std::mt19937_64& rng) {
    const auto [lo, hi] = err_range;
    if (!(lo >= 0.0) || !(hi < 1.0) || lo > hi) {
        throw std::invalid_argument("perturbation error range must satisfy 0 <= lo <= hi < 1");
    }
    std::uniform_real_distribution<double> unif(0.01, 0.99);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(truth.count(), truth.length());
    for (std::size_t c = 0; c < truth.count(); ++c) {
        const auto h = truth.filter(c);
        const double hn = std::sqrt(squared_norm(h));
        if (hn == 0.0) throw std::invalid_argument("cannot perturb a zero filter");
        std::vector<double> u(h.begin(), h.end());
        for (double& v : u) v /= hn;

        const double target = lo + (hi - lo) * unif(rng);
        auto row = out.row(c);
        if (target == 0.0 || truth.length() == 1) {
            std::copy(u.begin(), u.end(), row.begin());
            continue;
        }
        // Random direction orthogonal to h.
        std::vector<double> g(u.size());
        double gn = 0.0;
        while (gn < 1e-8) {
            for (double& v : g) v = normal(rng);
            const double p = dot(g, u);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= p * u[i];
            gn = std::sqrt(squared_norm(g));
        }
        const double along = std::sqrt(1.0 - target * target);
        for (std::size_t i = 0; i < g.size(); ++i) row[i] = along * u[i] + target * g[i] / gn;
    }
    return project_unit_ball(FilterBank(std::move(out)));
}

TrainReport train_lcsc_baseline(std::span<const SignalWindow> train_windows,
                                std::span<const SignalWindow> val_windows, const FilterBank& init,
                                const FistaConfig& fista, const TrainConfig& cfg,
                                const LcscOptions& options,
                                const std::optional<FilterBank>& ground_truth) {
    FistaConfig ista = fista;
    ista.T = options.iterations;
    ista.momentum = false;
    return run_training(train_windows, val_windows, init, ista, cfg,
                        LoopSpec{options.tied, options.trainable_lambda}, ground_truth);
}

}  // namespace crsae
