#include "crsae/gradient.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "crsae/conv_ops.hpp"
#include "crsae/errors.hpp"
#include "crsae/parallel.hpp"

namespace crsae {

Matrix shrink_derivative(const Matrix& c, double eps) {
    if (eps < 0.0) throw std::invalid_argument("shrink_derivative: eps must be >= 0");
    Matrix mask(c.rows(), c.cols());
    auto m = mask.flat();
    const auto v = c.flat();
    for (std::size_t i = 0; i < v.size(); ++i) m[i] = std::abs(v[i]) > eps ? 1.0 : 0.0;
    return mask;
}

namespace {

void check_trace(std::span<const double> y, const FilterBank& encoder, const FilterBank& decoder,
                 const FistaConfig& cfg, const EncoderTrace& trace,
                 std::span<const double> y_hat) {
    if (!(trace.config == cfg) || trace.iterations() != cfg.T) {
        throw std::invalid_argument("backprop: trace was recorded with a different FISTA config");
    }
    if (encoder.count() != decoder.count() || encoder.length() != decoder.length()) {
        throw DimensionError("backprop: encoder bank " + encoder.matrix().shape_string() +
                             " and decoder bank " + decoder.matrix().shape_string() + " differ");
    }
    if (y.size() != y_hat.size()) {
        throw DimensionError("backprop: y has " + std::to_string(y.size()) + " samples, y_hat " +
                             std::to_string(y_hat.size()));
    }
    const std::size_t ne = code_length(y.size(), encoder.length());
    for (const auto& z : trace.z) {
        if (z.channels() != encoder.count() || z.shifts() != ne) {
            throw DimensionError("backprop: trace code shape " + z.shape_string() +
                                 " does not match the window and filters");
        }
    }
}

}  // namespace

UnrolledGradient backprop_unrolled(std::span<const double> y, const FilterBank& encoder,
                                   const FilterBank& decoder, const FistaConfig& cfg,
                                   const EncoderTrace& trace, std::span<const double> y_hat) {
    check_trace(y, encoder, decoder, cfg, trace, y_hat);
    const std::size_t W = y.size();
    const std::size_t C = encoder.count();
    const std::size_t K = encoder.length();
    const std::size_t ne = code_length(W, K);
    const std::size_t T = cfg.T;
    const double inv_l = 1.0 / cfg.L;

    UnrolledGradient grad{FilterGradient(C, K), FilterGradient(C, K), 0.0};

    // Decoder: y_hat = H_dec z_T.
    std::vector<double> dy(W);
    for (std::size_t i = 0; i < W; ++i) dy[i] = y_hat[i] - y[i];
    accumulate_filter_correlation(trace.z1(T), dy, 1.0, grad.decoder);

    CodeMatrix g1 = apply_adjoint(decoder, dy);  // dL/dz^(1)_T
    CodeMatrix g2(C, ne);                        // dL/dz^(2)_T
    CodeMatrix dc(C, ne);
    CodeMatrix dw(C, ne);
    std::vector<double> r(W);
    std::vector<double> u(W);
    const NormalOperator gram(encoder, W);

    CodeMatrix w(C, ne);
    for (std::size_t t = T; t >= 1; --t) {
        const auto& z = trace.z1(t);
        const double gamma = trace.extrapolation(t);
        extrapolate(trace.z1(t - 1), trace.z2(t - 1), gamma, w);

        // dc_t = diag(eta'(c_t)) dz^(1)_t, and |c_t| > lambda/L exactly where
        // z_t != 0, with the same sign. The threshold contributes to dlambda.
        double dlam = 0.0;
        {
            auto d = dc.flat();
            const auto zv = z.flat();
            const auto gv = g1.flat();
            for (std::size_t i = 0; i < d.size(); ++i) {
                if (zv[i] != 0.0) {
                    d[i] = gv[i];
                    dlam += zv[i] > 0.0 ? -gv[i] : gv[i];
                } else {
                    d[i] = 0.0;
                }
            }
        }
        grad.lambda += inv_l * dlam;

        // c_t = w_t + (1/L) H^T (y - H w_t), differentiated in h with w_t fixed:
        // dh += (1/L) [corr(dc_t, y - H w_t) - corr(w_t, H dc_t)]
        apply_dictionary(encoder, w, r);
        for (std::size_t i = 0; i < W; ++i) r[i] = y[i] - r[i];
        apply_dictionary(encoder, dc, u);
        accumulate_filter_correlation(dc, r, inv_l, grad.encoder);
        accumulate_filter_correlation(w, u, -inv_l, grad.encoder);

        // dw_t = (I - (1/L) H^T H) dc_t
        gram.apply(dc, dw);
        {
            auto o = dw.flat();
            const auto d = dc.flat();
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = d[i] - inv_l * o[i];
        }

        // w_t = (1 + g) z^(1)_{t-1} - g z^(2)_{t-1}, and z^(2)_t = z^(1)_{t-1}.
        {
            auto a = g1.flat();
            auto b = g2.flat();
            const auto o = dw.flat();
            for (std::size_t i = 0; i < a.size(); ++i) {
                a[i] = (1.0 + gamma) * o[i] + b[i];
                b[i] = -gamma * o[i];
            }
        }
        const double g_inf = max_abs(g1.flat());
        if (!std::isfinite(g_inf) || !std::isfinite(grad.encoder.max_abs())) {
            throw DivergenceError("back-propagation produced non-finite gradients", t);
        }
    }
    if (!std::isfinite(grad.decoder.max_abs()) || !std::isfinite(grad.lambda)) {
        throw DivergenceError("back-propagation produced non-finite gradients", T + 1);
    }
    return grad;
}

FilterGradient backprop_filter_gradient(std::span<const double> y, const FilterBank& filters,
                                        const FistaConfig& cfg, const EncoderTrace& trace,
                                        std::span<const double> y_hat) {
    UnrolledGradient g = backprop_unrolled(y, filters, filters, cfg, trace, y_hat);
    g.encoder += g.decoder;
    return std::move(g.encoder);
}

double forward_loss(std::span<const double> y, const FilterBank& filters, const FistaConfig& cfg) {
    const auto code = fista_encode(y, filters, cfg, false).code;
    return reconstruction_loss(y, decode(filters, code));
}

FilterGradient finite_difference_gradient(std::span<const double> y, const FilterBank& filters,
                                          const FistaConfig& cfg, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite difference step must be > 0");
    FilterGradient grad(filters.count(), filters.length());
    for (std::size_t c = 0; c < filters.count(); ++c) {
        for (std::size_t k = 0; k < filters.length(); ++k) {
            Matrix plus = filters.matrix();
            Matrix minus = filters.matrix();
            plus(c, k) += step;
            minus(c, k) -= step;
            const double lp = forward_loss(y, FilterBank(std::move(plus)), cfg);
            const double lm = forward_loss(y, FilterBank(std::move(minus)), cfg);
            grad(c, k) = (lp - lm) / (2.0 * step);
        }
    }
    return grad;
}

double kink_distance(const EncoderTrace& trace) {
    if (trace.c.size() != trace.s.size()) {
        throw std::invalid_argument("kink_distance needs a full trace");
    }
    const double eps = trace.config.threshold();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 1; t < trace.c.size(); ++t) {
        for (double v : trace.c[t].flat()) best = std::min(best, std::abs(std::abs(v) - eps));
    }
    return best;
}

UnrolledBatchGradient batch_gradient_unrolled(std::span<const SignalWindow> windows,
                                              const FilterBank& encoder,
                                              const FilterBank& decoder, const FistaConfig& cfg,
                                              unsigned threads) {
    if (windows.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    std::vector<UnrolledGradient> per_window(windows.size());
    std::vector<double> losses(windows.size());
    parallel_for(windows.size(), threads, [&](std::size_t j) {
        const auto& y = windows[j].samples;
        auto enc = fista_encode(y, encoder, cfg, TraceLevel::codes);
        const auto y_hat = decode(decoder, enc.code);
        losses[j] = reconstruction_loss(y, y_hat);
        per_window[j] = backprop_unrolled(y, encoder, decoder, cfg, *enc.trace, y_hat);
    });

    UnrolledBatchGradient out{std::move(per_window[0]), 0.0};
    for (std::size_t j = 1; j < windows.size(); ++j) {
        out.gradient.encoder += per_window[j].encoder;
        out.gradient.decoder += per_window[j].decoder;
        out.gradient.lambda += per_window[j].lambda;
    }
    double total = 0.0;
    for (double l : losses) total += l;
    out.mean_loss = total / static_cast<double>(windows.size());
    return out;
}

BatchGradient batch_gradient(std::span<const SignalWindow> windows, const FilterBank& filters,
                             const FistaConfig& cfg, unsigned threads) {
    if (windows.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    std::vector<FilterGradient> per_window(windows.size());
    std::vector<double> losses(windows.size());
    parallel_for(windows.size(), threads, [&](std::size_t j) {
        const auto& y = windows[j].samples;
        auto enc = fista_encode(y, filters, cfg, TraceLevel::codes);
        const auto y_hat = decode(filters, enc.code);
        losses[j] = reconstruction_loss(y, y_hat);
        per_window[j] = backprop_filter_gradient(y, filters, cfg, *enc.trace, y_hat);
    });
    BatchGradient out{std::move(per_window[0]), 0.0};
    for (std::size_t j = 1; j < windows.size(); ++j) out.gradient += per_window[j];
    double total = 0.0;
    for (double l : losses) total += l;
    out.mean_loss = total / static_cast<double>(windows.size());
    return out;
}

}  // namespace crsae
