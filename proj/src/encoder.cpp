#include "crsae/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "crsae/errors.hpp"

namespace crsae {

void FistaConfig::validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw std::invalid_argument("FISTA lambda must be finite and > 0, got " +
                                    std::to_string(lambda));
    }
    if (!(L > 0.0) || !std::isfinite(L)) {
        throw std::invalid_argument("FISTA L must be finite and > 0, got " + std::to_string(L));
    }
    if (T < 1) throw std::invalid_argument("FISTA needs T >= 1");
}

double shrink(double v, double eps) {
    const double mag = std::abs(v) - eps;
    if (!(mag > 0.0)) return 0.0;
    return v > 0.0 ? mag : -mag;
}

void shrink(std::span<const double> v, double eps, std::span<double> out) {
    if (eps < 0.0) throw std::invalid_argument("shrink threshold must be >= 0");
    if (v.size() != out.size()) throw DimensionError("shrink: input and output lengths differ");
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = shrink(v[i], eps);
}

Matrix shrink(const Matrix& v, double eps) {
    Matrix out(v.rows(), v.cols());
    shrink(v.flat(), eps, out.flat());
    return out;
}

double momentum_next(double s_prev) {
    return (1.0 + std::sqrt(1.0 + 4.0 * s_prev * s_prev)) / 2.0;
}

double EncoderTrace::extrapolation(std::size_t t) const {
    if (!config.momentum) return 0.0;
    return (s.at(t - 1) - 1.0) / s.at(t);
}

void extrapolate(const CodeMatrix& z1, const CodeMatrix& z2, double gamma, CodeMatrix& out) {
    if (!z1.same_shape(z2)) throw DimensionError("extrapolate: code shapes differ");
    if (!out.same_shape(z1)) out = CodeMatrix(z1.channels(), z1.shifts());
    auto w = out.flat();
    const auto a = z1.flat();
    const auto b = z2.flat();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = a[i] + gamma * (a[i] - b[i]);
}

void fista_iteration(const NormalOperator& gram, const CodeMatrix& adjoint_y,
                     const FistaConfig& cfg, double s_prev, const CodeMatrix& z1_prev,
                     const CodeMatrix& z2_prev, FistaStep& step) {
    step.s = momentum_next(s_prev);
    const double gamma = cfg.momentum ? (s_prev - 1.0) / step.s : 0.0;
    extrapolate(z1_prev, z2_prev, gamma, step.w);

    // c = w + (1/L) (H^T y - H^T H w). Dividing (not multiplying by 1/L) keeps
    // |H^T y| <= lambda => |c_1| <= lambda / L exact in floating point.
    gram.apply(step.w, step.c);
    {
        auto c = step.c.flat();
        const auto w = step.w.flat();
        const auto hy = adjoint_y.flat();
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = w[i] + (hy[i] - c[i]) / cfg.L;
    }

    if (!step.z.same_shape(step.c)) step.z = CodeMatrix(step.c.channels(), step.c.shifts());
    shrink(step.c.flat(), cfg.threshold(), step.z.flat());
}

FistaStep fista_iteration(const NormalOperator& gram, const CodeMatrix& adjoint_y,
                          const FistaConfig& cfg, double s_prev, const CodeMatrix& z1_prev,
                          const CodeMatrix& z2_prev) {
    FistaStep step;
    fista_iteration(gram, adjoint_y, cfg, s_prev, z1_prev, z2_prev, step);
    return step;
}

EncodeResult fista_encode(std::span<const double> y, const FilterBank& filters,
                          const FistaConfig& cfg, TraceLevel level) {
    cfg.validate();
    for (double v : y) {
        if (!std::isfinite(v)) throw std::invalid_argument("fista_encode: non-finite input sample");
    }
    const NormalOperator gram(filters, y.size());
    const CodeMatrix hy = apply_adjoint(filters, y);
    const CodeMatrix zero(filters.count(), hy.shifts());
    const bool full = level == TraceLevel::full;

    EncodeResult result;
    if (level != TraceLevel::none) {
        EncoderTrace& tr = result.trace.emplace();
        tr.config = cfg;
        tr.s.reserve(cfg.T + 1);
        tr.z.reserve(cfg.T + 1);
        tr.s.push_back(0.0);
        tr.z.push_back(zero);
        if (full) {
            tr.w.reserve(cfg.T + 1);
            tr.c.reserve(cfg.T + 1);
            tr.w.push_back(zero);
            tr.c.push_back(zero);
        }
    }

    double s = 0.0;
    CodeMatrix z1 = zero;
    CodeMatrix z2 = zero;
    FistaStep step;
    double c1_inf = 0.0;
    for (std::size_t t = 1; t <= cfg.T; ++t) {
        fista_iteration(gram, hy, cfg, s, z1, z2, step);
        const double c_inf = max_abs(step.c.flat());
        if (!std::isfinite(c_inf)) {
            throw DivergenceError("FISTA produced non-finite values; check lambda/L", t);
        }
        if (t == 1) {
            c1_inf = c_inf;
        } else if (c_inf > 1e6 * c1_inf && c_inf > 0.0) {
            throw DivergenceError("FISTA iterates grew by more than 1e6; L is likely below the "
                                  "largest eigenvalue of H^T H",
                                  t);
        }
        s = step.s;
        if (result.trace) {
            EncoderTrace& tr = *result.trace;
            tr.s.push_back(step.s);
            tr.z.push_back(step.z);
            if (full) {
                tr.w.push_back(step.w);
                tr.c.push_back(step.c);
            }
        }
        // z2 <- z1 <- z; the old z2 buffer is reused for the next step's z.
        std::swap(z2, z1);
        std::swap(z1, step.z);
    }
    result.code = std::move(z1);
    return result;
}

std::vector<double> decode(const FilterBank& filters, const CodeMatrix& code) {
    return apply_dictionary(filters, code);
}

double reconstruction_loss(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) {
        throw DimensionError("reconstruction_loss: lengths " + std::to_string(y.size()) + " and " +
                             std::to_string(y_hat.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - y_hat[i];
        s += d * d;
    }
    return 0.5 * s;
}

double lasso_objective(std::span<const double> y, const FilterBank& filters,
                       const CodeMatrix& code, double lambda) {
    if (code.shifts() + filters.length() != y.size() + 1) {
        throw DimensionError("lasso_objective: code " + code.shape_string() +
                             " does not match window of " + std::to_string(y.size()));
    }
    const auto y_hat = apply_dictionary(filters, code);
    double l1 = 0.0;
    for (double v : code.flat()) l1 += std::abs(v);
    return reconstruction_loss(y, y_hat) + lambda * l1;
}

}  // namespace crsae
