#include "crsae/conv_ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "crsae/errors.hpp"

namespace crsae {

std::size_t code_length(std::size_t window, std::size_t filter_length) {
    if (window < filter_length) {
        throw DimensionError("window of " + std::to_string(window) +
                             " samples is shorter than filter length " +
                             std::to_string(filter_length));
    }
    return window - filter_length + 1;
}

namespace {

void check_code_shape(const FilterBank& filters, const CodeMatrix& code, std::size_t window) {
    if (code.channels() != filters.count() ||
        code.shifts() + filters.length() != window + 1) {
        throw DimensionError("code " + code.shape_string() + " does not fit " +
                             std::to_string(filters.count()) + " filters of length " +
                             std::to_string(filters.length()) + " on a window of " +
                             std::to_string(window) + " samples");
    }
}

}  // namespace

void apply_dictionary(const FilterBank& filters, const CodeMatrix& code, std::span<double> out) {
    check_code_shape(filters, code, out.size());
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t K = filters.length();
    for (std::size_t c = 0; c < filters.count(); ++c) {
        const auto h = filters.filter(c);
        const auto x = code.row(c);
        for (std::size_t n = 0; n < x.size(); ++n) {
            const double a = x[n];
            if (a == 0.0) continue;
            double* dst = out.data() + n;
            for (std::size_t k = 0; k < K; ++k) dst[k] += h[k] * a;
        }
    }
}

std::vector<double> apply_dictionary(const FilterBank& filters, const CodeMatrix& code) {
    std::vector<double> out(code.shifts() + filters.length() - 1);
    apply_dictionary(filters, code, out);
    return out;
}

void apply_adjoint(const FilterBank& filters, std::span<const double> signal, CodeMatrix& out) {
    const std::size_t K = filters.length();
    const std::size_t ne = code_length(signal.size(), K);
    if (out.channels() != filters.count() || out.shifts() != ne) {
        out = CodeMatrix(filters.count(), ne);
    } else {
        out.fill(0.0);
    }
    for (std::size_t c = 0; c < filters.count(); ++c) {
        const auto h = filters.filter(c);
        double* dst = out.row(c).data();
        for (std::size_t k = 0; k < K; ++k) {
            const double hk = h[k];
            const double* src = signal.data() + k;
            for (std::size_t n = 0; n < ne; ++n) dst[n] += hk * src[n];
        }
    }
}

CodeMatrix apply_adjoint(const FilterBank& filters, std::span<const double> signal) {
    CodeMatrix out;
    apply_adjoint(filters, signal, out);
    return out;
}

void accumulate_filter_correlation(const CodeMatrix& code, std::span<const double> signal,
                                   double scale, Matrix& out) {
    if (out.rows() != code.channels() || code.shifts() + out.cols() != signal.size() + 1) {
        throw DimensionError("filter correlation: code " + code.shape_string() + ", signal " +
                             std::to_string(signal.size()) + ", output " + out.shape_string());
    }
    const std::size_t K = out.cols();
    for (std::size_t c = 0; c < code.channels(); ++c) {
        const auto x = code.row(c);
        auto dst = out.row(c);
        for (std::size_t n = 0; n < x.size(); ++n) {
            const double a = x[n];
            if (a == 0.0) continue;
            const double sa = scale * a;
            const double* src = signal.data() + n;
            for (std::size_t k = 0; k < K; ++k) dst[k] += sa * src[k];
        }
    }
}

NormalOperator::NormalOperator(const FilterBank& filters, std::size_t window)
    : filters_(filters), window_(window), span_(2 * filters.length() - 1) {
    code_length(window, filters.length());
    const std::size_t C = filters.count();
    const auto K = static_cast<std::ptrdiff_t>(filters.length());
    gram_.assign(C * C * span_, 0.0);
    for (std::size_t a = 0; a < C; ++a) {
        const auto ha = filters.filter(a);
        for (std::size_t b = 0; b < C; ++b) {
            const auto hb = filters.filter(b);
            double* g = gram_.data() + (a * C + b) * span_;
            for (std::ptrdiff_t d = -(K - 1); d <= K - 1; ++d) {
                double s = 0.0;
                for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, -d);
                     k < std::min<std::ptrdiff_t>(K, K - d); ++k) {
                    s += ha[k] * hb[k + d];
                }
                g[d + K - 1] = s;
            }
        }
    }
}

double NormalOperator::gram(std::size_t c, std::size_t c2, std::ptrdiff_t lag) const {
    const auto K = static_cast<std::ptrdiff_t>(filters_.length());
    if (lag <= -K || lag >= K) return 0.0;
    return gram_[(c * filters_.count() + c2) * span_ + static_cast<std::size_t>(lag + K - 1)];
}

void NormalOperator::apply(const CodeMatrix& x, CodeMatrix& out) const {
    check_code_shape(filters_, x, window_);
    const std::size_t C = filters_.count();
    const std::size_t K = filters_.length();
    const std::size_t ne = x.shifts();
    const std::size_t nnz = x.count_nonzero();

    // Sparse path: nnz * C * (2K-1). Dense path: 2 * C * K * N_e.
    if (nnz * C * span_ > 2 * C * K * ne) {
        std::vector<double> tmp(window_);
        apply_dictionary(filters_, x, tmp);
        apply_adjoint(filters_, tmp, out);
        return;
    }

    if (!out.same_shape(x)) {
        out = CodeMatrix(C, ne);
    } else {
        out.fill(0.0);
    }
    // (H^T H x)_a[n] = sum_b sum_m x_b[m] G_{a,b}[n - m]
    const auto sK = static_cast<std::ptrdiff_t>(K);
    const auto sne = static_cast<std::ptrdiff_t>(ne);
    for (std::size_t b = 0; b < C; ++b) {
        const auto xb = x.row(b);
        for (std::ptrdiff_t m = 0; m < sne; ++m) {
            const double v = xb[static_cast<std::size_t>(m)];
            if (v == 0.0) continue;
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-(sK - 1), -m);
            const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(sK - 1, sne - 1 - m);
            for (std::size_t a = 0; a < C; ++a) {
                const double* g = gram_.data() + (a * C + b) * span_ + (sK - 1);
                double* dst = out.row(a).data() + m;
                for (std::ptrdiff_t d = lo; d <= hi; ++d) dst[d] += g[d] * v;
            }
        }
    }
}

CodeMatrix NormalOperator::apply(const CodeMatrix& x) const {
    CodeMatrix out(x.channels(), x.shifts());
    apply(x, out);
    return out;
}

LipschitzEstimate estimate_lipschitz(const FilterBank& filters, std::size_t window,
                                     std::size_t max_iters, double tol, std::uint64_t seed) {
    if (max_iters < 1) throw std::invalid_argument("estimate_lipschitz: max_iters must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("estimate_lipschitz: tol must be > 0");
    const std::size_t ne = code_length(window, filters.length());

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    CodeMatrix v(filters.count(), ne);
    for (double& e : v.flat()) e = normal(rng);

    std::vector<double> hv(window);
    CodeMatrix av(filters.count(), ne);
    LipschitzEstimate est;
    double prev = 0.0;
    for (std::size_t it = 1; it <= max_iters; ++it) {
        const double vn = std::sqrt(squared_norm(v.flat()));
        if (vn == 0.0) {
            est.eigenvalue = 0.0;
            est.iterations = it;
            est.converged = true;
            break;
        }
        for (double& e : v.flat()) e /= vn;
        apply_dictionary(filters, v, hv);
        apply_adjoint(filters, hv, av);
        // Rayleigh quotient <v, H^T H v> = ||H v||^2 for unit v.
        const double rq = squared_norm(hv);
        est.eigenvalue = rq;
        est.iterations = it;
        if (it > 1 && std::abs(rq - prev) <= tol * std::abs(rq)) {
            est.converged = true;
            break;
        }
        prev = rq;
        std::swap(v, av);
    }
    est.value = (1.0 + kLipschitzSafety) * est.eigenvalue;
    return est;
}

}  // namespace crsae
