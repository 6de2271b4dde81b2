#pragma once

// Convolutional dictionary operators. H maps codes (C x N_e) to a window of
// W = N_e + K - 1 samples as a sum of full 1-D convolutions; H^T correlates a
// window with each filter. The block-Toeplitz matrix is never formed.

#include <cstdint>
#include <span>
#include <vector>

#include "crsae/matrix.hpp"

namespace crsae {

// Number of valid code shifts for window length W and filter length K.
std::size_t code_length(std::size_t window, std::size_t filter_length);

// y[n] = sum_c sum_k h_c[k] x_c[n - k], n = 0..W-1. Zero code entries are
// skipped, so the cost scales with the number of non-zeros.
std::vector<double> apply_dictionary(const FilterBank& filters, const CodeMatrix& code);
void apply_dictionary(const FilterBank& filters, const CodeMatrix& code, std::span<double> out);

// out[c][n] = sum_k h_c[k] signal[n + k], n = 0..N_e-1.
CodeMatrix apply_adjoint(const FilterBank& filters, std::span<const double> signal);
void apply_adjoint(const FilterBank& filters, std::span<const double> signal, CodeMatrix& out);

// Correlation of a code with a signal, contracted over shifts:
// out[c][k] += scale * sum_n code[c][n] * signal[n + k].
// This is the Jacobian-transpose of apply_dictionary with respect to the
// filters, i.e. d<signal, H code>/dh.
void accumulate_filter_correlation(const CodeMatrix& code, std::span<const double> signal,
                                   double scale, Matrix& out);

// H^T H restricted to the valid grid, held as the C x C x (2K-1) table of
// filter cross-correlations G_{c,c'}[d] = sum_k h_c[k] h_{c'}[k + d].
// apply() picks the sparse Gram path or the dense H-then-H^T path by the
// number of non-zeros in its argument; both compute the same operator.
class NormalOperator {
public:
    NormalOperator(const FilterBank& filters, std::size_t window);

    void apply(const CodeMatrix& x, CodeMatrix& out) const;
    CodeMatrix apply(const CodeMatrix& x) const;

    const FilterBank& filters() const { return filters_; }
    std::size_t window() const { return window_; }
    double gram(std::size_t c, std::size_t c2, std::ptrdiff_t lag) const;

private:
    FilterBank filters_;
    std::size_t window_;
    std::size_t span_;  // 2K - 1
    std::vector<double> gram_;
};

struct LipschitzEstimate {
    double value = 0.0;       // (1 + safety) * largest eigenvalue estimate
    double eigenvalue = 0.0;  // raw Rayleigh quotient
    std::size_t iterations = 0;
    bool converged = false;
};

inline constexpr double kLipschitzSafety = 0.01;

// Power iteration on H^T H for windows of length W. The start vector is drawn
// from a fixed-seed generator so the result is deterministic.
LipschitzEstimate estimate_lipschitz(const FilterBank& filters, std::size_t window,
                                     std::size_t max_iters = 1000, double tol = 1e-10,
                                     std::uint64_t seed = 0x5eed);

}  // namespace crsae
