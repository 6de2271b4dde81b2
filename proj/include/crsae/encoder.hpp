#pragma once

// CRsAE forward pass: T unrolled FISTA iterations on the convolutional lasso,
// then the tied linear decoder y_hat = H z_T.

#include <optional>
#include <span>
#include <vector>

#include "crsae/conv_ops.hpp"
#include "crsae/matrix.hpp"

namespace crsae {

struct FistaConfig {
    double lambda = 1.0;  // sparsity weight
    double L = 1.0;       // step constant, must bound the top eigenvalue of H^T H
    std::size_t T = 200;  // unrolled iterations
    // false turns the momentum sequence off (plain ISTA, w_t = z_{t-1}).
    bool momentum = true;

    double threshold() const { return lambda / L; }
    void validate() const;
    bool operator==(const FistaConfig&) const = default;
};

// Soft threshold (|v| - eps)_+ sgn(v). Entries with |v| <= eps become exactly 0.
double shrink(double v, double eps);
void shrink(std::span<const double> v, double eps, std::span<double> out);
Matrix shrink(const Matrix& v, double eps);

// s_t = (1 + sqrt(1 + 4 s_{t-1}^2)) / 2
double momentum_next(double s_prev);

// Per-iteration state of one forward pass, kept for back-propagation.
// Index t runs over 1..T; slot 0 holds the initial state (s_0 = 0, z_0 = 0).
// The second half of the FISTA state vector is the previous first half, so
// only z^(1) is stored: z2(t) == z1(t - 1).
// Back-propagation needs only s and z (w_t is rebuilt from z, and
// |c_t| > lambda/L exactly where z_t != 0); w and c are kept at the full
// level, for inspection and the kink check.
struct EncoderTrace {
    FistaConfig config;
    std::vector<double> s;       // s[0..T]
    std::vector<CodeMatrix> w;   // w[1..T], extrapolated points (w[0] unused, zero); full only
    std::vector<CodeMatrix> c;   // c[1..T], pre-shrinkage points (c[0] unused, zero); full only
    std::vector<CodeMatrix> z;   // z[0..T], z^(1)_t

    std::size_t iterations() const { return s.empty() ? 0 : s.size() - 1; }
    const CodeMatrix& z1(std::size_t t) const { return z.at(t); }
    const CodeMatrix& z2(std::size_t t) const { return z.at(t == 0 ? 0 : t - 1); }
    // Extrapolation weight (s_{t-1} - 1) / s_t used at iteration t.
    double extrapolation(std::size_t t) const;
};

struct EncodeResult {
    CodeMatrix code;
    std::optional<EncoderTrace> trace;
};

enum class TraceLevel { none, codes, full };

// Runs cfg.T iterations from z_0 = 0 and returns z_T^(1), keeping a trace at
// the requested level. Throws DivergenceError on non-finite iterates or when
// ||c_t||_inf exceeds 1e6 times ||c_1||_inf (L below the top eigenvalue).
EncodeResult fista_encode(std::span<const double> y, const FilterBank& filters,
                          const FistaConfig& cfg, TraceLevel level);

// record = true keeps the full trace.
inline EncodeResult fista_encode(std::span<const double> y, const FilterBank& filters,
                                 const FistaConfig& cfg, bool record = false) {
    return fista_encode(y, filters, cfg, record ? TraceLevel::full : TraceLevel::none);
}

// One iteration from an explicit state; fista_encode is a loop over this.
// Exposed so the trace can be replayed step by step.
struct FistaStep {
    double s = 0.0;
    CodeMatrix w;
    CodeMatrix c;
    CodeMatrix z;
};
FistaStep fista_iteration(const NormalOperator& gram, const CodeMatrix& adjoint_y,
                          const FistaConfig& cfg, double s_prev, const CodeMatrix& z1_prev,
                          const CodeMatrix& z2_prev);
// Same, writing into `step` and reusing its storage.
void fista_iteration(const NormalOperator& gram, const CodeMatrix& adjoint_y,
                     const FistaConfig& cfg, double s_prev, const CodeMatrix& z1_prev,
                     const CodeMatrix& z2_prev, FistaStep& step);

// w = z1 + gamma (z1 - z2), elementwise into `out` (resized when needed).
void extrapolate(const CodeMatrix& z1, const CodeMatrix& z2, double gamma, CodeMatrix& out);

// y_hat = H code. Same operator as apply_dictionary.
std::vector<double> decode(const FilterBank& filters, const CodeMatrix& code);

// 0.5 * ||y - y_hat||^2
double reconstruction_loss(std::span<const double> y, std::span<const double> y_hat);

// 0.5 * ||y - H x||^2 + lambda * ||x||_1
double lasso_objective(std::span<const double> y, const FilterBank& filters,
                       const CodeMatrix& code, double lambda);

}  // namespace crsae
