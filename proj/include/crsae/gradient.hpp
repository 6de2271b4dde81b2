#pragma once

// Reverse-mode differentiation of 0.5 * ||y - H z_T||^2 with respect to the
// filters, by replaying a recorded EncoderTrace backwards. Every
// Jacobian-vector product is a convolution or correlation with the filters.

#include <span>
#include <vector>

#include "crsae/encoder.hpp"
#include "crsae/matrix.hpp"

namespace crsae {

// 1 where |c| > eps, else 0 (subgradient 0 at the kink).
Matrix shrink_derivative(const Matrix& c, double eps);

// Gradients for an unrolled network whose encoder and decoder banks may be
// distinct. For the tied CRsAE network the filter gradient is
// encoder + decoder.
struct UnrolledGradient {
    FilterGradient encoder;
    FilterGradient decoder;
    double lambda = 0.0;  // dL/dlambda through every threshold lambda/L
};

UnrolledGradient backprop_unrolled(std::span<const double> y, const FilterBank& encoder,
                                   const FilterBank& decoder, const FistaConfig& cfg,
                                   const EncoderTrace& trace, std::span<const double> y_hat);

// dL/dh for the tied network; `trace` must come from fista_encode(y, filters,
// cfg, true) and `y_hat` from decode(filters, trace code).
FilterGradient backprop_filter_gradient(std::span<const double> y, const FilterBank& filters,
                                        const FistaConfig& cfg, const EncoderTrace& trace,
                                        std::span<const double> y_hat);

// Loss of one full forward pass: encode, decode, 0.5 * ||y - y_hat||^2.
double forward_loss(std::span<const double> y, const FilterBank& filters, const FistaConfig& cfg);

// Central differences, one pair of fresh forward passes per filter entry.
FilterGradient finite_difference_gradient(std::span<const double> y, const FilterBank& filters,
                                          const FistaConfig& cfg, double step);

// Smallest distance between |c_t| and the threshold over the whole trace.
// Finite-difference checks are only meaningful when this exceeds the
// perturbation's effect on c_t.
double kink_distance(const EncoderTrace& trace);

struct BatchGradient {
    FilterGradient gradient;  // sum over windows
    double mean_loss = 0.0;
};

// Per-window gradients run on up to `threads` workers and are summed in
// window order, so the result is bit-identical for any thread count.
BatchGradient batch_gradient(std::span<const SignalWindow> windows, const FilterBank& filters,
                             const FistaConfig& cfg, unsigned threads = 1);

struct UnrolledBatchGradient {
    UnrolledGradient gradient;
    double mean_loss = 0.0;
};

UnrolledBatchGradient batch_gradient_unrolled(std::span<const SignalWindow> windows,
                                              const FilterBank& encoder,
                                              const FilterBank& decoder, const FistaConfig& cfg,
                                              unsigned threads = 1);

}  // namespace crsae
