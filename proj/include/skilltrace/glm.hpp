#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "skilltrace/encoder.hpp"

namespace skilltrace {

/// Overflow-safe logistic function.
double sigmoid(double x);

/// log(1 + exp(x)) without overflow.
double softplus(double x);

struct LinearParams {
    std::vector<double> weights;
    double intercept = 0.0;
    double l2_strength = 1.0;
};

/// Penalized objective: mean log-loss + (l2/2)·||w||² / n. The intercept is not penalized.
struct LossGradient {
    double loss = 0.0;
    std::vector<double> gradient;
    double intercept_gradient = 0.0;
};

LossGradient loss_and_gradient(const LinearParams& params, const DesignMatrix& rows,
                               std::span<const std::uint8_t> labels);

struct LogisticConfig {
    double l2_strength = 1.0;
    std::size_t max_iterations = 500;
    /// Stop when the Euclidean norm of the full gradient drops below this.
    double tolerance = 1e-6;
    /// Unused by the deterministic solver; kept so configs round-trip.
    std::uint64_t seed = 0;
    bool fit_intercept = true;
    /// L-BFGS memory.
    std::size_t history = 10;
};

struct LogisticFit {
    LinearParams params;
    bool converged = false;
    std::size_t iterations = 0;
    double gradient_norm = 0.0;
    /// Penalized loss after each accepted step, starting with the initial point.
    std::vector<double> loss_trace;
};

/// Batch L-BFGS with Armijo backtracking from the zero vector. Deterministic.
LogisticFit fit_logistic(const DesignMatrix& rows, std::span<const std::uint8_t> labels,
                         const LogisticConfig& config);

/// sigmoid(intercept + w·x). Throws DimensionError when an index is out of range.
double predict_proba(const LinearParams& params, SparseRow row);

/// intercept + w·x.
double linear_score(const LinearParams& params, SparseRow row);

}  // namespace skilltrace
