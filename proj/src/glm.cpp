#include "skilltrace/glm.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include <fmt/format.h>

#include "skilltrace/error.hpp"

namespace skilltrace {

namespace {

/// Neumaier summation, so that the loss barely depends on row order.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            carry_ += (sum_ - t) + x;
        } else {
            carry_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + carry_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_labels(const DesignMatrix& rows, std::span<const std::uint8_t> labels) {
    if (rows.rows() != labels.size()) {
        throw DimensionError(fmt::format("{} rows but {} labels", rows.rows(), labels.size()));
    }
}

/// Flat parameter vector: weights followed by the intercept.
struct Objective {
    const DesignMatrix& rows;
    std::span<const std::uint8_t> labels;
    double l2;
    bool fit_intercept;

    double evaluate(std::span<const double> theta, std::span<double> gradient) const {
        const std::size_t n_features = rows.cols();
        const double n = static_cast<double>(rows.rows());
        std::fill(gradient.begin(), gradient.end(), 0.0);
        const double intercept = theta[n_features];
        CompensatedSum loss;
        double intercept_gradient = 0.0;
        for (std::size_t r = 0; r < rows.rows(); ++r) {
            const auto row = rows.row(r);
            double z = intercept;
            for (std::size_t k = 0; k < row.size(); ++k) z += theta[row.indices[k]] * row.values[k];
            const double y = labels[r] != 0 ? 1.0 : 0.0;
            loss.add(softplus(z) - y * z);
            const double residual = sigmoid(z) - y;
            for (std::size_t k = 0; k < row.size(); ++k) gradient[row.indices[k]] += residual * row.values[k];
            intercept_gradient += residual;
        }
        double penalty = 0.0;
        for (std::size_t i = 0; i < n_features; ++i) {
            penalty += theta[i] * theta[i];
            gradient[i] = gradient[i] / n + l2 * theta[i] / n;
        }
        gradient[n_features] = fit_intercept ? intercept_gradient / n : 0.0;
        return loss.value() / n + 0.5 * l2 * penalty / n;
    }
};

}  // namespace

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

LossGradient loss_and_gradient(const LinearParams& params, const DesignMatrix& rows,
                               std::span<const std::uint8_t> labels) {
    check_labels(rows, labels);
    if (params.weights.size() != rows.cols()) {
        throw DimensionError(fmt::format("{} weights for {} features", params.weights.size(), rows.cols()));
    }
    if (rows.rows() == 0) throw DimensionError("loss over an empty design matrix");
    std::vector<double> theta(params.weights);
    theta.push_back(params.intercept);
    std::vector<double> gradient(theta.size());
    const Objective objective{rows, labels, params.l2_strength, true};
    LossGradient out;
    out.loss = objective.evaluate(theta, gradient);
    out.intercept_gradient = gradient.back();
    gradient.pop_back();
    out.gradient = std::move(gradient);
    return out;
}

LogisticFit fit_logistic(const DesignMatrix& rows, std::span<const std::uint8_t> labels,
                         const LogisticConfig& config) {
    check_labels(rows, labels);
    if (rows.rows() == 0) throw FitError("cannot fit on zero rows");
    if (config.l2_strength < 0.0) throw ConfigError("l2_strength must be nonnegative");
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        for (double v : rows.row(r).values) {
            if (!std::isfinite(v)) throw FitError(fmt::format("non-finite feature value in row {}", r));
        }
    }

    const std::size_t dim = rows.cols() + 1;
    const Objective objective{rows, labels, config.l2_strength, config.fit_intercept};
    std::vector<double> theta(dim, 0.0), gradient(dim), next(dim), next_gradient(dim), direction(dim);
    double loss = objective.evaluate(theta, gradient);

    LogisticFit fit;
    fit.loss_trace.push_back(loss);
    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;
    std::vector<double> alpha(config.history);

    double gnorm = std::sqrt(dot(gradient, gradient));
    std::size_t iteration = 0;
    while (gnorm > config.tolerance && iteration < config.max_iterations) {
        // Two-loop recursion.
        for (std::size_t i = 0; i < dim; ++i) direction[i] = -gradient[i];
        for (std::size_t m = s_hist.size(); m-- > 0;) {
            alpha[m] = rho_hist[m] * dot(s_hist[m], direction);
            for (std::size_t i = 0; i < dim; ++i) direction[i] -= alpha[m] * y_hist[m][i];
        }
        if (!s_hist.empty()) {
            const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
            for (double& d : direction) d *= gamma;
        }
        for (std::size_t m = 0; m < s_hist.size(); ++m) {
            const double beta = rho_hist[m] * dot(y_hist[m], direction);
            for (std::size_t i = 0; i < dim; ++i) direction[i] += (alpha[m] - beta) * s_hist[m][i];
        }
        double slope = dot(direction, gradient);
        if (!(slope < 0.0)) {
            // Lost descent; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            for (std::size_t i = 0; i < dim; ++i) direction[i] = -gradient[i];
            slope = -gnorm * gnorm;
        }

        double step = s_hist.empty() ? std::min(1.0, 1.0 / gnorm) : 1.0;
        double next_loss = 0.0;
        bool accepted = false;
        for (int attempt = 0; attempt < 60; ++attempt) {
            for (std::size_t i = 0; i < dim; ++i) next[i] = theta[i] + step * direction[i];
            next_loss = objective.evaluate(next, next_gradient);
            if (std::isfinite(next_loss) && next_loss <= loss + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // no representable decrease left

        std::vector<double> s(dim), y(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            s[i] = next[i] - theta[i];
            y[i] = next_gradient[i] - gradient[i];
        }
        const double sy = dot(s, y);
        if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
            if (s_hist.size() == config.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
        }
        theta.swap(next);
        gradient.swap(next_gradient);
        loss = next_loss;
        fit.loss_trace.push_back(loss);
        gnorm = std::sqrt(dot(gradient, gradient));
        ++iteration;
    }

    fit.converged = gnorm <= config.tolerance;
    fit.iterations = iteration;
    fit.gradient_norm = gnorm;
    fit.params.intercept = theta.back();
    theta.pop_back();
    fit.params.weights = std::move(theta);
    fit.params.l2_strength = config.l2_strength;
    return fit;
}

double linear_score(const LinearParams& params, SparseRow row) {
    double z = params.intercept;
    for (std::size_t k = 0; k < row.size(); ++k) {
        if (row.indices[k] >= params.weights.size()) {
            throw DimensionError(
                fmt::format("feature index {} out of range (N={})", row.indices[k], params.weights.size()));
        }
        z += params.weights[row.indices[k]] * row.values[k];
    }
    return z;
}

double predict_proba(const LinearParams& params, SparseRow row) { return sigmoid(linear_score(params, row)); }

}  // namespace skilltrace
