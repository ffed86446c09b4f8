#include "skilltrace/fm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "skilltrace/error.hpp"
#include "skilltrace/random.hpp"

namespace skilltrace {

namespace {

// Latent probit targets have unit noise precision.
constexpr double kNoisePrecision = 1.0;
// Hyperpriors: mean ~ N(0, 1), precision ~ Gamma(shape 1, rate 1).
constexpr double kMeanPriorPrecision = 1.0;
constexpr double kPrecisionShape = 1.0;
constexpr double kPrecisionRate = 1.0;

/// Standard normal conditioned on exceeding `lower`.
double normal_above(Rng& rng, double lower) {
    std::normal_distribution<double> normal(0.0, 1.0);
    if (lower <= 0.0) {
        for (;;) {
            const double z = normal(rng);
            if (z > lower) return z;
        }
    }
    // Exponential proposal (Robert, 1995).
    const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
    for (;;) {
        const double z = lower - std::log1p(-uniform_unit(rng)) / rate;
        const double accept = std::exp(-0.5 * (z - rate) * (z - rate));
        if (uniform_unit(rng) <= accept) return z;
    }
}

/// Column-major copy of the training rows.
struct Columns {
    std::vector<std::size_t> offsets;
    std::vector<std::uint32_t> rows;
    std::vector<double> values;

    explicit Columns(const DesignMatrix& m) : offsets(m.cols() + 1, 0) {
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (auto i : m.row(r).indices) ++offsets[i + 1];
        }
        for (std::size_t i = 0; i < m.cols(); ++i) offsets[i + 1] += offsets[i];
        rows.resize(offsets.back());
        values.resize(offsets.back());
        std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
        for (std::size_t r = 0; r < m.rows(); ++r) {
            const auto row = m.row(r);
            for (std::size_t k = 0; k < row.size(); ++k) {
                const auto pos = fill[row.indices[k]]++;
                rows[pos] = static_cast<std::uint32_t>(r);
                values[pos] = row.values[k];
            }
        }
    }
};

struct Posterior {
    double mean;
    double stdev;
};

/// Conditional of a parameter entering the prediction linearly with coefficient h_n.
template <typename Coefficient>
Posterior conditional(double current, std::size_t begin, std::size_t end, const Columns& cols,
                      const std::vector<double>& residual, double prior_mean, double prior_precision,
                      Coefficient&& coefficient) {
    double hh = 0.0, he = 0.0;
    for (std::size_t p = begin; p < end; ++p) {
        const double h = coefficient(p);
        hh += h * h;
        he += h * (residual[cols.rows[p]] + current * h);
    }
    const double precision = kNoisePrecision * hh + prior_precision;
    return {(kNoisePrecision * he + prior_precision * prior_mean) / precision, 1.0 / std::sqrt(precision)};
}

/// Keeps posterior predictive probabilities strictly inside (0, 1).
double open_unit(double p) {
    return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

void check_finite(double value, std::size_t iteration, const char* what) {
    if (!std::isfinite(value)) {
        throw FitError(fmt::format("Gibbs chain diverged at iteration {} ({} is not finite)", iteration, what));
    }
}

}  // namespace

double probit(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double fm_score(const FMParams& params, SparseRow row) {
    double score = params.global_bias;
    const std::size_t d = params.dim;
    for (std::size_t k = 0; k < row.size(); ++k) {
        if (row.indices[k] >= params.linear.size()) {
            throw DimensionError(
                fmt::format("feature index {} out of range (N={})", row.indices[k], params.linear.size()));
        }
        score += params.linear[row.indices[k]] * row.values[k];
    }
    for (std::size_t f = 0; f < d; ++f) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t k = 0; k < row.size(); ++k) {
            const double t = params.embeddings[row.indices[k] * d + f] * row.values[k];
            sum += t;
            sum_sq += t * t;
        }
        score += 0.5 * (sum * sum - sum_sq);
    }
    return score;
}

FMFit fit_fm_gibbs(const DesignMatrix& rows, std::span<const std::uint8_t> labels, std::uint32_t dim,
                   const GibbsConfig& config, const DesignMatrix* eval_rows) {
    if (dim < 1) throw ConfigError("factorization machines need dim >= 1");
    if (rows.rows() != labels.size()) {
        throw DimensionError(fmt::format("{} rows but {} labels", rows.rows(), labels.size()));
    }
    const std::size_t burn_in = config.effective_burn_in();
    if (config.iterations == 0 || burn_in >= config.iterations) {
        throw ConfigError(fmt::format("burn-in {} must be below iteration count {}", burn_in, config.iterations));
    }
    if (!(config.init_stdev > 0.0)) throw ConfigError("init_stdev must be positive");
    if (eval_rows && eval_rows->cols() != rows.cols()) throw DimensionError("evaluation rows use another layout");

    const LayoutDescriptor& layout = rows.layout();
    const std::size_t n_features = rows.cols();
    const std::size_t n_rows = rows.rows();
    const std::size_t n_blocks = std::max<std::size_t>(layout.blocks().size(), 1);
    const std::size_t d = dim;

    std::vector<std::size_t> group(n_features, 0);
    std::vector<std::size_t> group_size(n_blocks, 0);
    for (std::size_t i = 0; i < n_features; ++i) {
        group[i] = layout.block_index_of(i);
        ++group_size[group[i]];
    }

    Rng rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    FMParams state;
    state.dim = dim;
    state.linear.assign(n_features, 0.0);
    state.embeddings.resize(n_features * d);
    for (double& v : state.embeddings) v = config.sample_embeddings ? config.init_stdev * normal(rng) : 0.0;
    state.linear_mean.assign(n_blocks, 0.0);
    state.linear_precision.assign(n_blocks, 1.0);
    state.embedding_mean.assign(n_blocks * d, 0.0);
    state.embedding_precision.assign(n_blocks * d, 1.0);

    const Columns cols(rows);
    std::vector<double> residual(n_rows), factor_sum(n_rows * d);

    FMFit fit;
    FMParams sum;
    sum.dim = dim;
    sum.linear.assign(n_features, 0.0);
    sum.embeddings.assign(n_features * d, 0.0);
    sum.linear_mean.assign(n_blocks, 0.0);
    sum.linear_precision.assign(n_blocks, 0.0);
    sum.embedding_mean.assign(n_blocks * d, 0.0);
    sum.embedding_precision.assign(n_blocks * d, 0.0);
    if (eval_rows) fit.eval_predictions.assign(eval_rows->rows(), 0.0);

    const std::size_t kept = config.iterations - burn_in;
    const std::size_t stride = config.retain_samples == 0 ? 0 : std::max<std::size_t>(1, kept / config.retain_samples);

    for (std::size_t it = 0; it < config.iterations; ++it) {
        // Fresh predictions and latent targets.
        for (std::size_t n = 0; n < n_rows; ++n) {
            const auto row = rows.row(n);
            const double mean = fm_score(state, row);
            for (std::size_t f = 0; f < d; ++f) {
                double s = 0.0;
                for (std::size_t k = 0; k < row.size(); ++k) s += state.embeddings[row.indices[k] * d + f] * row.values[k];
                factor_sum[n * d + f] = s;
            }
            const double target = labels[n] != 0 ? mean + normal_above(rng, -mean) : mean - normal_above(rng, mean);
            residual[n] = target - mean;
        }

        // Global bias, prior N(0, 1).
        {
            double he = 0.0;
            for (std::size_t n = 0; n < n_rows; ++n) he += residual[n] + state.global_bias;
            const double precision = kNoisePrecision * static_cast<double>(n_rows) + 1.0;
            const double draw = kNoisePrecision * he / precision + normal(rng) / std::sqrt(precision);
            for (std::size_t n = 0; n < n_rows; ++n) residual[n] -= draw - state.global_bias;
            state.global_bias = draw;
            check_finite(draw, it, "global bias");
        }

        for (std::size_t i = 0; i < n_features; ++i) {
            const std::size_t b = cols.offsets[i], e = cols.offsets[i + 1];
            const auto post = conditional(state.linear[i], b, e, cols, residual, state.linear_mean[group[i]],
                                          state.linear_precision[group[i]], [&](std::size_t p) { return cols.values[p]; });
            const double draw = post.mean + post.stdev * normal(rng);
            const double delta = draw - state.linear[i];
            for (std::size_t p = b; p < e; ++p) residual[cols.rows[p]] -= delta * cols.values[p];
            state.linear[i] = draw;
            check_finite(draw, it, "linear weight");
        }

        if (config.sample_embeddings) {
            for (std::size_t f = 0; f < d; ++f) {
                for (std::size_t i = 0; i < n_features; ++i) {
                    const std::size_t b = cols.offsets[i], e = cols.offsets[i + 1];
                    double& v = state.embeddings[i * d + f];
                    auto h = [&](std::size_t p) {
                        const double x = cols.values[p];
                        return x * (factor_sum[cols.rows[p] * d + f] - v * x);
                    };
                    const std::size_t g = group[i] * d + f;
                    const auto post = conditional(v, b, e, cols, residual, state.embedding_mean[g],
                                                  state.embedding_precision[g], h);
                    const double draw = post.mean + post.stdev * normal(rng);
                    const double delta = draw - v;
                    for (std::size_t p = b; p < e; ++p) {
                        const double hp = h(p);
                        residual[cols.rows[p]] -= delta * hp;
                        factor_sum[cols.rows[p] * d + f] += delta * cols.values[p];
                    }
                    v = draw;
                    check_finite(draw, it, "embedding");
                }
            }
        }

        // Hyperparameters per block (and per factor for embeddings).
        auto draw_hyper = [&](auto value_of, std::size_t block, double& mean, double& precision) {
            double sq = 0.0, total = 0.0;
            const double n = static_cast<double>(group_size[block]);
            for (std::size_t i = 0; i < n_features; ++i) {
                if (group[i] != block) continue;
                const double w = value_of(i);
                sq += (w - mean) * (w - mean);
                total += w;
            }
            std::gamma_distribution<double> gamma(kPrecisionShape + 0.5 * n, 1.0 / (kPrecisionRate + 0.5 * sq));
            precision = gamma(rng);
            const double post_precision = kMeanPriorPrecision + precision * n;
            mean = precision * total / post_precision + normal(rng) / std::sqrt(post_precision);
            check_finite(precision, it, "hyperparameter");
            check_finite(mean, it, "hyperparameter");
        };
        for (std::size_t blk = 0; blk < layout.blocks().size(); ++blk) {
            draw_hyper([&](std::size_t i) { return state.linear[i]; }, blk, state.linear_mean[blk],
                       state.linear_precision[blk]);
            if (config.sample_embeddings) {
                for (std::size_t f = 0; f < d; ++f) {
                    draw_hyper([&](std::size_t i) { return state.embeddings[i * d + f]; }, blk,
                               state.embedding_mean[blk * d + f], state.embedding_precision[blk * d + f]);
                }
            }
        }

        if (it < burn_in) continue;

        if (eval_rows) {
            for (std::size_t n = 0; n < eval_rows->rows(); ++n) {
                fit.eval_predictions[n] += probit(fm_score(state, eval_rows->row(n)));
            }
        }
        sum.global_bias += state.global_bias;
        auto accumulate = [](std::vector<double>& into, const std::vector<double>& from) {
            for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
        };
        accumulate(sum.linear, state.linear);
        accumulate(sum.embeddings, state.embeddings);
        accumulate(sum.linear_mean, state.linear_mean);
        accumulate(sum.linear_precision, state.linear_precision);
        accumulate(sum.embedding_mean, state.embedding_mean);
        accumulate(sum.embedding_precision, state.embedding_precision);
        ++fit.model.averaged_samples;
        if (stride != 0 && (it - burn_in) % stride == 0 && fit.model.samples.size() < config.retain_samples) {
            fit.model.samples.push_back(state);
        }
    }

    const double count = static_cast<double>(fit.model.averaged_samples);
    for (double& p : fit.eval_predictions) p = open_unit(p / count);
    auto scale = [count](std::vector<double>& v) {
        for (double& x : v) x /= count;
    };
    sum.global_bias /= count;
    scale(sum.linear);
    scale(sum.embeddings);
    scale(sum.linear_mean);
    scale(sum.linear_precision);
    scale(sum.embedding_mean);
    scale(sum.embedding_precision);
    fit.model.mean = std::move(sum);
    fit.model.last = std::move(state);
    return fit;
}

double fm_predict(const FMModel& model, SparseRow row, PredictMode mode) {
    if (mode == PredictMode::point_estimate) return open_unit(probit(fm_score(model.mean, row)));
    if (model.samples.empty()) return open_unit(probit(fm_score(model.last, row)));
    double total = 0.0;
    for (const auto& sample : model.samples) total += probit(fm_score(sample, row));
    return open_unit(total / static_cast<double>(model.samples.size()));
}

}  // namespace skilltrace
