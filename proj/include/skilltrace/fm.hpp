#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "skilltrace/encoder.hpp"

namespace skilltrace {

/// Standard normal CDF via erfc.
double probit(double x);

/// One state of a second-order factorization machine.
struct FMParams {
    std::uint32_t dim = 0;
    double global_bias = 0.0;
    std::vector<double> linear;
    /// N x dim, row-major.
    std::vector<double> embeddings;
    /// Per feature block.
    std::vector<double> linear_mean;
    std::vector<double> linear_precision;
    /// Per (block, factor), block-major.
    std::vector<double> embedding_mean;
    std::vector<double> embedding_precision;

    std::size_t feature_count() const noexcept { return linear.size(); }
    std::span<const double> embedding(std::size_t feature) const {
        return std::span<const double>(embeddings).subspan(feature * dim, dim);
    }
};

/// μ + Σ w_i x_i + Σ_{i<l} x_i x_l <v_i, v_l>, in O(nnz · d).
double fm_score(const FMParams& params, SparseRow row);

struct GibbsConfig {
    std::size_t iterations = 300;
    /// Samples before this index are discarded; defaults to half the chain.
    std::optional<std::size_t> burn_in;
    std::uint64_t seed = 42;
    double init_stdev = 0.1;
    /// When false the embeddings stay at zero and only biases are sampled.
    bool sample_embeddings = true;
    /// Post-burn-in samples kept in the model for later chain-averaged prediction.
    std::size_t retain_samples = 20;

    std::size_t effective_burn_in() const { return burn_in.value_or(iterations / 2); }
};

struct FMModel {
    /// Average of post-burn-in samples.
    FMParams mean;
    FMParams last;
    /// Evenly thinned post-burn-in samples.
    std::vector<FMParams> samples;
    std::size_t averaged_samples = 0;
};

struct FMFit {
    FMModel model;
    /// Chain-averaged probabilities for the optional evaluation rows, over every
    /// post-burn-in sample.
    std::vector<double> eval_predictions;
};

/// Probit-link Gibbs sampler with block-level Normal/Gamma hyperpriors.
FMFit fit_fm_gibbs(const DesignMatrix& rows, std::span<const std::uint8_t> labels, std::uint32_t dim,
                   const GibbsConfig& config, const DesignMatrix* eval_rows = nullptr);

enum class PredictMode { chain_average, point_estimate };

double fm_predict(const FMModel& model, SparseRow row, PredictMode mode = PredictMode::chain_average);

}  // namespace skilltrace
