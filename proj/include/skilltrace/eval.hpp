#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skilltrace/corpus.hpp"
#include "skilltrace/encoder.hpp"
#include "skilltrace/model.hpp"

namespace skilltrace {

/// Probability that a random positive outranks a random negative, ties count 1/2.
/// Throws MetricError when only one class is present.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

inline constexpr double kNllClip = 1e-12;

/// Mean negative log-likelihood with probabilities clipped to [1e-12, 1 - 1e-12].
double nll(std::span<const double> probs, std::span<const std::uint8_t> labels);

/// Fraction of rows where (p >= threshold) matches the label.
double accuracy(std::span<const double> probs, std::span<const std::uint8_t> labels, double threshold = 0.5);

struct FoldMetrics {
    std::uint32_t fold = 0;
    std::optional<double> auc;
    double nll = 0.0;
    double acc = 0.0;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    bool converged = true;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
    std::size_t count = 0;
};

/// Population (ddof = 0) mean and standard deviation.
MeanStd mean_std(std::span<const double> values);

struct ModelResult {
    ModelSpec spec;
    std::vector<FoldMetrics> folds;
    MeanStd auc;
    MeanStd nll;
    MeanStd acc;
    std::vector<std::string> warnings;
};

struct MetricsTable {
    std::uint32_t k = 0;
    std::uint64_t seed = 0;
    std::vector<ModelResult> models;

    const ModelResult& find(Family family, std::uint32_t dim) const;
};

struct CvOptions {
    std::uint32_t k = 5;
    std::uint64_t seed = 42;
    TrainConfig train;
    std::size_t threads = 1;
    /// Called once per (spec, fold) with the fitted model, from worker threads.
    std::function<void(const ModelSpec&, std::uint32_t fold, const FittedModel&)> on_model;
};

/// Student-level k-fold cross-validation of each spec. Every interaction is a
/// test row exactly once; test students never appear in training rows.
MetricsTable cross_validate(const Dataset& dataset, std::span<const ModelSpec> specs, const CvOptions& options);

nlohmann::json to_json(const MetricsTable& table);
/// Aligned text table sorted by mean AUC, one line per (model, dim).
std::string format_table(const MetricsTable& table);

struct AblationComparison {
    std::string name;
    ModelSpec full;
    ModelSpec ablated;
    /// full AUC - ablated AUC per fold; folds with undefined AUC are skipped.
    std::vector<double> fold_deltas;
    MeanStd delta;
};

struct AblationReport {
    MetricsTable table;
    std::vector<AblationComparison> comparisons;
};

/// DAS3H vs plain counts, DAS3H vs DAS3H_1p, DASH_items vs DASH_kc, all at dim 0.
AblationReport ablation_suite(const Dataset& dataset, const CvOptions& options,
                              const WindowSet& windows = WindowSet::standard());

/// Rows of (dataset, model, fold, auc).
std::string fold_auc_csv(const MetricsTable& table, const std::string& dataset_name);
/// Rows of (dataset, comparison, fold, delta_auc).
std::string ablation_delta_csv(const AblationReport& report, const std::string& dataset_name);
nlohmann::json to_json(const AblationReport& report);

}  // namespace skilltrace
