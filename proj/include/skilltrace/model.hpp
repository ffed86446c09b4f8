#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skilltrace/corpus.hpp"
#include "skilltrace/encoder.hpp"
#include "skilltrace/fm.hpp"
#include "skilltrace/glm.hpp"

namespace skilltrace {

/// Id maps and q-matrix needed to encode new queries against a fitted model.
struct Vocabulary {
    std::vector<std::string> students;
    std::vector<std::string> items;
    std::vector<std::string> skills;
    QMatrix qmatrix;

    static Vocabulary of(const Dataset& dataset);
    bool empty() const noexcept { return items.empty(); }

    std::optional<StudentIndex> find_student(std::string_view id) const;
    std::optional<ItemIndex> find_item(std::string_view id) const;
    std::optional<SkillIndex> find_skill(std::string_view id) const;

    bool operator==(const Vocabulary&) const = default;
};

struct TrainConfig {
    LogisticConfig logistic;
    GibbsConfig gibbs;
};

/// A trained model: logistic weights when dim = 0, a Gibbs chain summary otherwise.
struct FittedModel {
    LayoutDescriptor layout;
    Vocabulary vocabulary;
    /// Number of training rows in which each feature is nonzero.
    std::vector<std::uint32_t> feature_counts;
    std::optional<LogisticFit> logistic;
    std::optional<FMModel> fm;

    const ModelSpec& spec() const noexcept { return layout.spec(); }
    bool is_linear() const noexcept { return logistic.has_value(); }
    const LinearParams& linear() const;
};

/// Fits by logistic regression (dim 0) or Gibbs sampling (dim > 0). For FMs the
/// chain-averaged probabilities of `eval_rows` are written to `eval_predictions`.
FittedModel train_model(const DesignMatrix& train, const TrainConfig& config, Vocabulary vocabulary = {},
                        const DesignMatrix* eval_rows = nullptr, std::vector<double>* eval_predictions = nullptr);

/// Probability of a correct answer: logistic link for linear models, probit for FMs.
double predict(const FittedModel& model, SparseRow row, PredictMode mode = PredictMode::chain_average);

nlohmann::json to_json(const Vocabulary& vocabulary);
Vocabulary vocabulary_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FittedModel& model);
FittedModel model_from_json(const nlohmann::json& j);

void save_model(const FittedModel& model, const std::filesystem::path& path);
FittedModel load_model(const std::filesystem::path& path);

}  // namespace skilltrace
