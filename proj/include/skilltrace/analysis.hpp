#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skilltrace/model.hpp"

namespace skilltrace {

struct SlopeOptions {
    /// Average over every ordered pair (w, w') with w < w' instead of adjacent pairs only.
    bool all_pairs = false;
};

struct SlopeEntry {
    SkillIndex skill = 0;
    std::string skill_id;
    /// Mean drop in percentage points of P(correct) when one win leaves a window.
    double mean_drop_pct = 0.0;
    /// Population std over the (fold, window pair) drops.
    double std_pct = 0.0;
    std::size_t folds = 0;
    std::size_t window_pairs = 0;
    /// The skill had no training rows in any fold; the entry carries zeros.
    bool unseen = false;
};

/// Forgetting-curve slope of one skill from per-fold DAS3H dim-0 models. The
/// reference state holds one win and one attempt in every window, with user and
/// item biases at their fitted means; folds where the skill is unseen are skipped.
SlopeEntry forgetting_slope(std::span<const FittedModel> models, SkillIndex skill, const SlopeOptions& options = {});

/// Slopes for every skill of the first model's vocabulary.
std::vector<SlopeEntry> forgetting_slopes(std::span<const FittedModel> models, const SlopeOptions& options = {});

/// CSV with columns skill_id, mean_drop_pct, std, folds, window_pairs, unseen.
std::string slopes_csv(std::span<const SlopeEntry> entries);
nlohmann::json to_json(std::span<const SlopeEntry> entries, const SlopeOptions& options);

struct HistoryEvent {
    ItemIndex item = 0;
    double time = 0.0;
    bool correct = false;
};

struct RecallQuery {
    std::optional<StudentIndex> student;
    std::vector<SkillIndex> skills;
    /// Without an item, the row spreads weight 1/|pool| over items tagged with any queried skill.
    std::optional<ItemIndex> item;
    double time = 0.0;
};

/// Counters of a history as the model's family keys them, skipping events after `until`.
CounterState history_counters(const FittedModel& model, std::span<const HistoryEvent> history, double until);

/// Feature row of a virtual interaction at `query.time`. Throws ConfigError for an empty skill set.
SparseVector recall_row(const FittedModel& model, const CounterState& counters, const RecallQuery& query);

/// P(correct) for a virtual interaction at `query.time`. Events after the query
/// time are ignored. Throws ConfigError for an empty skill set.
double recall_probability(const FittedModel& model, std::span<const HistoryEvent> history, const RecallQuery& query);
double recall_probability(const FittedModel& model, const CounterState& counters, const RecallQuery& query);

}  // namespace skilltrace
