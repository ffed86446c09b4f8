#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skilltrace/analysis.hpp"
#include "skilltrace/model.hpp"

namespace skilltrace {

struct SchedulerConfig {
    /// Target recall probability, in (0, 1).
    double threshold = 0.5;
    /// Candidate skills; empty means every skill of the model.
    std::vector<SkillIndex> skill_pool;
    /// Candidate items; empty means every item of the model.
    std::vector<ItemIndex> item_pool;

    /// Throws ConfigError when the threshold is outside (0, 1).
    void validate() const;
};

/// Orders ids numerically when both parse as integers, else lexicographically.
bool id_less(std::string_view a, std::string_view b);

/// Skill whose item-less recall is closest to the threshold; ties go to the lowest skill id.
SkillIndex next_skill(const FittedModel& model, const CounterState& counters, const SchedulerConfig& config, double now,
                      std::optional<StudentIndex> student = std::nullopt);
SkillIndex next_skill(const FittedModel& model, std::span<const HistoryEvent> history, const SchedulerConfig& config,
                      double now, std::optional<StudentIndex> student = std::nullopt);

/// Among pool items tagged with `skill`, the one minimizing the mean
/// |recall - threshold| over its skills; ties go to the lowest item id.
/// Throws SchedulingError when no pool item covers the skill.
ItemIndex next_item(const FittedModel& model, SkillIndex skill, const CounterState& counters,
                    const SchedulerConfig& config, double now, std::optional<StudentIndex> student = std::nullopt);
ItemIndex next_item(const FittedModel& model, SkillIndex skill, std::span<const HistoryEvent> history,
                    const SchedulerConfig& config, double now, std::optional<StudentIndex> student = std::nullopt);

enum class Policy { threshold, random };

Policy parse_policy(std::string_view name);
std::string_view to_string(Policy policy);

struct SimulationConfig {
    Policy policy = Policy::threshold;
    SchedulerConfig scheduler;
    /// Days simulated; sessions start at day 0, interval, 2 * interval, ... while < horizon.
    double horizon = 60.0;
    double session_interval = 1.0;
    std::size_t items_per_session = 5;
    /// Gap between answers within a session, in days.
    double answer_gap = 1.0 / 1440.0;
    std::size_t students = 1;
    /// Hidden per-student ability added to the generator logit.
    double ability_stdev = 0.5;
    std::uint64_t seed = 42;
};

struct RetentionReport {
    Policy policy = Policy::threshold;
    std::uint64_t seed = 0;
    /// True end-of-horizon recall per skill, averaged over simulated students.
    std::vector<double> skill_recall;
    double mean_recall = 0.0;
    std::size_t answers = 0;
};

/// Simulated students answer scheduled items with probabilities sampled from
/// a linear (dim-0) generator; the policy sees the generator but not the ability.
RetentionReport simulate_policy(const FittedModel& generator, const SimulationConfig& config);

/// One-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p(std::size_t wins, std::size_t losses);

}  // namespace skilltrace
