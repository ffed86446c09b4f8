#include "skilltrace/scheduler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "skilltrace/error.hpp"
#include "skilltrace/random.hpp"

namespace skilltrace {

namespace {

std::optional<std::uint64_t> as_integer(std::string_view s) {
    std::uint64_t v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

std::vector<SkillIndex> skill_candidates(const FittedModel& model, const SchedulerConfig& config) {
    if (!config.skill_pool.empty()) return config.skill_pool;
    std::vector<SkillIndex> all(model.vocabulary.qmatrix.skill_count());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<SkillIndex>(k);
    return all;
}

std::vector<ItemIndex> item_candidates(const FittedModel& model, const SchedulerConfig& config, SkillIndex skill) {
    const QMatrix& q = model.vocabulary.qmatrix;
    std::vector<ItemIndex> out;
    if (config.item_pool.empty()) return q.items_with(skill);
    for (ItemIndex j : config.item_pool) {
        if (j >= q.item_count()) throw ConfigError(fmt::format("item index {} out of range", j));
        const auto skills = q.skills_of(j);
        if (std::binary_search(skills.begin(), skills.end(), skill)) out.push_back(j);
    }
    return out;
}

double skill_recall(const FittedModel& model, const CounterState& counters, SkillIndex k, double now,
                    std::optional<StudentIndex> student) {
    return recall_probability(model, counters, RecallQuery{student, {k}, std::nullopt, now});
}

const std::string& id_of(const std::vector<std::string>& ids, std::size_t i) {
    static const std::string empty;
    return i < ids.size() ? ids[i] : empty;
}

}  // namespace

void SchedulerConfig::validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError(fmt::format("threshold {} outside (0, 1)", threshold));
}

bool id_less(std::string_view a, std::string_view b) {
    const auto x = as_integer(a);
    const auto y = as_integer(b);
    if (x && y) return *x != *y ? *x < *y : a < b;
    return a < b;
}

SkillIndex next_skill(const FittedModel& model, const CounterState& counters, const SchedulerConfig& config, double now,
                      std::optional<StudentIndex> student) {
    config.validate();
    const auto candidates = skill_candidates(model, config);
    if (candidates.empty()) throw SchedulingError("skill pool is empty");
    const auto& ids = model.vocabulary.skills;
    std::optional<SkillIndex> best;
    double best_distance = 0.0;
    for (SkillIndex k : candidates) {
        const double distance = std::abs(skill_recall(model, counters, k, now, student) - config.threshold);
        if (!best || distance < best_distance ||
            (distance == best_distance && id_less(id_of(ids, k), id_of(ids, *best)))) {
            best = k;
            best_distance = distance;
        }
    }
    return *best;
}

SkillIndex next_skill(const FittedModel& model, std::span<const HistoryEvent> history, const SchedulerConfig& config,
                      double now, std::optional<StudentIndex> student) {
    return next_skill(model, history_counters(model, history, now), config, now, student);
}

ItemIndex next_item(const FittedModel& model, SkillIndex skill, const CounterState& counters,
                    const SchedulerConfig& config, double now, std::optional<StudentIndex> student) {
    config.validate();
    const auto candidates = item_candidates(model, config, skill);
    if (candidates.empty()) {
        throw SchedulingError(fmt::format("no item in the pool covers skill {}", id_of(model.vocabulary.skills, skill)));
    }
    const QMatrix& q = model.vocabulary.qmatrix;
    const auto& ids = model.vocabulary.items;
    std::vector<std::optional<double>> recall(q.skill_count());
    std::optional<ItemIndex> best;
    double best_score = 0.0;
    for (ItemIndex j : candidates) {
        double score = 0.0;
        const auto skills = q.skills_of(j);
        for (SkillIndex k : skills) {
            if (!recall[k]) recall[k] = skill_recall(model, counters, k, now, student);
            score += std::abs(*recall[k] - config.threshold);
        }
        score /= static_cast<double>(skills.size());
        if (!best || score < best_score || (score == best_score && id_less(id_of(ids, j), id_of(ids, *best)))) {
            best = j;
            best_score = score;
        }
    }
    return *best;
}

ItemIndex next_item(const FittedModel& model, SkillIndex skill, std::span<const HistoryEvent> history,
                    const SchedulerConfig& config, double now, std::optional<StudentIndex> student) {
    return next_item(model, skill, history_counters(model, history, now), config, now, student);
}

Policy parse_policy(std::string_view name) {
    if (name == "threshold") return Policy::threshold;
    if (name == "random") return Policy::random;
    throw ConfigError(fmt::format("unknown policy '{}'", name));
}

std::string_view to_string(Policy policy) { return policy == Policy::threshold ? "threshold" : "random"; }

RetentionReport simulate_policy(const FittedModel& generator, const SimulationConfig& config) {
    config.scheduler.validate();
    if (!(config.horizon >= 0.0)) throw ConfigError("horizon must be nonnegative");
    if (!(config.session_interval > 0.0)) throw ConfigError("session interval must be positive");
    const LinearParams& params = generator.linear();
    const QMatrix& q = generator.vocabulary.qmatrix;
    const auto skills = skill_candidates(generator, config.scheduler);
    if (skills.empty()) throw SchedulingError("skill pool is empty");

    RetentionReport report;
    report.policy = config.policy;
    report.seed = config.seed;
    report.skill_recall.assign(skills.size(), 0.0);
    Rng rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    auto true_probability = [&](const CounterState& counters, const RecallQuery& query, double ability) {
        return sigmoid(linear_score(params, recall_row(generator, counters, query)) + ability);
    };

    for (std::size_t student = 0; student < config.students; ++student) {
        const double ability = config.ability_stdev * normal(rng);
        CounterState counters;
        for (double day = 0.0; day < config.horizon; day += config.session_interval) {
            for (std::size_t i = 0; i < config.items_per_session; ++i) {
                const double now = day + static_cast<double>(i) * config.answer_gap;
                SkillIndex skill;
                ItemIndex item;
                if (config.policy == Policy::threshold) {
                    skill = next_skill(generator, counters, config.scheduler, now);
                    item = next_item(generator, skill, counters, config.scheduler, now);
                } else {
                    skill = skills[uniform_below(rng, skills.size())];
                    const auto pool = item_candidates(generator, config.scheduler, skill);
                    if (pool.empty()) throw SchedulingError("no item in the pool covers the drawn skill");
                    item = pool[uniform_below(rng, pool.size())];
                }
                const auto item_skills = q.skills_of(item);
                RecallQuery query{std::nullopt, {item_skills.begin(), item_skills.end()}, item, now};
                const bool correct = uniform_unit(rng) < true_probability(counters, query, ability);
                record_interaction(generator.spec(), counters, item, item_skills, now, correct);
                ++report.answers;
            }
        }
        for (std::size_t s = 0; s < skills.size(); ++s) {
            const RecallQuery query{std::nullopt, {skills[s]}, std::nullopt, config.horizon};
            report.skill_recall[s] += true_probability(counters, query, ability);
        }
    }
    for (double& r : report.skill_recall) r /= static_cast<double>(std::max<std::size_t>(config.students, 1));
    double total = 0.0;
    for (double r : report.skill_recall) total += r;
    report.mean_recall = total / static_cast<double>(report.skill_recall.size());
    return report;
}

double sign_test_p(std::size_t wins, std::size_t losses) {
    const std::size_t n = wins + losses;
    if (n == 0) return 1.0;
    double p = 0.0;
    for (std::size_t i = wins; i <= n; ++i) {
        const double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) -
                                static_cast<double>(n) * std::log(2.0);
        p += std::exp(log_term);
    }
    return std::min(p, 1.0);
}

}  // namespace skilltrace
