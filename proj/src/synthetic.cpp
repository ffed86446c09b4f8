#include "skilltrace/synthetic.hpp"

#include <algorithm>
#include <array>
#include <random>

#include <fmt/format.h>

#include "skilltrace/error.hpp"
#include "skilltrace/random.hpp"

namespace skilltrace {

namespace {

constexpr std::array<double, 5> kWinShape = {0.6, 0.4, 0.25, 0.1, 0.05};
constexpr std::array<double, 5> kAttemptShape = {0.2, 0.15, 0.1, 0.05, 0.02};

ItemIndex pick(const std::vector<ItemIndex>& pool, Rng& rng) { return pool[uniform_below(rng, pool.size())]; }

}  // namespace

FittedModel synthetic_generator(const SyntheticConfig& config) {
    if (config.skills == 0 || config.items == 0 || config.students == 0) {
        throw ConfigError("synthetic world needs students, items and skills");
    }
    Rng rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    Vocabulary v;
    for (std::size_t s = 0; s < config.students; ++s) v.students.push_back(fmt::format("s{:04}", s));
    for (std::size_t j = 0; j < config.items; ++j) v.items.push_back(fmt::format("i{:03}", j));
    for (std::size_t k = 0; k < config.skills; ++k) v.skills.push_back(fmt::format("k{:02}", k));
    v.qmatrix.resize(config.items, config.skills);
    for (std::size_t j = 0; j < config.items; ++j) {
        // Round-robin primary skill so every skill has items.
        const auto primary = static_cast<SkillIndex>(j % config.skills);
        v.qmatrix.add(static_cast<ItemIndex>(j), primary);
        if (config.skills > 1 && uniform_unit(rng) < config.multi_skill_fraction) {
            auto second = static_cast<SkillIndex>(uniform_below(rng, config.skills - 1));
            if (second >= primary) ++second;
            v.qmatrix.add(static_cast<ItemIndex>(j), second);
        }
    }

    const ModelSpec spec{Family::das3h, 0, WindowSet::standard()};
    const Dimensions dims{config.students, config.items, config.skills};
    FittedModel model;
    model.layout = feature_layout(spec, dims);
    model.vocabulary = std::move(v);
    const std::size_t n = model.layout.feature_count();
    model.feature_counts.assign(n, 1);

    LogisticFit fit;
    fit.params.weights.assign(n, 0.0);
    fit.params.intercept = 0.0;
    fit.converged = true;
    auto& w = fit.params.weights;
    const auto users = model.layout.block(BlockKind::users).offset;
    const auto items = model.layout.block(BlockKind::items).offset;
    const auto skills = model.layout.block(BlockKind::skills).offset;
    const auto wins = model.layout.block(BlockKind::wins).offset;
    const auto attempts = model.layout.block(BlockKind::attempts).offset;
    const std::size_t W = spec.windows.size();
    for (std::size_t s = 0; s < config.students; ++s) w[users + s] = config.user_stdev * normal(rng);
    for (std::size_t j = 0; j < config.items; ++j) w[items + j] = config.item_stdev * normal(rng);
    for (std::size_t k = 0; k < config.skills; ++k) {
        w[skills + k] = 0.3 * normal(rng);
        const double scale = 0.6 + 0.8 * uniform_unit(rng);
        for (std::size_t u = 0; u < W; ++u) {
            if (config.forgetting) {
                w[wins + k * W + u] = scale * kWinShape[u];
                w[attempts + k * W + u] = scale * kAttemptShape[u];
            } else if (u + 1 == W) {
                // Only the all-time window carries practice, identically for every skill.
                w[wins + k * W + u] = 0.3;
                w[attempts + k * W + u] = 0.0;
            }
        }
    }
    model.logistic = std::move(fit);
    return model;
}

SyntheticWorld generate_world(const SyntheticConfig& config) {
    SyntheticWorld world;
    world.truth = synthetic_generator(config);
    const FittedModel& truth = world.truth;
    const QMatrix& q = truth.vocabulary.qmatrix;
    Rng rng(config.seed ^ 0x5DEECE66DULL);

    std::vector<std::vector<ItemIndex>> pools(config.skills);
    for (SkillIndex k = 0; k < config.skills; ++k) pools[k] = q.items_with(k);
    std::vector<ItemIndex> all(config.items);
    for (std::size_t j = 0; j < config.items; ++j) all[j] = static_cast<ItemIndex>(j);

    Dataset& d = world.raw;
    d.students = truth.vocabulary.students;
    d.items = truth.vocabulary.items;
    d.skills = truth.vocabulary.skills;
    d.qmatrix = q;
    d.interactions.reserve(config.students * config.interactions_per_student);

    constexpr std::int64_t kMinute = 60, kHour = 3600, kDay = 86400;
    auto between = [&](std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(hi - lo + 1)));
    };

    CounterState counters;
    for (StudentIndex s = 0; s < config.students; ++s) {
        counters.clear();
        std::int64_t clock = 1'640'000'000 + between(0, 30 * kDay);
        std::size_t done = 0;
        while (done < config.interactions_per_student) {
            const auto focus = static_cast<SkillIndex>(uniform_below(rng, config.skills));
            const std::size_t length = 3 + uniform_below(rng, 10);
            for (std::size_t i = 0; i < length && done < config.interactions_per_student; ++i, ++done) {
                const ItemIndex item = uniform_unit(rng) < 0.7 ? pick(pools[focus], rng) : pick(all, rng);
                const auto item_skills = q.skills_of(item);
                const double t = static_cast<double>(clock) / kDay;
                RowRequest request;
                request.student = s;
                request.items = {{item, 1.0}};
                request.skills.assign(item_skills.begin(), item_skills.end());
                request.time = t;
                const double p = predict_proba(truth.linear(), build_row(truth.layout, counters, request));
                const bool correct = uniform_unit(rng) < p;
                d.interactions.push_back({s, item, t, correct, false});
                record_interaction(truth.spec(), counters, item, item_skills, t, correct);
                clock += between(kMinute, 5 * kMinute);
            }
            const double r = uniform_unit(rng);
            if (r < 0.4) {
                clock += between(2 * kHour, 12 * kHour);
            } else if (r < 0.75) {
                clock += between(kDay, 4 * kDay);
            } else {
                clock += between(7 * kDay, 30 * kDay);
            }
        }
    }
    return world;
}

}  // namespace skilltrace
