#include "skilltrace/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "skilltrace/error.hpp"
#include "skilltrace/eval.hpp"

namespace skilltrace {

namespace {

// Mean weight over features of `block` listed in `features` that had training rows.
double mean_trained_weight(const FittedModel& model, const FeatureBlock& block, std::span<const std::uint32_t> features) {
    const auto& w = model.linear().weights;
    double sum = 0.0;
    std::size_t n = 0;
    for (auto f : features) {
        if (model.feature_counts[block.offset + f] == 0) continue;
        sum += w[block.offset + f];
        ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::vector<std::uint32_t> iota_vector(std::size_t n) {
    std::vector<std::uint32_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint32_t>(i);
    return v;
}

}  // namespace

SlopeEntry forgetting_slope(std::span<const FittedModel> models, SkillIndex skill, const SlopeOptions& options) {
    if (models.empty()) throw ConfigError("forgetting_slope needs at least one model");
    SlopeEntry entry;
    entry.skill = skill;
    std::vector<double> drops;
    for (const auto& model : models) {
        if (model.spec().family != Family::das3h || !model.is_linear()) {
            throw ConfigError("forgetting slopes need DAS3H dim-0 models, got " + model.spec().label());
        }
        const auto& layout = model.layout;
        if (skill >= layout.dims().skills) throw ConfigError(fmt::format("skill index {} out of range", skill));
        if (entry.skill_id.empty() && skill < model.vocabulary.skills.size()) {
            entry.skill_id = model.vocabulary.skills[skill];
        }
        const auto& skills_block = layout.block(BlockKind::skills);
        if (model.feature_counts[skills_block.offset + skill] == 0) continue;

        const auto& w = model.linear().weights;
        const std::size_t W = layout.spec().windows.size();
        const auto wins = layout.block(BlockKind::wins).offset + skill * W;
        const auto attempts = layout.block(BlockKind::attempts).offset + skill * W;
        const auto& users = layout.block(BlockKind::users);
        const auto& items = layout.block(BlockKind::items);
        const auto tagged = model.vocabulary.qmatrix.items_with(skill);

        double z = model.linear().intercept + mean_trained_weight(model, users, iota_vector(users.size)) +
                   mean_trained_weight(model, items, tagged) + w[skills_block.offset + skill];
        std::vector<double> step(W);
        for (std::size_t u = 0; u < W; ++u) {
            step[u] = (w[wins + u] + w[attempts + u]) * std::numbers::ln2;
            z += step[u];
        }
        const double p = sigmoid(z);
        std::size_t pairs = 0;
        for (std::size_t a = 0; a + 1 < W; ++a) {
            const std::size_t last = options.all_pairs ? W - 1 : a + 1;
            for (std::size_t b = a + 1; b <= last; ++b) {
                // The win sits in windows a..W-1 and moves to b..W-1: windows a..b-1 lose it.
                double z_after = z;
                for (std::size_t u = a; u < b; ++u) z_after -= step[u];
                drops.push_back(100.0 * (p - sigmoid(z_after)));
                ++pairs;
            }
        }
        entry.window_pairs = pairs;
        ++entry.folds;
    }
    if (entry.folds == 0) {
        entry.unseen = true;
        return entry;
    }
    const MeanStd m = mean_std(drops);
    entry.mean_drop_pct = m.mean;
    entry.std_pct = m.std;
    return entry;
}

std::vector<SlopeEntry> forgetting_slopes(std::span<const FittedModel> models, const SlopeOptions& options) {
    if (models.empty()) throw ConfigError("forgetting_slopes needs at least one model");
    std::vector<SlopeEntry> out;
    const auto skills = models.front().layout.dims().skills;
    for (SkillIndex k = 0; k < skills; ++k) out.push_back(forgetting_slope(models, k, options));
    return out;
}

std::string slopes_csv(std::span<const SlopeEntry> entries) {
    std::string out = "skill_id,mean_drop_pct,std,folds,window_pairs,unseen\n";
    for (const auto& e : entries) {
        out += fmt::format("{},{:.6f},{:.6f},{},{},{}\n", e.skill_id, e.mean_drop_pct, e.std_pct, e.folds,
                           e.window_pairs, e.unseen ? 1 : 0);
    }
    return out;
}

nlohmann::json to_json(std::span<const SlopeEntry> entries, const SlopeOptions& options) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : entries) {
        rows.push_back({{"skill_id", e.skill_id},
                        {"mean_drop_pct", e.mean_drop_pct},
                        {"std", e.std_pct},
                        {"folds", e.folds},
                        {"window_pairs", e.window_pairs},
                        {"unseen", e.unseen}});
    }
    return {{"averaging", options.all_pairs ? "all_pairs" : "adjacent_pairs"}, {"skills", rows}};
}

CounterState history_counters(const FittedModel& model, std::span<const HistoryEvent> history, double until) {
    const QMatrix& q = model.vocabulary.qmatrix;
    std::vector<HistoryEvent> past;
    for (const auto& e : history) {
        if (e.time <= until) past.push_back(e);
    }
    std::stable_sort(past.begin(), past.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
    CounterState counters;
    for (const auto& e : past) {
        if (e.item >= q.item_count()) throw ConfigError(fmt::format("history item index {} out of range", e.item));
        record_interaction(model.spec(), counters, e.item, q.skills_of(e.item), e.time, e.correct);
    }
    return counters;
}

SparseVector recall_row(const FittedModel& model, const CounterState& counters, const RecallQuery& query) {
    if (query.skills.empty()) throw ConfigError("recall query needs at least one skill");
    const ModelSpec& spec = model.spec();
    const QMatrix& q = model.vocabulary.qmatrix;
    RowRequest request;
    request.time = query.time;
    request.skills = query.skills;
    std::sort(request.skills.begin(), request.skills.end());
    request.skills.erase(std::unique(request.skills.begin(), request.skills.end()), request.skills.end());
    for (SkillIndex k : request.skills) {
        if (k >= q.skill_count()) throw ConfigError(fmt::format("skill index {} out of range", k));
    }
    if (query.student && *query.student < model.layout.dims().students) request.student = query.student;
    if (query.item) {
        if (*query.item >= q.item_count()) throw ConfigError(fmt::format("item index {} out of range", *query.item));
        request.items = {{*query.item, 1.0}};
        request.counter_item = query.item;
    } else {
        if (spec.family == Family::dash_items) throw ConfigError("dash_items recall queries need an item");
        std::vector<ItemIndex> pool;
        for (SkillIndex k : request.skills) {
            for (ItemIndex j : q.items_with(k)) pool.push_back(j);
        }
        std::sort(pool.begin(), pool.end());
        pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
        for (ItemIndex j : pool) request.items.emplace_back(j, 1.0 / static_cast<double>(pool.size()));
    }
    return build_row(model.layout, counters, request);
}

double recall_probability(const FittedModel& model, const CounterState& counters, const RecallQuery& query) {
    return predict(model, recall_row(model, counters, query));
}

double recall_probability(const FittedModel& model, std::span<const HistoryEvent> history, const RecallQuery& query) {
    if (query.skills.empty()) throw ConfigError("recall query needs at least one skill");
    return recall_probability(model, history_counters(model, history, query.time), query);
}

}  // namespace skilltrace
