#include <doctest.h>

#include <numbers>

#include "skilltrace/analysis.hpp"
#include "skilltrace/error.hpp"
#include "support.hpp"

using namespace skilltrace;

TEST_CASE("slope is zero when every window weight is zero") {
    auto h = testing::hand_model({{0}, {1}}, 2);
    h.skill_bias(0) = 0.7;
    const std::vector<FittedModel> models = {h.model};
    const auto e = forgetting_slope(models, 0);
    CHECK(e.mean_drop_pct == 0.0);
    CHECK(e.std_pct == 0.0);
    CHECK(e.window_pairs == 4);
    CHECK(e.folds == 1);
}

TEST_CASE("slope matches direct substitution") {
    // One win and one attempt in every window, win weight 0.5 everywhere, base logit 0:
    // z = 5 * 0.5 * ln 2, and each exit removes 0.5 * ln 2.
    auto h = testing::hand_model({{0}}, 1);
    for (std::size_t w = 0; w < 5; ++w) h.win(0, w) = 0.5;
    const std::vector<FittedModel> models = {h.model, h.model};
    const auto e = forgetting_slope(models, 0);
    const double before = std::pow(2.0, 2.5) / (1.0 + std::pow(2.0, 2.5));
    const double after = 4.0 / 5.0;
    CHECK(e.mean_drop_pct == doctest::Approx(100.0 * (before - after)).epsilon(1e-12));
    CHECK(e.std_pct == doctest::Approx(0.0));
    CHECK(e.folds == 2);

    const auto all = forgetting_slope(models, 0, {true});
    CHECK(all.window_pairs == 10);
}

TEST_CASE("positive win weights never give negative slopes") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        auto h = testing::hand_model({{0}, {0, 1}}, 2);
        h.intercept() = uniform_unit(rng) * 4 - 2;
        h.skill_bias(0) = uniform_unit(rng) * 2 - 1;
        for (std::size_t w = 0; w < 5; ++w) h.win(0, w) = uniform_unit(rng);
        const std::vector<FittedModel> models = {h.model};
        CHECK(forgetting_slope(models, 0, {true}).mean_drop_pct >= 0.0);
    }
}

TEST_CASE("skills without training rows are flagged") {
    auto h = testing::hand_model({{0}, {1}}, 2);
    h.model.feature_counts[h.model.layout.block(BlockKind::skills).offset + 1] = 0;
    const std::vector<FittedModel> models = {h.model};
    const auto entries = forgetting_slopes(models);
    REQUIRE(entries.size() == 2);
    CHECK_FALSE(entries[0].unseen);
    CHECK(entries[1].unseen);
    CHECK(slopes_csv(entries).rfind("skill_id,mean_drop_pct,std", 0) == 0);
}

TEST_CASE("slopes need DAS3H dim-0 models") {
    auto h = testing::hand_model({{0}}, 1, {}, {}, Family::das3h_1p);
    const std::vector<FittedModel> models = {h.model};
    CHECK_THROWS_AS(forgetting_slope(models, 0), ConfigError);
}

TEST_CASE("recent wins raise recall over an idle month") {
    auto h = testing::hand_model({{0}}, 1);
    h.win(0, 0) = 0.8;
    h.win(0, 1) = 0.5;
    h.win(0, 2) = 0.2;
    const std::vector<HistoryEvent> history = {{0, 0.0, true}, {0, 0.01, true}, {0, 0.02, true}};
    const double soon = recall_probability(h.model, history, {std::nullopt, {0}, std::nullopt, 0.03});
    const double later = recall_probability(h.model, history, {std::nullopt, {0}, std::nullopt, 30.02});
    CHECK(soon > later);
}

TEST_CASE("with no history recall depends only on biases") {
    auto h = testing::hand_model({{0}, {0}, {1}}, 2);
    h.intercept() = 0.2;
    h.skill_bias(0) = -0.4;
    h.item_bias(0) = 1.0;
    h.item_bias(1) = -0.6;
    h.item_bias(2) = 9.0;
    // Item-less queries average the biases of the skill's items.
    CHECK(recall_probability(h.model, std::vector<HistoryEvent>{}, {std::nullopt, {0}, std::nullopt, 5.0}) ==
          doctest::Approx(sigmoid(0.2 - 0.4 + 0.2)));
    CHECK(recall_probability(h.model, std::vector<HistoryEvent>{}, {std::nullopt, {0}, ItemIndex{0}, 5.0}) ==
          doctest::Approx(sigmoid(0.2 - 0.4 + 1.0)));
}

TEST_CASE("events after the query time are ignored") {
    auto h = testing::hand_model({{0}}, 1);
    for (std::size_t w = 0; w < 5; ++w) h.win(0, w) = 0.3;
    const std::vector<HistoryEvent> past = {{0, 1.0, true}};
    std::vector<HistoryEvent> with_future = past;
    with_future.push_back({0, 9.0, true});
    with_future.push_back({0, 3.5, false});
    const RecallQuery q{std::nullopt, {0}, std::nullopt, 3.0};
    CHECK(recall_probability(h.model, with_future, q) == recall_probability(h.model, past, q));
}

TEST_CASE("a zero-weight extra skill leaves recall unchanged") {
    auto h = testing::hand_model({{0, 1}}, 2);
    h.skill_bias(0) = 0.3;
    for (std::size_t w = 0; w < 5; ++w) h.win(0, w) = 0.2;
    const std::vector<HistoryEvent> history = {{0, 0.0, true}, {0, 2.0, false}};
    const double one = recall_probability(h.model, history, {std::nullopt, {0}, ItemIndex{0}, 3.0});
    const double two = recall_probability(h.model, history, {std::nullopt, {0, 1}, ItemIndex{0}, 3.0});
    CHECK(one == two);
}

TEST_CASE("recall queries validate their input") {
    auto h = testing::hand_model({{0}}, 1);
    CHECK_THROWS_AS(recall_probability(h.model, std::vector<HistoryEvent>{}, {std::nullopt, {}, std::nullopt, 1.0}), ConfigError);
    CHECK_THROWS_AS(recall_probability(h.model, std::vector<HistoryEvent>{}, {std::nullopt, {3}, std::nullopt, 1.0}), ConfigError);
    auto items = testing::hand_model({{0}}, 1, {}, {}, Family::dash_items);
    CHECK_THROWS_AS(recall_probability(items.model, std::vector<HistoryEvent>{}, {std::nullopt, {0}, std::nullopt, 1.0}), ConfigError);
}
