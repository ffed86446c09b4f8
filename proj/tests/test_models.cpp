#include <doctest.h>

#include "skilltrace/error.hpp"
#include "skilltrace/eval.hpp"
#include "skilltrace/synthetic.hpp"
#include "support.hpp"

using namespace skilltrace;

TEST_CASE("sigmoid and softplus are stable") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(softplus(800.0) == doctest::Approx(800.0));
    CHECK(softplus(-800.0) >= 0.0);
}

TEST_CASE("logistic gradient matches central differences") {
    Rng rng(3);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = testing::random_matrix(rng, 30, 4, 5);
        LinearParams p;
        for (std::size_t i = 0; i < m.cols(); ++i) p.weights.push_back(normal(rng));
        p.intercept = normal(rng);
        p.l2_strength = uniform_unit(rng) * 2.0;
        CHECK(testing::gradient_relative_error(p, m) < 1e-5);
    }
}

TEST_CASE("intercept-only fit recovers the log-odds of the mean label") {
    DesignMatrix m(feature_layout({Family::irt, 0, WindowSet::standard()}, {1, 1, 1}));
    for (int i = 0; i < 10; ++i) {
        SparseVector v;
        v.label = i < 7;
        m.push_back(v);
    }
    const auto fit = fit_logistic(m, m.labels(), {});
    CHECK(fit.converged);
    CHECK(fit.params.intercept == doctest::Approx(std::log(0.7 / 0.3)).epsilon(1e-5));
}

TEST_CASE("penalized loss never increases across accepted steps") {
    Rng rng(9);
    const auto m = testing::random_matrix(rng, 200, 10, 10);
    const auto fit = fit_logistic(m, m.labels(), {});
    REQUIRE(fit.loss_trace.size() >= 2);
    for (std::size_t i = 1; i < fit.loss_trace.size(); ++i) CHECK(fit.loss_trace[i] <= fit.loss_trace[i - 1]);
    CHECK(fit.converged);
    CHECK(fit.gradient_norm < 1e-6);
}

TEST_CASE("stronger L2 shrinks the weights") {
    Rng rng(10);
    const auto m = testing::random_matrix(rng, 200, 10, 10);
    LogisticConfig weak, strong;
    weak.l2_strength = 0.01;
    strong.l2_strength = 100.0;
    auto norm = [](const std::vector<double>& w) {
        double s = 0.0;
        for (double x : w) s += x * x;
        return s;
    };
    CHECK(norm(fit_logistic(m, m.labels(), strong).params.weights) <
          norm(fit_logistic(m, m.labels(), weak).params.weights));
}

TEST_CASE("logistic fit rejects bad input") {
    Rng rng(1);
    const auto m = testing::random_matrix(rng, 10, 2, 2);
    std::vector<std::uint8_t> short_labels(5, 1);
    CHECK_THROWS_AS(fit_logistic(m, short_labels, {}), DimensionError);
    LinearParams p;
    p.weights.assign(2, 0.0);
    SparseVector v;
    v.indices = {3};
    v.values = {1.0};
    CHECK_THROWS_AS(predict_proba(p, v), DimensionError);
}

TEST_CASE("fm_score equals the pairwise sum") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = testing::random_fm_params(rng, 25, 1 + static_cast<std::uint32_t>(uniform_below(rng, 8)));
        const auto x = testing::random_sparse_row(rng, 25, 8);
        CHECK(std::abs(fm_score(p, x) - testing::brute_fm_score(p, x)) < 1e-10);
    }
}

TEST_CASE("Gibbs sampler learns a synthetic signal and is reproducible") {
    SyntheticConfig c;
    c.students = 60;
    c.items = 20;
    c.skills = 3;
    c.interactions_per_student = 40;
    const Dataset d = preprocess(generate_world(c).raw);
    const auto m = encode_dataset(d, {Family::das3h, 2, WindowSet::standard()});
    std::vector<std::size_t> train, test;
    for (std::size_t r = 0; r < m.rows(); ++r) (m.meta(r).student % 4 == 0 ? test : train).push_back(r);
    const auto tr = m.select(train);
    const auto te = m.select(test);
    GibbsConfig g;
    g.iterations = 60;
    const auto a = fit_fm_gibbs(tr, tr.labels(), 2, g, &te);
    const auto b = fit_fm_gibbs(tr, tr.labels(), 2, g, &te);
    CHECK(a.eval_predictions == b.eval_predictions);
    for (double p : a.eval_predictions) CHECK((p > 0.0 && p < 1.0));
    CHECK(auc(a.eval_predictions, te.labels()) > 0.65);
    CHECK(a.model.samples.size() <= g.retain_samples);
    CHECK(a.model.averaged_samples == 30);
    // Chain-averaged predictions of the retained samples stay close to the online average.
    double gap = 0.0;
    for (std::size_t r = 0; r < te.rows(); ++r) gap += std::abs(fm_predict(a.model, te.row(r)) - a.eval_predictions[r]);
    CHECK(gap / static_cast<double>(te.rows()) < 0.05);
}

TEST_CASE("models round-trip through JSON files") {
    const Dataset d = preprocess(load_interactions(testing::fixture_dir() / "interactions.csv", "generic:s"));
    const auto dir = testing::scratch_dir("models");
    for (std::uint32_t dim : {0u, 2u}) {
        const auto m = encode_dataset(d, {Family::das3h, dim, WindowSet::standard()});
        TrainConfig config;
        config.gibbs.iterations = 20;
        const auto model = train_model(m, config, Vocabulary::of(d));
        save_model(model, dir / "m.json");
        const auto back = load_model(dir / "m.json");
        CHECK(back.layout == model.layout);
        CHECK(back.vocabulary == model.vocabulary);
        for (std::size_t r = 0; r < m.rows(); r += 17) CHECK(predict(back, m.row(r)) == predict(model, m.row(r)));
    }
}
