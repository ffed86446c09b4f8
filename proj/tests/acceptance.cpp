// Acceptance suite: one PASS/FAIL/SKIP line per criterion, nonzero exit on a required failure.
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "skilltrace/eval.hpp"
#include "skilltrace/scheduler.hpp"
#include "skilltrace/synthetic.hpp"
#include "support.hpp"

using namespace skilltrace;

namespace {

struct Outcome {
    enum class Status { pass, fail, skip } status = Status::pass;
    std::string detail;
};

Outcome pass(std::string detail) { return {Outcome::Status::pass, std::move(detail)}; }
Outcome fail(std::string detail) { return {Outcome::Status::fail, std::move(detail)}; }
Outcome skip(std::string detail) { return {Outcome::Status::skip, std::move(detail)}; }

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

Dataset fixture() { return preprocess(load_interactions(testing::fixture_dir() / "interactions.csv", "generic:s")); }

Outcome property_suite() {
    Rng rng(20240601);
    const WindowSet windows = WindowSet::standard();

    for (int trial = 0; trial < 1000; ++trial) {
        const double query = 100.0;
        const auto h = testing::random_history(rng, uniform_below(rng, 60), query);
        if (window_counts(h, query, windows) != testing::oracle_window_counts(h, query, windows)) {
            return fail(fmt::format("window_counts differs from the linear scan on history {}", trial));
        }
    }

    {
        const Dataset d = fixture();
        if (auto e = testing::check_das3h_encoding(d, encode_dataset(d, {Family::das3h, 0, windows}))) {
            return fail("fixture: " + *e);
        }
    }
    for (int trial = 0; trial < 100; ++trial) {
        const Dataset d = preprocess(testing::random_raw_dataset(rng), {0});
        if (auto e = testing::check_das3h_encoding(d, encode_dataset(d, {Family::das3h, 0, windows}))) {
            return fail(fmt::format("random dataset {}: {}", trial, *e));
        }
    }

    std::normal_distribution<double> normal(0.0, 1.0);
    double worst_gradient = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = testing::random_matrix(rng, 20 + uniform_below(rng, 40), 2 + uniform_below(rng, 5),
                                              2 + uniform_below(rng, 5));
        LinearParams p;
        for (std::size_t i = 0; i < m.cols(); ++i) p.weights.push_back(normal(rng));
        p.intercept = normal(rng);
        p.l2_strength = uniform_unit(rng) * 2.0;
        worst_gradient = std::max(worst_gradient, testing::gradient_relative_error(p, m));
    }
    if (!(worst_gradient < 1e-5)) return fail(fmt::format("gradient relative error {:.3g}", worst_gradient));

    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + uniform_below(rng, 99);
        std::vector<double> s(n);
        std::vector<std::uint8_t> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(uniform_below(rng, 20)) / 20.0;
            y[i] = uniform_unit(rng) < 0.5;
        }
        y[0] = 1;
        y[1] = 0;
        if (auc(s, y) != testing::oracle_auc(s, y)) return fail(fmt::format("auc differs from the oracle on {}", trial));
    }

    double worst_fm = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = testing::random_fm_params(rng, 40, 1 + static_cast<std::uint32_t>(uniform_below(rng, 10)));
        const auto x = testing::random_sparse_row(rng, 40, 12);
        worst_fm = std::max(worst_fm, std::abs(fm_score(p, x) - testing::brute_fm_score(p, x)));
    }
    if (!(worst_fm < 1e-10)) return fail(fmt::format("fm_score differs from brute force by {:.3g}", worst_fm));

    {
        const Dataset d = fixture();
        const std::size_t W = windows.size();
        const auto full = encode_dataset(d, {Family::das3h, 0, windows});
        const auto shared = encode_dataset(d, {Family::das3h_1p, 0, windows});
        const auto& lf = full.layout();
        const auto& ls = shared.layout();
        for (std::size_t r = 0; r < full.rows(); ++r) {
            std::vector<double> dense(lf.feature_count(), 0.0);
            const auto row = full.row_copy(r);
            for (std::size_t i = 0; i < row.indices.size(); ++i) dense[row.indices[i]] = row.values[i];
            std::vector<double> expected(ls.feature_count(), 0.0);
            for (std::size_t i = 0; i < lf.block(BlockKind::wins).offset; ++i) expected[i] = dense[i];
            for (std::size_t w = 0; w < W; ++w) {
                for (SkillIndex k : d.qmatrix.skills_of(d.interactions[r].item)) {
                    expected[ls.block(BlockKind::wins).offset + w] += dense[lf.block(BlockKind::wins).offset + k * W + w];
                    expected[ls.block(BlockKind::attempts).offset + w] +=
                        dense[lf.block(BlockKind::attempts).offset + k * W + w];
                }
            }
            std::vector<double> got(ls.feature_count(), 0.0);
            const auto srow = shared.row_copy(r);
            for (std::size_t i = 0; i < srow.indices.size(); ++i) got[srow.indices[i]] = srow.values[i];
            if (got != expected) return fail(fmt::format("shared-parameter row {} is not the skill sum", r));
        }
    }
    return pass(fmt::format("worst gradient error {:.2g}, worst fm gap {:.2g}", worst_gradient, worst_fm));
}

Outcome synthetic_recovery() {
    const SyntheticWorld world = generate_world({});
    const Dataset d = preprocess(world.raw);
    const std::vector<ModelSpec> specs = {{Family::das3h, 0, WindowSet::standard()},
                                          {Family::irt, 0, WindowSet::standard()},
                                          {Family::das3h_plaincounts, 0, WindowSet::standard()}};
    CvOptions options;
    options.threads = worker_count();
    const auto table = cross_validate(d, specs, options);
    const double das3h = table.find(Family::das3h, 0).auc.mean;
    const double irt = table.find(Family::irt, 0).auc.mean;
    const double plain = table.find(Family::das3h_plaincounts, 0).auc.mean;
    const auto detail = fmt::format("{} interactions, AUC das3h {:.4f}, irt {:.4f}, plain counts {:.4f}",
                                    d.interactions.size(), das3h, irt, plain);
    if (das3h - irt >= 0.02 && das3h - plain >= 0.01) return pass(detail);
    return fail(detail);
}

Outcome real_data_ordering() {
    const char* path = std::getenv("SKILLTRACE_ASSIST12");
    if (path == nullptr || *path == '\0') return skip("set SKILLTRACE_ASSIST12 to the raw assist12 log to run");
    const Dataset d = preprocess(load_interactions(path, "assist12"));
    std::vector<ModelSpec> specs;
    for (Family f : {Family::das3h, Family::das3h_1p, Family::dash_items, Family::dash_kc, Family::irt, Family::pfa,
                     Family::afm}) {
        specs.push_back({f, 0, WindowSet::standard()});
    }
    CvOptions options;
    options.threads = worker_count();
    const auto table = cross_validate(d, specs, options);
    auto mean = [&](Family f) { return table.find(f, 0).auc.mean; };
    const double das3h = mean(Family::das3h), irt = mean(Family::irt), dash = mean(Family::dash_kc);
    const double pfa = mean(Family::pfa), afm = mean(Family::afm);
    const double shared_delta = das3h - mean(Family::das3h_1p);
    const double dash_delta = mean(Family::dash_items) - dash;
    const bool ok = std::abs(das3h - 0.739) <= 0.015 && std::abs(irt - 0.702) <= 0.015 && das3h > dash &&
                    das3h > irt && dash > pfa && irt > pfa && pfa > afm && std::abs(shared_delta - 0.038) <= 0.01 &&
                    std::abs(dash_delta) <= 0.005;
    const auto detail =
        fmt::format("das3h {:.3f}, dash {:.3f}, irt {:.3f}, pfa {:.3f}, afm {:.3f}, shared delta {:+.3f}, "
                    "items-kc delta {:+.3f}",
                    das3h, dash, irt, pfa, afm, shared_delta, dash_delta);
    return ok ? pass(detail) : fail(detail);
}

Outcome scheduler_sanity() {
    const FittedModel g =
        synthetic_generator({.students = 1, .skills = 5, .items = 30, .multi_skill_fraction = 0.0, .seed = 42});
    std::size_t wins = 0, losses = 0;
    double threshold_sum = 0.0, random_sum = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        SimulationConfig config;
        config.horizon = 30.0;
        config.seed = 42 + s;
        const double a = simulate_policy(g, config).mean_recall;
        config.policy = Policy::random;
        const double b = simulate_policy(g, config).mean_recall;
        threshold_sum += a;
        random_sum += b;
        if (a > b) ++wins;
        if (a < b) ++losses;
    }
    const double p = sign_test_p(wins, losses);
    const auto detail = fmt::format("threshold wins {} of 100 ({} losses), mean recall {:.4f} vs {:.4f}, p = {:.3g}",
                                    wins, losses, threshold_sum / 100.0, random_sum / 100.0, p);
    return threshold_sum >= random_sum && p < 0.05 ? pass(detail) : fail(detail);
}

Outcome stats_fixture() {
    const Dataset d = preprocess(load_interactions(testing::fixture_dir() / "stats10.csv", "generic:days"), {0});
    const StatsReport s = dataset_stats(d);
    const bool ok = s.users == 3 && s.items == 3 && s.skills == 2 && s.interactions == 10 &&
                    s.mean_correctness == 0.6 && s.skills_per_item == 4.0 / 3.0 && s.mean_skill_delay == 1.5 &&
                    s.mean_study_period == 8.0 / 3.0;
    const auto detail = to_json(s).dump();
    return ok ? pass(detail) : fail(detail);
}

Outcome stats_real() {
    const char* path = std::getenv("SKILLTRACE_ASSIST12");
    if (path == nullptr || *path == '\0') return skip("set SKILLTRACE_ASSIST12 to the raw assist12 log to run");
    const StatsReport s = dataset_stats(preprocess(load_interactions(path, "assist12")));
    auto near = [](double got, double want, double unit) { return std::abs(got - want) <= unit / 2; };
    const bool ok = s.users == 24750 && s.items == 52976 && s.skills == 265 && s.interactions == 2692889 &&
                    near(s.mean_correctness, 0.696, 1e-3) && near(s.skills_per_item, 1.000, 1e-3) &&
                    near(s.mean_skill_delay, 8.54, 1e-2) && near(s.mean_study_period, 98.3, 1e-1);
    const auto detail = to_json(s).dump();
    return ok ? pass(detail) : fail(detail);
}

}  // namespace

int main() {
    struct Criterion {
        std::string name;
        std::function<Outcome()> run;
        bool required;
        double budget_seconds;
    };
    const std::vector<Criterion> criteria = {
        {"1 property suite", property_suite, true, 60},
        {"2 synthetic recovery", synthetic_recovery, true, 300},
        {"3 real-data ordering", real_data_ordering, false, 0},
        {"4 scheduler sanity", scheduler_sanity, true, 120},
        {"5 stats on the hand-built file", stats_fixture, true, 0},
        {"5 stats on real assist12", stats_real, false, 0},
    };
    bool ok = true;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = fail(std::string("exception: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (outcome.status == Outcome::Status::pass && c.budget_seconds > 0 && seconds > c.budget_seconds) {
            outcome = fail(fmt::format("{} (over the {:.0f} s budget)", outcome.detail, c.budget_seconds));
        }
        const char* label = outcome.status == Outcome::Status::pass ? "PASS"
                            : outcome.status == Outcome::Status::skip ? "SKIP"
                                                                      : "FAIL";
        std::cout << fmt::format("{} criterion {} [{:.1f} s]: {}\n", label, c.name, seconds, outcome.detail)
                  << std::flush;
        if (outcome.status == Outcome::Status::fail && c.required) ok = false;
    }
    return ok ? 0 : 1;
}
