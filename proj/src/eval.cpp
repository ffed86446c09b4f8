#include "skilltrace/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "skilltrace/error.hpp"

namespace skilltrace {

namespace {

void check_sizes(std::size_t a, std::size_t b) {
    if (a != b) throw DimensionError(fmt::format("{} predictions but {} labels", a, b));
}

nlohmann::json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}, {"count", m.count}}; }

std::uint64_t fold_seed(std::uint64_t seed, std::size_t spec_index, std::uint32_t fold) {
    std::uint64_t h = seed + 0x9E3779B97F4A7C15ULL * (spec_index + 1);
    h ^= (h >> 30) * 0xBF58476D1CE4E5B9ULL + fold;
    h ^= (h >> 27) * 0x94D049BB133111EBULL;
    return h ^ (h >> 31);
}

}  // namespace

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_sizes(scores.size(), labels.size());
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the Mann-Whitney count, kept integral: 2 per ordered pair, 1 per tie.
    std::uint64_t doubled = 0, negatives_below = 0, positives = 0, negatives = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::uint64_t pos = 0, neg = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] != 0) ++pos; else ++neg;
            ++j;
        }
        doubled += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        positives += pos;
        negatives += neg;
        i = j;
    }
    if (positives == 0 || negatives == 0) throw MetricError("AUC is undefined when only one class is present");
    return static_cast<double>(doubled) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double nll(std::span<const double> probs, std::span<const std::uint8_t> labels) {
    check_sizes(probs.size(), labels.size());
    if (probs.empty()) throw MetricError("NLL of an empty prediction set");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], kNllClip, 1.0 - kNllClip);
        total += labels[i] != 0 ? std::log(p) : std::log1p(-p);
    }
    return -total / static_cast<double>(probs.size());
}

double accuracy(std::span<const double> probs, std::span<const std::uint8_t> labels, double threshold) {
    check_sizes(probs.size(), labels.size());
    if (probs.empty()) throw MetricError("accuracy of an empty prediction set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if ((probs[i] >= threshold) == (labels[i] != 0)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(probs.size());
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd m;
    m.count = values.size();
    if (values.empty()) return m;
    m.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(sq / static_cast<double>(values.size()));
    return m;
}

const ModelResult& MetricsTable::find(Family family, std::uint32_t dim) const {
    for (const auto& m : models) {
        if (m.spec.family == family && m.spec.dim == dim) return m;
    }
    throw ConfigError(fmt::format("no result for {} d={}", to_string(family), dim));
}

MetricsTable cross_validate(const Dataset& dataset, std::span<const ModelSpec> specs, const CvOptions& options) {
    if (!dataset.preprocessed) throw ConfigError("cross_validate requires a preprocessed dataset");
    for (const auto& spec : specs) spec.validate();
    const FoldAssignment folds = student_kfold(dataset, options.k, options.seed);
    const Vocabulary vocabulary = Vocabulary::of(dataset);

    MetricsTable table;
    table.k = options.k;
    table.seed = options.seed;

    for (std::size_t s = 0; s < specs.size(); ++s) {
        const ModelSpec& spec = specs[s];
        spdlog::info("cv: encoding {}", spec.label());
        const DesignMatrix matrix = encode_dataset(dataset, spec);

        std::vector<std::vector<std::size_t>> test_rows(options.k), train_rows(options.k);
        for (std::size_t r = 0; r < matrix.rows(); ++r) {
            const auto fold = folds.fold_of_student[matrix.meta(r).student];
            for (std::uint32_t f = 0; f < options.k; ++f) (f == fold ? test_rows : train_rows)[f].push_back(r);
        }

        ModelResult result;
        result.spec = spec;
        result.folds.resize(options.k);
        std::vector<std::string> fold_warnings(options.k);
        std::vector<std::exception_ptr> errors(options.k);

        auto run_fold = [&](std::uint32_t f) {
            const DesignMatrix train = matrix.select(train_rows[f]);
            const DesignMatrix test = matrix.select(test_rows[f]);
            TrainConfig config = options.train;
            config.gibbs.seed = fold_seed(options.seed, s, f);
            std::vector<double> probs;
            FittedModel model = train_model(train, config, vocabulary, &test, &probs);

            FoldMetrics& m = result.folds[f];
            m.fold = f;
            m.train_rows = train.rows();
            m.test_rows = test.rows();
            m.converged = !model.logistic || model.logistic->converged;
            try {
                m.auc = auc(probs, test.labels());
            } catch (const MetricError&) {
                fold_warnings[f] = fmt::format("{} fold {}: single-class test labels, AUC undefined and excluded",
                                               spec.label(), f);
            }
            m.nll = nll(probs, test.labels());
            m.acc = accuracy(probs, test.labels());
            if (options.on_model) options.on_model(spec, f, model);
            spdlog::info("cv: {} fold {} auc={} nll={:.4f}", spec.label(), f,
                         m.auc ? fmt::format("{:.4f}", *m.auc) : std::string("n/a"), m.nll);
        };

        const std::size_t workers = std::clamp<std::size_t>(options.threads, 1, options.k);
        std::atomic<std::uint32_t> next{0};
        auto worker = [&] {
            for (std::uint32_t f = next++; f < options.k; f = next++) {
                try {
                    run_fold(f);
                } catch (...) {
                    errors[f] = std::current_exception();
                }
            }
        };
        if (workers == 1) {
            worker();
        } else {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        }
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }

        std::vector<double> aucs, nlls, accs;
        for (std::uint32_t f = 0; f < options.k; ++f) {
            const auto& m = result.folds[f];
            if (m.auc) aucs.push_back(*m.auc);
            nlls.push_back(m.nll);
            accs.push_back(m.acc);
            if (!fold_warnings[f].empty()) {
                spdlog::warn("{}", fold_warnings[f]);
                result.warnings.push_back(fold_warnings[f]);
            }
            if (!m.converged) {
                result.warnings.push_back(fmt::format("{} fold {}: optimizer hit the iteration cap", spec.label(), f));
            }
        }
        result.auc = mean_std(aucs);
        result.nll = mean_std(nlls);
        result.acc = mean_std(accs);
        table.models.push_back(std::move(result));
    }
    return table;
}

nlohmann::json to_json(const MetricsTable& table) {
    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : table.models) {
        nlohmann::json folds = nlohmann::json::array();
        for (const auto& f : m.folds) {
            folds.push_back({{"fold", f.fold},
                             {"auc", f.auc ? nlohmann::json(*f.auc) : nlohmann::json(nullptr)},
                             {"nll", f.nll},
                             {"acc", f.acc},
                             {"train_rows", f.train_rows},
                             {"test_rows", f.test_rows},
                             {"converged", f.converged}});
        }
        models.push_back({{"model", std::string(to_string(m.spec.family))},
                          {"dim", m.spec.dim},
                          {"spec", to_json(m.spec)},
                          {"auc", to_json(m.auc)},
                          {"nll", to_json(m.nll)},
                          {"acc", to_json(m.acc)},
                          {"folds", folds},
                          {"warnings", m.warnings}});
    }
    return {{"k", table.k}, {"seed", table.seed}, {"models", models}};
}

std::string format_table(const MetricsTable& table) {
    std::vector<const ModelResult*> rows;
    for (const auto& m : table.models) rows.push_back(&m);
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ModelResult* a, const ModelResult* b) { return a->auc.mean > b->auc.mean; });
    std::string out = fmt::format("{:<18} {:>4}  {:>15}  {:>15}  {:>15}\n", "model", "dim", "AUC", "NLL", "ACC");
    for (const auto* m : rows) {
        out += fmt::format("{:<18} {:>4}  {:>7.3f} ± {:<5.3f}  {:>7.3f} ± {:<5.3f}  {:>7.3f} ± {:<5.3f}\n",
                           to_string(m->spec.family), m->spec.dim, m->auc.mean, m->auc.std, m->nll.mean, m->nll.std,
                           m->acc.mean, m->acc.std);
    }
    return out;
}

AblationReport ablation_suite(const Dataset& dataset, const CvOptions& options, const WindowSet& windows) {
    const std::vector<ModelSpec> specs = {
        {Family::das3h, 0, windows},   {Family::das3h_plaincounts, 0, windows}, {Family::das3h_1p, 0, windows},
        {Family::dash_items, 0, windows}, {Family::dash_kc, 0, windows},
    };
    AblationReport report;
    report.table = cross_validate(dataset, specs, options);

    auto compare = [&](std::string name, Family full, Family ablated) {
        AblationComparison c;
        c.name = std::move(name);
        const auto& a = report.table.find(full, 0);
        const auto& b = report.table.find(ablated, 0);
        c.full = a.spec;
        c.ablated = b.spec;
        for (std::size_t f = 0; f < a.folds.size(); ++f) {
            if (a.folds[f].auc && b.folds[f].auc) c.fold_deltas.push_back(*a.folds[f].auc - *b.folds[f].auc);
        }
        c.delta = mean_std(c.fold_deltas);
        report.comparisons.push_back(std::move(c));
    };
    compare("time_windows_vs_plain_counts", Family::das3h, Family::das3h_plaincounts);
    compare("per_skill_vs_shared_parameters", Family::das3h, Family::das3h_1p);
    compare("dash_items_vs_dash_kc", Family::dash_items, Family::dash_kc);
    return report;
}

std::string fold_auc_csv(const MetricsTable& table, const std::string& dataset_name) {
    std::string out = "dataset,model,fold,auc\n";
    for (const auto& m : table.models) {
        for (const auto& f : m.folds) {
            out += fmt::format("{},{},{},{}\n", dataset_name, m.spec.label(), f.fold,
                               f.auc ? fmt::format("{:.6f}", *f.auc) : std::string("NA"));
        }
    }
    return out;
}

std::string ablation_delta_csv(const AblationReport& report, const std::string& dataset_name) {
    std::string out = "dataset,comparison,fold,delta_auc\n";
    for (const auto& c : report.comparisons) {
        for (std::size_t f = 0; f < c.fold_deltas.size(); ++f) {
            out += fmt::format("{},{},{},{:.6f}\n", dataset_name, c.name, f, c.fold_deltas[f]);
        }
    }
    return out;
}

nlohmann::json to_json(const AblationReport& report) {
    nlohmann::json comparisons = nlohmann::json::array();
    for (const auto& c : report.comparisons) {
        comparisons.push_back({{"name", c.name},
                               {"full", c.full.label()},
                               {"ablated", c.ablated.label()},
                               {"fold_deltas", c.fold_deltas},
                               {"delta", to_json(c.delta)}});
    }
    return {{"metrics", to_json(report.table)}, {"comparisons", comparisons}};
}

}  // namespace skilltrace
