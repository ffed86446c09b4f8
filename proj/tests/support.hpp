// Independent oracles and builders shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "skilltrace/corpus.hpp"
#include "skilltrace/encoder.hpp"
#include "skilltrace/fm.hpp"
#include "skilltrace/glm.hpp"
#include "skilltrace/model.hpp"
#include "skilltrace/random.hpp"

namespace testing {

using namespace skilltrace;

inline std::filesystem::path fixture_dir() { return SKILLTRACE_FIXTURE_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / fmt::format("skilltrace-test-{}", name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Brute-force window counts: scan every prior attempt against every window.
inline WindowCounts oracle_window_counts(const std::vector<PriorAttempt>& history, double query,
                                         const WindowSet& windows) {
    WindowCounts c;
    c.attempts.assign(windows.size(), 0);
    c.wins.assign(windows.size(), 0);
    for (const auto& h : history) {
        for (std::size_t w = 0; w < windows.size(); ++w) {
            if (query - h.time < windows[w]) {
                ++c.attempts[w];
                if (h.correct) ++c.wins[w];
            }
        }
    }
    return c;
}

// Times on a coarse grid of hours so that window boundaries are hit often.
inline double grid_time(Rng& rng, std::uint64_t max_hours) {
    return static_cast<double>(uniform_below(rng, max_hours + 1)) / 24.0;
}

inline std::vector<PriorAttempt> random_history(Rng& rng, std::size_t n, double query) {
    std::vector<PriorAttempt> h;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = uniform_unit(rng) < 0.5 ? query - grid_time(rng, 24 * 40) : query - 60.0 * uniform_unit(rng);
        h.push_back({t, uniform_unit(rng) < 0.6});
    }
    return h;
}

// Small raw dataset with random q-matrix, ties in time and multi-skill items.
inline Dataset random_raw_dataset(Rng& rng) {
    Dataset d;
    const std::size_t students = 1 + uniform_below(rng, 5);
    const std::size_t items = 1 + uniform_below(rng, 6);
    const std::size_t skills = 1 + uniform_below(rng, 4);
    for (std::size_t s = 0; s < students; ++s) d.students.push_back(fmt::format("u{}", s));
    for (std::size_t j = 0; j < items; ++j) d.items.push_back(fmt::format("q{}", j));
    for (std::size_t k = 0; k < skills; ++k) d.skills.push_back(fmt::format("c{}", k));
    d.qmatrix.resize(items, skills);
    for (ItemIndex j = 0; j < items; ++j) {
        d.qmatrix.add(j, static_cast<SkillIndex>(uniform_below(rng, skills)));
        if (uniform_unit(rng) < 0.4) d.qmatrix.add(j, static_cast<SkillIndex>(uniform_below(rng, skills)));
    }
    for (StudentIndex s = 0; s < students; ++s) {
        const std::size_t n = 1 + uniform_below(rng, 30);
        for (std::size_t i = 0; i < n; ++i) {
            d.interactions.push_back({s, static_cast<ItemIndex>(uniform_below(rng, items)), 19000.0 + grid_time(rng, 24 * 45),
                                      uniform_unit(rng) < 0.6, false});
        }
    }
    return d;
}

// Expected DAS3H row for interaction r of a preprocessed dataset, built from
// strictly earlier interactions of the same student only.
inline SparseVector oracle_das3h_row(const Dataset& d, const LayoutDescriptor& layout, std::size_t r) {
    const auto& x = d.interactions[r];
    const WindowSet& windows = layout.spec().windows;
    const std::size_t W = windows.size();
    std::vector<std::pair<std::uint32_t, double>> entries;
    entries.emplace_back(layout.block(BlockKind::users).offset + x.student, 1.0);
    entries.emplace_back(layout.block(BlockKind::items).offset + x.item, 1.0);
    for (SkillIndex k : d.qmatrix.skills_of(x.item)) {
        entries.emplace_back(layout.block(BlockKind::skills).offset + k, 1.0);
        std::vector<PriorAttempt> history;
        for (std::size_t p = 0; p < r; ++p) {
            const auto& y = d.interactions[p];
            if (y.student != x.student) continue;
            const auto ks = d.qmatrix.skills_of(y.item);
            if (std::find(ks.begin(), ks.end(), k) != ks.end()) history.push_back({y.time, y.correct});
        }
        const auto c = oracle_window_counts(history, x.time, windows);
        for (std::size_t w = 0; w < W; ++w) {
            entries.emplace_back(layout.block(BlockKind::wins).offset + k * W + w, std::log1p(c.wins[w]));
            entries.emplace_back(layout.block(BlockKind::attempts).offset + k * W + w, std::log1p(c.attempts[w]));
        }
    }
    std::sort(entries.begin(), entries.end());
    SparseVector v;
    for (const auto& [i, value] : entries) {
        if (value == 0.0) continue;
        v.indices.push_back(i);
        v.values.push_back(value);
    }
    v.label = x.correct;
    v.meta = {x.student, x.item, x.time};
    return v;
}

// Describes the first violation of no-leakage or nesting monotonicity, if any.
inline std::optional<std::string> check_das3h_encoding(const Dataset& d, const DesignMatrix& m) {
    if (m.rows() != d.interactions.size()) return "row count differs from interaction count";
    const auto& layout = m.layout();
    const std::size_t W = layout.spec().windows.size();
    const auto wins = layout.block(BlockKind::wins);
    const auto attempts = layout.block(BlockKind::attempts);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const SparseVector got = m.row_copy(r);
        if (got != oracle_das3h_row(d, layout, r)) return fmt::format("row {} differs from the prior-history oracle", r);
        std::vector<double> dense(layout.feature_count(), 0.0);
        for (std::size_t i = 0; i < got.indices.size(); ++i) dense[got.indices[i]] = got.values[i];
        for (SkillIndex k = 0; k < layout.dims().skills; ++k) {
            for (std::size_t w = 0; w < W; ++w) {
                const double a = dense[attempts.offset + k * W + w];
                const double c = dense[wins.offset + k * W + w];
                if (c > a) return fmt::format("row {} skill {} window {}: wins exceed attempts", r, k, w);
                if (w + 1 < W && dense[attempts.offset + k * W + w + 1] < a) {
                    return fmt::format("row {} skill {}: attempts shrink from window {} to {}", r, k, w, w + 1);
                }
                if (w + 1 < W && dense[wins.offset + k * W + w + 1] < c) {
                    return fmt::format("row {} skill {}: wins shrink from window {} to {}", r, k, w, w + 1);
                }
            }
        }
    }
    return std::nullopt;
}

// Pairwise AUC count: 2 per correctly ordered pair, 1 per tie.
inline double oracle_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
    std::uint64_t doubled = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < s.size(); ++i) (y[i] ? pos : neg)++;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!y[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j]) continue;
            if (s[i] > s[j]) doubled += 2;
            if (s[i] == s[j]) doubled += 1;
        }
    }
    return static_cast<double>(doubled) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

inline FMParams random_fm_params(Rng& rng, std::size_t n, std::uint32_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    FMParams p;
    p.dim = dim;
    p.global_bias = normal(rng);
    for (std::size_t i = 0; i < n; ++i) p.linear.push_back(normal(rng));
    for (std::size_t i = 0; i < n * dim; ++i) p.embeddings.push_back(0.5 * normal(rng));
    return p;
}

inline SparseVector random_sparse_row(Rng& rng, std::size_t n, std::size_t max_nnz) {
    std::vector<std::uint32_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
    seeded_shuffle(std::span<std::uint32_t>(idx), rng);
    idx.resize(1 + uniform_below(rng, std::min(max_nnz, n)));
    std::sort(idx.begin(), idx.end());
    SparseVector v;
    v.indices = idx;
    for (std::size_t i = 0; i < idx.size(); ++i) v.values.push_back(uniform_unit(rng) * 4.0 - 2.0);
    return v;
}

// Direct O(nnz²) pairwise evaluation of the FM score.
inline double brute_fm_score(const FMParams& p, const SparseVector& x) {
    double s = p.global_bias;
    for (std::size_t a = 0; a < x.indices.size(); ++a) {
        s += p.linear[x.indices[a]] * x.values[a];
        for (std::size_t b = a + 1; b < x.indices.size(); ++b) {
            double dot = 0.0;
            for (std::uint32_t f = 0; f < p.dim; ++f) {
                dot += p.embeddings[x.indices[a] * p.dim + f] * p.embeddings[x.indices[b] * p.dim + f];
            }
            s += x.values[a] * x.values[b] * dot;
        }
    }
    return s;
}

// Random design matrix over an IRT-shaped layout with arbitrary real values.
inline DesignMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t students, std::size_t items) {
    const ModelSpec spec{Family::irt, 0, WindowSet::standard()};
    DesignMatrix m(feature_layout(spec, {students, items, 1}));
    for (std::size_t r = 0; r < rows; ++r) {
        SparseVector v = random_sparse_row(rng, students + items, 4);
        v.label = uniform_unit(rng) < 0.5;
        m.push_back(v);
    }
    return m;
}

// Central-difference gradient of the penalized loss; returns ||g - fd|| / max(||g||, ||fd||).
inline double gradient_relative_error(const LinearParams& params, const DesignMatrix& m) {
    const auto lg = loss_and_gradient(params, m, m.labels());
    const double h = 1e-5;
    double diff = 0.0, norm_g = 0.0, norm_fd = 0.0;
    auto account = [&](double g, double fd) {
        diff += (g - fd) * (g - fd);
        norm_g += g * g;
        norm_fd += fd * fd;
    };
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
        LinearParams up = params, down = params;
        up.weights[i] += h;
        down.weights[i] -= h;
        account(lg.gradient[i],
                (loss_and_gradient(up, m, m.labels()).loss - loss_and_gradient(down, m, m.labels()).loss) / (2 * h));
    }
    LinearParams up = params, down = params;
    up.intercept += h;
    down.intercept -= h;
    account(lg.intercept_gradient,
            (loss_and_gradient(up, m, m.labels()).loss - loss_and_gradient(down, m, m.labels()).loss) / (2 * h));
    const double scale = std::sqrt(std::max(norm_g, norm_fd));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

// Hand-set DAS3H dim-0 model: one student, items tagged by `qrows`, weights zero
// unless set through the returned references.
struct HandModel {
    FittedModel model;

    std::size_t W() const { return model.spec().windows.size(); }
    double& weight(BlockKind kind, std::size_t i) {
        return model.logistic->params.weights[model.layout.block(kind).offset + i];
    }
    double& win(SkillIndex k, std::size_t w) { return weight(BlockKind::wins, k * W() + w); }
    double& attempt(SkillIndex k, std::size_t w) { return weight(BlockKind::attempts, k * W() + w); }
    double& skill_bias(SkillIndex k) { return weight(BlockKind::skills, k); }
    double& item_bias(ItemIndex j) { return weight(BlockKind::items, j); }
    double& intercept() { return model.logistic->params.intercept; }
};

inline HandModel hand_model(const std::vector<std::vector<SkillIndex>>& qrows, std::size_t skills,
                            std::vector<std::string> skill_ids = {}, std::vector<std::string> item_ids = {},
                            Family family = Family::das3h) {
    HandModel h;
    auto& m = h.model;
    const ModelSpec spec{family, 0, WindowSet::standard()};
    m.layout = feature_layout(spec, {1, qrows.size(), skills});
    m.vocabulary.students = {"student"};
    for (std::size_t j = 0; j < qrows.size(); ++j) {
        m.vocabulary.items.push_back(j < item_ids.size() ? item_ids[j] : fmt::format("item{}", j));
    }
    for (std::size_t k = 0; k < skills; ++k) {
        m.vocabulary.skills.push_back(k < skill_ids.size() ? skill_ids[k] : fmt::format("{}", k));
    }
    m.vocabulary.qmatrix.resize(qrows.size(), skills);
    for (ItemIndex j = 0; j < qrows.size(); ++j) {
        for (SkillIndex k : qrows[j]) m.vocabulary.qmatrix.add(j, k);
    }
    m.feature_counts.assign(m.layout.feature_count(), 1);
    LogisticFit fit;
    fit.params.weights.assign(m.layout.feature_count(), 0.0);
    fit.converged = true;
    m.logistic = fit;
    return h;
}

}  // namespace testing
